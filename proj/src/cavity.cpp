#include "fieldlens/cavity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fieldlens/error.hpp"
#include "fieldlens/text.hpp"
#include "fieldlens/vtk_io.hpp"

namespace fieldlens {

namespace {

struct Field {
    std::size_t w = 0, h = 0;
    std::vector<double> d;

    Field(std::size_t w_, std::size_t h_) : w(w_), h(h_), d(w_ * h_, 0.0) {}
    double& operator()(std::size_t i, std::size_t j) { return d[j * w + i]; }
    double operator()(std::size_t i, std::size_t j) const { return d[j * w + i]; }
};

// Padded working arrays with one ghost layer. Cells are i = 1..nx, j = 1..ny;
// U(i, j) is the face between cells i and i+1, V(i, j) the face between j and j+1.
struct Padded {
    std::size_t nx, ny;
    Field U, V, P;

    Padded(std::size_t nx_, std::size_t ny_)
        : nx(nx_), ny(ny_), U(nx_ + 1, ny_ + 2), V(nx_ + 2, ny_ + 1), P(nx_ + 2, ny_ + 2) {}
};

void apply_boundary(Padded& g, double lid) {
    const std::size_t nx = g.nx, ny = g.ny;
    for (std::size_t j = 1; j <= ny; ++j) {
        g.U(0, j) = 0.0;
        g.U(nx, j) = 0.0;
    }
    for (std::size_t j = 0; j <= ny; ++j) {
        g.V(0, j) = -g.V(1, j);
        g.V(nx + 1, j) = -g.V(nx, j);
    }
    for (std::size_t i = 1; i <= nx; ++i) {
        g.V(i, 0) = 0.0;
        g.V(i, ny) = 0.0;
    }
    for (std::size_t i = 0; i <= nx; ++i) {
        g.U(i, 0) = -g.U(i, 1);
        g.U(i, ny + 1) = 2.0 * lid - g.U(i, ny);
    }
}

Padded load(const FlowState& s, double lid) {
    Padded g(s.nx, s.ny);
    for (std::size_t j = 0; j < s.ny; ++j) {
        for (std::size_t i = 0; i <= s.nx; ++i) g.U(i, j + 1) = s.u[j * (s.nx + 1) + i];
    }
    for (std::size_t j = 0; j <= s.ny; ++j) {
        for (std::size_t i = 0; i < s.nx; ++i) g.V(i + 1, j) = s.v[j * s.nx + i];
    }
    for (std::size_t j = 0; j < s.ny; ++j) {
        for (std::size_t i = 0; i < s.nx; ++i) g.P(i + 1, j + 1) = s.p[j * s.nx + i];
    }
    apply_boundary(g, lid);
    return g;
}

void store(const Padded& g, FlowState& s) {
    for (std::size_t j = 0; j < s.ny; ++j) {
        for (std::size_t i = 0; i <= s.nx; ++i) s.u[j * (s.nx + 1) + i] = g.U(i, j + 1);
    }
    for (std::size_t j = 0; j <= s.ny; ++j) {
        for (std::size_t i = 0; i < s.nx; ++i) s.v[j * s.nx + i] = g.V(i + 1, j);
    }
    for (std::size_t j = 0; j < s.ny; ++j) {
        for (std::size_t i = 0; i < s.nx; ++i) s.p[j * s.nx + i] = g.P(i + 1, j + 1);
    }
}

double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

// Stencils below pair mirrored neighbours with commutative sums so that
// reflecting the lid direction reflects the discrete solution exactly.

void tentative_velocities(const Padded& g, const SimConfig& c, double dt, Field& F, Field& G) {
    const std::size_t nx = g.nx, ny = g.ny;
    const double dx = 1.0 / static_cast<double>(nx), dy = 1.0 / static_cast<double>(ny);
    const double gm = c.gamma, inv_re = 1.0 / c.re;
    const auto& U = g.U;
    const auto& V = g.V;

    for (std::size_t j = 1; j <= ny; ++j) {
        F(0, j) = U(0, j);
        F(nx, j) = U(nx, j);
        for (std::size_t i = 1; i < nx; ++i) {
            const double u = U(i, j);
            const double d2x = ((U(i + 1, j) + U(i - 1, j)) - 2.0 * u) / (dx * dx);
            const double d2y = ((U(i, j + 1) + U(i, j - 1)) - 2.0 * u) / (dy * dy);
            const double ue = (u + U(i + 1, j)) / 2.0, uw = (U(i - 1, j) + u) / 2.0;
            const double du2 = (ue * ue - uw * uw) / dx +
                               gm * (std::abs(ue) * (u - U(i + 1, j)) / 2.0 - std::abs(uw) * (U(i - 1, j) - u) / 2.0) / dx;
            const double vn = (V(i, j) + V(i + 1, j)) / 2.0, vs = (V(i, j - 1) + V(i + 1, j - 1)) / 2.0;
            const double duv = (vn * (u + U(i, j + 1)) / 2.0 - vs * (U(i, j - 1) + u) / 2.0) / dy +
                               gm * (std::abs(vn) * (u - U(i, j + 1)) / 2.0 - std::abs(vs) * (U(i, j - 1) - u) / 2.0) / dy;
            F(i, j) = u + dt * (inv_re * (d2x + d2y) - du2 - duv);
        }
    }
    for (std::size_t i = 1; i <= nx; ++i) {
        G(i, 0) = V(i, 0);
        G(i, ny) = V(i, ny);
        for (std::size_t j = 1; j < ny; ++j) {
            const double v = V(i, j);
            const double d2x = ((V(i + 1, j) + V(i - 1, j)) - 2.0 * v) / (dx * dx);
            const double d2y = ((V(i, j + 1) + V(i, j - 1)) - 2.0 * v) / (dy * dy);
            const double ue = (U(i, j) + U(i, j + 1)) / 2.0, uw = (U(i - 1, j) + U(i - 1, j + 1)) / 2.0;
            const double duv = (ue * (v + V(i + 1, j)) / 2.0 - uw * (V(i - 1, j) + v) / 2.0) / dx +
                               gm * (std::abs(ue) * (v - V(i + 1, j)) / 2.0 - std::abs(uw) * (V(i - 1, j) - v) / 2.0) / dx;
            const double vn = (v + V(i, j + 1)) / 2.0, vs = (V(i, j - 1) + v) / 2.0;
            const double dv2 = (vn * vn - vs * vs) / dy +
                               gm * (std::abs(vn) * (v - V(i, j + 1)) / 2.0 - std::abs(vs) * (V(i, j - 1) - v) / 2.0) / dy;
            G(i, j) = v + dt * (inv_re * (d2x + d2y) - duv - dv2);
        }
    }
}

double e_nan() { return std::numeric_limits<double>::quiet_NaN(); }

struct PoissonSolver {
    std::size_t nx, ny;
    double idx2, idy2;

    double residual(const Field& P, const Field& rhs) const {
        double r = 0.0;
        bool nan = false;
        for (std::size_t j = 1; j <= ny; ++j) {
            const double en = j < ny ? 1.0 : 0.0, es = j > 1 ? 1.0 : 0.0;
            for (std::size_t i = 1; i <= nx; ++i) {
                const double ee = i < nx ? 1.0 : 0.0, ew = i > 1 ? 1.0 : 0.0;
                const double p = P(i, j);
                const double lap = ((ee * P(i + 1, j) + ew * P(i - 1, j)) - (ee + ew) * p) * idx2 +
                                   ((en * P(i, j + 1) + es * P(i, j - 1)) - (en + es) * p) * idy2;
                const double e = std::abs(lap - rhs(i, j));
                nan |= std::isnan(e);
                r = std::max(r, e);
            }
        }
        return nan ? e_nan() : r;
    }

    void sweep(Field& P, const Field& rhs, double omega, std::size_t colour) const {
        for (std::size_t j = 1; j <= ny; ++j) {
            const double en = j < ny ? 1.0 : 0.0, es = j > 1 ? 1.0 : 0.0;
            for (std::size_t i = ((1 + j) % 2 == colour) ? 1 : 2; i <= nx; i += 2) {
                const double ee = i < nx ? 1.0 : 0.0, ew = i > 1 ? 1.0 : 0.0;
                const double diag = (ee + ew) * idx2 + (en + es) * idy2;
                const double off = (ee * P(i + 1, j) + ew * P(i - 1, j)) * idx2 + (en * P(i, j + 1) + es * P(i, j - 1)) * idy2;
                P(i, j) = (1.0 - omega) * P(i, j) + omega / diag * (off - rhs(i, j));
            }
        }
    }

    void remove_mean(Field& P) const {
        double sum = 0.0;
        for (std::size_t j = 1; j <= ny; ++j) {
            for (std::size_t i = 1; i <= nx / 2; ++i) sum += P(i, j) + P(nx + 1 - i, j);
            if (nx % 2 == 1) sum += P(nx / 2 + 1, j);
        }
        const double mean = sum / static_cast<double>(nx * ny);
        for (std::size_t j = 1; j <= ny; ++j) {
            for (std::size_t i = 1; i <= nx; ++i) P(i, j) -= mean;
        }
    }
};

bool all_finite(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

void validate_config(const SimConfig& c) {
    if (c.nx < 2 || c.ny < 2) throw PreconditionError("nx and ny must be at least 2");
    if (!(c.re > 0.0)) throw PreconditionError("re must be positive");
    if (!(c.t_end > 0.0)) throw PreconditionError("t_end must be positive");
    if (!(c.snapshot_interval > 0.0)) throw PreconditionError("snapshot_interval must be positive");
    if (!(c.tau_safety > 0.0 && c.tau_safety <= 1.0)) throw PreconditionError("tau_safety must be in (0,1]");
    if (!(c.gamma >= 0.0 && c.gamma <= 1.0)) throw PreconditionError("gamma must be in [0,1]");
    if (!(c.sor_omega > 0.0 && c.sor_omega < 2.0)) throw PreconditionError("sor_omega must be in (0,2)");
    if (!(c.sor_tol > 0.0)) throw PreconditionError("sor_tol must be positive");
    if (c.sor_max_iters < 1) throw PreconditionError("sor_max_iters must be at least 1");
    if (!std::isfinite(c.lid_velocity)) throw PreconditionError("lid_velocity must be finite");
}

FlowState initial_state(const SimConfig& c) {
    validate_config(c);
    FlowState s;
    s.nx = c.nx;
    s.ny = c.ny;
    s.u.assign((c.nx + 1) * c.ny, 0.0);
    s.v.assign(c.nx * (c.ny + 1), 0.0);
    s.p.assign(c.nx * c.ny, 0.0);
    return s;
}

double stable_dt(const FlowState& s, const SimConfig& c) {
    const double dx = 1.0 / static_cast<double>(s.nx), dy = 1.0 / static_cast<double>(s.ny);
    double limit = c.re / 2.0 / (1.0 / (dx * dx) + 1.0 / (dy * dy));
    const double umax = max_abs(s.u);
    const double vmax = max_abs(s.v);
    if (umax > 0.0) limit = std::min(limit, dx / umax);
    if (vmax > 0.0) limit = std::min(limit, dy / vmax);
    return c.tau_safety * limit;
}

FlowState step(const FlowState& s, const SimConfig& c, double max_dt, StepStats* stats) {
    validate_config(c);
    if (s.nx != c.nx || s.ny != c.ny || s.u.size() != (c.nx + 1) * c.ny || s.v.size() != c.nx * (c.ny + 1) ||
        s.p.size() != c.nx * c.ny) {
        throw PreconditionError("flow state does not match the configured grid");
    }
    if (!(max_dt > 0.0)) throw PreconditionError("max_dt must be positive");

    const std::size_t nx = c.nx, ny = c.ny;
    const double dx = 1.0 / static_cast<double>(nx), dy = 1.0 / static_cast<double>(ny);
    const double dt = std::min(stable_dt(s, c), max_dt);

    Padded g = load(s, c.lid_velocity);
    Field F(nx + 1, ny + 2), G(nx + 2, ny + 1), rhs(nx + 2, ny + 2);
    tentative_velocities(g, c, dt, F, G);
    for (std::size_t j = 1; j <= ny; ++j) {
        for (std::size_t i = 1; i <= nx; ++i) {
            rhs(i, j) = ((F(i, j) - F(i - 1, j)) / dx + (G(i, j) - G(i, j - 1)) / dy) / dt;
        }
    }

    const PoissonSolver solver{nx, ny, 1.0 / (dx * dx), 1.0 / (dy * dy)};
    // The residual is measured on dt * (lap p - rhs), i.e. in units of the
    // divergence left behind by the projection.
    int it = 0;
    double res = dt * solver.residual(g.P, rhs);
    while (res >= c.sor_tol) {
        if (!std::isfinite(res)) throw DivergenceError("pressure solve produced a non-finite residual");
        if (it == c.sor_max_iters) throw SorNonConvergence(res, it);
        solver.sweep(g.P, rhs, c.sor_omega, 0);
        solver.sweep(g.P, rhs, c.sor_omega, 1);
        ++it;
        res = dt * solver.residual(g.P, rhs);
    }
    solver.remove_mean(g.P);

    for (std::size_t j = 1; j <= ny; ++j) {
        for (std::size_t i = 1; i < nx; ++i) g.U(i, j) = F(i, j) - dt / dx * (g.P(i + 1, j) - g.P(i, j));
    }
    for (std::size_t j = 1; j < ny; ++j) {
        for (std::size_t i = 1; i <= nx; ++i) g.V(i, j) = G(i, j) - dt / dy * (g.P(i, j + 1) - g.P(i, j));
    }
    apply_boundary(g, c.lid_velocity);

    FlowState out = s;
    store(g, out);
    out.t = s.t + dt;
    if (!all_finite(out.u) || !all_finite(out.v) || !all_finite(out.p)) {
        throw DivergenceError("non-finite values at t=" + format_real(out.t));
    }
    if (stats) *stats = StepStats{dt, it, res};
    return out;
}

double max_divergence(const FlowState& s) {
    const double dx = 1.0 / static_cast<double>(s.nx), dy = 1.0 / static_cast<double>(s.ny);
    double m = 0.0;
    for (std::size_t j = 0; j < s.ny; ++j) {
        for (std::size_t i = 0; i < s.nx; ++i) {
            const double div = (s.u[j * (s.nx + 1) + i + 1] - s.u[j * (s.nx + 1) + i]) / dx +
                               (s.v[(j + 1) * s.nx + i] - s.v[j * s.nx + i]) / dy;
            m = std::max(m, std::abs(div));
        }
    }
    return m;
}

double kinetic_energy(const FlowState& s) {
    double e = 0.0;
    for (double x : s.u) e += x * x;
    for (double x : s.v) e += x * x;
    return 0.5 * e;
}

RectilinearDataset sample_to_grid(const FlowState& s, const SimConfig& c) {
    const std::size_t nx = s.nx, ny = s.ny;
    const double fnx = static_cast<double>(nx), fny = static_cast<double>(ny);
    const Padded g = load(s, c.lid_velocity);

    const auto lerp2 = [](const Field& f, double fx, double fy, std::size_t imax, std::size_t jmax) {
        const std::size_t i0 = std::min(static_cast<std::size_t>(fx), imax);
        const std::size_t j0 = std::min(static_cast<std::size_t>(fy), jmax);
        const double wx = fx - static_cast<double>(i0), wy = fy - static_cast<double>(j0);
        return (1.0 - wy) * ((1.0 - wx) * f(i0, j0) + wx * f(i0 + 1, j0)) +
               wy * ((1.0 - wx) * f(i0, j0 + 1) + wx * f(i0 + 1, j0 + 1));
    };

    std::vector<double> xs(nx), ys(ny);
    for (std::size_t a = 0; a < nx; ++a) xs[a] = static_cast<double>(a) / static_cast<double>(nx - 1);
    for (std::size_t b = 0; b < ny; ++b) ys[b] = static_cast<double>(b) / static_cast<double>(ny - 1);

    std::vector<double> vel(nx * ny * 3, 0.0), pres(nx * ny, 0.0);
    for (std::size_t b = 0; b < ny; ++b) {
        for (std::size_t a = 0; a < nx; ++a) {
            const std::size_t n = b * nx + a;
            const double X = xs[a], Y = ys[b];
            // Pressure lives at cell centres; nodes outside them take the nearest centre value.
            const double px = std::clamp(X * fnx + 0.5, 1.0, fnx), py = std::clamp(Y * fny + 0.5, 1.0, fny);
            pres[n] = lerp2(g.P, px, py, nx - 1, ny - 1);
            if (b == ny - 1) {
                vel[3 * n] = c.lid_velocity;
            } else if (a > 0 && a < nx - 1 && b > 0) {
                vel[3 * n] = lerp2(g.U, X * fnx, Y * fny + 0.5, nx - 1, ny);
                vel[3 * n + 1] = lerp2(g.V, X * fnx + 0.5, Y * fny, nx, ny - 1);
            }
        }
    }
    return RectilinearDataset(std::move(xs), std::move(ys), {0.0},
                              {DataArray("velocity", 3, std::move(vel)), DataArray("pressure", 1, std::move(pres))});
}

std::vector<double> snapshot_times(const SimConfig& c) {
    validate_config(c);
    std::vector<double> times;
    for (std::size_t k = 0;; ++k) {
        const double t = static_cast<double>(k) * c.snapshot_interval;
        if (t > c.t_end * (1.0 + 1e-12)) break;
        times.push_back(t);
    }
    return times;
}

std::vector<Snapshot> run(const SimConfig& c, const StepObserver& on_step) {
    const auto times = snapshot_times(c);
    FlowState s = initial_state(c);
    std::vector<Snapshot> out;
    out.push_back({0.0, sample_to_grid(s, c)});
    for (std::size_t k = 1; k < times.size(); ++k) {
        const double target = times[k];
        while (s.t < target) {
            const double remaining = target - s.t;
            StepStats stats;
            s = step(s, c, remaining, &stats);
            if (stats.dt >= remaining) s.t = target;
            if (on_step) on_step(s, stats);
        }
        out.push_back({target, sample_to_grid(s, c)});
    }
    return out;
}

std::string snapshot_title(const SimConfig& c, double t) {
    return "fieldlens cavity re=" + format_real(c.re) + " lid=" + format_real(c.lid_velocity) +
           " nx=" + std::to_string(c.nx) + " ny=" + std::to_string(c.ny) + " t=" + format_real(t) +
           " tau=" + format_real(c.tau_safety) + " gamma=" + format_real(c.gamma) +
           " omega=" + format_real(c.sor_omega) + " sor_tol=" + format_real(c.sor_tol) +
           " sor_max_iters=" + std::to_string(c.sor_max_iters);
}

std::string snapshot_filename(const std::string& tag, double t) {
    return "cavity_" + tag + "_t" + format_short(t) + ".vtk";
}

std::vector<std::filesystem::path> write_snapshots(const std::vector<Snapshot>& series, const SimConfig& c,
                                                   const std::filesystem::path& dir, const std::string& tag) {
    std::vector<std::filesystem::path> paths;
    for (const auto& snap : series) {
        auto path = dir / snapshot_filename(tag, snap.t);
        write_file(path, write_legacy(snap.grid, snapshot_title(c, snap.t)));
        paths.push_back(std::move(path));
    }
    return paths;
}

}  // namespace fieldlens
