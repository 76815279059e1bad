#pragma once

#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "fieldlens/core_data.hpp"

namespace fieldlens {

struct SimConfig {
    std::size_t nx = 50;
    std::size_t ny = 50;
    double re = 10.0;
    double lid_velocity = 2.0;
    double t_end = 20.0;
    double snapshot_interval = 1.0;
    double tau_safety = 0.5;
    double gamma = 0.9;
    double sor_omega = 1.7;
    double sor_tol = 1e-3;
    int sor_max_iters = 1000;
};

void validate_config(const SimConfig& c);

/// Staggered-grid state on the unit square. Storage is x-fastest:
/// u(i, j) = u[j * (nx + 1) + i], v(i, j) = v[j * nx + i], p(i, j) = p[j * nx + i].
struct FlowState {
    std::size_t nx = 0, ny = 0;
    std::vector<double> u;  // (nx+1) x ny, x-velocity on vertical faces
    std::vector<double> v;  // nx x (ny+1), y-velocity on horizontal faces
    std::vector<double> p;  // nx x ny, cell-centred pressure
    double t = 0.0;

    bool operator==(const FlowState&) const = default;
};

struct StepStats {
    double dt = 0.0;
    int sor_iterations = 0;
    double sor_residual = 0.0;
};

FlowState initial_state(const SimConfig& c);

/// Stable step size from the viscous and convective limits, scaled by tau_safety.
double stable_dt(const FlowState& s, const SimConfig& c);

/// One explicit step with pressure projection. The step is min(stable_dt, max_dt).
FlowState step(const FlowState& s, const SimConfig& c, double max_dt = std::numeric_limits<double>::infinity(),
               StepStats* stats = nullptr);

/// Largest |du/dx + dv/dy| over all cells.
double max_divergence(const FlowState& s);

double kinetic_energy(const FlowState& s);

/// Samples the state onto an nx x ny node grid spanning [0,1]^2 with arrays
/// "velocity" (k=3, third component 0) and "pressure" (k=1).
RectilinearDataset sample_to_grid(const FlowState& s, const SimConfig& c);

struct Snapshot {
    double t = 0.0;
    RectilinearDataset grid;
};

using StepObserver = std::function<void(const FlowState&, const StepStats&)>;

/// Snapshot times k * snapshot_interval <= t_end; steps are shortened to land on them exactly.
std::vector<double> snapshot_times(const SimConfig& c);

std::vector<Snapshot> run(const SimConfig& c, const StepObserver& on_step = {});

std::string snapshot_title(const SimConfig& c, double t);
std::string snapshot_filename(const std::string& tag, double t);

/// Writes every snapshot as a legacy file into dir; returns the paths in time order.
std::vector<std::filesystem::path> write_snapshots(const std::vector<Snapshot>& series, const SimConfig& c,
                                                   const std::filesystem::path& dir, const std::string& tag);

}  // namespace fieldlens
