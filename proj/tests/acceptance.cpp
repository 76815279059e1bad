// Acceptance suite: one PASS/FAIL line per criterion. Optional argument: directory for trained models.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "fieldlens/cavity.hpp"
#include "fieldlens/filters.hpp"
#include "fieldlens/pipeline.hpp"
#include "fieldlens/trainer.hpp"
#include "fieldlens/vtk_io.hpp"
#include "generators.hpp"
#include "oracles.hpp"

using namespace fieldlens;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

void log(const std::string& s) { std::cerr << "[acceptance] " << s << std::endl; }

fs::path model_dir;
std::vector<NamedSnapshot> visc_scene;
std::vector<double> visc_divergence;
std::optional<VelocityExperiment> velocity;
std::optional<PressureExperiment> pressure;
std::vector<NamedSnapshot> corpus;

Outcome architecture() {
    const fs::path vpath = model_dir / "velocity.json", ppath = model_dir / "pressure.json";
    if (!fs::exists(vpath) || !fs::exists(ppath)) return {false, "trained model files missing"};
    const ModelSpec v = load_model_file(vpath), p = load_model_file(ppath);
    const auto widths = [](const ModelSpec& m) {
        std::vector<std::size_t> w;
        bool tanh_between = true;
        for (std::size_t i = 0; i < m.layers.size(); ++i) {
            if (const auto* l = std::get_if<Linear>(&m.layers[i])) {
                if (w.empty()) w.push_back(l->in);
                w.push_back(l->out);
            } else {
                tanh_between = tanh_between && std::holds_alternative<Tanh>(m.layers[i]) && i % 2 == 1;
            }
        }
        return std::pair{w, tanh_between && m.layers.size() == 2 * w.size() - 3};
    };
    const auto [vw, vt] = widths(v);
    const auto [pw, pt] = widths(p);
    const bool ok = vw == std::vector<std::size_t>{3, 80, 40, 10, 2} && vt && parameter_count(v) == 3992 &&
                    pw == std::vector<std::size_t>{2500, 50, 20, 2} && pt && parameter_count(p) == 126112 &&
                    v.output.kind == OutputKind::per_point_classes && p.output.kind == OutputKind::whole_input_classes;
    return {ok, "velocity " + std::to_string(parameter_count(v)) + " params, pressure " +
                    std::to_string(parameter_count(p)) + " params (loaded from " + model_dir.string() + ")"};
}

Outcome gradients() {
    std::mt19937_64 rng(20240);
    double worst = 0.0;
    const int nets = 25;
    for (int n = 0; n < nets; ++n) {
        const std::size_t classes = 2 + rng() % 3;
        const ModelSpec m = testing::random_dense_model(rng, classes);
        const std::size_t batch = 1 + rng() % 6, d = m.input.shape[0];
        std::normal_distribution<double> x(0.0, 1.0);
        TensorND X({batch, d});
        for (auto& v : X.values) v = x(rng);
        std::vector<std::size_t> y(batch);
        for (auto& t : y) t = rng() % classes;
        const auto analytic = pack_gradients(backward(m, X, y));
        const auto numeric = testing::finite_difference_gradient(m, X, y, 1e-5);
        worst = std::max(worst, testing::max_relative_error(analytic, numeric));
    }
    return {worst < 1e-4, std::to_string(nets) + " nets, max relative error " + fmt("%.3e", worst) + " (< 1e-4)"};
}

Outcome adam() {
    const double lr = 5e-4, eps = 1e-8;
    std::vector<double> w{0.0};
    AdamState s(1, lr);
    const std::vector<double> g{1.0};
    adam_step(w, g, s);
    const double step1 = -lr * 1.0 / (1.0 + eps);
    const double e1 = std::abs(w[0] - step1);
    const double w1 = w[0];
    adam_step(w, g, s);
    // Constant gradient: both bias-corrected moments are exactly 1 on every step.
    const double step2 = 2.0 * step1;
    const double e2 = std::abs(w[0] - step2);
    std::vector<double> z{0.25};
    AdamState s0(1, lr);
    adam_step(z, std::vector<double>{0.0}, s0);
    const double e0 = std::abs(z[0] - 0.25);
    const double worst = std::max({e1, e2, e0});
    return {worst <= 1e-12, "w after step 1 " + fmt("%.12e", w1) + ", step 2 " + fmt("%.12e", w[0]) + ", max |error| " + fmt("%.1e", worst) + " (<= 1e-12)"};
}

Outcome oracle_equivalence() {
    std::size_t points = 0, mismatches = 0;
    for (const auto& s : visc_scene) {
        const auto gt = threshold_ground_truth(s.grid, "velocity", 0.01);
        const auto& vel = *s.grid.find_array("velocity");
        const auto& cls = *gt.find_array("class");
        for (std::size_t p = 0; p < vel.tuples(); ++p, ++points) {
            double m2 = 0.0;
            for (std::size_t c = 0; c < 3; ++c) m2 += vel.at(p, c) * vel.at(p, c);
            const double expect = std::sqrt(m2) > 0.01 ? 1.0 : 0.0;
            mismatches += cls.at(p) != expect;
        }
    }
    return {mismatches == 0 && visc_scene.size() == 21,
            std::to_string(visc_scene.size()) + " snapshots, " + std::to_string(points) + " points, " +
                std::to_string(mismatches) + " mismatches"};
}

Outcome velocity_reproduction() {
    if (!velocity) return {false, "velocity experiment did not run"};
    const auto& ex = *velocity;
    const double a = ex.holdout_agreement.value_or(0.0);
    return {ex.holdout_id == std::optional<std::string>("visc_t20") && a >= 0.95,
            "held-out " + ex.holdout_id.value_or("?") + " agreement " + fmt("%.4f", a) + " (>= 0.95); " +
                std::to_string(ex.rows) + " training rows, validation accuracy " + fmt("%.4f", ex.val_accuracy)};
}

Outcome pressure_reproduction() {
    if (!pressure) return {false, "pressure experiment did not run"};
    const auto& ex = *pressure;
    const std::set<std::string> expected{"Low", "High"};
    double worst_sum = 0.0;
    bool labels_ok = true;
    for (std::size_t r : ex.result.val_rows) {
        const auto out = data_driven_transform(GridDataset(corpus.at(r).grid), ex.result.model, {"pressure", 10});
        const auto& t = std::get<TableDataset>(out);
        std::set<std::string> seen;
        double sum = 0.0;
        for (const auto& col : t.columns()) {
            if (const auto* s = std::get_if<std::vector<std::string>>(&col.data)) seen.insert(s->begin(), s->end());
            if (col.name == "confidence_percent") {
                for (double v : std::get<std::vector<double>>(col.data)) sum += v;
            }
        }
        labels_ok = labels_ok && t.rows() == 2 && seen == expected;
        worst_sum = std::max(worst_sum, std::abs(sum - 100.0));
    }
    const bool ok = ex.val_accuracy >= 0.9 && labels_ok && worst_sum <= 1e-6;
    return {ok, "held-out accuracy " + fmt("%.4f", ex.val_accuracy) + " on " + std::to_string(ex.result.val_rows.size()) +
                    " fields (>= 0.9); rows Low/High, |sum-100| <= " + fmt("%.1e", worst_sum) + "; labels in corpus: " +
                    std::to_string(ex.low) + " Low / " + std::to_string(ex.high) + " High"};
}

Outcome cfd_sanity() {
    SimConfig zero;
    zero.lid_velocity = 0.0;
    FlowState s = initial_state(zero);
    bool still = true;
    for (int i = 0; i < 100; ++i) {
        s = step(s, zero);
        const auto nz = [](const std::vector<double>& v) { return std::any_of(v.begin(), v.end(), [](double x) { return x != 0.0; }); };
        still = still && !nz(s.u) && !nz(s.v) && !nz(s.p);
    }

    SimConfig hi;
    hi.re = 1000.0;
    hi.lid_velocity = -1.0;
    std::vector<double> hi_div;
    const auto hi_series = run(hi, [&](const FlowState& f, const StepStats&) { hi_div.push_back(max_divergence(f)); });
    const double limit = 10.0 * hi.sor_tol;
    const double d10 = *std::max_element(visc_divergence.begin(), visc_divergence.end());
    const double d1k = *std::max_element(hi_div.begin(), hi_div.end());

    const auto lid_exact = [](const RectilinearDataset& g, double lid) {
        const auto& v = *g.find_array("velocity");
        const std::size_t nx = g.x_coords().size(), ny = g.y_coords().size();
        for (std::size_t i = 0; i < nx; ++i) {
            if (v.at((ny - 1) * nx + i, 0) != lid || v.at((ny - 1) * nx + i, 1) != 0.0) return false;
        }
        return true;
    };
    bool lid = true;
    for (std::size_t k = 1; k < visc_scene.size(); ++k) lid = lid && lid_exact(visc_scene[k].grid, 2.0);
    for (std::size_t k = 1; k < hi_series.size(); ++k) lid = lid && lid_exact(hi_series[k].grid, -1.0);

    return {still && d10 < limit && d1k < limit && lid,
            std::string("zero-lid 100 steps ") + (still ? "identically zero" : "NOT zero") + "; max divergence Re=10 " +
                fmt("%.3e", d10) + " over " + std::to_string(visc_divergence.size()) + " steps, Re=1000 " + fmt("%.3e", d1k) +
                " over " + std::to_string(hi_div.size()) + " steps (< " + fmt("%.0e", limit) + "); lid rows " +
                (lid ? "exact" : "NOT exact")};
}

Outcome algorithm_conformance() {
    InputSpec raw;
    raw.shape = {3, 1, 1};
    raw.channel_policy = ChannelPolicy::grey_to_rgb;
    const ImageDataset grey({1, 1, 1}, {0, 0, 0}, {1, 1, 1}, {DataArray("pixels", 1, {5})});
    const bool grey_ok = preprocess_image(grey, raw).values == std::vector<double>{5, 5, 5};

    const ModelSpec seg = standin_segmentation_model(7);
    std::vector<double> means;
    for (std::size_t i = 0; i < 64 * 48; ++i) means.insert(means.end(), {0.485 * 255, 0.456 * 255, 0.406 * 255});
    const ImageDataset uniform({64, 48, 1}, {0, 0, 0}, {1, 1, 1}, {DataArray("pixels", 3, means)});
    const auto t = preprocess_image(uniform, seg.input);
    double worst = 0.0;
    for (double v : t.values) worst = std::max(worst, std::abs(v));

    std::mt19937_64 rng(3);
    std::vector<double> px(40 * 30 * 3);
    for (auto& v : px) v = static_cast<double>(rng() % 256);
    const ImageDataset img({40, 30, 1}, {0, 0, 0}, {1, 1, 1}, {DataArray("pixels", 3, px)});
    const auto out = std::get<ImageDataset>(data_driven_transform(GridDataset(img), seg));
    const auto palette = class_colors(seg.output);
    const auto& cls = *out.find_array("class");
    const auto& col = *out.find_array("color");
    bool seg_ok = seg.output.labels.size() == 21 && cls.tuples() == 40 * 30;
    for (std::size_t i = 0; i < cls.tuples() && seg_ok; ++i) {
        const double c = cls.at(i);
        seg_ok = c >= 0 && c < 21 && c == std::floor(c);
        for (std::size_t ch = 0; seg_ok && ch < 3; ++ch) seg_ok = col.at(i, ch) == palette[static_cast<std::size_t>(c)][ch];
    }
    return {grey_ok && worst <= 1e-12 && seg_ok, std::string("grey 5 -> (5,5,5) ") + (grey_ok ? "yes" : "no") +
                                                   "; ImageNet-mean image max |x| " + fmt("%.1e", worst) +
                                                   "; 21-class output in range with palette colours " + (seg_ok ? "yes" : "no")};
}

Outcome executive() {
    int runs = 0;
    FilterRegistry reg = make_default_registry();
    reg.add({"count", "identity with a counter", {{"tag", ParamType::number, ParamValue(0.0), false, ""}}, DataKind::grid,
             DataKind::grid, [&runs](const Dataset& in, const ParamMap&) -> Dataset {
                 ++runs;
                 return in;
             }});
    Pipeline p(reg);
    const RectilinearDataset g({0, 1}, {0, 1}, {0}, {DataArray("velocity", 3, std::vector<double>(12, 0.5))});
    p.add_source("src", g);
    p.add_filter("a", "count");
    p.add_filter("b", "count");
    p.connect("src", "a");
    p.connect("a", "b");
    p.update("b");
    runs = 0;
    p.set_param("b", "tag", 1.0);
    p.update("b");
    const int after_param = runs;
    runs = 0;
    p.set_source("src", RectilinearDataset({0, 1}, {0, 1}, {0}, {DataArray("velocity", 3, std::vector<double>(12, 0.7))}));
    p.update("b");
    const int after_source = runs;
    return {after_param == 1 && after_source == 2,
            "last-node param change: " + std::to_string(after_param) + " re-execution(s); source change: " +
                std::to_string(after_source)};
}

Outcome io_round_trips() {
    std::mt19937_64 rng(777);
    int legacy_bad = 0, model_bad = 0;
    for (int i = 0; i < 100; ++i) {
        const auto grid = testing::random_grid(rng);
        const auto back = parse_legacy(write_legacy(grid, "acceptance " + std::to_string(i)));
        legacy_bad += !(back.dataset == grid);
        ModelSpec m = testing::random_dense_model(rng, 2 + rng() % 4);
        m.metadata["instance"] = std::to_string(i);
        model_bad += !(load_model(save_model(m)) == m);
    }
    return {legacy_bad == 0 && model_bad == 0, "100 legacy files (" + std::to_string(legacy_bad) + " mismatched), 100 model files (" +
                                                   std::to_string(model_bad) + " mismatched)"};
}

template <class F>
Outcome guarded(F&& f) {
    try {
        return f();
    } catch (const std::exception& e) {
        return {false, std::string("exception: ") + e.what()};
    }
}

}  // namespace

int main(int argc, char** argv) {
    model_dir = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "fieldlens_acceptance";
    fs::create_directories(model_dir);
    const auto t0 = std::chrono::steady_clock::now();
    const auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

    try {
        log("simulating Re=10, lid=2 scene");
        visc_scene = simulate_velocity_scene([](const FlowState& f, const StepStats&) { visc_divergence.push_back(max_divergence(f)); });
        log("training velocity model (5000 epochs)");
        velocity = velocity_experiment(visc_scene, 0.01, VelocityPreset{}, true, [&](std::size_t e, std::size_t n) {
            if ((e + 1) % 500 == 0) log("velocity epoch " + std::to_string(e + 1) + "/" + std::to_string(n) + " at " + fmt("%.0f s", elapsed()));
        });
        save_model_file(model_dir / "velocity.json", velocity->result.model);
    } catch (const std::exception& e) {
        log(std::string("velocity experiment failed: ") + e.what());
    }
    try {
        log("simulating pressure corpus");
        corpus = simulate_pressure_corpus();
        log("training pressure model (500 epochs)");
        pressure = pressure_experiment(corpus, 5.0, PressurePreset{});
        save_model_file(model_dir / "pressure.json", pressure->result.model);
    } catch (const std::exception& e) {
        log(std::string("pressure experiment failed: ") + e.what());
    }

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"architecture fidelity", architecture},
        {"gradient correctness", gradients},
        {"adam hand-computed step", adam},
        {"threshold oracle equivalence", oracle_equivalence},
        {"velocity segmentation on held-out t=20", velocity_reproduction},
        {"pressure classification", pressure_reproduction},
        {"cfd sanity", cfd_sanity},
        {"image filter conformance", algorithm_conformance},
        {"pipeline executive re-execution counts", executive},
        {"legacy and model file round trips", io_round_trips},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const Outcome o = guarded(criteria[i].second);
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].first << ": " << o.detail << std::endl;
    }
    std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed in " << fmt("%.0f s", elapsed())
              << std::endl;
    return failed == 0 ? 0 : 1;
}
