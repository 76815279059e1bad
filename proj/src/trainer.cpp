#include "fieldlens/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fieldlens/error.hpp"
#include "fieldlens/filters.hpp"
#include "fieldlens/text.hpp"
#include "fieldlens/vtk_io.hpp"

namespace fieldlens {

std::size_t LabeledSet::count(std::size_t label) const {
    return static_cast<std::size_t>(std::count(y.begin(), y.end(), label));
}

std::vector<NamedSnapshot> name_series(const std::vector<Snapshot>& series, const std::string& tag) {
    std::vector<NamedSnapshot> out;
    out.reserve(series.size());
    for (const auto& s : series) out.push_back({tag + "_t" + format_short(s.t), s.grid});
    return out;
}

namespace {

const DataArray& require_array(const NamedSnapshot& s, const std::string& name, std::size_t k) {
    const DataArray* a = s.grid.find_array(name);
    if (!a) throw PreconditionError("snapshot '" + s.id + "' has no '" + name + "' array");
    if (a->components() != k) {
        throw PreconditionError("snapshot '" + s.id + "' array '" + name + "' has " + std::to_string(a->components()) +
                                " components, expected " + std::to_string(k));
    }
    return *a;
}

std::vector<std::string> ids_of(const std::vector<NamedSnapshot>& snaps) {
    std::vector<std::string> ids;
    for (const auto& s : snaps) ids.push_back(s.id);
    return ids;
}

std::string join_ids(const std::vector<std::string>& ids) {
    std::string out;
    for (const auto& id : ids) out += (out.empty() ? "" : ",") + id;
    return out;
}

ModelSpec finish(TrainResult& r, const LabeledSet& data) {
    r.model.metadata["data.rule"] = data.rule;
    r.model.metadata["data.rows"] = std::to_string(data.rows());
    r.model.metadata["data.class_counts"] = std::to_string(data.count(0)) + "," + std::to_string(data.count(1));
    r.model.metadata["data.snapshots"] = join_ids(data.snapshot_ids);
    return r.model;
}

}  // namespace

LabeledSet build_velocity_dataset(const std::vector<NamedSnapshot>& snaps, double threshold) {
    std::size_t n = 0;
    for (const auto& s : snaps) n += require_array(s, "velocity", 3).tuples();
    LabeledSet out;
    out.X = TensorND({n, 3});
    out.y.reserve(n);
    std::size_t row = 0;
    for (const auto& s : snaps) {
        const DataArray& a = require_array(s, "velocity", 3);
        for (std::size_t i = 0; i < a.tuples(); ++i, ++row) {
            double sq = 0.0;
            for (std::size_t k = 0; k < 3; ++k) {
                out.X.values[row * 3 + k] = a.at(i, k);
                sq += a.at(i, k) * a.at(i, k);
            }
            out.y.push_back(std::sqrt(sq) > threshold ? 1 : 0);
        }
    }
    out.snapshot_ids = ids_of(snaps);
    out.rule = "velocity magnitude > " + format_short(threshold);
    return out;
}

LabeledSet build_pressure_dataset(const std::vector<NamedSnapshot>& snaps, double threshold) {
    LabeledSet out;
    out.X = TensorND({snaps.size(), kPressureInputSize});
    for (std::size_t r = 0; r < snaps.size(); ++r) {
        const DataArray& a = require_array(snaps[r], "pressure", 1);
        if (a.tuples() != kPressureInputSize) {
            throw PreconditionError("snapshot '" + snaps[r].id + "' has " + std::to_string(a.tuples()) +
                                    " pressure values, the model takes " + std::to_string(kPressureInputSize));
        }
        const auto v = a.values();
        std::copy(v.begin(), v.end(), out.X.values.begin() + static_cast<std::ptrdiff_t>(r * kPressureInputSize));
        out.y.push_back(*std::max_element(v.begin(), v.end()) > threshold ? 1 : 0);
    }
    out.snapshot_ids = ids_of(snaps);
    out.rule = "max pressure > " + format_short(threshold);
    return out;
}

LabeledSet concat(const LabeledSet& a, const LabeledSet& b) {
    if (a.rows() == 0) return b;
    if (b.rows() == 0) return a;
    if (a.X.shape[1] != b.X.shape[1]) throw PreconditionError("cannot concatenate datasets of different widths");
    LabeledSet out = a;
    out.X.shape[0] += b.rows();
    out.X.values.insert(out.X.values.end(), b.X.values.begin(), b.X.values.end());
    out.y.insert(out.y.end(), b.y.begin(), b.y.end());
    out.snapshot_ids.insert(out.snapshot_ids.end(), b.snapshot_ids.begin(), b.snapshot_ids.end());
    if (a.rule != b.rule) out.rule = a.rule + "; " + b.rule;
    return out;
}

TrainResult train_velocity_model(const LabeledSet& data, const VelocityPreset& preset, const TrainProgress& progress) {
    if (data.X.rank() != 2 || data.X.shape[1] != 3) throw PreconditionError("velocity model needs 3 features per row");
    const std::vector<std::size_t> widths{3, 80, 40, 10, 2};
    ModelSpec m = init_dense_model(widths, Tanh{}, preset.seed);
    m.output.kind = OutputKind::per_point_classes;
    m.output.labels = {"below", "above"};
    TrainConfig cfg;
    cfg.epochs = preset.epochs;
    cfg.learning_rate = preset.learning_rate;
    cfg.train_fraction = preset.train_fraction;
    cfg.seed = preset.seed;
    TrainResult r = train(m, data.X, data.y, cfg, progress);
    finish(r, data);
    return r;
}

TrainResult train_pressure_model(const LabeledSet& data, const PressurePreset& preset, const TrainProgress& progress) {
    if (data.X.rank() != 2 || data.X.shape[1] != kPressureInputSize) {
        throw PreconditionError("pressure model needs " + std::to_string(kPressureInputSize) + " features per row");
    }
    const std::vector<std::size_t> widths{kPressureInputSize, 50, 20, 2};
    ModelSpec m = init_dense_model(widths, Tanh{}, preset.seed);
    m.output.kind = OutputKind::whole_input_classes;
    m.output.labels = {"Low", "High"};
    TrainConfig cfg;
    cfg.epochs = preset.epochs;
    cfg.learning_rate = preset.learning_rate;
    cfg.train_fraction = preset.train_fraction;
    cfg.seed = preset.seed;
    TrainResult r = train(m, data.X, data.y, cfg, progress);
    finish(r, data);
    return r;
}

std::vector<SimConfig> pressure_corpus_configs(const SimConfig& base) {
    std::vector<SimConfig> out;
    for (double re : {100.0, 500.0, 1000.0}) {
        for (double lid : {-0.5, -1.0, -1.5, -2.0}) {
            SimConfig c = base;
            c.re = re;
            c.lid_velocity = lid;
            out.push_back(c);
        }
    }
    return out;
}

std::string corpus_tag(const SimConfig& c) { return "re" + format_short(c.re) + "_lid" + format_short(c.lid_velocity); }

double accuracy(const ModelSpec& model, const TensorND& X, std::span<const std::size_t> y) {
    if (y.empty()) throw PreconditionError("accuracy of an empty set");
    const TensorND logits = forward(model, X);
    const std::size_t c = logits.shape.back();
    std::size_t hits = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        hits += argmax(std::span<const double>(logits.values.data() + i * c, c)) == y[i];
    }
    return static_cast<double>(hits) / static_cast<double>(y.size());
}

double accuracy(const ModelSpec& model, const LabeledSet& data, std::span<const std::size_t> rows) {
    const std::size_t d = data.X.shape[1];
    TensorND X({rows.size(), d});
    std::vector<std::size_t> y;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy_n(data.X.values.begin() + static_cast<std::ptrdiff_t>(rows[i] * d), d,
                    X.values.begin() + static_cast<std::ptrdiff_t>(i * d));
        y.push_back(data.y.at(rows[i]));
    }
    return accuracy(model, X, y);
}

std::string history_csv(const TrainHistory& h) {
    std::ostringstream out;
    out << "epoch,train_loss,val_loss\n";
    for (std::size_t e = 0; e < h.train_loss.size(); ++e) {
        out << e + 1 << ',' << format_real(h.train_loss[e]) << ',' << format_real(h.val_loss.at(e)) << '\n';
    }
    return out.str();
}

void write_history_csv(const std::filesystem::path& path, const TrainHistory& history) {
    write_file(path, history_csv(history));
}

namespace {

double title_time(const std::string& title) {
    std::istringstream in(title);
    std::string tok;
    while (in >> tok) {
        if (tok.rfind("t=", 0) == 0) {
            try {
                return std::stod(tok.substr(2));
            } catch (const std::exception&) {
                break;
            }
        }
    }
    return 0.0;
}

}  // namespace

std::vector<NamedSnapshot> load_snapshots(const std::vector<std::filesystem::path>& paths) {
    std::vector<std::filesystem::path> files;
    for (const auto& p : paths) {
        if (std::filesystem::is_directory(p)) {
            for (const auto& e : std::filesystem::directory_iterator(p)) {
                if (e.is_regular_file() && e.path().extension() == ".vtk") files.push_back(e.path());
            }
        } else {
            files.push_back(p);
        }
    }
    std::vector<std::pair<double, NamedSnapshot>> loaded;
    for (const auto& f : files) {
        ParsedFile parsed = parse_legacy(read_text_file(f));
        auto* grid = std::get_if<RectilinearDataset>(&parsed.dataset);
        if (!grid) throw PreconditionError("'" + f.string() + "' is not a rectilinear grid");
        loaded.push_back({title_time(parsed.title), {f.stem().string(), std::move(*grid)}});
    }
    std::stable_sort(loaded.begin(), loaded.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first < b.first : a.second.id < b.second.id;
    });
    std::vector<NamedSnapshot> out;
    for (auto& [t, s] : loaded) out.push_back(std::move(s));
    return out;
}

std::vector<NamedSnapshot> simulate_velocity_scene(const StepObserver& on_step) {
    return name_series(run(SimConfig{}, on_step), "visc");
}

std::vector<NamedSnapshot> simulate_pressure_corpus(const std::function<void(std::size_t, std::size_t)>& on_run) {
    const auto configs = pressure_corpus_configs();
    std::vector<NamedSnapshot> out;
    for (std::size_t i = 0; i < configs.size(); ++i) {
        auto named = name_series(run(configs[i]), corpus_tag(configs[i]));
        out.insert(out.end(), std::make_move_iterator(named.begin()), std::make_move_iterator(named.end()));
        if (on_run) on_run(i, configs.size());
    }
    return out;
}

VelocityExperiment velocity_experiment(std::vector<NamedSnapshot> snaps, double threshold, const VelocityPreset& preset,
                                       bool holdout_last, const TrainProgress& progress) {
    if (snaps.empty() || (holdout_last && snaps.size() < 2)) {
        throw PreconditionError("velocity training needs at least one snapshot (two with a hold-out)");
    }
    std::optional<NamedSnapshot> holdout;
    if (holdout_last) {
        holdout = std::move(snaps.back());
        snaps.pop_back();
    }
    const LabeledSet data = build_velocity_dataset(snaps, threshold);
    VelocityExperiment ex{train_velocity_model(data, preset, progress), data.rows(), data.count(1), 0.0, {}, {}};
    ex.val_accuracy = accuracy(ex.result.model, data, ex.result.val_rows);
    if (holdout) {
        const GridDataset grid = holdout->grid;
        const GridDataset truth = threshold_ground_truth(grid, "velocity", threshold);
        const Dataset predicted = data_driven_transform(grid, ex.result.model, {"velocity", 10});
        ex.holdout_id = holdout->id;
        ex.holdout_agreement = agreement(truth, std::visit([](const auto& d) -> GridDataset {
            if constexpr (std::is_same_v<std::decay_t<decltype(d)>, TableDataset>) {
                throw ModelError("velocity model produced a table");
            } else {
                return d;
            }
        }, predicted));
        ex.result.model.metadata["eval.holdout"] = *ex.holdout_id;
        ex.result.model.metadata["eval.holdout_agreement"] = format_real(*ex.holdout_agreement);
    }
    return ex;
}

PressureExperiment pressure_experiment(const std::vector<NamedSnapshot>& snaps, double threshold,
                                       const PressurePreset& preset, const TrainProgress& progress) {
    const LabeledSet data = build_pressure_dataset(snaps, threshold);
    PressureExperiment ex{train_pressure_model(data, preset, progress), data.count(0), data.count(1), 0.0};
    ex.val_accuracy = accuracy(ex.result.model, data, ex.result.val_rows);
    ex.result.model.metadata["eval.val_accuracy"] = format_real(ex.val_accuracy);
    return ex;
}

}  // namespace fieldlens
