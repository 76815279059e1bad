#pragma once

// Labeled datasets from cavity snapshots and preset training runs for the
// velocity segmentation and pressure classification models.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fieldlens/cavity.hpp"
#include "fieldlens/core_data.hpp"
#include "fieldlens/nn.hpp"

namespace fieldlens {

struct LabeledSet {
    TensorND X;                  // [n, d]
    std::vector<std::size_t> y;  // class indices in {0, 1}
    std::vector<std::string> snapshot_ids;
    std::string rule;

    std::size_t rows() const noexcept { return y.size(); }
    std::size_t count(std::size_t label) const;
};

struct NamedSnapshot {
    std::string id;
    RectilinearDataset grid;
};

/// Ids of the form "<tag>_t<time>" for a simulated series.
std::vector<NamedSnapshot> name_series(const std::vector<Snapshot>& series, const std::string& tag);

/// One row per point per snapshot, d = 3; label 1 iff |velocity| > threshold.
LabeledSet build_velocity_dataset(const std::vector<NamedSnapshot>& snaps, double threshold);

inline constexpr std::size_t kPressureInputSize = 2500;

/// One row per snapshot, d = 2500; label 1 iff max(pressure) > threshold.
LabeledSet build_pressure_dataset(const std::vector<NamedSnapshot>& snaps, double threshold);

/// Concatenates rows; both sets must share d.
LabeledSet concat(const LabeledSet& a, const LabeledSet& b);

struct VelocityPreset {
    std::size_t epochs = 5000;
    double learning_rate = 5e-4;
    double train_fraction = 0.8;
    std::uint64_t seed = 42;
};

struct PressurePreset {
    std::size_t epochs = 500;
    double learning_rate = 5e-4;
    double train_fraction = 0.8;
    std::uint64_t seed = 42;
};

/// 3 -> 80 -> 40 -> 10 -> 2 with Tanh, labels below/above, per-point output.
TrainResult train_velocity_model(const LabeledSet& data, const VelocityPreset& preset = {},
                                 const TrainProgress& progress = {});

/// 2500 -> 50 -> 20 -> 2 with Tanh, labels Low/High, whole-input output.
TrainResult train_pressure_model(const LabeledSet& data, const PressurePreset& preset = {},
                                 const TrainProgress& progress = {});

/// The pressure corpus: Re in {100, 500, 1000} x lid in {-0.5, -1, -1.5, -2} on the base grid.
std::vector<SimConfig> pressure_corpus_configs(const SimConfig& base = {});
std::string corpus_tag(const SimConfig& c);

/// Fraction of rows whose argmax prediction equals the label.
double accuracy(const ModelSpec& model, const TensorND& X, std::span<const std::size_t> y);
/// Accuracy restricted to a subset of rows.
double accuracy(const ModelSpec& model, const LabeledSet& data, std::span<const std::size_t> rows);

std::string history_csv(const TrainHistory& history);
void write_history_csv(const std::filesystem::path& path, const TrainHistory& history);

/// Rectilinear snapshots from legacy files; directories contribute their *.vtk files.
/// Ids are file stems; order is by the "t=" entry of each title, then by id.
std::vector<NamedSnapshot> load_snapshots(const std::vector<std::filesystem::path>& paths);

/// Re=10, lid=2, 50x50 scene to t=20 (21 snapshots), tagged "visc".
std::vector<NamedSnapshot> simulate_velocity_scene(const StepObserver& on_step = {});
/// Every run of pressure_corpus_configs, tagged by corpus_tag.
std::vector<NamedSnapshot> simulate_pressure_corpus(const std::function<void(std::size_t, std::size_t)>& on_run = {});

struct VelocityExperiment {
    TrainResult result;
    std::size_t rows = 0;
    std::size_t above = 0;
    double val_accuracy = 0.0;
    std::optional<std::string> holdout_id;
    std::optional<double> holdout_agreement;  // model segmentation vs threshold filter
};

/// Trains on all snapshots except, when `holdout_last`, the final one, which is then
/// scored by agreement between the data-driven and threshold filters.
VelocityExperiment velocity_experiment(std::vector<NamedSnapshot> snaps, double threshold, const VelocityPreset& preset,
                                       bool holdout_last, const TrainProgress& progress = {});

struct PressureExperiment {
    TrainResult result;
    std::size_t low = 0;
    std::size_t high = 0;
    double val_accuracy = 0.0;
};

PressureExperiment pressure_experiment(const std::vector<NamedSnapshot>& snaps, double threshold,
                                       const PressurePreset& preset, const TrainProgress& progress = {});

}  // namespace fieldlens
