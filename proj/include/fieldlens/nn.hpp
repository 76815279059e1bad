#pragma once

// Neural-network core: layer specs, batched forward inference, cross-entropy,
// backpropagation and Adam for dense networks, and the JSON model file.
//
// Tensors carry an optional leading batch axis. A model's input shape never
// includes it; forward() accepts either exactly that shape or [batch, ...shape].

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "fieldlens/core_data.hpp"

namespace fieldlens {

struct Linear {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> weight;  // row-major [out][in]
    std::vector<double> bias;    // [out]

    bool operator==(const Linear&) const = default;
};

struct Tanh {
    bool operator==(const Tanh&) const = default;
};
struct Relu {
    bool operator==(const Relu&) const = default;
};
/// Normalizes the last axis.
struct Softmax {
    bool operator==(const Softmax&) const = default;
};
/// Collapses every non-batch axis into one.
struct Flatten {
    bool operator==(const Flatten&) const = default;
};

/// Square-kernel 2D convolution over [batch, channels, height, width]. Forward only.
struct Conv2D {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::vector<double> weight;  // [out][in][kernel][kernel]
    std::vector<double> bias;    // [out]

    bool operator==(const Conv2D&) const = default;
};

struct MaxPool2D {
    std::size_t kernel = 2;
    std::size_t stride = 2;

    bool operator==(const MaxPool2D&) const = default;
};

using Layer = std::variant<Linear, Tanh, Relu, Softmax, Flatten, Conv2D, MaxPool2D>;

std::string_view layer_name(const Layer& layer);

enum class ChannelPolicy { none, grey_to_rgb };
enum class OutputKind { per_point_classes, whole_input_classes };

using Rgb = std::array<int, 3>;

struct InputSpec {
    std::vector<std::size_t> shape;
    double value_scale = 1.0;
    std::vector<double> normalize_mean;  // per channel; empty means no normalization
    std::vector<double> normalize_std;
    ChannelPolicy channel_policy = ChannelPolicy::none;

    bool operator==(const InputSpec&) const = default;
};

struct OutputSpec {
    OutputKind kind = OutputKind::per_point_classes;
    std::vector<std::string> labels;
    std::vector<Rgb> colors;  // empty selects the default palette

    bool operator==(const OutputSpec&) const = default;
};

inline constexpr int kModelFormatVersion = 1;

struct ModelSpec {
    int format_version = kModelFormatVersion;
    InputSpec input;
    std::vector<Layer> layers;
    OutputSpec output;
    /// Free-form provenance (initialization scheme, training config, seed).
    std::map<std::string, std::string> metadata;

    bool operator==(const ModelSpec&) const = default;
};

/// Output shape (without batch axis) for an unbatched input of `input_shape`.
/// Throws ShapeError naming the first incompatible layer.
std::vector<std::size_t> infer_output_shape(const ModelSpec& model, std::span<const std::size_t> input_shape);

/// Checks every ModelSpec invariant; throws ModelError.
void validate_model(const ModelSpec& model);

std::size_t parameter_count(const ModelSpec& model);

TensorND forward(const ModelSpec& model, const TensorND& input);

/// Row-wise softmax of the last axis, computed with max subtraction.
TensorND softmax(const TensorND& logits);

/// Index of the largest entry; the lowest index wins ties.
std::size_t argmax(std::span<const double> row);

struct LossResult {
    double loss = 0.0;
    TensorND grad_logits;
};

/// Mean cross-entropy over a [batch, classes] logit tensor.
LossResult cross_entropy_loss(const TensorND& logits, std::span<const std::size_t> targets);

struct LinearGrad {
    std::size_t layer = 0;  // index into ModelSpec::layers
    std::vector<double> weight;
    std::vector<double> bias;
};

struct Gradients {
    double loss = 0.0;
    std::vector<LinearGrad> linear;
};

/// Gradients of mean cross-entropy for a dense (Linear/Tanh/Relu) model.
Gradients backward(const ModelSpec& model, const TensorND& input_batch, std::span<const std::size_t> targets);

struct AdamState {
    std::size_t t = 0;
    std::vector<double> m;
    std::vector<double> v;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    AdamState() = default;
    AdamState(std::size_t parameters, double learning_rate)
        : m(parameters, 0.0), v(parameters, 0.0), lr(learning_rate) {}
};

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

/// Flat views over every Linear weight and bias, in layer order (weight before bias).
std::vector<double> pack_parameters(const ModelSpec& model);
void unpack_parameters(ModelSpec& model, std::span<const double> params);
std::vector<double> pack_gradients(const Gradients& grads);

enum class LossKind { cross_entropy };

struct TrainConfig {
    std::size_t epochs = 1;
    double learning_rate = 5e-4;
    double train_fraction = 0.8;
    std::uint64_t seed = 42;
    LossKind loss = LossKind::cross_entropy;
};

struct TrainHistory {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
};

struct TrainResult {
    ModelSpec model;
    TrainHistory history;
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> val_rows;
};

/// Called after each epoch with (epoch index, epochs).
using TrainProgress = std::function<void(std::size_t, std::size_t)>;

/// Seeded shuffle split of n rows; both partitions non-empty or throws.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_rows(std::size_t n, double train_fraction,
                                                                         std::uint64_t seed);

/// Full-batch Adam on the training partition, validation loss on the rest.
TrainResult train(const ModelSpec& model, const TensorND& X, std::span<const std::size_t> y, const TrainConfig& cfg,
                  const TrainProgress& progress = {});

/// Dense stack widths[0] -> ... -> widths.back() with `activation` between linears,
/// weights uniform in [-sqrt(1/in), +sqrt(1/in)].
ModelSpec init_dense_model(std::span<const std::size_t> widths, const Layer& activation, std::uint64_t seed);

std::string save_model(const ModelSpec& model);
ModelSpec load_model(std::string_view text);

}  // namespace fieldlens
