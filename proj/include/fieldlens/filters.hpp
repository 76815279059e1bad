#pragma once

// Filter algorithms: the data-driven (model inference) transform and its
// stages, the magnitude-threshold ground truth, and comparison helpers.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "fieldlens/core_data.hpp"
#include "fieldlens/nn.hpp"

namespace fieldlens {

/// Image -> [C, H, W] tensor: optional grey-to-RGB, bilinear resize to the model's
/// H x W (half-pixel centres), value scaling, per-channel (x - mean) / std.
/// Tensor row 0 is the top of the image (highest y).
TensorND preprocess_image(const ImageDataset& image, const InputSpec& spec, std::string_view array = {});

/// Class 0 black, remaining classes at evenly spaced hues with full saturation and value.
std::vector<Rgb> default_palette(std::size_t classes);

/// The model's colours when present, otherwise default_palette.
std::vector<Rgb> class_colors(const OutputSpec& spec);

struct SegmentationArrays {
    DataArray classes;  // "class", k=1
    DataArray colors;   // "color", k=3
};

/// logits [n, c] -> per-row argmax (lowest index on ties) and its colour.
SegmentationArrays map_segmentation_output(const TensorND& logits, const OutputSpec& spec);

/// logits [c] (or [1, c]) -> table (rank, label, confidence_percent), softmax x 100,
/// sorted by confidence descending then class index ascending, min(top_k, c) rows.
TableDataset map_classification_output(const TensorND& logits, const OutputSpec& spec, std::size_t top_k = 10);

/// Adds a "class" array: 1 where the point's value strictly exceeds threshold. Single-component
/// arrays compare the value itself, multi-component arrays their Euclidean magnitude.
GridDataset threshold_ground_truth(const GridDataset& grid, std::string_view array, double threshold);
RectilinearDataset threshold_ground_truth(const RectilinearDataset& grid, std::string_view array, double threshold);

/// Fraction of points whose values in `array` are equal in both grids.
double agreement(const GridDataset& a, const GridDataset& b, std::string_view array = "class");

struct DataDrivenOptions {
    std::string array;      // empty: first point array
    std::size_t top_k = 10;
};

/// Generic model-inference filter. Per-point models return the input grid (same type and
/// geometry) with "class" and "color" arrays added; whole-input models return a table.
Dataset data_driven_transform(const GridDataset& input, const ModelSpec& model, const DataDrivenOptions& options = {});
Dataset data_driven_transform(const GridDataset& input, const std::filesystem::path& model_path,
                              const DataDrivenOptions& options = {});

/// Reads and validates a model file; a missing file is a ModelError naming the path.
ModelSpec load_model_file(const std::filesystem::path& path);
void save_model_file(const std::filesystem::path& path, const ModelSpec& model);

/// Randomly initialized stand-ins with the shape contracts of the image models:
/// a [3,256,256] -> [classes,256,256] convolutional segmenter with ImageNet normalization,
/// and a [3,32,32] -> [classes] convolutional classifier.
ModelSpec standin_segmentation_model(std::uint64_t seed, std::size_t classes = 21);
ModelSpec standin_classification_model(std::uint64_t seed, std::size_t classes = 1000);

}  // namespace fieldlens
