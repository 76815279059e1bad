#include "fieldlens/filters.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fieldlens/error.hpp"
#include "fieldlens/text.hpp"

namespace fieldlens {

namespace {

const DataArray& select_array(const ImageDataset& image, std::string_view name) {
    if (name.empty()) {
        if (image.point_arrays().empty()) throw PreconditionError("input has no point arrays");
        return image.point_arrays().front();
    }
    const DataArray* a = image.find_array(name);
    if (!a) throw PreconditionError("input has no point array named '" + std::string(name) + "'");
    return *a;
}

const DataArray& select_array(const GridDataset& grid, std::string_view name) {
    const auto& arrays = point_arrays(grid);
    if (name.empty()) {
        if (arrays.empty()) throw PreconditionError("input has no point arrays");
        return arrays.front();
    }
    const DataArray* a = find_array(grid, name);
    if (!a) throw PreconditionError("input has no point array named '" + std::string(name) + "'");
    return *a;
}

/// Per-channel mean/std lookup; empty means identity, one entry applies to every channel.
struct Normalizer {
    const InputSpec& spec;
    std::size_t channels;

    Normalizer(const InputSpec& s, std::size_t c) : spec(s), channels(c) {
        const std::size_t m = s.normalize_mean.size();
        if (m != 0 && m != 1 && m != c) {
            throw ModelError("input_spec normalizes " + std::to_string(m) + " channels but the input has " +
                             std::to_string(c));
        }
    }

    // Dividing by the reciprocal keeps 1/255-style scales exact on round inputs.
    double operator()(double x, std::size_t channel) const {
        double v = x / (1.0 / spec.value_scale);
        if (spec.normalize_mean.empty()) return v;
        const std::size_t i = spec.normalize_mean.size() == 1 ? 0 : channel;
        return (v - spec.normalize_mean[i]) / spec.normalize_std[i];
    }
};

Rgb hsv_to_rgb(double h, double s, double v) {
    const double c = v * s;
    const double hp = h / 60.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1) {
        r = c, g = x;
    } else if (hp < 2) {
        r = x, g = c;
    } else if (hp < 3) {
        g = c, b = x;
    } else if (hp < 4) {
        g = x, b = c;
    } else if (hp < 5) {
        r = x, b = c;
    } else {
        r = c, b = x;
    }
    const double m = v - c;
    const auto q = [](double u) { return static_cast<int>(std::floor(u * 255.0 + 0.5)); };
    return {q(r + m), q(g + m), q(b + m)};
}

GridDataset add_arrays(const GridDataset& grid, SegmentationArrays seg) {
    return with_array(with_array(grid, std::move(seg.classes)), std::move(seg.colors));
}

}  // namespace

TensorND preprocess_image(const ImageDataset& image, const InputSpec& spec, std::string_view array) {
    if (image.dims()[2] != 1) throw PreconditionError("image preprocessing needs a 2D image (nz = 1)");
    if (spec.shape.size() != 3) throw ModelError("image models need a [channels, height, width] input shape");
    const DataArray& src = select_array(image, array);

    const std::size_t k = src.components();
    std::size_t channels = 0;
    if (k == 1) {
        channels = spec.channel_policy == ChannelPolicy::grey_to_rgb ? 3 : 1;
    } else if (k == 3) {
        channels = 3;
    } else {
        throw UnsupportedError("images with " + std::to_string(k) + " components are not supported (need 1 or 3)");
    }
    if (channels != spec.shape[0]) {
        throw ModelError("model expects " + std::to_string(spec.shape[0]) + " channels but the image provides " +
                         std::to_string(channels));
    }
    const Normalizer norm(spec, channels);

    const std::size_t win = image.dims()[0], hin = image.dims()[1];
    const std::size_t H = spec.shape[1], W = spec.shape[2];
    // Channel value at tensor-oriented source pixel (row from the top).
    const auto at = [&](std::size_t c, std::size_t row, std::size_t col) {
        const std::size_t point = (hin - 1 - row) * win + col;
        return src.at(point, k == 1 ? 0 : c);
    };

    TensorND out({channels, H, W});
    const bool identity = (H == hin && W == win);
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t r = 0; r < H; ++r) {
            for (std::size_t q = 0; q < W; ++q) {
                double v = 0.0;
                if (identity) {
                    v = at(c, r, q);
                } else {
                    const double sy = std::clamp((static_cast<double>(r) + 0.5) * static_cast<double>(hin) / static_cast<double>(H) - 0.5,
                                                 0.0, static_cast<double>(hin - 1));
                    const double sx = std::clamp((static_cast<double>(q) + 0.5) * static_cast<double>(win) / static_cast<double>(W) - 0.5,
                                                 0.0, static_cast<double>(win - 1));
                    const std::size_t y0 = static_cast<std::size_t>(sy), x0 = static_cast<std::size_t>(sx);
                    const std::size_t y1 = std::min(y0 + 1, hin - 1), x1 = std::min(x0 + 1, win - 1);
                    const double wy = sy - static_cast<double>(y0), wx = sx - static_cast<double>(x0);
                    v = (1 - wy) * ((1 - wx) * at(c, y0, x0) + wx * at(c, y0, x1)) +
                        wy * ((1 - wx) * at(c, y1, x0) + wx * at(c, y1, x1));
                }
                out.values[(c * H + r) * W + q] = norm(v, c);
            }
        }
    }
    return out;
}

std::vector<Rgb> default_palette(std::size_t classes) {
    std::vector<Rgb> p;
    if (classes == 0) return p;
    p.push_back({0, 0, 0});
    for (std::size_t i = 1; i < classes; ++i) {
        const double hue = 360.0 * static_cast<double>(i - 1) / static_cast<double>(classes - 1);
        p.push_back(hsv_to_rgb(hue, 1.0, 1.0));
    }
    return p;
}

std::vector<Rgb> class_colors(const OutputSpec& spec) {
    return spec.colors.empty() ? default_palette(spec.labels.size()) : spec.colors;
}

SegmentationArrays map_segmentation_output(const TensorND& logits, const OutputSpec& spec) {
    if (logits.rank() != 2) throw ModelError("segmentation output must be [points, classes], got " + shape_string(logits.shape));
    const std::size_t n = logits.shape[0], c = logits.shape[1];
    if (c != spec.labels.size()) {
        throw ModelError("model emits " + std::to_string(c) + " classes but has " + std::to_string(spec.labels.size()) + " labels");
    }
    const auto palette = class_colors(spec);
    std::vector<double> cls(n), col(n * 3);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = argmax(std::span<const double>(logits.values.data() + i * c, c));
        cls[i] = static_cast<double>(k);
        for (std::size_t ch = 0; ch < 3; ++ch) col[i * 3 + ch] = palette[k][ch];
    }
    return {DataArray("class", 1, std::move(cls)), DataArray("color", 3, std::move(col))};
}

TableDataset map_classification_output(const TensorND& logits, const OutputSpec& spec, std::size_t top_k) {
    if (top_k == 0) throw PreconditionError("top_k must be at least 1");
    const std::size_t c = logits.values.size();
    if (c != spec.labels.size()) {
        throw ModelError("model emits " + std::to_string(c) + " classes but has " + std::to_string(spec.labels.size()) + " labels");
    }
    const TensorND prob = softmax(TensorND({c}, logits.values));
    std::vector<std::size_t> order(c);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return prob.values[a] > prob.values[b]; });
    const std::size_t rows = std::min(top_k, c);
    std::vector<double> rank, conf;
    std::vector<std::string> label;
    for (std::size_t r = 0; r < rows; ++r) {
        rank.push_back(static_cast<double>(r + 1));
        label.push_back(spec.labels[order[r]]);
        conf.push_back(prob.values[order[r]] * 100.0);
    }
    return TableDataset({{"rank", std::move(rank)}, {"label", std::move(label)}, {"confidence_percent", std::move(conf)}});
}

GridDataset threshold_ground_truth(const GridDataset& grid, std::string_view array, double threshold) {
    const DataArray& a = select_array(grid, array);
    std::vector<double> cls(a.tuples());
    for (std::size_t i = 0; i < cls.size(); ++i) {
        double value = 0.0;
        if (a.components() == 1) {
            value = a.at(i);
        } else {
            double s = 0.0;
            for (double x : a.tuple(i)) s += x * x;
            value = std::sqrt(s);
        }
        cls[i] = value > threshold ? 1.0 : 0.0;
    }
    return with_array(grid, DataArray("class", 1, std::move(cls)));
}

RectilinearDataset threshold_ground_truth(const RectilinearDataset& grid, std::string_view array, double threshold) {
    return std::get<RectilinearDataset>(threshold_ground_truth(GridDataset(grid), array, threshold));
}

double agreement(const GridDataset& a, const GridDataset& b, std::string_view array) {
    if (num_points(a) != num_points(b)) {
        throw PreconditionError("agreement needs equal point counts (" + std::to_string(num_points(a)) + " vs " +
                                std::to_string(num_points(b)) + ")");
    }
    const DataArray& x = select_array(a, array);
    const DataArray& y = select_array(b, array);
    if (x.components() != y.components()) throw PreconditionError("agreement arrays differ in component count");
    if (x.tuples() == 0) return 1.0;
    std::size_t same = 0;
    for (std::size_t i = 0; i < x.tuples(); ++i) {
        const auto tx = x.tuple(i), ty = y.tuple(i);
        same += std::equal(tx.begin(), tx.end(), ty.begin()) ? 1 : 0;
    }
    return static_cast<double>(same) / static_cast<double>(x.tuples());
}

Dataset data_driven_transform(const GridDataset& input, const ModelSpec& model, const DataDrivenOptions& options) {
    validate_model(model);
    const InputSpec& in = model.input;

    if (in.shape.size() == 3) {
        // Image models operate on Image Data; rectilinear inputs are converted (uniform spacing only).
        const ImageDataset image = std::holds_alternative<ImageDataset>(input)
                                       ? std::get<ImageDataset>(input)
                                       : rectilinear_to_image(std::get<RectilinearDataset>(input));
        const TensorND x = preprocess_image(image, in, options.array);
        const TensorND y = forward(model, x);
        if (model.output.kind == OutputKind::whole_input_classes) {
            return map_classification_output(y, model.output, options.top_k);
        }
        if (y.rank() != 3) throw ModelError("image segmentation output must be [classes, height, width], got " + shape_string(y.shape));
        const std::size_t c = y.shape[0], ho = y.shape[1], wo = y.shape[2];
        const std::size_t win = image.dims()[0], hin = image.dims()[1];
        // Nearest output pixel for every input point, as a [points, classes] logit table.
        TensorND per_point({win * hin, c});
        for (std::size_t b = 0; b < hin; ++b) {
            const std::size_t row_from_top = hin - 1 - b;
            const std::size_t r = std::min(ho - 1, static_cast<std::size_t>((static_cast<double>(row_from_top) + 0.5) *
                                                                           static_cast<double>(ho) / static_cast<double>(hin)));
            for (std::size_t a = 0; a < win; ++a) {
                const std::size_t q = std::min(wo - 1, static_cast<std::size_t>((static_cast<double>(a) + 0.5) *
                                                                               static_cast<double>(wo) / static_cast<double>(win)));
                for (std::size_t k = 0; k < c; ++k) per_point.values[(b * win + a) * c + k] = y.values[(k * ho + r) * wo + q];
            }
        }
        return std::visit([](const auto& g) -> Dataset { return g; },
                          add_arrays(input, map_segmentation_output(per_point, model.output)));
    }

    const DataArray& src = select_array(input, options.array);
    const std::size_t n = src.tuples(), k = src.components();
    if (model.output.kind == OutputKind::per_point_classes) {
        if (in.shape.size() != 1 || in.shape[0] != k) {
            throw ModelError("per-point model expects " + shape_string(in.shape) + " per point but array '" + src.name() +
                             "' has " + std::to_string(k) + " components");
        }
        const Normalizer norm(in, k);
        TensorND x = array_to_tensor(src, {n, k});
        for (std::size_t i = 0; i < x.values.size(); ++i) x.values[i] = norm(x.values[i], i % k);
        const TensorND y = forward(model, x);
        return std::visit([](const auto& g) -> Dataset { return g; },
                          add_arrays(input, map_segmentation_output(y, model.output)));
    }

    const std::size_t d = element_count(in.shape);
    if (n * k != d) {
        throw ModelError("whole-input model expects " + std::to_string(d) + " values but array '" + src.name() + "' has " +
                         std::to_string(n * k));
    }
    const Normalizer norm(in, k);
    std::vector<std::size_t> shape{1};
    shape.insert(shape.end(), in.shape.begin(), in.shape.end());
    TensorND x = array_to_tensor(src, shape);
    for (std::size_t i = 0; i < x.values.size(); ++i) x.values[i] = norm(x.values[i], i % k);
    return map_classification_output(forward(model, x), model.output, options.top_k);
}

Dataset data_driven_transform(const GridDataset& input, const std::filesystem::path& model_path,
                              const DataDrivenOptions& options) {
    return data_driven_transform(input, load_model_file(model_path), options);
}

ModelSpec load_model_file(const std::filesystem::path& path) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec)) throw ModelError("model file not found: " + path.string());
    return load_model(read_text_file(path));
}

void save_model_file(const std::filesystem::path& path, const ModelSpec& model) { write_file(path, save_model(model)); }

namespace {

std::vector<double> uniform_weights(std::mt19937_64& rng, std::size_t count, std::size_t fan_in) {
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    std::vector<double> w(count);
    for (auto& x : w) x = (2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0) * bound;
    return w;
}

}  // namespace

ModelSpec standin_segmentation_model(std::uint64_t seed, std::size_t classes) {
    std::mt19937_64 rng(seed);
    ModelSpec m;
    m.input = {{3, 256, 256}, 1.0 / 255.0, {0.485, 0.456, 0.406}, {0.229, 0.224, 0.225}, ChannelPolicy::grey_to_rgb};
    m.layers = {Conv2D{3, 8, 3, 1, 1, uniform_weights(rng, 8 * 3 * 9, 27), uniform_weights(rng, 8, 27)}, Relu{},
                Conv2D{8, classes, 1, 1, 0, uniform_weights(rng, classes * 8, 8), uniform_weights(rng, classes, 8)}};
    m.output.kind = OutputKind::per_point_classes;
    for (std::size_t c = 0; c < classes; ++c) m.output.labels.push_back("class_" + std::to_string(c));
    m.output.colors = default_palette(classes);
    m.metadata["standin"] = "segmentation";
    m.metadata["init.seed"] = std::to_string(seed);
    return m;
}

ModelSpec standin_classification_model(std::uint64_t seed, std::size_t classes) {
    std::mt19937_64 rng(seed);
    ModelSpec m;
    m.input = {{3, 32, 32}, 1.0 / 255.0, {0.485, 0.456, 0.406}, {0.229, 0.224, 0.225}, ChannelPolicy::grey_to_rgb};
    m.layers = {Conv2D{3, 4, 3, 2, 1, uniform_weights(rng, 4 * 3 * 9, 27), uniform_weights(rng, 4, 27)}, Relu{},
                MaxPool2D{2, 2}, Flatten{},
                Linear{256, classes, uniform_weights(rng, classes * 256, 256), uniform_weights(rng, classes, 256)}};
    m.output.kind = OutputKind::whole_input_classes;
    for (std::size_t c = 0; c < classes; ++c) m.output.labels.push_back("class_" + std::to_string(c));
    m.metadata["standin"] = "classification";
    m.metadata["init.seed"] = std::to_string(seed);
    return m;
}

}  // namespace fieldlens
