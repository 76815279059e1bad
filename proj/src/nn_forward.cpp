#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>

#include "fieldlens/error.hpp"
#include "fieldlens/nn.hpp"
#include "nn_internal.hpp"

namespace fieldlens {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string shp(const std::vector<std::size_t>& s) { return shape_string(s); }

std::vector<std::size_t> conv_output(const Conv2D& c, const std::vector<std::size_t>& s, std::size_t li) {
    if (s.size() != 3) throw ShapeError(li, "conv2d needs [channels,height,width], got " + shp(s));
    if (s[0] != c.in_channels) {
        throw ShapeError(li, "conv2d expects " + std::to_string(c.in_channels) + " channels, got " + std::to_string(s[0]));
    }
    if (s[1] + 2 * c.padding < c.kernel || s[2] + 2 * c.padding < c.kernel) {
        throw ShapeError(li, "conv2d kernel larger than padded input " + shp(s));
    }
    return {c.out_channels, (s[1] + 2 * c.padding - c.kernel) / c.stride + 1,
            (s[2] + 2 * c.padding - c.kernel) / c.stride + 1};
}

std::vector<std::size_t> pool_output(const MaxPool2D& p, const std::vector<std::size_t>& s, std::size_t li) {
    if (s.size() != 3) throw ShapeError(li, "maxpool2d needs [channels,height,width], got " + shp(s));
    if (s[1] < p.kernel || s[2] < p.kernel) throw ShapeError(li, "maxpool2d kernel larger than input " + shp(s));
    return {s[0], (s[1] - p.kernel) / p.stride + 1, (s[2] - p.kernel) / p.stride + 1};
}

std::vector<std::size_t> layer_output(const Layer& layer, const std::vector<std::size_t>& s, std::size_t li) {
    return std::visit(
        overloaded{
            [&](const Linear& l) -> std::vector<std::size_t> {
                if (s.empty() || s.back() != l.in) {
                    throw ShapeError(li, "linear expects last axis " + std::to_string(l.in) + ", got " + shp(s));
                }
                auto out = s;
                out.back() = l.out;
                return out;
            },
            [&](const Flatten&) -> std::vector<std::size_t> { return {element_count(s)}; },
            [&](const Conv2D& c) { return conv_output(c, s, li); },
            [&](const MaxPool2D& p) { return pool_output(p, s, li); },
            [&](const auto&) -> std::vector<std::size_t> {
                if (s.empty()) throw ShapeError(li, "activation on an empty shape");
                return s;
            }},
        layer);
}

void check_layer_invariants(const Layer& layer, std::size_t li) {
    std::visit(overloaded{[&](const Linear& l) {
                              if (l.in == 0 || l.out == 0) throw ShapeError(li, "linear dimensions must be positive");
                              if (l.weight.size() != l.in * l.out || l.bias.size() != l.out) {
                                  throw ShapeError(li, "linear " + std::to_string(l.in) + "->" + std::to_string(l.out) +
                                                           " has " + std::to_string(l.weight.size()) + " weights and " +
                                                           std::to_string(l.bias.size()) + " biases");
                              }
                          },
                          [&](const Conv2D& c) {
                              if (c.kernel == 0 || c.stride == 0 || c.in_channels == 0 || c.out_channels == 0) {
                                  throw ShapeError(li, "conv2d sizes must be positive");
                              }
                              if (c.weight.size() != c.out_channels * c.in_channels * c.kernel * c.kernel ||
                                  c.bias.size() != c.out_channels) {
                                  throw ShapeError(li, "conv2d weight/bias lengths do not match its dimensions");
                              }
                          },
                          [&](const MaxPool2D& p) {
                              if (p.kernel == 0 || p.stride == 0) throw ShapeError(li, "maxpool2d sizes must be positive");
                          },
                          [](const auto&) {}},
               layer);
}

// --- batched kernels over TensorND with a leading batch axis ---

TensorND apply_linear(const Linear& l, const TensorND& x) {
    const std::size_t rows = x.size() / l.in;
    auto out_shape = x.shape;
    out_shape.back() = l.out;
    TensorND y(out_shape);
    detail::ConstRowMap X(x.values.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(l.in));
    detail::ConstRowMap W(l.weight.data(), static_cast<Eigen::Index>(l.out), static_cast<Eigen::Index>(l.in));
    detail::RowMap Y(y.values.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(l.out));
    Y.noalias() = X * W.transpose();
    Y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(l.bias.data(), static_cast<Eigen::Index>(l.out));
    return y;
}

TensorND apply_conv(const Conv2D& c, const TensorND& x) {
    const std::size_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    const auto os = conv_output(c, {C, H, W}, 0);
    const std::size_t OH = os[1], OW = os[2], K = c.kernel;
    TensorND y({B, c.out_channels, OH, OW});
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t o = 0; o < c.out_channels; ++o) {
            for (std::size_t oy = 0; oy < OH; ++oy) {
                for (std::size_t ox = 0; ox < OW; ++ox) {
                    double acc = c.bias[o];
                    for (std::size_t ic = 0; ic < C; ++ic) {
                        for (std::size_t ky = 0; ky < K; ++ky) {
                            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * c.stride + ky) -
                                                      static_cast<std::ptrdiff_t>(c.padding);
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                            for (std::size_t kx = 0; kx < K; ++kx) {
                                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * c.stride + kx) -
                                                          static_cast<std::ptrdiff_t>(c.padding);
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                                acc += c.weight[((o * C + ic) * K + ky) * K + kx] *
                                       x.values[((b * C + ic) * H + static_cast<std::size_t>(iy)) * W +
                                                static_cast<std::size_t>(ix)];
                            }
                        }
                    }
                    y.values[((b * c.out_channels + o) * OH + oy) * OW + ox] = acc;
                }
            }
        }
    }
    return y;
}

TensorND apply_pool(const MaxPool2D& p, const TensorND& x) {
    const std::size_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    const auto os = pool_output(p, {C, H, W}, 0);
    const std::size_t OH = os[1], OW = os[2];
    TensorND y({B, C, OH, OW});
    for (std::size_t bc = 0; bc < B * C; ++bc) {
        for (std::size_t oy = 0; oy < OH; ++oy) {
            for (std::size_t ox = 0; ox < OW; ++ox) {
                double m = -std::numeric_limits<double>::infinity();
                for (std::size_t ky = 0; ky < p.kernel; ++ky) {
                    for (std::size_t kx = 0; kx < p.kernel; ++kx) {
                        m = std::max(m, x.values[(bc * H + oy * p.stride + ky) * W + ox * p.stride + kx]);
                    }
                }
                y.values[(bc * OH + oy) * OW + ox] = m;
            }
        }
    }
    return y;
}

}  // namespace

namespace detail {

void tanh_inplace(std::span<double> v) {
    // 1 - 2/(e^2x + 1)
    Eigen::Map<Eigen::ArrayXd> a(v.data(), static_cast<Eigen::Index>(v.size()));
    a = 1.0 - 2.0 / ((2.0 * a).exp() + 1.0);
}

void relu_inplace(std::span<double> v) {
    Eigen::Map<Eigen::ArrayXd> a(v.data(), static_cast<Eigen::Index>(v.size()));
    a = a.max(0.0);
}

void softmax_rows_inplace(std::span<double> v, std::size_t width) {
    const std::size_t rows = v.size() / width;
    for (std::size_t r = 0; r < rows; ++r) {
        double* row = v.data() + r * width;
        const double mx = *std::max_element(row, row + width);
        double sum = 0.0;
        for (std::size_t c = 0; c < width; ++c) {
            row[c] = std::exp(row[c] - mx);
            sum += row[c];
        }
        for (std::size_t c = 0; c < width; ++c) row[c] /= sum;
    }
}

}  // namespace detail

std::string_view layer_name(const Layer& layer) {
    return std::visit(overloaded{[](const Linear&) { return std::string_view("linear"); },
                                 [](const Tanh&) { return std::string_view("tanh"); },
                                 [](const Relu&) { return std::string_view("relu"); },
                                 [](const Softmax&) { return std::string_view("softmax"); },
                                 [](const Flatten&) { return std::string_view("flatten"); },
                                 [](const Conv2D&) { return std::string_view("conv2d"); },
                                 [](const MaxPool2D&) { return std::string_view("maxpool2d"); }},
                      layer);
}

std::vector<std::size_t> infer_output_shape(const ModelSpec& model, std::span<const std::size_t> input_shape) {
    std::vector<std::size_t> s(input_shape.begin(), input_shape.end());
    for (std::size_t i = 0; i < model.layers.size(); ++i) s = layer_output(model.layers[i], s, i);
    return s;
}

std::size_t detail::class_count(const ModelSpec& model, const std::vector<std::size_t>& out_shape) {
    if (model.output.kind == OutputKind::whole_input_classes) return element_count(out_shape);
    // Per-point image models emit [classes, H, W]; per-point dense models emit [classes].
    return model.input.shape.size() == 3 ? out_shape.front() : out_shape.back();
}

void validate_model(const ModelSpec& model) {
    if (model.format_version != kModelFormatVersion) {
        throw ModelError("unsupported model format_version " + std::to_string(model.format_version) + " (expected " +
                         std::to_string(kModelFormatVersion) + ")");
    }
    const auto& in = model.input;
    if (in.shape.empty() || std::find(in.shape.begin(), in.shape.end(), 0) != in.shape.end()) {
        throw ModelError("input_spec.shape must be non-empty with positive entries");
    }
    if (!(in.value_scale > 0) || !std::isfinite(in.value_scale)) throw ModelError("input_spec.value_scale must be positive");
    if (in.normalize_mean.size() != in.normalize_std.size()) {
        throw ModelError("input_spec.normalize_mean and normalize_std differ in length");
    }
    for (double s : in.normalize_std) {
        if (!(s > 0)) throw ModelError("input_spec.normalize_std entries must be positive");
    }
    for (std::size_t i = 0; i < model.layers.size(); ++i) check_layer_invariants(model.layers[i], i);

    const auto out_shape = infer_output_shape(model, in.shape);
    const std::size_t classes = detail::class_count(model, out_shape);
    if (model.output.labels.size() != classes) {
        throw ModelError("output_spec has " + std::to_string(model.output.labels.size()) +
                         " labels but the model produces " + std::to_string(classes) + " classes");
    }
    if (!model.output.colors.empty() && model.output.colors.size() != classes) {
        throw ModelError("output_spec has " + std::to_string(model.output.colors.size()) + " colors for " +
                         std::to_string(classes) + " classes");
    }
    for (const auto& c : model.output.colors) {
        for (int ch : c) {
            if (ch < 0 || ch > 255) throw ModelError("output_spec color channel outside [0,255]");
        }
    }
}

std::size_t parameter_count(const ModelSpec& model) {
    std::size_t n = 0;
    for (const auto& layer : model.layers) {
        if (const auto* l = std::get_if<Linear>(&layer)) n += l->weight.size() + l->bias.size();
        if (const auto* c = std::get_if<Conv2D>(&layer)) n += c->weight.size() + c->bias.size();
    }
    return n;
}

TensorND forward(const ModelSpec& model, const TensorND& input) {
    const auto& expect = model.input.shape;
    bool batched = false;
    if (input.shape == expect) {
        batched = false;
    } else if (input.rank() == expect.size() + 1 && std::equal(expect.begin(), expect.end(), input.shape.begin() + 1)) {
        batched = true;
    } else {
        throw ShapeError(0, "input shape " + shape_string(input.shape) + " does not match model input " +
                                shape_string(expect) + " (optionally with a leading batch axis)");
    }

    TensorND x = input;
    if (!batched) x.shape.insert(x.shape.begin(), 1);

    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        // Shape check on the unbatched tail so errors name the failing layer.
        std::vector<std::size_t> tail(x.shape.begin() + 1, x.shape.end());
        layer_output(model.layers[i], tail, i);
        const Layer& layer = model.layers[i];
        if (const auto* l = std::get_if<Linear>(&layer)) {
            x = apply_linear(*l, x);
        } else if (std::holds_alternative<Tanh>(layer)) {
            detail::tanh_inplace(x.values);
        } else if (std::holds_alternative<Relu>(layer)) {
            detail::relu_inplace(x.values);
        } else if (std::holds_alternative<Softmax>(layer)) {
            detail::softmax_rows_inplace(x.values, x.shape.back());
        } else if (std::holds_alternative<Flatten>(layer)) {
            x.shape = {x.shape[0], x.size() / x.shape[0]};
        } else if (const auto* c = std::get_if<Conv2D>(&layer)) {
            x = apply_conv(*c, x);
        } else {
            x = apply_pool(std::get<MaxPool2D>(layer), x);
        }
    }
    if (!batched) x.shape.erase(x.shape.begin());
    return x;
}

TensorND softmax(const TensorND& logits) {
    if (logits.rank() == 0) throw PreconditionError("softmax of a rank-0 tensor");
    TensorND out = logits;
    detail::softmax_rows_inplace(out.values, out.shape.back());
    return out;
}

std::size_t argmax(std::span<const double> row) {
    if (row.empty()) throw PreconditionError("argmax of an empty row");
    std::size_t best = 0;
    for (std::size_t i = 1; i < row.size(); ++i) {
        if (row[i] > row[best]) best = i;
    }
    return best;
}

LossResult cross_entropy_loss(const TensorND& logits, std::span<const std::size_t> targets) {
    if (logits.rank() != 2) throw PreconditionError("cross entropy needs [batch, classes] logits");
    const std::size_t B = logits.shape[0], C = logits.shape[1];
    if (targets.size() != B) {
        throw PreconditionError("cross entropy got " + std::to_string(targets.size()) + " targets for batch " +
                                std::to_string(B));
    }
    LossResult r{0.0, softmax(logits)};
    for (std::size_t b = 0; b < B; ++b) {
        if (targets[b] >= C) {
            throw PreconditionError("target " + std::to_string(targets[b]) + " out of range for " + std::to_string(C) +
                                    " classes");
        }
        const double* z = logits.values.data() + b * C;
        const double mx = *std::max_element(z, z + C);
        double sum = 0.0;
        for (std::size_t c = 0; c < C; ++c) sum += std::exp(z[c] - mx);
        r.loss += (std::log(sum) + mx) - z[targets[b]];
        r.grad_logits.values[b * C + targets[b]] -= 1.0;
    }
    r.loss /= static_cast<double>(B);
    for (auto& g : r.grad_logits.values) g /= static_cast<double>(B);
    return r;
}

}  // namespace fieldlens
