#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <random>

#include "fieldlens/error.hpp"
#include "fieldlens/nn.hpp"
#include "fieldlens/text.hpp"
#include "nn_internal.hpp"

namespace fieldlens {

namespace {

using detail::RowMatrix;

enum class OpKind { linear, tanh, relu };

struct DenseOp {
    OpKind kind;
    const Linear* linear = nullptr;
    std::size_t layer = 0;
};

std::vector<DenseOp> dense_ops(const ModelSpec& model) {
    std::vector<DenseOp> ops;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const auto& layer = model.layers[i];
        if (const auto* l = std::get_if<Linear>(&layer)) {
            ops.push_back({OpKind::linear, l, i});
        } else if (std::holds_alternative<Tanh>(layer)) {
            ops.push_back({OpKind::tanh, nullptr, i});
        } else if (std::holds_alternative<Relu>(layer)) {
            ops.push_back({OpKind::relu, nullptr, i});
        } else {
            throw ModelError("layer " + std::to_string(i) + " (" + std::string(layer_name(layer)) +
                             ") is an inference-only layer; training supports linear, tanh and relu");
        }
    }
    return ops;
}

Eigen::Map<const RowMatrix> weight_map(const Linear& l) {
    return {l.weight.data(), static_cast<Eigen::Index>(l.out), static_cast<Eigen::Index>(l.in)};
}

Eigen::Map<const Eigen::RowVectorXd> bias_map(const Linear& l) {
    return {l.bias.data(), static_cast<Eigen::Index>(l.out)};
}

/// Mean cross-entropy and its gradient w.r.t. the logits (overwrites `logits` with the gradient).
double cross_entropy_grad_inplace(RowMatrix& logits, std::span<const std::size_t> targets) {
    const Eigen::Index B = logits.rows(), C = logits.cols();
    if (static_cast<std::size_t>(B) != targets.size()) {
        throw PreconditionError("got " + std::to_string(targets.size()) + " targets for " + std::to_string(B) + " rows");
    }
    double loss = 0.0;
    const double inv_b = 1.0 / static_cast<double>(B);
    for (Eigen::Index b = 0; b < B; ++b) {
        const std::size_t t = targets[static_cast<std::size_t>(b)];
        if (t >= static_cast<std::size_t>(C)) {
            throw PreconditionError("target " + std::to_string(t) + " out of range for " + std::to_string(C) + " classes");
        }
        auto row = logits.row(b);
        const double mx = row.maxCoeff();
        const double zt = row(static_cast<Eigen::Index>(t));
        double sum = 0.0;
        for (Eigen::Index c = 0; c < C; ++c) {
            row(c) = std::exp(row(c) - mx);
            sum += row(c);
        }
        loss += (std::log(sum) + mx) - zt;
        row /= sum;
        row(static_cast<Eigen::Index>(t)) -= 1.0;
        row *= inv_b;
    }
    return loss * inv_b;
}

/// Activation and gradient buffers reused across epochs. acts[i] is the input of op i;
/// activations run in place, so tanh/relu derivatives are taken from their outputs.
struct DenseWorkspace {
    std::vector<RowMatrix> acts;
    std::vector<RowMatrix> grads;
    Eigen::VectorXd ones;
};

void check_width(const DenseOp& op, Eigen::Index cols) {
    if (cols != static_cast<Eigen::Index>(op.linear->in)) {
        throw ShapeError(op.layer, "linear expects " + std::to_string(op.linear->in) + " inputs, got " +
                                       std::to_string(cols));
    }
}

/// Runs the ops on X; the result is ws.acts.back().
void dense_forward(const std::vector<DenseOp>& ops, const RowMatrix& X, DenseWorkspace& ws) {
    ws.acts.resize(ops.size() + 1);
    const RowMatrix* in = &X;
    for (std::size_t i = 0; i < ops.size(); ++i) {
        const auto& op = ops[i];
        RowMatrix& out = ws.acts[i + 1];
        switch (op.kind) {
            case OpKind::linear:
                check_width(op, in->cols());
                out.resize(in->rows(), static_cast<Eigen::Index>(op.linear->out));
                out.noalias() = *in * weight_map(*op.linear).transpose();
                out.rowwise() += bias_map(*op.linear);
                break;
            case OpKind::tanh:
            case OpKind::relu:
                if (i == 0) {
                    out = *in;
                } else {
                    std::swap(out, ws.acts[i]);
                }
                if (op.kind == OpKind::tanh) {
                    detail::tanh_inplace(std::span<double>(out.data(), static_cast<std::size_t>(out.size())));
                } else {
                    out = out.cwiseMax(0.0);
                }
                break;
        }
        in = &out;
    }
}

const RowMatrix& op_input(const DenseWorkspace& ws, const RowMatrix& X, std::size_t i) {
    return i == 0 ? X : ws.acts[i];
}

double dense_loss(const std::vector<DenseOp>& ops, const RowMatrix& X, std::span<const std::size_t> y,
                  DenseWorkspace& ws) {
    dense_forward(ops, X, ws);
    return cross_entropy_grad_inplace(ws.acts.back(), y);
}

Gradients dense_backward(const std::vector<DenseOp>& ops, const RowMatrix& X, std::span<const std::size_t> y,
                         DenseWorkspace& ws) {
    dense_forward(ops, X, ws);
    ws.grads.resize(ops.size() + 1);
    Gradients g;
    std::swap(ws.grads.back(), ws.acts.back());
    g.loss = cross_entropy_grad_inplace(ws.grads.back(), y);

    for (std::size_t i = ops.size(); i-- > 0;) {
        const auto& op = ops[i];
        RowMatrix& grad = ws.grads[i + 1];
        switch (op.kind) {
            case OpKind::linear: {
                const Linear& l = *op.linear;
                LinearGrad lg{op.layer, std::vector<double>(l.weight.size()), std::vector<double>(l.bias.size())};
                Eigen::Map<RowMatrix>(lg.weight.data(), static_cast<Eigen::Index>(l.out),
                                      static_cast<Eigen::Index>(l.in))
                    .noalias() = grad.transpose() * op_input(ws, X, i);
                if (ws.ones.size() != grad.rows()) ws.ones = Eigen::VectorXd::Ones(grad.rows());
                Eigen::Map<Eigen::VectorXd>(lg.bias.data(), static_cast<Eigen::Index>(l.out)).noalias() =
                    grad.transpose() * ws.ones;
                if (i > 0) {
                    RowMatrix& prev = ws.grads[i];
                    prev.resize(grad.rows(), static_cast<Eigen::Index>(l.in));
                    prev.noalias() = grad * weight_map(l);
                }
                g.linear.push_back(std::move(lg));
                break;
            }
            case OpKind::tanh:
                grad.array() *= 1.0 - ws.acts[i + 1].array().square();
                std::swap(grad, ws.grads[i]);
                break;
            case OpKind::relu:
                grad.array() *= (ws.acts[i + 1].array() > 0.0).cast<double>();
                std::swap(grad, ws.grads[i]);
                break;
        }
    }
    std::reverse(g.linear.begin(), g.linear.end());
    return g;
}

RowMatrix gather_rows(const TensorND& X, std::span<const std::size_t> rows) {
    const std::size_t d = X.shape[1];
    RowMatrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        std::copy_n(X.values.data() + rows[r] * d, d, out.data() + r * d);
    }
    return out;
}

RowMatrix as_matrix(const TensorND& X) {
    if (X.rank() != 2) throw PreconditionError("training input must be [rows, features], got " + shape_string(X.shape));
    return detail::ConstRowMap(X.values.data(), static_cast<Eigen::Index>(X.shape[0]),
                               static_cast<Eigen::Index>(X.shape[1]));
}

/// Uniform integer in [0, bound) from a 64-bit engine, by rejection; identical on every platform.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t r;
    do {
        r = rng();
    } while (r >= limit);
    return r % bound;
}

double unit_real(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

Gradients backward(const ModelSpec& model, const TensorND& input_batch, std::span<const std::size_t> targets) {
    const auto ops = dense_ops(model);
    DenseWorkspace ws;
    return dense_backward(ops, as_matrix(input_batch), targets, ws);
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& s) {
    if (params.size() != grads.size() || s.m.size() != params.size() || s.v.size() != params.size()) {
        throw PreconditionError("adam: parameter, gradient and moment sizes differ");
    }
    ++s.t;
    const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * g;
        s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * g * g;
        const double m_hat = s.m[i] / c1;
        const double v_hat = s.v[i] / c2;
        params[i] -= s.lr * m_hat / (std::sqrt(v_hat) + s.eps);
    }
}

std::vector<double> pack_parameters(const ModelSpec& model) {
    std::vector<double> p;
    for (const auto& layer : model.layers) {
        if (const auto* l = std::get_if<Linear>(&layer)) {
            p.insert(p.end(), l->weight.begin(), l->weight.end());
            p.insert(p.end(), l->bias.begin(), l->bias.end());
        }
    }
    return p;
}

void unpack_parameters(ModelSpec& model, std::span<const double> params) {
    std::size_t off = 0;
    for (auto& layer : model.layers) {
        if (auto* l = std::get_if<Linear>(&layer)) {
            if (off + l->weight.size() + l->bias.size() > params.size()) {
                throw PreconditionError("parameter vector too short for model");
            }
            std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(off), l->weight.size(), l->weight.begin());
            off += l->weight.size();
            std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(off), l->bias.size(), l->bias.begin());
            off += l->bias.size();
        }
    }
    if (off != params.size()) throw PreconditionError("parameter vector longer than model");
}

std::vector<double> pack_gradients(const Gradients& grads) {
    std::vector<double> p;
    for (const auto& g : grads.linear) {
        p.insert(p.end(), g.weight.begin(), g.weight.end());
        p.insert(p.end(), g.bias.begin(), g.bias.end());
    }
    return p;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_rows(std::size_t n, double train_fraction,
                                                                         std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw PreconditionError("train_fraction must lie in (0,1), got " + format_real(train_fraction));
    }
    if (n < 2) throw PreconditionError("cannot split " + std::to_string(n) + " rows into train and validation sets");
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[bounded(rng, i + 1)]);

    auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * train_fraction + 0.5));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
    std::vector<std::size_t> tr(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> va(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
    return {std::move(tr), std::move(va)};
}

TrainResult train(const ModelSpec& model, const TensorND& X, std::span<const std::size_t> y, const TrainConfig& cfg,
                  const TrainProgress& progress) {
    if (cfg.epochs < 1) throw PreconditionError("epochs must be at least 1");
    if (X.rank() != 2) throw PreconditionError("training input must be [rows, features], got " + shape_string(X.shape));
    if (X.shape[0] != y.size()) {
        throw PreconditionError("training input has " + std::to_string(X.shape[0]) + " rows but " +
                                std::to_string(y.size()) + " targets");
    }
    validate_model(model);

    TrainResult result{model, {}, {}, {}};
    std::tie(result.train_rows, result.val_rows) = split_rows(X.shape[0], cfg.train_fraction, cfg.seed);

    const RowMatrix x_train = gather_rows(X, result.train_rows);
    const RowMatrix x_val = gather_rows(X, result.val_rows);
    std::vector<std::size_t> y_train, y_val;
    for (auto r : result.train_rows) y_train.push_back(y[r]);
    for (auto r : result.val_rows) y_val.push_back(y[r]);

    ModelSpec& m = result.model;
    const auto ops = dense_ops(m);  // points into m's layers, which are updated in place
    std::vector<double> params = pack_parameters(m);
    AdamState state(params.size(), cfg.learning_rate);
    DenseWorkspace train_ws, val_ws;

    result.history.train_loss.reserve(cfg.epochs);
    result.history.val_loss.reserve(cfg.epochs);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const Gradients g = dense_backward(ops, x_train, y_train, train_ws);
        result.history.train_loss.push_back(g.loss);
        result.history.val_loss.push_back(dense_loss(ops, x_val, y_val, val_ws));
        adam_step(params, pack_gradients(g), state);
        unpack_parameters(m, params);
        if (!std::isfinite(g.loss)) throw Error("training diverged at epoch " + std::to_string(epoch));
        if (progress) progress(epoch, cfg.epochs);
    }

    m.metadata["train.loss"] = "cross_entropy";
    m.metadata["train.optimizer"] = "adam full-batch beta1=0.9 beta2=0.999 eps=1e-8";
    m.metadata["train.epochs"] = std::to_string(cfg.epochs);
    m.metadata["train.learning_rate"] = format_real(cfg.learning_rate);
    m.metadata["train.train_fraction"] = format_real(cfg.train_fraction);
    m.metadata["train.seed"] = std::to_string(cfg.seed);
    return result;
}

ModelSpec init_dense_model(std::span<const std::size_t> widths, const Layer& activation, std::uint64_t seed) {
    if (widths.size() < 2) throw PreconditionError("a dense model needs at least input and output widths");
    ModelSpec m;
    m.input.shape = {widths.front()};
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        Linear l{widths[i], widths[i + 1], std::vector<double>(widths[i] * widths[i + 1]),
                 std::vector<double>(widths[i + 1])};
        const double bound = std::sqrt(1.0 / static_cast<double>(l.in));
        for (auto& w : l.weight) w = (2.0 * unit_real(rng) - 1.0) * bound;
        for (auto& b : l.bias) b = (2.0 * unit_real(rng) - 1.0) * bound;
        m.layers.emplace_back(std::move(l));
        if (i + 2 < widths.size()) m.layers.push_back(activation);
    }
    m.metadata["init"] = "uniform(-sqrt(1/in), +sqrt(1/in))";
    m.metadata["init.seed"] = std::to_string(seed);
    return m;
}

}  // namespace fieldlens
