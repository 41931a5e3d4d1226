#include "trustlab/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "trustlab/errors.hpp"
#include "trustlab/rng.hpp"

namespace trustlab {

std::string_view to_string(Activation a) noexcept {
    return a == Activation::relu ? "relu" : "linear";
}

std::string_view to_string(LossKind k) noexcept {
    return k == LossKind::mse ? "mse" : "abs_error";
}

Activation parse_activation(std::string_view s) {
    if (s == "relu") return Activation::relu;
    if (s == "linear") return Activation::linear;
    throw ConfigError("unknown activation '" + std::string(s) + "'");
}

LossKind parse_loss_kind(std::string_view s) {
    if (s == "mse") return LossKind::mse;
    if (s == "abs_error") return LossKind::abs_error;
    throw ConfigError("unknown loss kind '" + std::string(s) + "'");
}

MlpModel::MlpModel(std::vector<DenseLayer> layers, LossKind loss_kind)
    : layers_(std::move(layers)), loss_kind_(loss_kind) {
    if (layers_.empty()) throw ConfigError("model needs at least one layer");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& layer = layers_[i];
        if (layer.weights.rows() == 0 || layer.weights.cols() == 0) {
            throw ShapeError("layer " + std::to_string(i) + " has an empty weight matrix");
        }
        if (layer.biases.size() != layer.out_dim()) {
            throw ShapeError("layer " + std::to_string(i) + " has " +
                             std::to_string(layer.biases.size()) + " biases for " +
                             std::to_string(layer.out_dim()) + " outputs");
        }
        if (i > 0 && layer.in_dim() != layers_[i - 1].out_dim()) {
            throw ShapeError("layer " + std::to_string(i) + " expects width " +
                             std::to_string(layer.in_dim()) + " but previous layer emits " +
                             std::to_string(layers_[i - 1].out_dim()));
        }
    }
    if (layers_.back().activation != Activation::linear) {
        throw ConfigError("output layer must be linear");
    }
}

MlpModel MlpModel::initialize(std::span<const std::size_t> widths, std::uint64_t seed,
                              LossKind loss_kind) {
    if (widths.size() < 2) throw ConfigError("need at least input and output widths");
    if (std::find(widths.begin(), widths.end(), std::size_t{0}) != widths.end()) {
        throw ConfigError("layer widths must be positive");
    }
    SplitMix64 rng(seed);
    std::vector<DenseLayer> layers;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        const std::size_t fan_in = widths[i];
        const std::size_t fan_out = widths[i + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Matrix w(fan_out, fan_in);
        for (double& v : w.data()) v = rng.uniform(-limit, limit);
        const bool last = i + 2 == widths.size();
        layers.push_back({std::move(w), std::vector<double>(fan_out, 0.0),
                          last ? Activation::linear : Activation::relu});
    }
    return MlpModel(std::move(layers), loss_kind);
}

MlpModel MlpModel::make_default(std::size_t input_dim, std::size_t output_dim, std::uint64_t seed,
                                LossKind loss_kind) {
    std::vector<std::size_t> widths{input_dim};
    widths.insert(widths.end(), kDefaultHidden.begin(), kDefaultHidden.end());
    widths.push_back(output_dim);
    return initialize(widths, seed, loss_kind);
}

std::vector<std::size_t> MlpModel::widths() const {
    std::vector<std::size_t> w{input_dim()};
    for (const auto& layer : layers_) w.push_back(layer.out_dim());
    return w;
}

std::size_t MlpModel::parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& layer : layers_) n += layer.weights.size() + layer.biases.size();
    return n;
}

bool MlpModel::all_finite() const noexcept {
    return std::all_of(layers_.begin(), layers_.end(), [](const DenseLayer& l) {
        return l.weights.all_finite() &&
               std::all_of(l.biases.begin(), l.biases.end(), [](double b) { return std::isfinite(b); });
    });
}

namespace {

// z = x W^T + b
Matrix affine(const DenseLayer& layer, const Matrix& x) {
    const std::size_t n = x.rows();
    const std::size_t in = layer.in_dim();
    const std::size_t out = layer.out_dim();
    Matrix z(n, out);
    for (std::size_t r = 0; r < n; ++r) {
        const double* xr = x.data().data() + r * in;
        double* zr = z.data().data() + r * out;
        for (std::size_t o = 0; o < out; ++o) {
            const double* wo = layer.weights.data().data() + o * in;
            double acc = layer.biases[o];
            for (std::size_t i = 0; i < in; ++i) acc += wo[i] * xr[i];
            zr[o] = acc;
        }
    }
    return z;
}

void activate(Activation a, Matrix& z) {
    if (a == Activation::relu) {
        for (double& v : z.data()) v = v > 0.0 ? v : 0.0;
    }
}

void require_input(const MlpModel& model, const Matrix& x) {
    if (x.cols() != model.input_dim()) {
        throw ShapeError("input has " + std::to_string(x.cols()) + " columns, model expects " +
                         std::to_string(model.input_dim()));
    }
}

void require_target(const MlpModel& model, const Matrix& x, const Matrix& y) {
    require_input(model, x);
    if (y.rows() != x.rows() || y.cols() != model.output_dim()) {
        throw ShapeError("target is " + std::to_string(y.rows()) + "x" + std::to_string(y.cols()) +
                         ", expected " + std::to_string(x.rows()) + "x" +
                         std::to_string(model.output_dim()));
    }
}

double sign(double v) noexcept { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

Matrix forward(const MlpModel& model, const Matrix& x) {
    require_input(model, x);
    Matrix h = x;
    for (const auto& layer : model.layers()) {
        h = affine(layer, h);
        activate(layer.activation, h);
    }
    return h;
}

double loss_value(LossKind kind, const Matrix& predictions, const Matrix& targets) {
    require_same_shape(predictions, targets, "loss");
    if (predictions.empty()) throw ShapeError("loss of an empty batch");
    double acc = 0.0;
    const auto& p = predictions.data();
    const auto& t = targets.data();
    if (kind == LossKind::mse) {
        for (std::size_t i = 0; i < p.size(); ++i) acc += (p[i] - t[i]) * (p[i] - t[i]);
    } else {
        for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - t[i]);
    }
    return acc / static_cast<double>(p.size());
}

double loss(const MlpModel& model, const Matrix& x, const Matrix& y) {
    require_target(model, x, y);
    return loss_value(model.loss_kind(), forward(model, x), y);
}

Backprop backprop(const MlpModel& model, const Matrix& x, const Matrix& y, Reduction reduction,
                  bool want_params, bool want_input) {
    require_target(model, x, y);
    if (x.rows() == 0) throw ShapeError("backprop on an empty batch");
    const auto& layers = model.layers();

    // Keep every layer input and pre-activation for the reverse sweep.
    std::vector<Matrix> inputs;
    std::vector<Matrix> pre;
    inputs.reserve(layers.size());
    pre.reserve(layers.size());
    Matrix h = x;
    for (const auto& layer : layers) {
        inputs.push_back(h);
        pre.push_back(affine(layer, h));
        h = pre.back();
        activate(layer.activation, h);
    }

    Backprop out;
    out.loss = loss_value(model.loss_kind(), h, y);

    const double scale = reduction == Reduction::batch_mean
                             ? static_cast<double>(y.size())
                             : static_cast<double>(y.cols());
    Matrix delta(h.rows(), h.cols());
    for (std::size_t i = 0; i < delta.size(); ++i) {
        const double residual = h.data()[i] - y.data()[i];
        delta.data()[i] = model.loss_kind() == LossKind::mse ? 2.0 * residual / scale
                                                              : sign(residual) / scale;
    }

    if (want_params) out.params.resize(layers.size());
    const std::size_t n = x.rows();
    for (std::size_t li = layers.size(); li-- > 0;) {
        const auto& layer = layers[li];
        const std::size_t in = layer.in_dim();
        const std::size_t outw = layer.out_dim();
        if (layer.activation == Activation::relu) {
            for (std::size_t i = 0; i < delta.size(); ++i) {
                if (!(pre[li].data()[i] > 0.0)) delta.data()[i] = 0.0;
            }
        }
        if (want_params) {
            LayerGradient g{Matrix(outw, in), std::vector<double>(outw, 0.0)};
            const Matrix& a = inputs[li];
            for (std::size_t r = 0; r < n; ++r) {
                const double* ar = a.data().data() + r * in;
                const double* dr = delta.data().data() + r * outw;
                for (std::size_t o = 0; o < outw; ++o) {
                    const double d = dr[o];
                    g.biases[o] += d;
                    if (d == 0.0) continue;
                    double* go = g.weights.data().data() + o * in;
                    for (std::size_t i = 0; i < in; ++i) go[i] += d * ar[i];
                }
            }
            out.params[li] = std::move(g);
        }
        if (li == 0 && !want_input) break;
        Matrix upstream(n, in);
        for (std::size_t r = 0; r < n; ++r) {
            const double* dr = delta.data().data() + r * outw;
            double* ur = upstream.data().data() + r * in;
            for (std::size_t o = 0; o < outw; ++o) {
                const double d = dr[o];
                if (d == 0.0) continue;
                const double* wo = layer.weights.data().data() + o * in;
                for (std::size_t i = 0; i < in; ++i) ur[i] += d * wo[i];
            }
        }
        delta = std::move(upstream);
    }
    if (want_input) out.input = std::move(delta);
    return out;
}

ParamGradients grad_params(const MlpModel& model, const Matrix& x, const Matrix& y) {
    return backprop(model, x, y, Reduction::batch_mean, true, false).params;
}

Matrix grad_input(const MlpModel& model, const Matrix& x, const Matrix& y) {
    return backprop(model, x, y, Reduction::batch_mean, false, true).input;
}

}  // namespace trustlab
