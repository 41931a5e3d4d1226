#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "trustlab/matrix.hpp"

namespace trustlab {

enum class Activation { relu, linear };
enum class LossKind { mse, abs_error };

std::string_view to_string(Activation a) noexcept;
std::string_view to_string(LossKind k) noexcept;
Activation parse_activation(std::string_view s);
LossKind parse_loss_kind(std::string_view s);

struct DenseLayer {
    Matrix weights;  // out_dim x in_dim
    std::vector<double> biases;
    Activation activation = Activation::linear;

    std::size_t in_dim() const noexcept { return weights.cols(); }
    std::size_t out_dim() const noexcept { return weights.rows(); }

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Fully connected regression network. Hidden layers may use relu; the
/// output layer is always linear.
class MlpModel {
public:
    /// Throws ShapeError when consecutive widths disagree and ConfigError
    /// when the model is empty or the output layer is not linear.
    explicit MlpModel(std::vector<DenseLayer> layers, LossKind loss_kind = LossKind::mse);

    /// Builds relu hidden layers and a linear output layer from
    /// `widths` = {input, hidden..., output}, with Glorot-uniform weights
    /// drawn from a SplitMix64 stream seeded by `seed` and zero biases.
    static MlpModel initialize(std::span<const std::size_t> widths, std::uint64_t seed,
                               LossKind loss_kind = LossKind::mse);

    /// input -> 64 relu -> 64 relu -> output.
    static MlpModel make_default(std::size_t input_dim, std::size_t output_dim, std::uint64_t seed,
                                 LossKind loss_kind = LossKind::mse);

    std::size_t input_dim() const noexcept { return layers_.front().in_dim(); }
    std::size_t output_dim() const noexcept { return layers_.back().out_dim(); }
    LossKind loss_kind() const noexcept { return loss_kind_; }
    void set_loss_kind(LossKind k) noexcept { loss_kind_ = k; }

    const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
    /// Mutable access for optimizers. Shapes must not be changed.
    std::vector<DenseLayer>& mutable_layers() noexcept { return layers_; }

    /// {input, hidden..., output}
    std::vector<std::size_t> widths() const;
    std::size_t parameter_count() const noexcept;
    bool all_finite() const noexcept;

    friend bool operator==(const MlpModel&, const MlpModel&) = default;

private:
    std::vector<DenseLayer> layers_;
    LossKind loss_kind_;
};

inline const std::vector<std::size_t> kDefaultHidden{64, 64};

struct LayerGradient {
    Matrix weights;
    std::vector<double> biases;
};
using ParamGradients = std::vector<LayerGradient>;

/// How per-element losses are combined before differentiation.
enum class Reduction {
    batch_mean,  // mean over all N x k entries; the loss reported by `loss`
    per_sample,  // each row's own mean over its k entries; rows never interact
};

struct Backprop {
    double loss = 0.0;
    ParamGradients params;  // empty unless requested
    Matrix input;           // empty unless requested
};

Matrix forward(const MlpModel& model, const Matrix& x);

/// Mean over every entry of the configured loss (squared or absolute error).
double loss(const MlpModel& model, const Matrix& x, const Matrix& y);
double loss_value(LossKind kind, const Matrix& predictions, const Matrix& targets);

ParamGradients grad_params(const MlpModel& model, const Matrix& x, const Matrix& y);
Matrix grad_input(const MlpModel& model, const Matrix& x, const Matrix& y);

/// Single forward/backward pass producing the requested gradients.
/// The absolute-error derivative at zero residual is taken as 0.
Backprop backprop(const MlpModel& model, const Matrix& x, const Matrix& y, Reduction reduction,
                  bool want_params, bool want_input);

}  // namespace trustlab
