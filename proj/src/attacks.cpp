#include "trustlab/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "trustlab/errors.hpp"
#include "trustlab/rng.hpp"

namespace trustlab {

double epsilon_for(AttackPower power) noexcept {
    switch (power) {
        case AttackPower::none: return 0.0;
        case AttackPower::low: return 0.03;
        case AttackPower::medium: return 0.06;
        case AttackPower::high: return 0.10;
    }
    return 0.0;
}

std::string_view to_string(AttackPower p) noexcept {
    switch (p) {
        case AttackPower::none: return "none";
        case AttackPower::low: return "low";
        case AttackPower::medium: return "medium";
        case AttackPower::high: return "high";
    }
    return "none";
}

std::string_view to_string(AttackKind k) noexcept {
    switch (k) {
        case AttackKind::fgsm: return "fgsm";
        case AttackKind::bim: return "bim";
        case AttackKind::pgd: return "pgd";
        case AttackKind::mim: return "mim";
    }
    return "fgsm";
}

AttackPower parse_attack_power(std::string_view s) {
    for (auto p : kPowerLadder) {
        if (to_string(p) == s) return p;
    }
    throw ConfigError("unknown attack power '" + std::string(s) + "'");
}

AttackKind parse_attack_kind(std::string_view s) {
    for (auto k : kAttackKinds) {
        if (to_string(k) == s) return k;
    }
    throw ConfigError("unknown attack kind '" + std::string(s) + "'");
}

void AttackConfig::validate() const {
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ConfigError("epsilon must be >= 0");
    if (iterations < 1) throw ConfigError("iterations must be at least 1");
    if (step_size && (!(*step_size > 0.0) || !std::isfinite(*step_size))) {
        throw ConfigError("step_size must be > 0");
    }
    if (!(momentum_decay >= 0.0) || !std::isfinite(momentum_decay)) {
        throw ConfigError("momentum_decay must be >= 0");
    }
}

double AttackConfig::effective_step_size() const noexcept {
    return step_size ? *step_size : epsilon / static_cast<double>(effective_iterations()) * 2.5;
}

std::size_t AttackConfig::effective_iterations() const noexcept {
    return kind == AttackKind::fgsm ? 1 : iterations;
}

namespace {

double sign(double v) noexcept { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void require_shapes(const MlpModel& model, const Matrix& x, const Matrix& y) {
    if (x.cols() != model.input_dim()) throw ShapeError("attack input width does not match model");
    if (y.rows() != x.rows() || y.cols() != model.output_dim()) {
        throw ShapeError("attack target shape does not match input/model");
    }
}

void require_budget(double epsilon) {
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ConfigError("epsilon must be >= 0");
}

void require_schedule(double step_size, std::size_t iterations) {
    if (iterations < 1) throw ConfigError("iterations must be at least 1");
    if (!(step_size > 0.0) || !std::isfinite(step_size)) throw ConfigError("step_size must be > 0");
}

Matrix sample_gradient(const MlpModel& model, const Matrix& x, const Matrix& y) {
    return backprop(model, x, y, Reduction::per_sample, false, true).input;
}

Matrix add(const Matrix& x, const Matrix& delta) {
    Matrix out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = x.data()[i] + delta.data()[i];
    return out;
}

// Signed steps along `direction(grad)`, clipping the accumulated
// perturbation into [-eps, eps] after every step.
template <typename Direction>
Matrix iterate(const MlpModel& model, const Matrix& x, const Matrix& y, double epsilon, double step,
               std::size_t iterations, Matrix delta, bool delta_is_zero, Direction&& direction) {
    for (std::size_t t = 0; t < iterations; ++t) {
        const Matrix grad = sample_gradient(model, (t == 0 && delta_is_zero) ? x : add(x, delta), y);
        const Matrix& dir = direction(grad);
        for (std::size_t i = 0; i < delta.size(); ++i) {
            delta.data()[i] = std::clamp(delta.data()[i] + step * sign(dir.data()[i]), -epsilon, epsilon);
        }
    }
    return add(x, delta);
}

}  // namespace

Matrix fgsm(const MlpModel& model, const Matrix& x, const Matrix& y, double epsilon) {
    require_shapes(model, x, y);
    require_budget(epsilon);
    if (epsilon == 0.0) return x;
    const Matrix grad = sample_gradient(model, x, y);
    Matrix out = x;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data()[i] = x.data()[i] + epsilon * sign(grad.data()[i]);
    }
    return out;
}

Matrix pgd(const MlpModel& model, const Matrix& x, const Matrix& y, double epsilon, double step_size,
           std::size_t iterations, bool random_start, std::uint64_t seed) {
    require_shapes(model, x, y);
    require_budget(epsilon);
    if (epsilon == 0.0) return x;
    require_schedule(step_size, iterations);
    Matrix delta(x.rows(), x.cols());
    if (random_start) {
        SplitMix64 rng(seed);
        for (double& d : delta.data()) d = rng.uniform(-epsilon, epsilon);
    }
    return iterate(model, x, y, epsilon, step_size, iterations, std::move(delta), !random_start,
                   [](const Matrix& g) -> const Matrix& { return g; });
}

Matrix bim(const MlpModel& model, const Matrix& x, const Matrix& y, double epsilon, double step_size,
           std::size_t iterations) {
    return pgd(model, x, y, epsilon, step_size, iterations, false, 0);
}

Matrix mim(const MlpModel& model, const Matrix& x, const Matrix& y, double epsilon, double step_size,
           std::size_t iterations, double momentum_decay) {
    require_shapes(model, x, y);
    require_budget(epsilon);
    if (epsilon == 0.0) return x;
    require_schedule(step_size, iterations);
    Matrix velocity(x.rows(), x.cols());
    auto accumulate = [&](const Matrix& grad) -> const Matrix& {
        for (std::size_t r = 0; r < grad.rows(); ++r) {
            const auto g = grad.row(r);
            double l1 = 0.0;
            for (double v : g) l1 += std::abs(v);
            auto vel = velocity.row(r);
            for (std::size_t c = 0; c < g.size(); ++c) {
                const double normalized = l1 < 1e-12 ? 0.0 : g[c] / l1;
                vel[c] = momentum_decay * vel[c] + normalized;
            }
        }
        return velocity;
    };
    return iterate(model, x, y, epsilon, step_size, iterations, Matrix(x.rows(), x.cols()), true,
                   accumulate);
}

Matrix craft_inputs(const AttackConfig& config, const MlpModel& model, const Matrix& x,
                    const Matrix& y) {
    config.validate();
    const double eps = config.epsilon;
    const double step = config.effective_step_size();
    const std::size_t iters = config.effective_iterations();
    switch (config.kind) {
        case AttackKind::fgsm: return fgsm(model, x, y, eps);
        case AttackKind::bim: return bim(model, x, y, eps, step, iters);
        case AttackKind::pgd: return pgd(model, x, y, eps, step, iters, config.random_start, config.seed);
        case AttackKind::mim: return mim(model, x, y, eps, step, iters, config.momentum_decay);
    }
    throw ConfigError("unknown attack kind");
}

Dataset craft(const AttackConfig& config, const MlpModel& model, const Dataset& dataset) {
    if (dataset.rows() == 0) throw ConfigError("cannot attack an empty dataset");
    return dataset.with_features(craft_inputs(config, model, dataset.x, dataset.y));
}

}  // namespace trustlab
