#include "trustlab/training.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "trustlab/errors.hpp"
#include "trustlab/rng.hpp"

namespace trustlab {

std::string_view to_string(Optimizer o) noexcept { return o == Optimizer::sgd ? "sgd" : "adam"; }

Optimizer parse_optimizer(std::string_view s) {
    if (s == "sgd") return Optimizer::sgd;
    if (s == "adam") return Optimizer::adam;
    throw ConfigError("unknown optimizer '" + std::string(s) + "'");
}

void TrainingConfig::validate(std::size_t rows) const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("learning_rate must be a positive finite number");
    }
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (batch_size > rows) {
        throw ConfigError("batch_size " + std::to_string(batch_size) + " exceeds dataset size " +
                          std::to_string(rows));
    }
}

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

class ParameterUpdater {
public:
    ParameterUpdater(const MlpModel& model, const TrainingConfig& config) : config_(config) {
        if (config.optimizer == Optimizer::adam) {
            for (const auto& layer : model.layers()) {
                m_.push_back(std::vector<double>(layer.weights.size() + layer.biases.size(), 0.0));
                v_.push_back(m_.back());
            }
        }
    }

    void step(MlpModel& model, const ParamGradients& grads) {
        auto& layers = model.mutable_layers();
        const double lr = config_.learning_rate;
        if (config_.optimizer == Optimizer::sgd) {
            for (std::size_t l = 0; l < layers.size(); ++l) {
                auto& w = layers[l].weights.data();
                const auto& gw = grads[l].weights.data();
                for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * gw[i];
                auto& b = layers[l].biases;
                for (std::size_t i = 0; i < b.size(); ++i) b[i] -= lr * grads[l].biases[i];
            }
            return;
        }
        ++t_;
        const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
        for (std::size_t l = 0; l < layers.size(); ++l) {
            auto& w = layers[l].weights.data();
            auto& b = layers[l].biases;
            auto& m = m_[l];
            auto& v = v_[l];
            auto update = [&](double& p, double g, std::size_t k) {
                m[k] = kBeta1 * m[k] + (1.0 - kBeta1) * g;
                v[k] = kBeta2 * v[k] + (1.0 - kBeta2) * g * g;
                p -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + kAdamEps);
            };
            const auto& gw = grads[l].weights.data();
            for (std::size_t i = 0; i < w.size(); ++i) update(w[i], gw[i], i);
            for (std::size_t i = 0; i < b.size(); ++i) update(b[i], grads[l].biases[i], w.size() + i);
        }
    }

private:
    TrainingConfig config_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::uint64_t t_ = 0;
};

}  // namespace

TrainResult fit(const MlpModel& model, std::size_t rows, const TrainingConfig& config,
                const Objective& objective) {
    if (rows == 0) throw ConfigError("cannot train on an empty dataset");
    config.validate(rows);

    MlpModel current = model;
    ParameterUpdater updater(current, config);
    SplitMix64 rng(config.seed);
    std::vector<std::size_t> order(rows);
    std::vector<double> history;
    history.reserve(config.epochs);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        if (objective.on_epoch_start) objective.on_epoch_start(current, epoch);
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = rows; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

        for (std::size_t start = 0; start < rows; start += config.batch_size) {
            const std::size_t count = std::min(config.batch_size, rows - start);
            const std::span<const std::size_t> batch(order.data() + start, count);
            updater.step(current, objective.batch_gradient(current, batch));
        }
        history.push_back(objective.epoch_loss(current));
    }
    return {std::move(current), std::move(history)};
}

TrainResult train(const MlpModel& model, const Dataset& dataset, const TrainingConfig& config) {
    if (dataset.rows() == 0) throw ConfigError("cannot train on an empty dataset");
    if (dataset.input_dim() != model.input_dim() || dataset.output_dim() != model.output_dim()) {
        throw ShapeError("dataset is " + std::to_string(dataset.input_dim()) + "->" +
                         std::to_string(dataset.output_dim()) + " but model is " +
                         std::to_string(model.input_dim()) + "->" + std::to_string(model.output_dim()));
    }
    Objective objective;
    objective.batch_gradient = [&](const MlpModel& m, std::span<const std::size_t> rows) {
        return grad_params(m, dataset.x.select_rows(rows), dataset.y.select_rows(rows));
    };
    objective.epoch_loss = [&](const MlpModel& m) { return loss(m, dataset.x, dataset.y); };
    return fit(model, dataset.rows(), config, objective);
}

std::size_t HyperGrid::candidate_count() const noexcept {
    return learning_rates.size() * epochs.size() * batch_sizes.size() * optimizers.size() *
           seeds.size();
}

std::vector<TrainingConfig> HyperGrid::candidates() const {
    std::vector<TrainingConfig> out;
    out.reserve(candidate_count());
    for (double lr : learning_rates)
        for (std::size_t ep : epochs)
            for (std::size_t bs : batch_sizes)
                for (Optimizer opt : optimizers)
                    for (std::uint64_t seed : seeds) out.push_back({lr, ep, bs, opt, seed});
    return out;
}

GridSearchResult grid_search(const HyperGrid& grid, const MlpModel& initial, const Dataset& dataset,
                             double validation_fraction, std::uint64_t split_seed) {
    if (grid.candidate_count() == 0) throw ConfigError("hyperparameter grid is empty");
    const auto [train_part, validation] = split_dataset(dataset, validation_fraction, split_seed);

    const auto candidates = grid.candidates();
    for (const auto& c : candidates) c.validate(train_part.rows());

    GridSearchResult result{candidates.front(), std::numeric_limits<double>::infinity(), {}};
    for (const auto& candidate : candidates) {
        const auto trained = train(initial, train_part, candidate);
        const Matrix pred = forward(trained.model, validation.x);
        double score = loss_value(LossKind::mse, pred, validation.y);
        if (!std::isfinite(score)) score = std::numeric_limits<double>::infinity();
        result.scores.push_back({candidate, score});
        if (score < result.best_score || result.scores.size() == 1) {
            result.best = candidate;
            result.best_score = score;
        }
    }
    return result;
}

}  // namespace trustlab
