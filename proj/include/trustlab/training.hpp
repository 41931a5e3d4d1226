#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "trustlab/dataset.hpp"
#include "trustlab/mlp.hpp"

namespace trustlab {

enum class Optimizer { sgd, adam };

std::string_view to_string(Optimizer o) noexcept;
Optimizer parse_optimizer(std::string_view s);

struct TrainingConfig {
    double learning_rate = 1e-3;
    std::size_t epochs = 200;
    std::size_t batch_size = 32;
    Optimizer optimizer = Optimizer::adam;
    std::uint64_t seed = 0;

    /// Throws ConfigError unless lr > 0, epochs >= 1 and 1 <= batch_size <= rows.
    void validate(std::size_t rows) const;

    friend bool operator==(const TrainingConfig&, const TrainingConfig&) = default;
};

struct TrainResult {
    MlpModel model;
    /// Full-dataset loss (model's loss kind) measured after each epoch.
    std::vector<double> loss_history;
};

/// Mini-batch training over a seeded per-epoch shuffle; the last partial
/// batch is kept. The input model is not modified.
TrainResult train(const MlpModel& model, const Dataset& dataset, const TrainingConfig& config);

/// Generic optimisation loop shared by plain training and the defenses.
struct Objective {
    /// Invoked with the current model before the batches of each epoch.
    std::function<void(const MlpModel&, std::size_t epoch)> on_epoch_start;
    /// Gradient of the objective over the given dataset rows.
    std::function<ParamGradients(const MlpModel&, std::span<const std::size_t> rows)> batch_gradient;
    /// Value recorded in the loss history after each epoch.
    std::function<double(const MlpModel&)> epoch_loss;
};

TrainResult fit(const MlpModel& model, std::size_t rows, const TrainingConfig& config,
                const Objective& objective);

struct HyperGrid {
    std::vector<double> learning_rates{1e-3};
    std::vector<std::size_t> epochs{200};
    std::vector<std::size_t> batch_sizes{32};
    std::vector<Optimizer> optimizers{Optimizer::adam};
    std::vector<std::uint64_t> seeds{0};

    std::size_t candidate_count() const noexcept;
    /// Cartesian product; learning rate varies slowest, seed fastest.
    std::vector<TrainingConfig> candidates() const;
};

struct CandidateScore {
    TrainingConfig config;
    double validation_mse;  // +inf when training diverged
};

struct GridSearchResult {
    TrainingConfig best;
    double best_score;
    std::vector<CandidateScore> scores;  // enumeration order
};

/// Trains `initial` under every candidate on a seeded split of `dataset`
/// and picks the lowest validation MSE, earliest candidate on ties.
GridSearchResult grid_search(const HyperGrid& grid, const MlpModel& initial, const Dataset& dataset,
                             double validation_fraction, std::uint64_t split_seed = 0);

}  // namespace trustlab
