#pragma once

#include <cstddef>
#include <vector>

#include "trustlab/attacks.hpp"
#include "trustlab/dataset.hpp"
#include "trustlab/mlp.hpp"
#include "trustlab/training.hpp"

namespace trustlab {

struct AdvTrainConfig {
    AttackConfig attack = AttackConfig::of(AttackKind::fgsm, 0.06);
    double alpha = 1.0;
    TrainingConfig base;

    void validate() const;
};

/// Minimises mean clean loss + alpha * mean loss on adversarial copies of
/// the training rows. Each minibatch is re-attacked against the current
/// weights before its gradient step. With alpha = 0 this is
/// exactly `train(model, dataset, config.base)`.
TrainResult adversarial_train(const MlpModel& model, const Dataset& dataset,
                              const AdvTrainConfig& config);

/// N x k matrix of temperature-softened probabilities. Each row sums to 1.
struct SoftLabelSet {
    Matrix probabilities;
};

/// Row-wise softmax(logits / temperature) with max subtraction.
Matrix softmax_rows(const Matrix& logits, double temperature);

/// softmax(forward(teacher, x) / temperature). ConfigError unless temperature > 0.
SoftLabelSet soft_labels(const MlpModel& teacher, const Matrix& x, double temperature);

struct DistillConfig {
    double temperature = 10.0;
    TrainingConfig teacher_training;
    TrainingConfig student_training;
    /// Student target = w * soft labels + (1 - w) * raw teacher outputs.
    double soft_label_weight = 1.0;
    std::vector<std::size_t> hidden = kDefaultHidden;

    void validate() const;
};

struct DistillResult {
    MlpModel teacher;
    MlpModel student;
    SoftLabelSet soft;
    std::vector<double> teacher_history;
    std::vector<double> student_history;
};

/// Trains a teacher on the original targets, softens its outputs and fits
/// a student of the same architecture to the softened targets. Model
/// weights are initialised from the respective training seeds.
DistillResult distill(const Dataset& dataset, const DistillConfig& config);

/// Same, with an already trained teacher.
DistillResult distill_from_teacher(const MlpModel& teacher, const Dataset& dataset,
                                   const DistillConfig& config);

}  // namespace trustlab
