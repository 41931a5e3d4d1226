#include "trustlab/defenses.hpp"

#include <algorithm>
#include <cmath>

#include "trustlab/errors.hpp"
#include "trustlab/rng.hpp"

namespace trustlab {

void AdvTrainConfig::validate() const {
    attack.validate();
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be >= 0");
}

TrainResult adversarial_train(const MlpModel& model, const Dataset& dataset,
                              const AdvTrainConfig& config) {
    config.validate();
    if (dataset.rows() == 0) throw ConfigError("cannot train on an empty dataset");
    if (config.alpha == 0.0) return train(model, dataset, config.base);

    Objective objective;
    objective.batch_gradient = [&](const MlpModel& current, std::span<const std::size_t> rows) {
        const Matrix y = dataset.y.select_rows(rows);
        const Matrix xb = dataset.x.select_rows(rows);
        ParamGradients total = grad_params(current, xb, y);
        const ParamGradients adv = grad_params(current, craft_inputs(config.attack, current, xb, y), y);
        for (std::size_t l = 0; l < total.size(); ++l) {
            auto& w = total[l].weights.data();
            for (std::size_t i = 0; i < w.size(); ++i) w[i] += config.alpha * adv[l].weights.data()[i];
            auto& b = total[l].biases;
            for (std::size_t i = 0; i < b.size(); ++i) b[i] += config.alpha * adv[l].biases[i];
        }
        return total;
    };
    objective.epoch_loss = [&](const MlpModel& current) {
        const Matrix adversarial = craft_inputs(config.attack, current, dataset.x, dataset.y);
        return loss(current, dataset.x, dataset.y) +
               config.alpha * loss(current, adversarial, dataset.y);
    };
    return fit(model, dataset.rows(), config.base, objective);
}

Matrix softmax_rows(const Matrix& logits, double temperature) {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw ConfigError("temperature must be > 0");
    }
    Matrix out(logits.rows(), logits.cols());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const auto z = logits.row(r);
        auto q = out.row(r);
        const double peak = *std::max_element(z.begin(), z.end());
        double total = 0.0;
        for (std::size_t c = 0; c < z.size(); ++c) {
            q[c] = std::exp((z[c] - peak) / temperature);
            total += q[c];
        }
        for (double& v : q) v /= total;
    }
    return out;
}

SoftLabelSet soft_labels(const MlpModel& teacher, const Matrix& x, double temperature) {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw ConfigError("temperature must be > 0");
    }
    return {softmax_rows(forward(teacher, x), temperature)};
}

void DistillConfig::validate() const {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw ConfigError("temperature must be > 0");
    }
    if (!(soft_label_weight >= 0.0 && soft_label_weight <= 1.0)) {
        throw ConfigError("soft_label_weight must lie in [0, 1]");
    }
}

DistillResult distill_from_teacher(const MlpModel& teacher, const Dataset& dataset,
                                   const DistillConfig& config) {
    config.validate();
    if (dataset.rows() == 0) throw ConfigError("cannot distill on an empty dataset");

    const Matrix raw = forward(teacher, dataset.x);
    SoftLabelSet soft{softmax_rows(raw, config.temperature)};

    Dataset student_data = dataset;
    const double w = config.soft_label_weight;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        student_data.y.data()[i] = w == 1.0 ? soft.probabilities.data()[i]
                                            : w * soft.probabilities.data()[i] + (1.0 - w) * raw.data()[i];
    }

    const auto student0 = MlpModel::initialize(
        teacher.widths(), derive_seed(config.student_training.seed, 0x5eed), teacher.loss_kind());
    auto student = train(student0, student_data, config.student_training);

    return {teacher, std::move(student.model), std::move(soft), {}, std::move(student.loss_history)};
}

DistillResult distill(const Dataset& dataset, const DistillConfig& config) {
    config.validate();
    if (dataset.rows() == 0) throw ConfigError("cannot distill on an empty dataset");
    std::vector<std::size_t> widths{dataset.input_dim()};
    widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
    widths.push_back(dataset.output_dim());
    const auto teacher0 =
        MlpModel::initialize(widths, derive_seed(config.teacher_training.seed, 0x5eed));
    auto teacher = train(teacher0, dataset, config.teacher_training);
    auto result = distill_from_teacher(teacher.model, dataset, config);
    result.teacher_history = std::move(teacher.loss_history);
    return result;
}

}  // namespace trustlab
