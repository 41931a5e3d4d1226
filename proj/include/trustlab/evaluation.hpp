#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "trustlab/attacks.hpp"
#include "trustlab/dataset.hpp"
#include "trustlab/defenses.hpp"
#include "trustlab/mlp.hpp"
#include "trustlab/model_io.hpp"
#include "trustlab/training.hpp"

namespace trustlab {

struct MetricSet {
    double mae = 0.0;
    double mse = 0.0;
    double rmse = 0.0;

    friend bool operator==(const MetricSet&, const MetricSet&) = default;
};

/// Means over all N x k entries. ShapeError on mismatched or empty input.
MetricSet metrics(const Matrix& predictions, const Matrix& targets);

enum class Mitigation { none, adversarial_training, defensive_distillation };
enum class Defense { undefended, defended };

std::string_view to_string(Mitigation m) noexcept;
std::string_view to_string(Defense d) noexcept;
Mitigation parse_mitigation(std::string_view s);
Defense parse_defense(std::string_view s);

inline constexpr std::string_view kBeamforming = "beamforming";

struct MitigationConfig {
    Mitigation method = Mitigation::none;
    /// Adversarial training: weight of the adversarial term and the attack
    /// used to craft training examples.
    double alpha = 1.0;
    AttackConfig attack = AttackConfig::of(AttackKind::fgsm, 0.06);
    /// Defensive distillation.
    double temperature = 10.0;
    double soft_label_weight = 1.0;
    /// Overrides the experiment's training config for the defense when set.
    std::optional<TrainingConfig> training;
};

struct ExperimentSpec {
    std::string application{kBeamforming};
    std::string dataset_ref;
    std::optional<std::string> model_ref;
    bool train_from_scratch = false;
    TrainingConfig training;
    std::optional<HyperGrid> grid;
    std::vector<std::size_t> hidden = kDefaultHidden;
    AttackConfig attack;  // epsilon is taken from each power level
    std::vector<AttackPower> powers{kPowerLadder.begin(), kPowerLadder.end()};
    MitigationConfig mitigation;
    /// Evaluate the defended model on examples crafted against the
    /// undefended one instead of re-attacking it.
    bool reuse_attack_examples = false;
    double test_fraction = 0.2;
    std::uint64_t seed = 0;

    /// Throws ConfigError describing the first violated constraint.
    void validate() const;
};

/// Resolved artifacts for an experiment.
struct ExperimentInputs {
    Dataset dataset;
    std::optional<MlpModel> model;
};

/// Pairs a dataset with an optional saved model. When the model file
/// carries feature scaling, the dataset is renormalized with it so the
/// model sees inputs on its training scale.
ExperimentInputs make_inputs(Dataset dataset, const std::optional<ModelFile>& model);

struct ResultRow {
    AttackPower power;
    Defense defense;
    MetricSet metrics;

    friend bool operator==(const ResultRow&, const ResultRow&) = default;
};

struct Timings {
    double train_seconds = 0.0;
    double defense_seconds = 0.0;
    double evaluation_seconds = 0.0;
    bool defense_trained = false;
};

struct ExperimentResult {
    std::vector<ResultRow> rows;  // ladder order, undefended before defended
    nlohmann::json spec_snapshot;
    Timings timings;
    std::optional<TrainingConfig> selected_training;  // set when a grid search ran
};

/// Splits the dataset (seeded, test_fraction held out), obtains the victim
/// model (given, trained, or grid-searched then trained), builds the
/// defended model if a mitigation is set, and evaluates each power level.
/// Power none uses clean inputs.
ExperimentResult run_experiment(const ExperimentSpec& spec, const ExperimentInputs& inputs);

/// CSV with header attack_power,defense,mae,mse,rmse and six significant
/// digits per value, rows in ladder order with undefended first.
std::string export_csv(const ExperimentResult& result);

/// Reads rows written by export_csv. ParseError on anything else.
std::vector<ResultRow> parse_results_csv(std::string_view bytes);

/// "%#.6g" rendering used by export_csv.
std::string format_metric(double v);

// JSON mapping with snake_case keys mirroring the fields above.
nlohmann::json to_json(const TrainingConfig& c);
TrainingConfig training_from_json(const nlohmann::json& j, const TrainingConfig& defaults = {});
nlohmann::json to_json(const HyperGrid& g);
HyperGrid grid_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AttackConfig& c);
AttackConfig attack_from_json(const nlohmann::json& j, const AttackConfig& defaults = {});
nlohmann::json to_json(const ExperimentSpec& spec);
/// ConfigError for type errors and unknown enum values.
ExperimentSpec spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MetricSet& m);
nlohmann::json to_json(const ExperimentResult& r);

}  // namespace trustlab
