#include "trustlab/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>

#include "trustlab/csv.hpp"
#include "trustlab/errors.hpp"
#include "trustlab/rng.hpp"

namespace trustlab {

namespace {

// Stream tags for seeds derived from ExperimentSpec::seed.
constexpr std::uint64_t kSplitStream = 1;
constexpr std::uint64_t kInitStream = 2;
constexpr std::uint64_t kGridSplitStream = 3;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

MetricSet metrics(const Matrix& predictions, const Matrix& targets) {
    require_same_shape(predictions, targets, "metrics");
    if (predictions.empty()) throw ShapeError("metrics of an empty prediction set");
    double abs_sum = 0.0;
    double sq_sum = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double e = predictions.data()[i] - targets.data()[i];
        abs_sum += std::abs(e);
        sq_sum += e * e;
    }
    const auto n = static_cast<double>(predictions.size());
    MetricSet m{abs_sum / n, sq_sum / n, 0.0};
    m.rmse = std::sqrt(m.mse);
    return m;
}

std::string_view to_string(Mitigation m) noexcept {
    switch (m) {
        case Mitigation::none: return "none";
        case Mitigation::adversarial_training: return "adversarial_training";
        case Mitigation::defensive_distillation: return "defensive_distillation";
    }
    return "none";
}

std::string_view to_string(Defense d) noexcept {
    return d == Defense::undefended ? "undefended" : "defended";
}

Mitigation parse_mitigation(std::string_view s) {
    for (auto m : {Mitigation::none, Mitigation::adversarial_training, Mitigation::defensive_distillation}) {
        if (to_string(m) == s) return m;
    }
    throw ConfigError("unknown mitigation '" + std::string(s) + "'");
}

Defense parse_defense(std::string_view s) {
    if (s == "undefended") return Defense::undefended;
    if (s == "defended") return Defense::defended;
    throw ConfigError("unknown defense '" + std::string(s) + "'");
}

void ExperimentSpec::validate() const {
    if (application != kBeamforming) {
        throw ConfigError("application '" + application + "' is not enabled; only beamforming is available");
    }
    if (powers.empty()) throw ConfigError("powers must not be empty");
    std::set<AttackPower> seen;
    for (auto p : powers) {
        if (!seen.insert(p).second) {
            throw ConfigError("power '" + std::string(to_string(p)) + "' listed twice");
        }
    }
    if (model_ref && train_from_scratch) {
        throw ConfigError("model_ref and train_from_scratch are mutually exclusive");
    }
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw ConfigError("test_fraction must lie strictly between 0 and 1");
    }
    if (std::find(hidden.begin(), hidden.end(), std::size_t{0}) != hidden.end()) {
        throw ConfigError("hidden layer widths must be positive");
    }
    if (grid && grid->candidate_count() == 0) throw ConfigError("hyperparameter grid is empty");
    AttackConfig probe = attack;
    probe.epsilon = 0.0;
    probe.validate();
    if (mitigation.method == Mitigation::adversarial_training) {
        AdvTrainConfig{mitigation.attack, mitigation.alpha, training}.validate();
    } else if (mitigation.method == Mitigation::defensive_distillation) {
        DistillConfig d;
        d.temperature = mitigation.temperature;
        d.soft_label_weight = mitigation.soft_label_weight;
        d.validate();
    }
}

ExperimentInputs make_inputs(Dataset dataset, const std::optional<ModelFile>& model) {
    if (!model) return {std::move(dataset), std::nullopt};
    if (model->scaling && model->scaling->size() == dataset.input_dim()) {
        dataset = dataset.rescaled(*model->scaling);
    }
    return {std::move(dataset), model->model};
}

ExperimentResult run_experiment(const ExperimentSpec& spec, const ExperimentInputs& inputs) {
    spec.validate();
    if (!inputs.model && !spec.train_from_scratch) {
        throw ConfigError("experiment needs a model or train_from_scratch");
    }
    const Dataset& data = inputs.dataset;
    if (data.rows() == 0) throw ConfigError("dataset is empty");

    ExperimentResult result;
    result.spec_snapshot = to_json(spec);

    const auto [train_set, test_set] = split_dataset(data, spec.test_fraction, derive_seed(spec.seed, kSplitStream));

    auto start = Clock::now();
    MlpModel victim = [&] {
        if (inputs.model) {
            if (inputs.model->input_dim() != data.input_dim() || inputs.model->output_dim() != data.output_dim()) {
                throw ShapeError("model is " + std::to_string(inputs.model->input_dim()) + "->" +
                                 std::to_string(inputs.model->output_dim()) + " but dataset is " +
                                 std::to_string(data.input_dim()) + "->" + std::to_string(data.output_dim()));
            }
            return *inputs.model;
        }
        std::vector<std::size_t> widths{data.input_dim()};
        widths.insert(widths.end(), spec.hidden.begin(), spec.hidden.end());
        widths.push_back(data.output_dim());
        const auto initial = MlpModel::initialize(widths, derive_seed(spec.seed, kInitStream));
        TrainingConfig config = spec.training;
        if (spec.grid) {
            const auto search = grid_search(*spec.grid, initial, train_set, 0.2, derive_seed(spec.seed, kGridSplitStream));
            config = search.best;
            result.selected_training = config;
        }
        return train(initial, train_set, config).model;
    }();
    result.timings.train_seconds = inputs.model ? 0.0 : seconds_since(start);

    std::optional<MlpModel> defended;
    if (spec.mitigation.method != Mitigation::none) {
        start = Clock::now();
        const TrainingConfig base = spec.mitigation.training.value_or(spec.training);
        if (spec.mitigation.method == Mitigation::adversarial_training) {
            defended = adversarial_train(victim, train_set, {spec.mitigation.attack, spec.mitigation.alpha, base}).model;
        } else {
            DistillConfig config;
            config.temperature = spec.mitigation.temperature;
            config.soft_label_weight = spec.mitigation.soft_label_weight;
            config.teacher_training = base;
            config.student_training = base;
            config.hidden = spec.hidden;
            defended = distill_from_teacher(victim, train_set, config).student;
        }
        result.timings.defense_seconds = seconds_since(start);
        result.timings.defense_trained = true;
    }

    start = Clock::now();
    std::vector<AttackPower> powers = spec.powers;
    std::sort(powers.begin(), powers.end());
    for (const auto power : powers) {
        AttackConfig attack = spec.attack;
        attack.epsilon = epsilon_for(power);
        const bool clean = power == AttackPower::none;

        const Matrix attacked = clean ? test_set.x : craft_inputs(attack, victim, test_set.x, test_set.y);
        result.rows.push_back({power, Defense::undefended, metrics(forward(victim, attacked), test_set.y)});

        if (defended) {
            const Matrix defended_inputs = (clean || spec.reuse_attack_examples)
                                               ? attacked
                                               : craft_inputs(attack, *defended, test_set.x, test_set.y);
            result.rows.push_back({power, Defense::defended, metrics(forward(*defended, defended_inputs), test_set.y)});
        }
    }
    result.timings.evaluation_seconds = seconds_since(start);
    return result;
}

std::string format_metric(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%#.6g", v);
    return buf;
}

std::string export_csv(const ExperimentResult& result) {
    std::vector<ResultRow> rows = result.rows;
    std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
        return a.power != b.power ? a.power < b.power : a.defense < b.defense;
    });
    std::string out = "attack_power,defense,mae,mse,rmse\n";
    for (const auto& row : rows) {
        out += to_string(row.power);
        out += ',';
        out += to_string(row.defense);
        out += ',' + format_metric(row.metrics.mae);
        out += ',' + format_metric(row.metrics.mse);
        out += ',' + format_metric(row.metrics.rmse);
        out += '\n';
    }
    return out;
}

std::vector<ResultRow> parse_results_csv(std::string_view bytes) {
    static constexpr std::string_view kHeader = "attack_power,defense,mae,mse,rmse";
    std::vector<ResultRow> rows;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    bool saw_header = false;
    while (pos < bytes.size()) {
        std::size_t end = bytes.find('\n', pos);
        if (end == std::string_view::npos) end = bytes.size();
        std::string_view line = bytes.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        if (!saw_header) {
            if (line != kHeader) throw ParseError("unexpected results header", line_no);
            saw_header = true;
            continue;
        }
        std::vector<std::string> fields;
        std::size_t start = 0;
        for (;;) {
            const auto comma = line.find(',', start);
            fields.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        if (fields.size() != 5) throw ParseError("expected 5 fields", line_no);
        try {
            ResultRow row{parse_attack_power(fields[0]), parse_defense(fields[1]),
                          {std::stod(fields[2]), std::stod(fields[3]), std::stod(fields[4])}};
            rows.push_back(row);
        } catch (const ConfigError& e) {
            throw ParseError(e.what(), line_no);
        } catch (const std::logic_error&) {
            throw ParseError("metric is not a number", line_no);
        }
    }
    if (!saw_header) throw ParseError("missing results header");
    return rows;
}

// ---------------------------------------------------------------------------
// JSON mapping

namespace {

template <typename T>
T read(const nlohmann::json& j, const char* key, T fallback) {
    if (!j.contains(key) || j[key].is_null()) return fallback;
    try {
        return j[key].get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("field '") + key + "' has the wrong type");
    }
}

bool non_negative_integer(const nlohmann::json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

std::uint64_t read_seed(const nlohmann::json& j, const char* key, std::uint64_t fallback) {
    if (!j.contains(key) || j[key].is_null()) return fallback;
    if (!non_negative_integer(j[key])) {
        throw ConfigError(std::string("field '") + key + "' must be a non-negative integer");
    }
    return j[key].get<std::uint64_t>();
}

std::size_t read_count(const nlohmann::json& j, const char* key, std::size_t fallback) {
    return static_cast<std::size_t>(read_seed(j, key, fallback));
}

const nlohmann::json& object_field(const nlohmann::json& j, const char* key) {
    static const nlohmann::json empty = nlohmann::json::object();
    if (!j.contains(key) || j[key].is_null()) return empty;
    if (!j[key].is_object()) throw ConfigError(std::string("field '") + key + "' must be an object");
    return j[key];
}

std::uint64_t count_item(const nlohmann::json& v) {
    if (!non_negative_integer(v)) throw ConfigError("expected a non-negative integer, got " + v.dump());
    return v.get<std::uint64_t>();
}

template <typename T, typename F>
std::vector<T> read_list(const nlohmann::json& j, const char* key, std::vector<T> fallback, F convert) {
    if (!j.contains(key) || j[key].is_null()) return fallback;
    const auto& arr = j[key];
    if (!arr.is_array()) throw ConfigError(std::string("field '") + key + "' must be an array");
    std::vector<T> out;
    for (const auto& item : arr) {
        try {
            out.push_back(convert(item));
        } catch (const nlohmann::json::exception&) {
            throw ConfigError(std::string("field '") + key + "' has an element of the wrong type");
        }
    }
    return out;
}

}  // namespace

nlohmann::json to_json(const TrainingConfig& c) {
    return {{"learning_rate", c.learning_rate},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"optimizer", std::string(to_string(c.optimizer))},
            {"seed", c.seed}};
}

TrainingConfig training_from_json(const nlohmann::json& j, const TrainingConfig& defaults) {
    if (!j.is_object()) throw ConfigError("training config must be an object");
    TrainingConfig c;
    c.learning_rate = read<double>(j, "learning_rate", defaults.learning_rate);
    c.epochs = read_count(j, "epochs", defaults.epochs);
    c.batch_size = read_count(j, "batch_size", defaults.batch_size);
    c.optimizer = parse_optimizer(read<std::string>(j, "optimizer", std::string(to_string(defaults.optimizer))));
    c.seed = read_seed(j, "seed", defaults.seed);
    return c;
}

nlohmann::json to_json(const HyperGrid& g) {
    auto opts = nlohmann::json::array();
    for (auto o : g.optimizers) opts.push_back(std::string(to_string(o)));
    return {{"learning_rates", g.learning_rates},
            {"epochs", g.epochs},
            {"batch_sizes", g.batch_sizes},
            {"optimizers", opts},
            {"seeds", g.seeds}};
}

HyperGrid grid_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("grid must be an object");
    HyperGrid g;
    g.learning_rates = read_list<double>(j, "learning_rates", g.learning_rates,
                                         [](const nlohmann::json& v) { return v.get<double>(); });
    g.epochs = read_list<std::size_t>(j, "epochs", g.epochs,
                                      count_item);
    g.batch_sizes = read_list<std::size_t>(j, "batch_sizes", g.batch_sizes,
                                           count_item);
    g.optimizers = read_list<Optimizer>(j, "optimizers", g.optimizers, [](const nlohmann::json& v) {
        return parse_optimizer(v.get<std::string>());
    });
    g.seeds = read_list<std::uint64_t>(j, "seeds", g.seeds,
                                       count_item);
    return g;
}

nlohmann::json to_json(const AttackConfig& c) {
    return {{"kind", std::string(to_string(c.kind))},
            {"epsilon", c.epsilon},
            {"step_size", c.step_size ? nlohmann::json(*c.step_size) : nlohmann::json(nullptr)},
            {"iterations", c.iterations},
            {"momentum_decay", c.momentum_decay},
            {"random_start", c.random_start},
            {"seed", c.seed}};
}

AttackConfig attack_from_json(const nlohmann::json& j, const AttackConfig& defaults) {
    if (!j.is_object()) throw ConfigError("attack config must be an object");
    AttackConfig c = defaults;
    c.kind = parse_attack_kind(read<std::string>(j, "kind", std::string(to_string(defaults.kind))));
    c.epsilon = read<double>(j, "epsilon", defaults.epsilon);
    if (j.contains("step_size")) {
        c.step_size = j["step_size"].is_null() ? std::nullopt : std::optional<double>(read<double>(j, "step_size", 0.0));
    }
    c.iterations = read_count(j, "iterations", defaults.iterations);
    c.momentum_decay = read<double>(j, "momentum_decay", defaults.momentum_decay);
    c.random_start = read<bool>(j, "random_start", defaults.random_start);
    c.seed = read_seed(j, "seed", defaults.seed);
    return c;
}

nlohmann::json to_json(const ExperimentSpec& spec) {
    auto powers = nlohmann::json::array();
    for (auto p : spec.powers) powers.push_back(std::string(to_string(p)));
    nlohmann::json mitigation = {{"method", std::string(to_string(spec.mitigation.method))},
                                 {"alpha", spec.mitigation.alpha},
                                 {"attack", to_json(spec.mitigation.attack)},
                                 {"temperature", spec.mitigation.temperature},
                                 {"soft_label_weight", spec.mitigation.soft_label_weight},
                                 {"training", spec.mitigation.training ? to_json(*spec.mitigation.training)
                                                                       : nlohmann::json(nullptr)}};
    return {{"application", spec.application},
            {"dataset_ref", spec.dataset_ref},
            {"model_ref", spec.model_ref ? nlohmann::json(*spec.model_ref) : nlohmann::json(nullptr)},
            {"train_from_scratch", spec.train_from_scratch},
            {"training", to_json(spec.training)},
            {"grid", spec.grid ? to_json(*spec.grid) : nlohmann::json(nullptr)},
            {"hidden", spec.hidden},
            {"attack", to_json(spec.attack)},
            {"powers", powers},
            {"mitigation", mitigation},
            {"reuse_attack_examples", spec.reuse_attack_examples},
            {"test_fraction", spec.test_fraction},
            {"seed", spec.seed}};
}

ExperimentSpec spec_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("experiment spec must be a JSON object");
    ExperimentSpec spec;
    spec.application = read<std::string>(j, "application", spec.application);
    spec.dataset_ref = read<std::string>(j, "dataset_ref", "");
    if (j.contains("model_ref") && !j["model_ref"].is_null()) spec.model_ref = read<std::string>(j, "model_ref", "");
    spec.train_from_scratch = read<bool>(j, "train_from_scratch", false);
    spec.seed = read_seed(j, "seed", 0);
    TrainingConfig training_defaults;
    training_defaults.seed = spec.seed;
    spec.training = training_from_json(object_field(j, "training"), training_defaults);
    if (j.contains("grid") && !j["grid"].is_null()) spec.grid = grid_from_json(j["grid"]);
    spec.hidden = read_list<std::size_t>(j, "hidden", spec.hidden,
                                         count_item);
    AttackConfig attack_defaults;
    attack_defaults.seed = spec.seed;
    spec.attack = attack_from_json(object_field(j, "attack"), attack_defaults);

    if (j.contains("powers") && j["powers"].is_string()) {
        if (j["powers"].get<std::string>() != "all") throw ConfigError("powers must be \"all\" or a list");
    } else {
        spec.powers = read_list<AttackPower>(j, "powers", spec.powers, [](const nlohmann::json& v) {
            return parse_attack_power(v.get<std::string>());
        });
    }

    const auto& m = object_field(j, "mitigation");
    spec.mitigation.method = parse_mitigation(read<std::string>(m, "method", "none"));
    spec.mitigation.alpha = read<double>(m, "alpha", spec.mitigation.alpha);
    AttackConfig mitigation_attack = spec.mitigation.attack;
    mitigation_attack.seed = spec.seed;
    spec.mitigation.attack = attack_from_json(object_field(m, "attack"), mitigation_attack);
    spec.mitigation.temperature = read<double>(m, "temperature", spec.mitigation.temperature);
    spec.mitigation.soft_label_weight = read<double>(m, "soft_label_weight", spec.mitigation.soft_label_weight);
    if (m.contains("training") && !m["training"].is_null()) {
        spec.mitigation.training = training_from_json(m["training"], spec.training);
    }

    spec.reuse_attack_examples = read<bool>(j, "reuse_attack_examples", false);
    spec.test_fraction = read<double>(j, "test_fraction", spec.test_fraction);
    return spec;
}

nlohmann::json to_json(const MetricSet& m) {
    return {{"mae", m.mae}, {"mse", m.mse}, {"rmse", m.rmse}};
}

nlohmann::json to_json(const ExperimentResult& r) {
    auto rows = nlohmann::json::array();
    for (const auto& row : r.rows) {
        rows.push_back({{"power", std::string(to_string(row.power))},
                        {"defense", std::string(to_string(row.defense))},
                        {"metrics", to_json(row.metrics)}});
    }
    return {{"rows", rows},
            {"provenance",
             {{"spec", r.spec_snapshot},
              {"selected_training", r.selected_training ? to_json(*r.selected_training) : nlohmann::json(nullptr)},
              {"timings",
               {{"train_seconds", r.timings.train_seconds},
                {"defense_seconds", r.timings.defense_seconds},
                {"evaluation_seconds", r.timings.evaluation_seconds},
                {"defense_trained", r.timings.defense_trained}}}}}};
}

}  // namespace trustlab
