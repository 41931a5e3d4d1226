// trustlab: command-line front end for the attack/defense pipeline.

#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "trustlab/attacks.hpp"
#include "trustlab/csv.hpp"
#include "trustlab/errors.hpp"
#include "trustlab/evaluation.hpp"
#include "trustlab/matfile.hpp"
#include "trustlab/model_io.hpp"
#include "trustlab/rng.hpp"
#include "trustlab/synth.hpp"
#include "trustlab/service/server.hpp"

namespace {

using namespace trustlab;

constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("cannot write " + path);
}

// "synth:..." descriptor, a .mat file or a CSV file.
Dataset load_data(const std::string& ref, std::optional<std::size_t> target_columns) {
    if (is_synth_descriptor(ref)) return synth_beamforming(parse_synth_descriptor(ref));
    const std::string bytes = read_file(ref);
    const std::string name = std::filesystem::path(ref).filename().string();
    if (std::filesystem::path(ref).extension() == ".mat") return dataset_from_mat(bytes, target_columns, name);
    const std::size_t k = target_columns ? *target_columns : infer_target_columns(bytes);
    if (k == 0) throw UsageError(ref + ": cannot infer target columns; pass --target-columns");
    return parse_csv(bytes, k, name);
}

std::vector<std::size_t> parse_widths(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    for (std::string part; std::getline(ss, part, ',');) {
        try {
            std::size_t used = 0;
            const unsigned long v = std::stoul(part, &used);
            if (used != part.size() || v == 0) throw std::invalid_argument(part);
            out.push_back(v);
        } catch (const std::exception&) {
            throw UsageError("bad hidden layer list '" + text + "'");
        }
    }
    return out;
}

bool color_enabled() { return std::getenv("NO_COLOR") == nullptr && isatty(STDOUT_FILENO); }

void print_table(const ExperimentResult& result) {
    const bool color = color_enabled();
    const char* bold = color ? "\033[1m" : "";
    const char* reset = color ? "\033[0m" : "";
    std::printf("%s%-8s %-11s %14s %14s %14s%s\n", bold, "power", "defense", "mae", "mse", "rmse", reset);
    for (const auto& row : result.rows) {
        std::printf("%-8s %-11s %14.6g %14.6g %14.6g\n", std::string(to_string(row.power)).c_str(),
                    std::string(to_string(row.defense)).c_str(), row.metrics.mae, row.metrics.mse,
                    row.metrics.rmse);
    }
}

struct TrainFlags {
    std::string hidden = "64,64";
    std::string loss = "mse";
    TrainingConfig config;
    std::string optimizer = "adam";

    void add(CLI::App* app) {
        app->add_option("--hidden", hidden, "Hidden layer widths, comma separated")->capture_default_str();
        app->add_option("--loss", loss, "Training loss")->check(CLI::IsMember({"mse", "abs_error"}))->capture_default_str();
        app->add_option("--lr", config.learning_rate, "Learning rate")->capture_default_str();
        app->add_option("--epochs", config.epochs, "Epochs")->capture_default_str();
        app->add_option("--batch-size", config.batch_size, "Minibatch size")->capture_default_str();
        app->add_option("--optimizer", optimizer, "Optimizer")->check(CLI::IsMember({"sgd", "adam"}))->capture_default_str();
        app->add_option("--seed", config.seed, "Shuffle and initialisation seed")->capture_default_str();
    }
    TrainingConfig training() const {
        TrainingConfig c = config;
        c.optimizer = parse_optimizer(optimizer);
        return c;
    }
    MlpModel initial(const Dataset& data) const {
        std::vector<std::size_t> widths{data.input_dim()};
        for (auto w : parse_widths(hidden)) widths.push_back(w);
        widths.push_back(data.output_dim());
        return MlpModel::initialize(widths, derive_seed(config.seed, 2), parse_loss_kind(loss));
    }
};

nlohmann::json training_provenance(const Dataset& data, const TrainingConfig& config,
                                   const std::vector<double>& history) {
    return {{"dataset", data.name}, {"training", to_json(config)}, {"loss_history", history}};
}

void write_history(const std::string& path, const std::vector<double>& history) {
    std::string out = "epoch,loss\n";
    for (std::size_t i = 0; i < history.size(); ++i) {
        out += std::to_string(i + 1) + "," + format_double(history[i]) + "\n";
    }
    write_file(path, out);
}

// Grid tokens look like lr=0.1,0.01 epochs=100 batch=16,32 optimizer=adam seed=1,2.
HyperGrid parse_grid(const std::vector<std::string>& tokens, const TrainingConfig& base) {
    HyperGrid grid;
    grid.learning_rates = {base.learning_rate};
    grid.epochs = {base.epochs};
    grid.batch_sizes = {base.batch_size};
    grid.optimizers = {base.optimizer};
    grid.seeds = {base.seed};
    for (const auto& token : tokens) {
        const auto eq = token.find('=');
        if (eq == std::string::npos) throw UsageError("grid entry '" + token + "' is not key=values");
        const std::string key = token.substr(0, eq);
        std::vector<std::string> values;
        std::stringstream ss(token.substr(eq + 1));
        for (std::string v; std::getline(ss, v, ',');) values.push_back(v);
        if (values.empty()) throw UsageError("grid entry '" + token + "' has no values");
        try {
            if (key == "lr" || key == "learning_rate") {
                grid.learning_rates.clear();
                for (const auto& v : values) grid.learning_rates.push_back(std::stod(v));
            } else if (key == "epochs") {
                grid.epochs.clear();
                for (const auto& v : values) grid.epochs.push_back(std::stoul(v));
            } else if (key == "batch" || key == "batch_size") {
                grid.batch_sizes.clear();
                for (const auto& v : values) grid.batch_sizes.push_back(std::stoul(v));
            } else if (key == "optimizer") {
                grid.optimizers.clear();
                for (const auto& v : values) grid.optimizers.push_back(parse_optimizer(v));
            } else if (key == "seed") {
                grid.seeds.clear();
                for (const auto& v : values) grid.seeds.push_back(std::stoull(v));
            } else {
                throw UsageError("unknown grid key '" + key + "'");
            }
        } catch (const std::invalid_argument&) {
            throw UsageError("bad value in grid entry '" + token + "'");
        } catch (const std::out_of_range&) {
            throw UsageError("value out of range in grid entry '" + token + "'");
        } catch (const ConfigError& e) {
            throw UsageError(e.what());
        }
    }
    return grid;
}

std::vector<AttackPower> parse_powers(const std::string& text) {
    if (text == "all") return {kPowerLadder.begin(), kPowerLadder.end()};
    std::vector<AttackPower> out;
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ',');) {
        try {
            out.push_back(parse_attack_power(p));
        } catch (const ConfigError& e) {
            throw UsageError(e.what());
        }
    }
    return out;
}

int run(int argc, char** argv) {
    CLI::App app{"Adversarial robustness experiments for beamforming-rate regression models"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Write a synthetic beamforming dataset as CSV");
    SynthParams sp;
    std::string synth_out;
    synth->add_option("--seed", sp.seed, "Generator seed")->capture_default_str();
    synth->add_option("--n", sp.n_samples, "Number of samples")->capture_default_str();
    synth->add_option("--pilots", sp.n_pilots, "Pilot features per sample")->capture_default_str();
    synth->add_option("--beams", sp.n_beams, "Beam rates per sample")->capture_default_str();
    synth->add_option("--out", synth_out, "Output CSV")->required();

    // train
    auto* train_cmd = app.add_subcommand("train", "Fit a model and write the model file");
    std::string data_ref, model_path, out_path, history_path;
    std::optional<std::size_t> target_columns;
    TrainFlags train_flags;
    train_cmd->add_option("--data", data_ref, "CSV, MAT file or synth:seed=..,n=..,pilots=..,beams=..")->required();
    train_cmd->add_option("--target-columns", target_columns, "Trailing target columns (CSV/MAT)");
    train_flags.add(train_cmd);
    train_cmd->add_option("--out", out_path, "Output model file")->required();
    train_cmd->add_option("--history", history_path, "Write per-epoch loss as CSV");

    // tune
    auto* tune = app.add_subcommand("tune", "Grid-search training hyperparameters");
    std::vector<std::string> grid_tokens;
    double validation = 0.2;
    TrainFlags tune_flags;
    tune->add_option("--data", data_ref, "CSV, MAT file or synth descriptor")->required();
    tune->add_option("--target-columns", target_columns, "Trailing target columns (CSV/MAT)");
    tune->add_option("--grid", grid_tokens, "Entries like lr=0.1,0.01 epochs=100 batch=32 optimizer=adam seed=0")
        ->required();
    tune->add_option("--validation", validation, "Held-out validation fraction")->capture_default_str();
    tune_flags.add(tune);
    tune->add_option("--out", out_path, "Train the best candidate on all rows and write it here");
    tune->add_option("--history", history_path, "Loss history of the final fit as CSV");

    // attack
    auto* attack_cmd = app.add_subcommand("attack", "Write an adversarial copy of a dataset");
    std::string kind = "fgsm";
    AttackConfig attack_config;
    std::optional<double> step_size;
    bool no_random_start = false;
    attack_cmd->add_option("--model", model_path, "Model file")->required();
    attack_cmd->add_option("--data", data_ref, "CSV, MAT file or synth descriptor")->required();
    attack_cmd->add_option("--target-columns", target_columns, "Trailing target columns (CSV/MAT)");
    attack_cmd->add_option("--kind", kind, "Attack")->check(CLI::IsMember({"fgsm", "bim", "pgd", "mim"}))->capture_default_str();
    attack_cmd->add_option("--epsilon", attack_config.epsilon, "L-infinity budget on the normalized scale")->required();
    attack_cmd->add_option("--step-size", step_size, "Step size (default 2.5*epsilon/iterations)");
    attack_cmd->add_option("--iterations", attack_config.iterations, "Iterations")->capture_default_str();
    attack_cmd->add_option("--momentum", attack_config.momentum_decay, "MIM momentum decay")->capture_default_str();
    attack_cmd->add_flag("--no-random-start", no_random_start, "PGD starts from the clean input");
    attack_cmd->add_option("--seed", attack_config.seed, "PGD random start seed")->capture_default_str();
    attack_cmd->add_option("--out", out_path, "Output CSV")->required();

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "Print MAE/MSE/RMSE of a model on a dataset");
    evaluate->add_option("--model", model_path, "Model file")->required();
    evaluate->add_option("--data", data_ref, "CSV, MAT file or synth descriptor")->required();
    evaluate->add_option("--target-columns", target_columns, "Trailing target columns (CSV/MAT)");

    // experiment
    auto* experiment = app.add_subcommand("experiment", "Run the attack/defense matrix and export CSV");
    std::string spec_path, train_choice, exp_attack, powers, mitigation;
    std::optional<std::uint64_t> seed;
    std::optional<double> alpha, temperature;
    bool reuse = false;
    experiment->add_option("--spec", spec_path, "Experiment spec JSON; dataset_ref/model_ref are file paths");
    experiment->add_option("--data", data_ref, "CSV, MAT file or synth descriptor");
    experiment->add_option("--target-columns", target_columns, "Trailing target columns (CSV/MAT)");
    auto* model_opt = experiment->add_option("--model", model_path, "Victim model file");
    auto* train_opt = experiment->add_option("--train", train_choice, "Train the victim: 'default' or a training JSON file");
    model_opt->excludes(train_opt);
    experiment->add_option("--attack", exp_attack, "Attack")->check(CLI::IsMember({"fgsm", "bim", "pgd", "mim"}));
    experiment->add_option("--powers", powers, "'all' or a list such as low,high");
    experiment->add_option("--mitigation", mitigation, "Mitigation")
        ->check(CLI::IsMember({"none", "adversarial_training", "defensive_distillation"}));
    experiment->add_option("--alpha", alpha, "Adversarial training weight");
    experiment->add_option("--temperature", temperature, "Distillation temperature");
    experiment->add_flag("--reuse-attack-examples", reuse, "Attack the defended model with the undefended model's examples");
    experiment->add_option("--seed", seed, "Experiment seed");
    experiment->add_option("--out", out_path, "Results CSV");

    // serve
    auto* serve = app.add_subcommand("serve", "Start the HTTP service");
    service::ServerConfig server_config;
    std::string storage;
    bool memory = false;
    serve->add_option("--host", server_config.host, "Listen address")->envname("TRUSTLAB_HOST")->capture_default_str();
    serve->add_option("--port", server_config.port, "Listen port (0 = any)")->envname("TRUSTLAB_PORT")->capture_default_str();
    serve->add_option("--storage", storage, "Storage root for artifacts and jobs")->envname("TRUSTLAB_STORAGE");
    serve->add_flag("--memory", memory, "Keep everything in memory");
    serve->add_option("--max-upload", server_config.max_upload_bytes, "Upload size cap in bytes")
        ->envname("TRUSTLAB_MAX_UPLOAD")->capture_default_str();
    serve->add_option("--workers", server_config.workers, "Experiment worker threads")
        ->envname("TRUSTLAB_WORKERS")->capture_default_str();
    serve->add_option("--cors-origin", server_config.cors_origin, "Access-Control-Allow-Origin ('' disables)")
        ->envname("TRUSTLAB_CORS_ORIGIN")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    if (*synth) {
        write_file(synth_out, write_csv(synth_beamforming(sp)));
        return 0;
    }

    if (*train_cmd) {
        const Dataset data = load_data(data_ref, target_columns);
        const TrainingConfig config = train_flags.training();
        auto result = train(train_flags.initial(data), data, config);
        write_file(out_path, save_model({result.model, data.scaling,
                                         training_provenance(data, config, result.loss_history)}));
        if (!history_path.empty()) write_history(history_path, result.loss_history);
        std::printf("trained %zu epochs, final loss %.17g\n", result.loss_history.size(),
                    result.loss_history.empty() ? 0.0 : result.loss_history.back());
        return 0;
    }

    if (*tune) {
        const Dataset data = load_data(data_ref, target_columns);
        const TrainingConfig base = tune_flags.training();
        const HyperGrid grid = parse_grid(grid_tokens, base);
        const MlpModel initial = tune_flags.initial(data);
        const auto search = grid_search(grid, initial, data, validation, derive_seed(base.seed, 3));
        std::printf("%-12s %-8s %-8s %-10s %-8s %16s\n", "lr", "epochs", "batch", "optimizer", "seed", "val_mse");
        for (const auto& s : search.scores) {
            std::printf("%-12g %-8zu %-8zu %-10s %-8llu %16.8g\n", s.config.learning_rate, s.config.epochs,
                        s.config.batch_size, std::string(to_string(s.config.optimizer)).c_str(),
                        static_cast<unsigned long long>(s.config.seed), s.validation_mse);
        }
        std::printf("%zu candidates evaluated; best lr=%g epochs=%zu batch=%zu optimizer=%s seed=%llu (val_mse %.8g)\n",
                    search.scores.size(), search.best.learning_rate, search.best.epochs, search.best.batch_size,
                    std::string(to_string(search.best.optimizer)).c_str(),
                    static_cast<unsigned long long>(search.best.seed), search.best_score);
        if (!out_path.empty()) {
            auto result = train(initial, data, search.best);
            write_file(out_path, save_model({result.model, data.scaling,
                                             training_provenance(data, search.best, result.loss_history)}));
            if (!history_path.empty()) write_history(history_path, result.loss_history);
        }
        return 0;
    }

    if (*attack_cmd) {
        const ModelFile file = load_model(read_file(model_path));
        const ExperimentInputs in = make_inputs(load_data(data_ref, target_columns), file);
        attack_config.kind = parse_attack_kind(kind);
        attack_config.step_size = step_size;
        attack_config.random_start = !no_random_start;
        write_file(out_path, write_csv(craft(attack_config, *in.model, in.dataset)));
        return 0;
    }

    if (*evaluate) {
        const ModelFile file = load_model(read_file(model_path));
        const ExperimentInputs in = make_inputs(load_data(data_ref, target_columns), file);
        const MetricSet m = metrics(forward(*in.model, in.dataset.x), in.dataset.y);
        std::printf("mae  %.17g\nmse  %.17g\nrmse %.17g\n", m.mae, m.mse, m.rmse);
        return 0;
    }

    if (*experiment) {
        if (out_path.empty() && !isatty(STDOUT_FILENO)) {
            throw UsageError("--out is required when standard output is not a terminal");
        }
        ExperimentSpec spec;
        if (!spec_path.empty()) {
            const auto j = nlohmann::json::parse(read_file(spec_path), nullptr, false);
            if (j.is_discarded()) throw Error(spec_path + ": not valid JSON");
            spec = spec_from_json(j);
        } else if (data_ref.empty()) {
            throw UsageError("experiment needs --spec or --data");
        }
        if (!data_ref.empty()) spec.dataset_ref = data_ref;
        if (!model_path.empty()) {
            spec.model_ref = model_path;
            spec.train_from_scratch = false;
        }
        if (!train_choice.empty()) {
            spec.model_ref.reset();
            spec.train_from_scratch = true;
            if (train_choice != "default") {
                const auto j = nlohmann::json::parse(read_file(train_choice), nullptr, false);
                if (j.is_discarded()) throw Error(train_choice + ": not valid JSON");
                spec.training = training_from_json(j, spec.training);
            }
        }
        if (seed) {
            spec.seed = *seed;
            spec.training.seed = *seed;
            spec.attack.seed = *seed;
            spec.mitigation.attack.seed = *seed;
        }
        if (!exp_attack.empty()) spec.attack.kind = parse_attack_kind(exp_attack);
        if (!powers.empty()) spec.powers = parse_powers(powers);
        if (!mitigation.empty()) spec.mitigation.method = parse_mitigation(mitigation);
        if (alpha) spec.mitigation.alpha = *alpha;
        if (temperature) spec.mitigation.temperature = *temperature;
        if (reuse) spec.reuse_attack_examples = true;
        if (!spec.model_ref && !spec.train_from_scratch) throw UsageError("experiment needs --model or --train");
        spec.validate();

        std::optional<ModelFile> model;
        if (spec.model_ref) model = load_model(read_file(*spec.model_ref));
        const ExperimentResult result =
            run_experiment(spec, make_inputs(load_data(spec.dataset_ref, target_columns), model));
        if (!out_path.empty()) write_file(out_path, export_csv(result));
        print_table(result);
        return 0;
    }

    if (*serve) {
        if (memory && !storage.empty()) throw UsageError("--memory and --storage are mutually exclusive");
        if (!memory) server_config.storage_root = storage.empty() ? std::filesystem::path("trustlab-data") : std::filesystem::path(storage);
        service::Server server(server_config);
        const int port = server.bind();
        std::printf("listening on http://%s:%d\n", server_config.host.c_str(), port);
        std::fflush(stdout);
        server.listen();
        return 0;
    }
    return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return kExitUsage;
    } catch (const trustlab::ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitDomain;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitDomain;
    }
}
