#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "trustlab/csv.hpp"
#include "trustlab/evaluation.hpp"
#include "trustlab/synth.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
};

struct Workdir {
    fs::path path;
    Workdir() {
        path = fs::temp_directory_path() / ("trustlab-cli-" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~Workdir() { fs::remove_all(path); }
    std::string operator/(const std::string& name) const { return (path / name).string(); }
};

// Runs the CLI with stdout captured (so it is never a terminal).
Run cli(const std::string& args) {
    const std::string cmd = std::string(TRUSTLAB_CLI) + " " + args + " 2>&1";
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    std::string out;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) out.append(buf, n);
    const int status = pclose(p);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

double value_after(const std::string& text, const std::string& key) {
    const auto pos = text.find(key + " ");
    REQUIRE(pos != std::string::npos);
    return std::strtod(text.c_str() + pos + key.size(), nullptr);
}

}  // namespace

TEST_CASE("help and usage errors") {
    const Run help = cli("--help");
    CHECK(help.code == 0);
    for (const char* sub : {"synth", "train", "tune", "attack", "evaluate", "experiment", "serve"}) {
        CHECK(help.out.find(sub) != std::string::npos);
    }
    const Run sub_help = cli("experiment --help");
    CHECK(sub_help.code == 0);
    for (const char* flag : {"--spec", "--data", "--model", "--train", "--attack", "--powers", "--mitigation", "--seed", "--out"}) {
        CHECK(sub_help.out.find(flag) != std::string::npos);
    }
    CHECK(cli("").code == 2);
    CHECK(cli("frobnicate").code == 2);
    CHECK(cli("synth --out x.csv --bogus").code == 2);
    CHECK(cli("evaluate --model a --data b --unknown-flag 1").code == 2);
}

TEST_CASE("synth writes the requested shape") {
    Workdir w;
    const Run r = cli("synth --seed 42 --n 10 --pilots 4 --beams 2 --out " + w / "d.csv");
    REQUIRE(r.code == 0);
    const std::string text = slurp(w / "d.csv");
    CHECK(lines(text) == 11);
    const auto table = trustlab::read_csv_table(text);
    CHECK(table.values.cols() == 6);
    CHECK(text == trustlab::write_csv(trustlab::synth_beamforming({42, 10, 4, 2})));
}

TEST_CASE("experiment subcommand") {
    Workdir w;
    const std::string base = "experiment --data synth:seed=42,n=200 --train default --attack fgsm --powers all --seed 7";
    const Run none = cli(base + " --mitigation none --out " + w / "r.csv");
    REQUIRE(none.code == 0);
    CHECK(lines(slurp(w / "r.csv")) == 5);
    CHECK(none.out.find("undefended") != std::string::npos);
    CHECK(none.out.find("\033[") == std::string::npos);

    const Run adv = cli(base + " --mitigation adversarial_training --out " + w / "r9.csv");
    REQUIRE(adv.code == 0);
    const std::string nine = slurp(w / "r9.csv");
    CHECK(lines(nine) == 9);

    // Same bytes as a direct library call with the same spec.
    trustlab::ExperimentSpec spec;
    spec.dataset_ref = "synth:seed=42,n=200";
    spec.train_from_scratch = true;
    spec.seed = spec.training.seed = spec.attack.seed = spec.mitigation.attack.seed = 7;
    spec.mitigation.method = trustlab::Mitigation::adversarial_training;
    const auto direct = trustlab::run_experiment(spec, {trustlab::synth_beamforming({42, 200, 8, 4}), std::nullopt});
    CHECK(nine == trustlab::export_csv(direct));

    CHECK(cli(base + " --mitigation none").code == 2);
    CHECK(cli("experiment --data synth:seed=1,n=50 --model m.json --train default --out " + w / "x.csv").code == 2);
    CHECK(cli("experiment --data synth:seed=1,n=50 --out " + w / "x.csv").code == 2);
    CHECK(cli("experiment --data synth:seed=1,n=50 --train default --attack deepfool --out " + w / "x.csv").code == 2);
    CHECK(cli("experiment --data " + w / "missing.csv" + " --train default --out " + w / "x.csv").code == 1);
}

TEST_CASE("experiment from a spec file") {
    Workdir w;
    std::ofstream(w / "spec.json") << R"({"dataset_ref": "synth:seed=3,n=100,pilots=4,beams=2",
        "train_from_scratch": true, "training": {"epochs": 5}, "powers": ["none", "high"], "seed": 2})";
    const Run r = cli("experiment --spec " + w / "spec.json" + " --out " + w / "r.csv");
    REQUIRE(r.code == 0);
    CHECK(lines(slurp(w / "r.csv")) == 3);

    std::ofstream(w / "irs.json") << R"({"application": "irs", "dataset_ref": "synth:seed=3,n=100", "train_from_scratch": true})";
    const Run bad = cli("experiment --spec " + w / "irs.json" + " --out " + w / "r.csv");
    CHECK(bad.code == 1);
    CHECK(bad.out.find("beamforming") != std::string::npos);
}

TEST_CASE("train, evaluate, attack and tune") {
    Workdir w;
    REQUIRE(cli("synth --seed 3 --n 120 --pilots 4 --beams 2 --out " + w / "d.csv").code == 0);
    const Run tr = cli("train --data " + w / "d.csv" + " --epochs 15 --hidden 16,16 --seed 2 --out " + w / "m.json" +
                       " --history " + w / "h.csv");
    REQUIRE(tr.code == 0);
    const auto hist = trustlab::read_csv_table(slurp(w / "h.csv"));
    REQUIRE(hist.values.rows() == 15);
    const double final_loss = hist.values(14, 1);

    const Run ev = cli("evaluate --model " + w / "m.json" + " --data " + w / "d.csv");
    REQUIRE(ev.code == 0);
    CHECK(std::abs(value_after(ev.out, "mse") - final_loss) <= 1e-9);

    const std::string m = " --model " + w / "m.json" + " --data " + w / "d.csv";
    REQUIRE(cli("attack" + m + " --kind fgsm --epsilon 0.05 --out " + w / "f.csv").code == 0);
    REQUIRE(cli("attack" + m + " --kind bim --iterations 1 --step-size=0.05 --epsilon 0.05 --out " + w / "b.csv").code == 0);
    CHECK(slurp(w / "f.csv") == slurp(w / "b.csv"));
    CHECK(slurp(w / "f.csv") != slurp(w / "d.csv"));

    REQUIRE(cli("attack" + m + " --kind pgd --epsilon 0 --out " + w / "z.csv").code == 0);
    const auto orig = trustlab::parse_csv(slurp(w / "d.csv"), 2);
    const auto zero = trustlab::parse_csv(slurp(w / "z.csv"), 2);
    CHECK(zero.raw_x == orig.raw_x);
    CHECK(zero.y == orig.y);

    CHECK(cli("attack" + m + " --kind unknown --epsilon 0.1 --out " + w / "u.csv").code == 2);

    const Run tune = cli("tune --data " + w / "d.csv" + " --grid lr=0.1,0.01 epochs=100");
    REQUIRE(tune.code == 0);
    CHECK(tune.out.find("2 candidates evaluated") != std::string::npos);
    CHECK(cli("tune --data " + w / "d.csv" + " --grid colour=red").code == 2);
}

TEST_CASE("domain errors exit 1 with diagnostics") {
    Workdir w;
    std::ofstream(w / "ragged.csv") << "x0,y0\n1,2\n3\n";
    const Run r = cli("train --data " + w / "ragged.csv" + " --out " + w / "m.json");
    CHECK(r.code == 1);
    CHECK(r.out.find("line 3") != std::string::npos);
    std::ofstream(w / "bad.json") << "{";
    CHECK(cli("evaluate --model " + w / "bad.json" + " --data synth:seed=1,n=10").code == 1);
    CHECK(cli("train --data " + std::string(TRUSTLAB_FIXTURES) + "/mat/cell.mat --target-columns 1 --out " + w / "m.json").code == 1);
}
