// One PASS/FAIL line per acceptance criterion. Exit status is non-zero when
// any criterion fails.

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "../unit/gradient_oracle.hpp"
#include "trustlab/attacks.hpp"
#include "trustlab/csv.hpp"
#include "trustlab/defenses.hpp"
#include "trustlab/errors.hpp"
#include "trustlab/evaluation.hpp"
#include "trustlab/matfile.hpp"
#include "trustlab/model_io.hpp"
#include "trustlab/rng.hpp"
#include "trustlab/service/server.hpp"
#include "trustlab/synth.hpp"

using namespace trustlab;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(const char* name, bool ok, const std::string& detail) {
    std::printf("%s  %-28s %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Matrix random_matrix(std::size_t r, std::size_t c, SplitMix64& rng, double lo, double hi) {
    Matrix m(r, c);
    for (double& v : m.data()) v = rng.uniform(lo, hi);
    return m;
}

std::string fixture(const std::string& rel) {
    std::ifstream in(std::string(TRUSTLAB_FIXTURES) + "/" + rel, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct RandomCase {
    MlpModel model;
    Matrix x, y;
};

RandomCase random_case(SplitMix64& rng, std::size_t max_width) {
    const std::size_t depth = 1 + rng.below(3);
    std::vector<std::size_t> widths;
    for (std::size_t i = 0; i <= depth; ++i) widths.push_back(1 + rng.below(max_width));
    const auto model = testing::random_model(widths, rng);
    Matrix x = random_matrix(1 + rng.below(4), widths.front(), rng, 0, 1);
    Matrix y = random_matrix(x.rows(), widths.back(), rng, -1, 1);
    return {model, std::move(x), std::move(y)};
}

void gradient_oracle() {
    const auto t0 = Clock::now();
    SplitMix64 rng(2024);
    std::size_t checked = 0, failed = 0;
    std::string first;
    for (int i = 0; i < 50; ++i) {
        const auto c = random_case(rng, 8);
        const auto r = testing::check_gradients(c.model, c.x, c.y);
        checked += r.checked;
        failed += r.failed;
        if (first.empty()) first = r.first_failure;
    }
    const double secs = seconds_since(t0);
    report("gradient_oracle", failed == 0 && secs < 10.0,
           fmt("50 models, %zu components, %zu mismatches, %.2fs (limit 10s)%s", checked, failed, secs,
               first.empty() ? "" : ("; first: " + first).c_str()));
}

void attack_reductions() {
    SplitMix64 rng(7);
    int bad_fgsm = 0, bad_pgd = 0, bad_mim = 0;
    for (int i = 0; i < 20; ++i) {
        const auto c = random_case(rng, 8);
        const double eps = rng.uniform(0.001, 0.2);
        const double step = rng.uniform(0.001, 0.1);
        const std::size_t iters = 1 + rng.below(10);
        bad_fgsm += !(bim(c.model, c.x, c.y, eps, eps, 1) == fgsm(c.model, c.x, c.y, eps));
        const Matrix b = bim(c.model, c.x, c.y, eps, step, iters);
        bad_pgd += !(pgd(c.model, c.x, c.y, eps, step, iters, false, rng.next()) == b);
        bad_mim += !(mim(c.model, c.x, c.y, eps, step, iters, 0.0) == b);
    }
    report("attack_reductions", bad_fgsm + bad_pgd + bad_mim == 0,
           fmt("20 cases each: bim1==fgsm %d, pgd(no start)==bim %d, mim(mu=0)==bim %d mismatches", bad_fgsm,
               bad_pgd, bad_mim));
}

void budget_property() {
    SplitMix64 rng(11);
    double worst = 0.0;
    int violations = 0;
    for (int i = 0; i < 1000; ++i) {
        const auto c = random_case(rng, 8);
        AttackConfig cfg = AttackConfig::of(kAttackKinds[i % 4], rng.uniform(0.0, 0.3));
        cfg.step_size = rng.uniform(0.001, 0.5);
        cfg.iterations = 1 + rng.below(12);
        cfg.momentum_decay = rng.uniform(0.0, 2.0);
        cfg.seed = rng.next();
        const double d = max_abs_diff(craft_inputs(cfg, c.model, c.x, c.y), c.x);
        worst = std::max(worst, d - cfg.epsilon);
        violations += d > cfg.epsilon + 1e-12;
    }
    report("budget_property", violations == 0,
           fmt("1000 cases over 4 attacks, %d violations, max excess %.3g", violations, worst));
}

struct SeedRun {
    std::vector<double> undefended;  // mse per power
    std::vector<double> defended;
};

SeedRun run_seed(std::uint64_t seed, bool reuse) {
    ExperimentSpec spec;
    spec.dataset_ref = "synth";
    spec.train_from_scratch = true;
    spec.seed = spec.training.seed = spec.attack.seed = spec.mitigation.attack.seed = seed;
    spec.mitigation.method = Mitigation::adversarial_training;
    spec.mitigation.alpha = 1.0;
    spec.mitigation.attack = AttackConfig::of(AttackKind::fgsm, 0.06);
    spec.reuse_attack_examples = reuse;
    const auto r = run_experiment(spec, {synth_beamforming({seed, 1000, 8, 4}), std::nullopt});
    SeedRun out;
    for (const auto& row : r.rows) {
        (row.defense == Defense::undefended ? out.undefended : out.defended).push_back(row.metrics.mse);
    }
    return out;
}

void directions() {
    const auto t0 = Clock::now();
    std::vector<SeedRun> runs;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) runs.push_back(run_seed(seed, false));
    const double secs = seconds_since(t0);

    std::vector<double> u(4), d(4);
    for (int p = 0; p < 4; ++p) {
        std::vector<double> us, ds;
        for (const auto& r : runs) {
            us.push_back(r.undefended[p]);
            ds.push_back(r.defended[p]);
        }
        u[p] = median(us);
        d[p] = median(ds);
    }
    const bool monotone = u[0] <= u[1] && u[1] <= u[2] && u[2] <= u[3];
    report("vulnerability_direction", monotone && u[3] >= 2 * u[0] && secs < 300,
           fmt("median mse none %.4g low %.4g medium %.4g high %.4g; high/none %.1fx; %.0fs for 5 seeds", u[0], u[1],
               u[2], u[3], u[3] / u[0], secs));
    report("mitigation_direction", d[2] < u[2] && d[3] < u[3] && secs < 600,
           fmt("white-box median mse medium %.4g vs %.4g undefended, high %.4g vs %.4g", d[2], u[2], d[3], u[3]));

    // Context only: the same defended models scored on the victim's examples.
    std::vector<double> tm, th;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto r = run_seed(seed, true);
        tm.push_back(r.defended[2]);
        th.push_back(r.defended[3]);
    }
    std::printf("INFO  %-28s transfer median mse medium %.4g, high %.4g (not a criterion)\n", "mitigation_transfer",
                median(tm), median(th));
}

void soft_label_checks() {
    SplitMix64 rng(5);
    double worst_sum = 0, worst_shift = 0;
    for (int i = 0; i < 200; ++i) {
        const std::size_t k = 2 + rng.below(6);
        Matrix z = random_matrix(4, k, rng, -30, 30);
        const double t = std::exp(rng.uniform(-3, 5));
        const Matrix q = softmax_rows(z, t);
        for (std::size_t r = 0; r < q.rows(); ++r) {
            double s = 0;
            for (double v : q.row(r)) s += v;
            worst_sum = std::max(worst_sum, std::abs(s - 1));
        }
        for (std::size_t r = 0; r < z.rows(); ++r) {
            const double shift = rng.uniform(-50, 50);
            for (double& v : z.row(r)) v += shift;
        }
        worst_shift = std::max(worst_shift, max_abs_diff(softmax_rows(z, t), q));
    }
    const Matrix hot = softmax_rows(Matrix::row_vector(std::vector<double>{1, 3}), 1e6);
    const double uniform_dev = std::max(std::abs(hot(0, 0) - 0.5), std::abs(hot(0, 1) - 0.5));
    report("soft_labels", worst_sum <= 1e-9 && uniform_dev < 1e-5 && worst_shift <= 1e-12,
           fmt("max |sum-1| %.2g, T=1e6 deviation %.2g, shift deviation %.2g", worst_sum, uniform_dev, worst_shift));
}

void experiment_matrix() {
    ExperimentSpec spec;
    spec.dataset_ref = "synth";
    spec.train_from_scratch = true;
    spec.training.epochs = 30;
    spec.seed = 17;
    spec.mitigation.method = Mitigation::adversarial_training;
    const ExperimentInputs in{synth_beamforming({17, 300, 8, 4}), std::nullopt};
    const auto a = run_experiment(spec, in);
    const auto b = run_experiment(spec, in);
    const std::string ca = export_csv(a), cb = export_csv(b);
    const auto lines = std::count(ca.begin(), ca.end(), '\n');
    const bool header = ca.rfind("attack_power,defense,mae,mse,rmse\n", 0) == 0;
    report("experiment_matrix", a.rows.size() == 8 && lines == 9 && header && ca == cb,
           fmt("%zu rows, %ld csv lines, header %s, repeat identical %s", a.rows.size(), static_cast<long>(lines),
               header ? "ok" : "bad", ca == cb ? "yes" : "no"));
}

void parsers() {
    // MAT fixtures against the reference writer's arrays.
    const auto refs = nlohmann::json::parse(fixture("mat/reference.json"));
    int mat_ok = 0, mat_bad = 0;
    for (const auto& [file, vars] : refs.items()) {
        bool ok = true;
        try {
            const auto decoded = parse_mat(fixture("mat/" + file));
            ok = decoded.size() == vars.size();
            for (const auto& nm : decoded) {
                if (!ok || !vars.contains(nm.name)) {
                    ok = false;
                    break;
                }
                const auto& ref = vars[nm.name];
                std::vector<double> data;
                for (const auto& s : ref["data"]) data.push_back(std::strtod(s.get<std::string>().c_str(), nullptr));
                ok = nm.value.rows() == ref["rows"].get<std::size_t>() && nm.value.cols() == ref["cols"].get<std::size_t>() &&
                     std::memcmp(nm.value.data().data(), data.data(), data.size() * sizeof(double)) == 0;
            }
        } catch (const std::exception&) {
            ok = false;
        }
        (ok ? mat_ok : mat_bad)++;
    }

    int rejected = 0, accepted = 0;
    auto expect_reject = [&](const std::function<void()>& fn) {
        try {
            fn();
            ++accepted;
        } catch (const ParseError& e) {
            rejected += std::strlen(e.what()) > 0;
        }
    };
    for (const char* f : {"ragged.csv", "non_numeric.csv", "non_finite.csv", "nan.csv", "unterminated_quote.csv",
                          "header_only.csv", "empty.csv"}) {
        expect_reject([&] { parse_csv(fixture(std::string("csv/") + f), 1); });
    }
    for (const char* f : {"bad_magic.mat", "bad_endian.mat", "bad_version.mat", "truncated.mat", "truncated_header.mat",
                          "cell.mat", "struct.mat", "sparse.mat", "char.mat", "int32.mat", "complex.mat"}) {
        expect_reject([&] { parse_mat(fixture(std::string("mat/") + f)); });
    }

    SplitMix64 rng(99);
    const auto model = MlpModel::make_default(8, 4, 3);
    const ModelFile back = load_model(save_model({model, std::nullopt, {}}));
    const Matrix probes = random_matrix(100, 8, rng, -2, 2);
    const Matrix p0 = forward(model, probes), p1 = forward(back.model, probes);
    const bool same = std::memcmp(p0.data().data(), p1.data().data(), p0.size() * sizeof(double)) == 0;

    report("parsers", mat_bad == 0 && accepted == 0 && same,
           fmt("mat fixtures %d/%d bit-exact, malformed rejected %d/%d, model round trip %s", mat_ok,
               mat_ok + mat_bad, rejected, rejected + accepted, same ? "bit-identical" : "DIFFERS"));
}

void service_lifecycle() {
    service::ServerConfig cfg;
    cfg.port = 0;
    service::Server server(cfg);
    const int port = server.start();
    httplib::Client cli("127.0.0.1", port);
    cli.set_read_timeout(120, 0);

    auto up = cli.Post("/api/datasets?format=synth&seed=9&n=300", "", "text/plain");
    const std::string ds = nlohmann::json::parse(up->body)["dataset_id"];

    ExperimentSpec spec;
    spec.dataset_ref = ds;
    spec.train_from_scratch = true;
    spec.training.epochs = 40;
    spec.seed = 9;
    spec.mitigation.method = Mitigation::adversarial_training;
    const nlohmann::json body = to_json(spec);

    nlohmann::json irs = body;
    irs["application"] = "irs";
    const int irs_status = cli.Post("/api/experiments", irs.dump(), "application/json")->status;

    auto sub = cli.Post("/api/experiments", body.dump(), "application/json");
    const std::string id = nlohmann::json::parse(sub->body)["job_id"];
    const int early = cli.Get("/api/experiments/" + id + "/export.csv")->status;

    std::vector<std::string> states;
    nlohmann::json rec;
    const auto deadline = Clock::now() + std::chrono::minutes(5);
    while (Clock::now() < deadline) {
        rec = nlohmann::json::parse(cli.Get("/api/experiments/" + id)->body);
        const std::string s = rec["state"];
        if (states.empty() || states.back() != s) states.push_back(s);
        if (s == "done" || s == "failed") break;
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }

    const auto direct = run_experiment(spec, {*server.store().dataset(ds), std::nullopt});
    bool rows_match = rec["state"] == "done" && rec["result"]["rows"].size() == direct.rows.size();
    for (std::size_t i = 0; rows_match && i < direct.rows.size(); ++i) {
        const auto& m = rec["result"]["rows"][i]["metrics"];
        rows_match = m["mae"].get<double>() == direct.rows[i].metrics.mae &&
                     m["mse"].get<double>() == direct.rows[i].metrics.mse &&
                     m["rmse"].get<double>() == direct.rows[i].metrics.rmse;
    }
    auto csv = cli.Get("/api/experiments/" + id + "/export.csv");
    const bool csv_match = csv && csv->status == 200 && csv->body == export_csv(direct);
    server.stop();

    std::string path;
    for (const auto& s : states) path += (path.empty() ? "" : "->") + s;
    const bool ordered = states.back() == "done" && (states.front() == "queued" || states.front() == "running");
    report("service_lifecycle",
           sub->status == 202 && ordered && rows_match && csv_match && irs_status == 422 && early == 409,
           fmt("submit %d, states %s, rows bit-identical %s, export identical %s, irs %d, early export %d",
               sub->status, path.c_str(), rows_match ? "yes" : "no", csv_match ? "yes" : "no", irs_status, early));
}

}  // namespace

int main() {
    const auto t0 = Clock::now();
    gradient_oracle();
    attack_reductions();
    budget_property();
    soft_label_checks();
    experiment_matrix();
    parsers();
    service_lifecycle();
    directions();
    std::printf("%d criteria failed, %.0fs total\n", failures, seconds_since(t0));
    return failures == 0 ? 0 : 1;
}
