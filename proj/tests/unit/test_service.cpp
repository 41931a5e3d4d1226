#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <future>

#include "helpers.hpp"
#include "service_helpers.hpp"
#include "trustlab/csv.hpp"
#include "trustlab/errors.hpp"
#include "trustlab/model_io.hpp"
#include "trustlab/service/server.hpp"
#include "trustlab/synth.hpp"

using namespace trustlab;
using namespace trustlab::service;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("trustlab-test-" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

ExperimentSpec quick_spec(const std::string& dataset_id) {
    ExperimentSpec s;
    s.dataset_ref = dataset_id;
    s.train_from_scratch = true;
    s.training.epochs = 5;
    s.training.batch_size = 16;
    s.hidden = {8};
    s.seed = 4;
    return s;
}

std::string model_bytes() {
    return save_model({MlpModel::initialize(std::vector<std::size_t>{4, 6, 2}, 3), std::nullopt, {}});
}

}  // namespace

TEST_CASE("artifact store is content addressed") {
    ArtifactStore store;
    const Dataset ds = synth_beamforming({1, 20, 4, 2});
    const auto a = store.put_dataset(ds, "first");
    const auto b = store.put_dataset(synth_beamforming({1, 20, 4, 2}), "second");
    CHECK(a.created);
    CHECK_FALSE(b.created);
    CHECK(a.meta.id == b.meta.id);
    CHECK(b.meta.name == "first");
    CHECK(a.meta.id.rfind("ds_", 0) == 0);
    CHECK(a.meta.content_hash.size() == 64);
    CHECK(store.put_dataset(synth_beamforming({2, 20, 4, 2})).meta.id != a.meta.id);

    const auto back = store.dataset(a.meta.id);
    REQUIRE(back.has_value());
    CHECK(back->x == ds.x);
    CHECK(back->y == ds.y);
    CHECK_FALSE(store.model(a.meta.id).has_value());
    CHECK_FALSE(store.dataset("ds_missing").has_value());

    const auto m1 = store.put_model(model_bytes());
    const auto m2 = store.put_model(model_bytes());
    CHECK(m1.meta.content_hash == m2.meta.content_hash);
    CHECK(m1.meta.id.rfind("md_", 0) == 0);
    CHECK(m1.meta.summary["widths"] == nlohmann::json({4, 6, 2}));
    CHECK_THROWS_AS(store.put_model("{\"format\":"), ParseError);
    CHECK(store.size() == 3);
}

TEST_CASE("sha256 matches a known digest") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("artifact store persists under its root") {
    TempDir dir;
    std::string ds_id, md_id;
    {
        ArtifactStore store(dir.path);
        ds_id = store.put_dataset(synth_beamforming({3, 15, 4, 2})).meta.id;
        md_id = store.put_model(model_bytes()).meta.id;
    }
    ArtifactStore reopened(dir.path);
    CHECK(reopened.size() == 2);
    REQUIRE(reopened.dataset(ds_id).has_value());
    CHECK(reopened.dataset(ds_id)->y == synth_beamforming({3, 15, 4, 2}).y);
    CHECK(reopened.bytes(md_id) == model_bytes());
}

TEST_CASE("job queue lifecycle and failures") {
    std::promise<void> gate;
    auto opened = gate.get_future().share();
    JobQueue queue([opened](const ExperimentSpec& spec) {
        opened.wait();
        if (spec.seed == 13) throw ConfigError("boom");
        ExperimentResult r;
        r.rows = {{AttackPower::none, Defense::undefended, {1, 2, 3}}};
        return r;
    });
    ExperimentSpec spec = quick_spec("ds_x");
    const std::string first = queue.submit(spec);
    spec.seed = 13;
    const std::string second = queue.submit(spec);
    CHECK(first != second);

    // Single worker: the first job is picked up, the second waits.
    for (int i = 0; i < 200 && queue.get(first)->state != JobState::running; ++i) {
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    CHECK(queue.get(first)->state == JobState::running);
    CHECK(queue.get(second)->state == JobState::queued);
    CHECK_FALSE(queue.get(first)->result.has_value());

    gate.set_value();
    REQUIRE(queue.wait(second, std::chrono::seconds(10)));
    const auto done = *queue.get(first);
    CHECK(done.state == JobState::done);
    CHECK(done.result.has_value());
    CHECK_FALSE(done.error.has_value());
    CHECK(*done.export_csv == "attack_power,defense,mae,mse,rmse\nnone,undefended,1.00000,2.00000,3.00000\n");
    CHECK(*done.started_at <= *done.finished_at);
    const auto failed = *queue.get(second);
    CHECK(failed.state == JobState::failed);
    CHECK(*failed.error == "boom");
    CHECK_FALSE(failed.result.has_value());
    CHECK(*failed.started_at >= *done.finished_at);

    CHECK_FALSE(queue.get("job_missing").has_value());
    spec.application = "irs";
    CHECK_THROWS_AS(queue.submit(spec), ConfigError);
}

TEST_CASE("job queue resumes queued jobs after a restart") {
    TempDir dir;
    std::string id;
    {
        std::promise<void> never;
        auto f = never.get_future().share();
        std::atomic<bool> started{false};
        JobQueue queue(
            [&](const ExperimentSpec&) -> ExperimentResult {
                started = true;
                f.wait_for(std::chrono::milliseconds(200));
                return {};
            },
            1, dir.path);
        const std::string blocker = queue.submit(quick_spec("a"));
        id = queue.submit(quick_spec("b"));
        while (!started) std::this_thread::sleep_for(std::chrono::milliseconds(1));
        queue.shutdown();
        CHECK(queue.get(blocker)->state == JobState::done);
        CHECK(queue.get(id)->state == JobState::queued);
    }
    JobQueue reopened([](const ExperimentSpec&) { return ExperimentResult{}; }, 1, dir.path);
    REQUIRE(reopened.wait(id, std::chrono::seconds(10)));
    CHECK(reopened.get(id)->state == JobState::done);
    CHECK(reopened.list().size() == 2);
}

TEST_CASE("http endpoints") {
    ServerConfig cfg;
    cfg.port = 0;
    cfg.max_upload_bytes = 4096;
    Server server(cfg);
    const int port = server.start();
    httplib::Client cli("127.0.0.1", port);
    cli.set_read_timeout(60, 0);

    SUBCASE("health and meta") {
        auto h = cli.Get("/api/health");
        REQUIRE(h);
        CHECK(h->status == 200);
        CHECK(testing::body_json(h)["status"] == "ok");
        CHECK(h->get_header_value("Access-Control-Allow-Origin") == "*");

        auto m = cli.Get("/api/meta");
        REQUIRE(m);
        const auto j = testing::body_json(m);
        CHECK(j["applications"] == nlohmann::json({"beamforming"}));
        CHECK(j["attacks"] == nlohmann::json({"fgsm", "bim", "pgd", "mim"}));
        CHECK(j["mitigations"] == nlohmann::json({"none", "adversarial_training", "defensive_distillation"}));
        REQUIRE(j["powers"].size() == 4);
        const char* order[] = {"none", "low", "medium", "high"};
        for (int i = 0; i < 4; ++i) CHECK(j["powers"][i]["name"] == order[i]);

        auto opt = cli.Options("/api/experiments");
        REQUIRE(opt);
        CHECK(opt->status == 204);
    }

    SUBCASE("dataset uploads") {
        auto ok = cli.Post("/api/datasets?format=csv", "x0,y0\n1,2\n3,4\n", "text/csv");
        REQUIRE(ok);
        CHECK(ok->status == 201);
        CHECK(testing::body_json(ok)["rows"] == 2);
        CHECK(testing::body_json(ok)["dims"]["inputs"] == 1);

        auto ragged = cli.Post("/api/datasets?format=csv&target_columns=1", "1,2\n3\n", "text/csv");
        REQUIRE(ragged);
        CHECK(ragged->status == 400);
        CHECK(testing::body_json(ragged)["error"].get<std::string>().find("line 2") != std::string::npos);
        CHECK(testing::body_json(ragged)["line"] == 2);

        auto s1 = cli.Post("/api/datasets?format=synth&seed=42&n=100", "", "text/plain");
        auto s2 = cli.Post("/api/datasets?format=synth&seed=42&n=100", "", "text/plain");
        REQUIRE(s1);
        REQUIRE(s2);
        CHECK(s1->status == 201);
        CHECK(testing::body_json(s1)["content_hash"] == testing::body_json(s2)["content_hash"]);
        CHECK(testing::body_json(s1)["dims"]["inputs"] == 8);

        httplib::MultipartFormDataItems items{{"file", testing::read_fixture("mat/xy.mat"), "xy.mat", "application/octet-stream"}};
        auto mat = cli.Post("/api/datasets", items);
        REQUIRE(mat);
        CHECK(mat->status == 201);
        CHECK(testing::body_json(mat)["rows"] == 20);

        auto cell = cli.Post("/api/datasets?format=mat", testing::read_fixture("mat/cell.mat"), "application/octet-stream");
        REQUIRE(cell);
        CHECK(cell->status == 400);
        CHECK(testing::body_json(cell)["error"].get<std::string>().find("cell") != std::string::npos);

        auto big = cli.Post("/api/datasets?format=csv", std::string(5000, '1'), "text/csv");
        REQUIRE(big);
        CHECK(big->status == 413);

        auto fmt = cli.Post("/api/datasets?format=xlsx", "1,2\n", "text/plain");
        REQUIRE(fmt);
        CHECK(fmt->status == 400);

        const std::string id = testing::body_json(s1)["dataset_id"];
        auto meta = cli.Get("/api/datasets/" + id);
        REQUIRE(meta);
        CHECK(meta->status == 200);
        CHECK(cli.Get("/api/datasets/ds_nope")->status == 404);
    }

    SUBCASE("model uploads") {
        const std::string bytes = model_bytes();
        auto a = cli.Post("/api/models", bytes, "application/json");
        REQUIRE(a);
        CHECK(a->status == 201);
        CHECK(testing::body_json(a)["architecture"]["widths"] == nlohmann::json({4, 6, 2}));
        auto b = cli.Post("/api/models", bytes, "application/json");
        CHECK(testing::body_json(b)["content_hash"] == testing::body_json(a)["content_hash"]);
        auto bad = cli.Post("/api/models", bytes.substr(0, bytes.size() / 2), "application/json");
        REQUIRE(bad);
        CHECK(bad->status == 400);
        CHECK(testing::body_json(bad)["error"].get<std::string>().find("corrupt") != std::string::npos);
    }

    SUBCASE("experiment lifecycle") {
        auto up = cli.Post("/api/datasets?format=synth&seed=5&n=120&pilots=4&beams=2", "", "text/plain");
        const std::string ds_id = testing::body_json(up)["dataset_id"];

        auto spec = quick_spec(ds_id);
        spec.mitigation.method = Mitigation::adversarial_training;
        auto j = to_json(spec);

        auto irs = j;
        irs["application"] = "irs";
        CHECK(cli.Post("/api/experiments", irs.dump(), "application/json")->status == 422);
        auto missing = j;
        missing["dataset_ref"] = "ds_nope";
        CHECK(cli.Post("/api/experiments", missing.dump(), "application/json")->status == 422);
        auto no_model = j;
        no_model["train_from_scratch"] = false;
        no_model["model_ref"] = "md_nope";
        CHECK(cli.Post("/api/experiments", no_model.dump(), "application/json")->status == 422);
        CHECK(cli.Post("/api/experiments", "{not json", "application/json")->status == 400);

        auto slow = j;
        slow["training"]["epochs"] = 150;
        auto first = cli.Post("/api/experiments", slow.dump(), "application/json");
        auto second = cli.Post("/api/experiments", j.dump(), "application/json");
        REQUIRE(first);
        REQUIRE(second);
        CHECK(first->status == 202);
        const std::string id = testing::body_json(second)["job_id"];
        auto early = cli.Get("/api/experiments/" + id + "/export.csv");
        REQUIRE(early);
        CHECK(early->status == 409);
        CHECK(cli.Get("/api/experiments/job_nope")->status == 404);
        CHECK(cli.Get("/api/experiments/job_nope/export.csv")->status == 404);

        const auto rec = testing::poll_job(cli, id);
        REQUIRE(rec["state"] == "done");
        CHECK(rec["error"].is_null());

        const auto direct = run_experiment(spec, {*server.store().dataset(ds_id), std::nullopt});
        REQUIRE(rec["result"]["rows"].size() == direct.rows.size());
        for (std::size_t i = 0; i < direct.rows.size(); ++i) {
            const auto& row = rec["result"]["rows"][i];
            CHECK(row["power"] == std::string(to_string(direct.rows[i].power)));
            CHECK(row["metrics"]["mse"].get<double>() == direct.rows[i].metrics.mse);
            CHECK(row["metrics"]["mae"].get<double>() == direct.rows[i].metrics.mae);
            CHECK(row["metrics"]["rmse"].get<double>() == direct.rows[i].metrics.rmse);
        }
        auto csv = cli.Get("/api/experiments/" + id + "/export.csv");
        REQUIRE(csv);
        CHECK(csv->status == 200);
        CHECK(csv->body == export_csv(direct));

        auto list = cli.Get("/api/experiments");
        CHECK(testing::body_json(list).size() == 2);
    }

    server.stop();
}
