#include "trustlab/service/server.hpp"

#include <httplib.h>

#include <charconv>
#include <thread>

#include "trustlab/csv.hpp"
#include "trustlab/errors.hpp"
#include "trustlab/matfile.hpp"
#include "trustlab/synth.hpp"

namespace trustlab::service {

namespace {

using nlohmann::json;

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(2) + "\n", "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message,
                std::optional<std::size_t> line = std::nullopt) {
    json body = {{"error", message}};
    if (line && *line > 0) body["line"] = *line;
    send_json(res, status, body);
}

std::optional<std::uint64_t> query_uint(const httplib::Request& req, const char* key) {
    if (!req.has_param(key)) return std::nullopt;
    const std::string v = req.get_param_value(key);
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
        throw ConfigError(std::string("query parameter '") + key + "' must be a non-negative integer");
    }
    return out;
}

struct Upload {
    std::string bytes;
    std::string filename;
};

// Multipart uploads take the "file" field (or the only file sent); anything
// else is read as the raw body.
Upload upload_of(const httplib::Request& req) {
    if (!req.is_multipart_form_data()) return {req.body, {}};
    if (req.has_file("file")) {
        const auto f = req.get_file_value("file");
        return {f.content, f.filename};
    }
    if (req.files.size() == 1) return {req.files.begin()->second.content, req.files.begin()->second.filename};
    throw ConfigError("multipart upload needs a 'file' field");
}

bool ends_with(std::string_view s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

json meta_catalog() {
    json attacks = json::array(), mitigations = json::array(), powers = json::array();
    for (auto k : kAttackKinds) attacks.push_back(to_string(k));
    for (auto m : {Mitigation::none, Mitigation::adversarial_training, Mitigation::defensive_distillation}) {
        mitigations.push_back(to_string(m));
    }
    for (auto p : kPowerLadder) powers.push_back({{"name", to_string(p)}, {"epsilon", epsilon_for(p)}});
    return {{"applications", {kBeamforming}},
            {"disabled_applications", {"channel_estimation", "spectrum_sensing", "irs"}},
            {"attacks", attacks},
            {"mitigations", mitigations},
            {"powers", powers},
            {"defaults",
             {{"attack", "fgsm"}, {"mitigation", "none"}, {"alpha", 1.0}, {"temperature", 10.0}, {"seed", 0}}},
            {"version", kServiceVersion}};
}

}  // namespace

ExperimentResult run_stored_experiment(const ArtifactStore& store, const ExperimentSpec& spec) {
    auto dataset = store.dataset(spec.dataset_ref);
    if (!dataset) throw ConfigError("unknown dataset_ref '" + spec.dataset_ref + "'");
    std::optional<ModelFile> model;
    if (spec.model_ref) {
        model = store.model(*spec.model_ref);
        if (!model) throw ConfigError("unknown model_ref '" + *spec.model_ref + "'");
    }
    return run_experiment(spec, make_inputs(std::move(*dataset), model));
}

struct Server::Impl {
    ServerConfig config;
    ArtifactStore store;
    JobQueue jobs;
    httplib::Server http;
    std::thread thread;
    int port = -1;

    explicit Impl(ServerConfig c)
        : config(std::move(c)),
          store(config.storage_root),
          jobs([this](const ExperimentSpec& spec) { return run_stored_experiment(store, spec); },
               config.workers,
               config.storage_root ? std::optional(*config.storage_root) : std::nullopt) {
        routes();
    }

    void routes();
    void post_dataset(const httplib::Request& req, httplib::Response& res);
    void post_model(const httplib::Request& req, httplib::Response& res);
    void post_experiment(const httplib::Request& req, httplib::Response& res);
};

void Server::Impl::post_dataset(const httplib::Request& req, httplib::Response& res) {
    try {
        const std::string format = req.has_param("format") ? req.get_param_value("format") : "";
        std::optional<std::size_t> targets;
        if (auto t = query_uint(req, "target_columns")) targets = static_cast<std::size_t>(*t);
        std::string name = req.has_param("name") ? req.get_param_value("name") : "";

        Dataset ds;
        if (format == "synth") {
            SynthParams p;
            if (auto v = query_uint(req, "seed")) p.seed = *v;
            if (auto v = query_uint(req, "n")) p.n_samples = *v;
            if (auto v = query_uint(req, "pilots")) p.n_pilots = *v;
            if (auto v = query_uint(req, "beams")) p.n_beams = *v;
            ds = synth_beamforming(p);
        } else {
            Upload up = upload_of(req);
            if (name.empty()) name = up.filename;
            const bool mat = format == "mat" || (format.empty() && ends_with(up.filename, ".mat"));
            if (mat) {
                ds = dataset_from_mat(up.bytes, targets, name);
            } else if (format.empty() || format == "csv") {
                const std::size_t k = targets ? *targets : infer_target_columns(up.bytes);
                if (k == 0) {
                    throw ConfigError("target_columns is required unless the header names targets y0, y1, ...");
                }
                ds = parse_csv(up.bytes, k, name);
            } else {
                throw ConfigError("unknown format '" + format + "' (expected csv, mat or synth)");
            }
        }
        const PutResult put = store.put_dataset(ds, name);
        send_json(res, put.created ? 201 : 200,
                  {{"dataset_id", put.meta.id},
                   {"rows", ds.rows()},
                   {"dims", {{"inputs", ds.input_dim()}, {"outputs", ds.output_dim()}}},
                   {"name", put.meta.name},
                   {"content_hash", put.meta.content_hash}});
    } catch (const ParseError& e) {
        send_error(res, 400, e.what(), e.line());
    } catch (const Error& e) {
        send_error(res, 400, e.what());
    }
}

void Server::Impl::post_model(const httplib::Request& req, httplib::Response& res) {
    try {
        Upload up = upload_of(req);
        std::string name = req.has_param("name") ? req.get_param_value("name") : up.filename;
        const PutResult put = store.put_model(up.bytes, std::move(name));
        send_json(res, put.created ? 201 : 200,
                  {{"model_id", put.meta.id},
                   {"content_hash", put.meta.content_hash},
                   {"name", put.meta.name},
                   {"architecture", put.meta.summary}});
    } catch (const ParseError& e) {
        send_error(res, 400, e.what(), e.line());
    } catch (const Error& e) {
        send_error(res, 400, e.what());
    }
}

void Server::Impl::post_experiment(const httplib::Request& req, httplib::Response& res) {
    const json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded()) return send_error(res, 400, "request body is not valid JSON");
    try {
        const ExperimentSpec spec = spec_from_json(body);
        spec.validate();
        const auto ds = store.meta(spec.dataset_ref);
        if (!ds || ds->kind != ArtifactKind::dataset) {
            return send_error(res, 422, "unknown dataset_ref '" + spec.dataset_ref + "'");
        }
        if (spec.model_ref) {
            const auto md = store.meta(*spec.model_ref);
            if (!md || md->kind != ArtifactKind::model) {
                return send_error(res, 422, "unknown model_ref '" + *spec.model_ref + "'");
            }
        }
        const std::string id = jobs.submit(spec);
        send_json(res, 202, {{"job_id", id}, {"state", "queued"}});
    } catch (const Error& e) {
        send_error(res, 422, e.what());
    }
}

void Server::Impl::routes() {
    http.set_payload_max_length(config.max_upload_bytes);
    if (!config.cors_origin.empty()) {
        http.set_default_headers({{"Access-Control-Allow-Origin", config.cors_origin},
                                  {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                  {"Access-Control-Allow-Headers", "Content-Type"}});
        http.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    }
    http.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            send_error(res, 500, e.what());
        } catch (...) {
            send_error(res, 500, "internal error");
        }
    });

    http.Get("/api/health", [](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, {{"status", "ok"}, {"version", kServiceVersion}});
    });
    http.Get("/api/meta", [](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, meta_catalog());
    });

    http.Post("/api/datasets", [this](const auto& req, auto& res) { post_dataset(req, res); });
    http.Post("/api/models", [this](const auto& req, auto& res) { post_model(req, res); });
    http.Post("/api/experiments", [this](const auto& req, auto& res) { post_experiment(req, res); });

    const auto artifact = [this](ArtifactKind kind) {
        return [this, kind](const httplib::Request& req, httplib::Response& res) {
            const auto m = store.meta(req.path_params.at("id"));
            if (!m || m->kind != kind) return send_error(res, 404, "no such artifact");
            send_json(res, 200, to_json(*m));
        };
    };
    http.Get("/api/datasets/:id", artifact(ArtifactKind::dataset));
    http.Get("/api/models/:id", artifact(ArtifactKind::model));

    http.Get("/api/experiments", [this](const httplib::Request&, httplib::Response& res) {
        json out = json::array();
        for (const auto& r : jobs.list()) {
            out.push_back({{"id", r.id}, {"state", to_string(r.state)}, {"created_at", r.created_at}});
        }
        send_json(res, 200, out);
    });
    http.Get("/api/experiments/:id", [this](const httplib::Request& req, httplib::Response& res) {
        const auto r = jobs.get(req.path_params.at("id"));
        if (!r) return send_error(res, 404, "no such job");
        send_json(res, 200, to_json(*r));
    });
    http.Get("/api/experiments/:id/export.csv", [this](const httplib::Request& req, httplib::Response& res) {
        const auto r = jobs.get(req.path_params.at("id"));
        if (!r) return send_error(res, 404, "no such job");
        if (r->state != JobState::done) {
            return send_error(res, 409, "job is " + std::string(to_string(r->state)) + "; export needs state done");
        }
        res.status = 200;
        res.set_header("Content-Disposition", "attachment; filename=\"" + r->id + ".csv\"");
        res.set_content(*r->export_csv, "text/csv");
    });
}

Server::Server(ServerConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

Server::~Server() { stop(); }

int Server::bind() {
    if (impl_->port >= 0) return impl_->port;
    if (impl_->config.port == 0) {
        impl_->port = impl_->http.bind_to_any_port(impl_->config.host);
    } else if (impl_->http.bind_to_port(impl_->config.host, impl_->config.port)) {
        impl_->port = impl_->config.port;
    }
    if (impl_->port < 0) {
        throw Error("cannot listen on " + impl_->config.host + ":" + std::to_string(impl_->config.port));
    }
    return impl_->port;
}

void Server::listen() {
    bind();
    impl_->http.listen_after_bind();
}

int Server::start() {
    const int p = bind();
    impl_->thread = std::thread([this] { impl_->http.listen_after_bind(); });
    impl_->http.wait_until_ready();
    return p;
}

void Server::stop() {
    impl_->http.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
    impl_->jobs.shutdown();
}

int Server::port() const noexcept { return impl_->port; }
ArtifactStore& Server::store() noexcept { return impl_->store; }
JobQueue& Server::jobs() noexcept { return impl_->jobs; }

}  // namespace trustlab::service
