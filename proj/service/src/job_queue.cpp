#include "trustlab/service/job_queue.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "trustlab/errors.hpp"
#include "trustlab/rng.hpp"

namespace trustlab::service {

namespace fs = std::filesystem;

namespace {

double now_seconds() {
    using namespace std::chrono;
    return duration<double>(system_clock::now().time_since_epoch()).count();
}

nlohmann::json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

std::string_view to_string(JobState s) noexcept {
    switch (s) {
        case JobState::queued: return "queued";
        case JobState::running: return "running";
        case JobState::done: return "done";
        case JobState::failed: return "failed";
    }
    return "unknown";
}

nlohmann::json to_json(const JobRecord& r) {
    return {{"id", r.id},
            {"state", to_string(r.state)},
            {"spec", r.spec},
            {"result", r.result ? *r.result : nlohmann::json(nullptr)},
            {"error", r.error ? nlohmann::json(*r.error) : nlohmann::json(nullptr)},
            {"created_at", r.created_at},
            {"started_at", optional_json(r.started_at)},
            {"finished_at", optional_json(r.finished_at)}};
}

JobQueue::JobQueue(Runner runner, std::size_t workers, std::optional<fs::path> root)
    : runner_(std::move(runner)), root_(std::move(root)) {
    if (workers == 0) throw ConfigError("worker count must be at least 1");
    nonce_ = std::random_device{}();
    nonce_ = (nonce_ << 32) ^ std::random_device{}();
    if (root_) {
        fs::create_directories(*root_ / "jobs");
        load_from_disk();
    }
    for (std::size_t i = 0; i < workers; ++i) threads_.emplace_back([this] { work(); });
}

JobQueue::~JobQueue() { shutdown(); }

void JobQueue::shutdown() {
    {
        std::lock_guard lock(mutex_);
        stopping_ = true;
    }
    changed_.notify_all();
    for (auto& t : threads_) {
        if (t.joinable()) t.join();
    }
    threads_.clear();
}

std::string JobQueue::next_id() {
    char buf[32];
    std::snprintf(buf, sizeof buf, "job_%016llx",
                  static_cast<unsigned long long>(derive_seed(nonce_, counter_++)));
    return buf;
}

std::string JobQueue::submit(const ExperimentSpec& spec) {
    spec.validate();
    std::string id;
    {
        std::lock_guard lock(mutex_);
        do id = next_id();
        while (jobs_.contains(id));
        JobRecord r;
        r.id = id;
        r.spec = to_json(spec);
        r.created_at = now_seconds();
        persist(r);
        jobs_.emplace(id, std::move(r));
        pending_.push_back(id);
    }
    changed_.notify_all();
    return id;
}

std::optional<JobRecord> JobQueue::get(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) return std::nullopt;
    return it->second;
}

std::vector<JobRecord> JobQueue::list() const {
    std::lock_guard lock(mutex_);
    std::vector<JobRecord> out;
    for (const auto& [_, r] : jobs_) out.push_back(r);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.created_at < b.created_at; });
    return out;
}

bool JobQueue::wait(const std::string& id, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mutex_);
    return changed_.wait_for(lock, timeout, [&] {
        auto it = jobs_.find(id);
        return it != jobs_.end() &&
               (it->second.state == JobState::done || it->second.state == JobState::failed);
    });
}

void JobQueue::work() {
    for (;;) {
        std::string id;
        ExperimentSpec spec;
        {
            std::unique_lock lock(mutex_);
            changed_.wait(lock, [&] { return stopping_ || !pending_.empty(); });
            if (stopping_) return;
            id = pending_.front();
            pending_.pop_front();
            JobRecord& r = jobs_.at(id);
            r.state = JobState::running;
            r.started_at = now_seconds();
            persist(r);
            spec = spec_from_json(r.spec);
        }
        changed_.notify_all();

        std::optional<ExperimentResult> result;
        std::string error;
        try {
            result = runner_(spec);
        } catch (const std::exception& e) {
            error = e.what();
        }

        {
            std::lock_guard lock(mutex_);
            JobRecord& r = jobs_.at(id);
            r.finished_at = now_seconds();
            if (result) {
                r.state = JobState::done;
                r.result = to_json(*result);
                r.export_csv = export_csv(*result);
            } else {
                r.state = JobState::failed;
                r.error = error.empty() ? "unknown error" : error;
            }
            persist(r);
        }
        changed_.notify_all();
    }
}

void JobQueue::persist(const JobRecord& r) const {
    if (!root_) return;
    nlohmann::json j = to_json(r);
    j["export_csv"] = r.export_csv ? nlohmann::json(*r.export_csv) : nlohmann::json(nullptr);
    const fs::path path = *root_ / "jobs" / (r.id + ".json");
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        out << j.dump(2) << '\n';
    }
    fs::rename(tmp, path);
}

void JobQueue::load_from_disk() {
    std::vector<JobRecord> loaded;
    for (const auto& item : fs::directory_iterator(*root_ / "jobs")) {
        if (item.path().extension() != ".json") continue;
        std::ifstream in(item.path());
        std::ostringstream ss;
        ss << in.rdbuf();
        const auto j = nlohmann::json::parse(ss.str(), nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("id")) continue;
        JobRecord r;
        r.id = j["id"].get<std::string>();
        const std::string state = j.value("state", "failed");
        r.state = state == "queued" ? JobState::queued
                : state == "running" ? JobState::running
                : state == "done" ? JobState::done
                                  : JobState::failed;
        r.spec = j.value("spec", nlohmann::json::object());
        if (j.contains("result") && !j["result"].is_null()) r.result = j["result"];
        if (j.contains("export_csv") && j["export_csv"].is_string()) r.export_csv = j["export_csv"].get<std::string>();
        if (j.contains("error") && j["error"].is_string()) r.error = j["error"].get<std::string>();
        r.created_at = j.value("created_at", 0.0);
        if (j.contains("started_at") && j["started_at"].is_number()) r.started_at = j["started_at"].get<double>();
        if (j.contains("finished_at") && j["finished_at"].is_number()) r.finished_at = j["finished_at"].get<double>();
        if (r.state == JobState::running) {
            r.state = JobState::failed;
            r.error = "service stopped while the job was running";
            r.finished_at = now_seconds();
            persist(r);
        }
        loaded.push_back(std::move(r));
    }
    std::sort(loaded.begin(), loaded.end(), [](const auto& a, const auto& b) { return a.created_at < b.created_at; });
    for (auto& r : loaded) {
        if (r.state == JobState::queued) pending_.push_back(r.id);
        jobs_.emplace(r.id, std::move(r));
    }
}

}  // namespace trustlab::service
