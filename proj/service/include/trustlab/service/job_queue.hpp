#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "trustlab/evaluation.hpp"

namespace trustlab::service {

enum class JobState { queued, running, done, failed };

std::string_view to_string(JobState s) noexcept;

struct JobRecord {
    std::string id;
    JobState state = JobState::queued;
    nlohmann::json spec;
    std::optional<nlohmann::json> result;  // iff done
    std::optional<std::string> export_csv;  // iff done
    std::optional<std::string> error;       // iff failed
    double created_at = 0.0;  // unix seconds
    std::optional<double> started_at;
    std::optional<double> finished_at;
};

/// export_csv is left out; it is served separately.
nlohmann::json to_json(const JobRecord& r);

/// FIFO experiment queue. Jobs run on `workers` threads (one by default,
/// which keeps execution order deterministic). With a root directory each
/// record is written to disk on every transition; on restart queued jobs
/// are resumed and jobs caught mid-run are marked failed.
class JobQueue {
public:
    using Runner = std::function<ExperimentResult(const ExperimentSpec&)>;

    JobQueue(Runner runner, std::size_t workers = 1,
             std::optional<std::filesystem::path> root = std::nullopt);
    ~JobQueue();

    JobQueue(const JobQueue&) = delete;
    JobQueue& operator=(const JobQueue&) = delete;

    std::string submit(const ExperimentSpec& spec);
    std::optional<JobRecord> get(const std::string& id) const;
    std::vector<JobRecord> list() const;

    /// Blocks until the job is done or failed. False on timeout or unknown id.
    bool wait(const std::string& id, std::chrono::milliseconds timeout) const;

    /// Stops the workers after their current job; queued jobs stay queued.
    void shutdown();

private:
    void work();
    void persist(const JobRecord& r) const;
    void load_from_disk();
    std::string next_id();

    Runner runner_;
    std::optional<std::filesystem::path> root_;
    mutable std::mutex mutex_;
    mutable std::condition_variable changed_;
    std::map<std::string, JobRecord> jobs_;
    std::deque<std::string> pending_;
    std::vector<std::thread> threads_;
    std::uint64_t nonce_ = 0;
    std::uint64_t counter_ = 0;
    bool stopping_ = false;
};

}  // namespace trustlab::service
