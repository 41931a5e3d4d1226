#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "trustlab/service/artifact_store.hpp"
#include "trustlab/service/job_queue.hpp"

namespace trustlab::service {

inline constexpr const char* kServiceVersion = "0.1.0";

struct ServerConfig {
    std::string host = "127.0.0.1";
    int port = 8080;  // 0 picks a free port
    /// Unset keeps artifacts and jobs in memory.
    std::optional<std::filesystem::path> storage_root;
    std::size_t max_upload_bytes = 64u << 20;
    std::size_t workers = 1;
    /// Value of Access-Control-Allow-Origin; empty disables CORS headers.
    std::string cors_origin = "*";
};

/// Resolves the spec's artifact references against the store and runs it.
ExperimentResult run_stored_experiment(const ArtifactStore& store, const ExperimentSpec& spec);

class Server {
public:
    explicit Server(ServerConfig config);
    ~Server();

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds the listening socket and returns the actual port.
    int bind();
    /// Serves until stop(); binds first if needed.
    void listen();
    /// bind() plus listen() on a background thread.
    int start();
    void stop();

    int port() const noexcept;
    ArtifactStore& store() noexcept;
    JobQueue& jobs() noexcept;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace trustlab::service
