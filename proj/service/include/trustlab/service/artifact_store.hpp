#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "trustlab/dataset.hpp"
#include "trustlab/model_io.hpp"

namespace trustlab::service {

enum class ArtifactKind { dataset, model };

struct ArtifactMeta {
    std::string id;
    ArtifactKind kind = ArtifactKind::dataset;
    std::string name;
    std::string content_hash;  // lowercase hex SHA-256 of the stored bytes
    std::size_t size = 0;
    std::int64_t uploaded_at = 0;  // unix seconds
    nlohmann::json summary = nlohmann::json::object();
};

nlohmann::json to_json(const ArtifactMeta& m);

std::string sha256_hex(std::string_view bytes);

struct PutResult {
    ArtifactMeta meta;
    bool created = false;  // false when identical bytes were already stored
};

/// Content-addressed store for datasets and model files. Datasets are kept
/// in canonical CSV form so the same numbers always hash the same way,
/// whatever format they were uploaded in. Stored bytes are never rewritten.
/// With a root directory everything is mirrored to disk and reloaded on
/// construction; without one the store lives in memory.
class ArtifactStore {
public:
    explicit ArtifactStore(std::optional<std::filesystem::path> root = std::nullopt);

    PutResult put_dataset(const Dataset& dataset, std::string name = {});
    /// Validates the bytes with load_model first; ParseError/VersionError
    /// propagate unchanged.
    PutResult put_model(std::string_view bytes, std::string name = {});

    std::optional<Dataset> dataset(const std::string& id) const;
    std::optional<ModelFile> model(const std::string& id) const;
    std::optional<ArtifactMeta> meta(const std::string& id) const;
    std::optional<std::string> bytes(const std::string& id) const;

    std::size_t size() const;

private:
    struct Entry {
        ArtifactMeta meta;
        std::string bytes;
    };

    PutResult put(ArtifactKind kind, std::string bytes, std::string name, nlohmann::json summary);
    void load_from_disk();
    void write_to_disk(const Entry& e) const;

    std::optional<std::filesystem::path> root_;
    mutable std::shared_mutex mutex_;
    std::map<std::string, Entry> entries_;
};

}  // namespace trustlab::service
