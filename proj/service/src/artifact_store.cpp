#include "trustlab/service/artifact_store.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <fstream>
#include <sstream>

#include "trustlab/csv.hpp"
#include "trustlab/errors.hpp"

namespace trustlab::service {

namespace fs = std::filesystem;

namespace {

std::int64_t now_seconds() {
    using namespace std::chrono;
    return duration_cast<seconds>(system_clock::now().time_since_epoch()).count();
}

std::string_view kind_name(ArtifactKind k) { return k == ArtifactKind::dataset ? "dataset" : "model"; }

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const fs::path& p, std::string_view bytes) {
    fs::path tmp = p;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error("cannot write " + tmp.string());
    }
    fs::rename(tmp, p);
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 15]);
    }
    return out;
}

nlohmann::json to_json(const ArtifactMeta& m) {
    return {{"id", m.id},
            {"kind", kind_name(m.kind)},
            {"name", m.name},
            {"content_hash", m.content_hash},
            {"size", m.size},
            {"uploaded_at", m.uploaded_at},
            {"summary", m.summary}};
}

ArtifactStore::ArtifactStore(std::optional<fs::path> root) : root_(std::move(root)) {
    if (root_) {
        fs::create_directories(*root_ / "artifacts");
        load_from_disk();
    }
}

void ArtifactStore::load_from_disk() {
    for (const auto& item : fs::directory_iterator(*root_ / "artifacts")) {
        if (item.path().extension() != ".json") continue;
        const auto j = nlohmann::json::parse(read_file(item.path()), nullptr, false);
        if (j.is_discarded() || !j.is_object()) continue;
        Entry e;
        e.meta.id = j.value("id", "");
        e.meta.kind = j.value("kind", "") == "model" ? ArtifactKind::model : ArtifactKind::dataset;
        e.meta.name = j.value("name", "");
        e.meta.content_hash = j.value("content_hash", "");
        e.meta.size = j.value("size", std::size_t{0});
        e.meta.uploaded_at = j.value("uploaded_at", std::int64_t{0});
        e.meta.summary = j.value("summary", nlohmann::json::object());
        fs::path data = item.path();
        data.replace_extension(".bin");
        if (e.meta.id.empty() || !fs::exists(data)) continue;
        e.bytes = read_file(data);
        entries_.emplace(e.meta.id, std::move(e));
    }
}

void ArtifactStore::write_to_disk(const Entry& e) const {
    const fs::path dir = *root_ / "artifacts";
    write_file_atomic(dir / (e.meta.id + ".bin"), e.bytes);
    write_file_atomic(dir / (e.meta.id + ".json"), to_json(e.meta).dump(2) + "\n");
}

PutResult ArtifactStore::put(ArtifactKind kind, std::string bytes, std::string name,
                             nlohmann::json summary) {
    std::string hashed = bytes;
    if (kind == ArtifactKind::dataset) hashed += "\ntargets=" + summary.at("targets").dump();
    const std::string hash = sha256_hex(hashed);
    const std::string id = (kind == ArtifactKind::dataset ? "ds_" : "md_") + hash.substr(0, 24);

    std::unique_lock lock(mutex_);
    if (auto it = entries_.find(id); it != entries_.end()) return {it->second.meta, false};
    Entry e;
    e.meta = {id, kind, std::move(name), hash, bytes.size(), now_seconds(), std::move(summary)};
    e.bytes = std::move(bytes);
    if (root_) write_to_disk(e);
    auto [it, _] = entries_.emplace(id, std::move(e));
    return {it->second.meta, true};
}

PutResult ArtifactStore::put_dataset(const Dataset& dataset, std::string name) {
    if (name.empty()) name = dataset.name;
    nlohmann::json summary = {{"rows", dataset.rows()},
                              {"dims", {{"inputs", dataset.input_dim()}, {"outputs", dataset.output_dim()}}},
                              {"targets", dataset.output_dim()}};
    return put(ArtifactKind::dataset, write_csv(dataset), std::move(name), std::move(summary));
}

PutResult ArtifactStore::put_model(std::string_view bytes, std::string name) {
    const ModelFile file = load_model(bytes);
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : file.model.layers()) {
        layers.push_back({{"in_dim", l.weights.cols()},
                          {"out_dim", l.weights.rows()},
                          {"activation", to_string(l.activation)}});
    }
    nlohmann::json summary = {{"widths", file.model.widths()},
                              {"layers", std::move(layers)},
                              {"loss", to_string(file.model.loss_kind())},
                              {"parameters", file.model.parameter_count()},
                              {"has_scaling", file.scaling.has_value()}};
    return put(ArtifactKind::model, std::string(bytes), std::move(name), std::move(summary));
}

std::optional<Dataset> ArtifactStore::dataset(const std::string& id) const {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(id);
    if (it == entries_.end() || it->second.meta.kind != ArtifactKind::dataset) return std::nullopt;
    return parse_csv(it->second.bytes, it->second.meta.summary.at("targets").get<std::size_t>(),
                     it->second.meta.name);
}

std::optional<ModelFile> ArtifactStore::model(const std::string& id) const {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(id);
    if (it == entries_.end() || it->second.meta.kind != ArtifactKind::model) return std::nullopt;
    return load_model(it->second.bytes);
}

std::optional<ArtifactMeta> ArtifactStore::meta(const std::string& id) const {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(id);
    if (it == entries_.end()) return std::nullopt;
    return it->second.meta;
}

std::optional<std::string> ArtifactStore::bytes(const std::string& id) const {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(id);
    if (it == entries_.end()) return std::nullopt;
    return it->second.bytes;
}

std::size_t ArtifactStore::size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
}

}  // namespace trustlab::service
