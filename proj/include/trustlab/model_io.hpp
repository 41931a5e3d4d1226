#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "trustlab/dataset.hpp"
#include "trustlab/mlp.hpp"

namespace trustlab {

inline constexpr int kModelFormatVersion = 1;

/// A model plus what is needed to use it on raw data.
struct ModelFile {
    MlpModel model;
    std::optional<FeatureScaling> scaling;
    nlohmann::json provenance = nlohmann::json::object();
};

/// JSON document with sorted keys; weights, biases and scaling vectors are
/// base64 blobs of little-endian IEEE-754 doubles. save(load(b)) == b for
/// any b produced by save.
std::string save_model(const ModelFile& file);

/// Throws VersionError for an unknown format_version and ParseError for
/// truncated, corrupted or internally inconsistent payloads.
ModelFile load_model(std::string_view bytes);

std::string base64_encode(std::string_view bytes);
/// ParseError on characters outside the standard alphabet or bad padding.
std::string base64_decode(std::string_view text);

}  // namespace trustlab
