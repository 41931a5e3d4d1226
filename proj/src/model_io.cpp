#include "trustlab/model_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>

#include "trustlab/errors.hpp"

namespace trustlab {

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
constexpr std::string_view kFormatName = "trustlab-mlp";

std::string pack_doubles(const std::vector<double>& values) {
    std::string bytes(values.size() * 8, '\0');
    for (std::size_t i = 0; i < values.size(); ++i) {
        auto bits = std::bit_cast<std::uint64_t>(values[i]);
        for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
    }
    return base64_encode(bytes);
}

std::vector<double> unpack_doubles(const nlohmann::json& blob, std::size_t expected, const std::string& what) {
    if (!blob.is_string()) throw ParseError("corrupted model file: " + what + " is not a base64 string");
    const std::string bytes = base64_decode(blob.get<std::string>());
    if (bytes.size() != expected * 8) {
        throw ParseError("inconsistent model file: " + what + " holds " + std::to_string(bytes.size() / 8) +
                         " values, architecture requires " + std::to_string(expected));
    }
    std::vector<double> out(expected);
    for (std::size_t i = 0; i < expected; ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) {
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i * 8 + b])) << (8 * b);
        }
        out[i] = std::bit_cast<double>(bits);
    }
    return out;
}

std::size_t get_count(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_number_unsigned()) {
        throw ParseError(std::string("corrupted model file: missing or invalid '") + key + "'");
    }
    return j[key].get<std::size_t>();
}

}  // namespace

std::string base64_encode(std::string_view bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const std::uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) |
                                (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                                static_cast<unsigned char>(bytes[i + 2]);
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += kAlphabet[(v >> 6) & 63];
        out += kAlphabet[v & 63];
    }
    const std::size_t rest = bytes.size() - i;
    if (rest > 0) {
        std::uint32_t v = static_cast<unsigned char>(bytes[i]) << 16;
        if (rest == 2) v |= static_cast<unsigned char>(bytes[i + 1]) << 8;
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += rest == 2 ? kAlphabet[(v >> 6) & 63] : '=';
        out += '=';
    }
    return out;
}

std::string base64_decode(std::string_view text) {
    static const auto table = [] {
        std::array<int, 256> t{};
        t.fill(-1);
        for (int k = 0; k < 64; ++k) t[static_cast<unsigned char>(kAlphabet[k])] = k;
        return t;
    }();
    if (text.size() % 4 != 0) throw ParseError("corrupted model file: base64 length is not a multiple of 4");
    std::string out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        const bool last = i + 4 == text.size();
        int pad = 0;
        std::uint32_t v = 0;
        for (std::size_t k = 0; k < 4; ++k) {
            const char ch = text[i + k];
            if (ch == '=' && last && k >= 2) {
                ++pad;
                v <<= 6;
                continue;
            }
            const int d = table[static_cast<unsigned char>(ch)];
            if (d < 0 || pad > 0) throw ParseError("corrupted model file: invalid base64 data");
            v = (v << 6) | static_cast<std::uint32_t>(d);
        }
        out += static_cast<char>((v >> 16) & 0xFF);
        if (pad < 2) out += static_cast<char>((v >> 8) & 0xFF);
        if (pad < 1) out += static_cast<char>(v & 0xFF);
    }
    return out;
}

std::string save_model(const ModelFile& file) {
    const auto& model = file.model;
    nlohmann::json doc;
    doc["format"] = kFormatName;
    doc["format_version"] = kModelFormatVersion;
    doc["input_dim"] = model.input_dim();
    doc["output_dim"] = model.output_dim();
    doc["loss_kind"] = std::string(to_string(model.loss_kind()));
    auto layers = nlohmann::json::array();
    for (const auto& layer : model.layers()) {
        layers.push_back({{"in_dim", layer.in_dim()},
                          {"out_dim", layer.out_dim()},
                          {"activation", std::string(to_string(layer.activation))},
                          {"weights", pack_doubles(layer.weights.data())},
                          {"biases", pack_doubles(layer.biases)}});
    }
    doc["layers"] = std::move(layers);
    if (file.scaling) {
        doc["feature_scaling"] = {{"min", pack_doubles(file.scaling->min)},
                                  {"max", pack_doubles(file.scaling->max)}};
    } else {
        doc["feature_scaling"] = nullptr;
    }
    doc["provenance"] = file.provenance;
    return doc.dump(2) + "\n";
}

ModelFile load_model(std::string_view bytes) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(bytes);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("corrupted model file: ") + e.what());
    }
    if (!doc.is_object() || doc.value("format", "") != kFormatName) {
        throw ParseError("corrupted model file: not a trustlab model document");
    }
    if (!doc.contains("format_version") || !doc["format_version"].is_number_integer()) {
        throw ParseError("corrupted model file: missing format_version");
    }
    const auto version = doc["format_version"].get<long long>();
    if (version != kModelFormatVersion) {
        throw VersionError("unsupported model format_version " + std::to_string(version) +
                           " (this build reads version " + std::to_string(kModelFormatVersion) + ")");
    }

    try {
        const std::size_t input_dim = get_count(doc, "input_dim");
        const std::size_t output_dim = get_count(doc, "output_dim");
        const LossKind loss_kind = parse_loss_kind(doc.at("loss_kind").get<std::string>());
        const auto& jl = doc.at("layers");
        if (!jl.is_array() || jl.empty()) throw ParseError("corrupted model file: no layers");

        std::vector<DenseLayer> layers;
        for (std::size_t i = 0; i < jl.size(); ++i) {
            const auto& l = jl[i];
            const std::size_t in = get_count(l, "in_dim");
            const std::size_t out = get_count(l, "out_dim");
            const std::string label = "layer " + std::to_string(i);
            auto w = unpack_doubles(l.at("weights"), in * out, label + " weights");
            auto b = unpack_doubles(l.at("biases"), out, label + " biases");
            Matrix weights(out, in, std::move(w));
            layers.push_back({std::move(weights), std::move(b),
                              parse_activation(l.at("activation").get<std::string>())});
        }
        ModelFile file{MlpModel(std::move(layers), loss_kind), std::nullopt, doc.value("provenance", nlohmann::json::object())};
        if (file.model.input_dim() != input_dim || file.model.output_dim() != output_dim) {
            throw ParseError("inconsistent model file: declared dimensions do not match layers");
        }
        const auto& scaling = doc.value("feature_scaling", nlohmann::json());
        if (!scaling.is_null()) {
            FeatureScaling s{unpack_doubles(scaling.at("min"), input_dim, "feature_scaling.min"),
                             unpack_doubles(scaling.at("max"), input_dim, "feature_scaling.max")};
            file.scaling = std::move(s);
        }
        return file;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("corrupted model file: ") + e.what());
    } catch (const ParseError&) {
        throw;
    } catch (const Error& e) {
        throw ParseError(std::string("inconsistent model file: ") + e.what());
    }
}

}  // namespace trustlab
