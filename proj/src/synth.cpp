#include "trustlab/synth.hpp"

#include <charconv>
#include <cmath>
#include <string>
#include <vector>

#include "trustlab/errors.hpp"
#include "trustlab/rng.hpp"

namespace trustlab {

namespace {

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

Dataset synth_beamforming(const SynthParams& p) {
    if (p.n_samples == 0 || p.n_pilots == 0 || p.n_beams == 0) {
        throw ConfigError("synthetic dataset counts must all be at least 1");
    }
    SplitMix64 mix_rng(derive_seed(p.seed, 1));
    Matrix mix(p.n_beams, p.n_pilots);
    for (double& a : mix.data()) a = mix_rng.uniform(-3.0, 3.0);
    std::vector<double> offset(p.n_beams);
    for (double& c : offset) c = mix_rng.uniform(-1.0, 1.0);

    SplitMix64 pilot_rng(derive_seed(p.seed, 2));
    Matrix pilots(p.n_samples, p.n_pilots);
    for (double& v : pilots.data()) v = pilot_rng.uniform();

    Matrix rates(p.n_samples, p.n_beams);
    for (std::size_t r = 0; r < p.n_samples; ++r) {
        for (std::size_t b = 0; b < p.n_beams; ++b) {
            double z = offset[b];
            for (std::size_t i = 0; i < p.n_pilots; ++i) z += mix(b, i) * pilots(r, i);
            rates(r, b) = std::log1p(softplus(z));
        }
    }

    std::vector<std::string> columns;
    for (std::size_t i = 0; i < p.n_pilots; ++i) columns.push_back("x" + std::to_string(i));
    for (std::size_t b = 0; b < p.n_beams; ++b) columns.push_back("y" + std::to_string(b));
    return Dataset::from_raw(std::move(pilots), std::move(rates),
                             "synth:seed=" + std::to_string(p.seed) + ",n=" + std::to_string(p.n_samples) +
                                 ",pilots=" + std::to_string(p.n_pilots) + ",beams=" + std::to_string(p.n_beams),
                             std::move(columns));
}

bool is_synth_descriptor(std::string_view text) noexcept { return text.starts_with("synth:"); }

SynthParams parse_synth_descriptor(std::string_view text) {
    if (is_synth_descriptor(text)) text.remove_prefix(6);
    SynthParams p;
    while (!text.empty()) {
        const auto comma = text.find(',');
        const auto item = text.substr(0, comma);
        text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
        if (item.empty()) continue;
        const auto eq = item.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("synthetic dataset option '" + std::string(item) + "' needs key=value");
        }
        const auto key = item.substr(0, eq);
        const auto value = item.substr(eq + 1);
        std::uint64_t v = 0;
        const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
        if (ec != std::errc() || ptr != value.data() + value.size()) {
            throw ConfigError("synthetic dataset option '" + std::string(key) + "' needs a non-negative integer");
        }
        if (key == "seed") {
            p.seed = v;
        } else if (key == "n" || key == "n_samples") {
            p.n_samples = v;
        } else if (key == "pilots" || key == "n_pilots") {
            p.n_pilots = v;
        } else if (key == "beams" || key == "n_beams") {
            p.n_beams = v;
        } else {
            throw ConfigError("unknown synthetic dataset option '" + std::string(key) + "'");
        }
    }
    return p;
}

}  // namespace trustlab
