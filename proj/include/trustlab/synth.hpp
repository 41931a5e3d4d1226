#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

#include "trustlab/dataset.hpp"

namespace trustlab {

struct SynthParams {
    std::uint64_t seed = 42;
    std::size_t n_samples = 1000;
    std::size_t n_pilots = 8;
    std::size_t n_beams = 4;

    friend bool operator==(const SynthParams&, const SynthParams&) = default;
};

/// Synthetic beamforming-rate regression set.
///
/// Pilot features are uniform in [0, 1). Each beam's achievable rate is
/// log(1 + softplus(a_b . x + c_b)) for a fixed mixing row a_b (entries
/// uniform in [-3, 3)) and offset c_b (uniform in [-1, 1)). Every draw
/// comes from SplitMix64 so the output depends only on the parameters.
/// Features are min-max normalized like any loaded dataset.
Dataset synth_beamforming(const SynthParams& params);

/// Parses "synth:seed=42,n=200,pilots=8,beams=4" (prefix optional, keys
/// optional and in any order; n_samples/n_pilots/n_beams are accepted as
/// long forms). ConfigError on unknown keys or malformed values.
SynthParams parse_synth_descriptor(std::string_view text);

bool is_synth_descriptor(std::string_view text) noexcept;

}  // namespace trustlab
