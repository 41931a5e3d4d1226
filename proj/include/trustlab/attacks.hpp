#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

#include "trustlab/dataset.hpp"
#include "trustlab/matrix.hpp"
#include "trustlab/mlp.hpp"

namespace trustlab {

enum class AttackPower { none, low, medium, high };
enum class AttackKind { fgsm, bim, pgd, mim };

inline constexpr std::array<AttackPower, 4> kPowerLadder{AttackPower::none, AttackPower::low,
                                                         AttackPower::medium, AttackPower::high};
inline constexpr std::array<AttackKind, 4> kAttackKinds{AttackKind::fgsm, AttackKind::bim,
                                                        AttackKind::pgd, AttackKind::mim};

/// L-infinity budget on the normalized input scale: 0, 0.03, 0.06, 0.10.
double epsilon_for(AttackPower power) noexcept;

std::string_view to_string(AttackPower p) noexcept;
std::string_view to_string(AttackKind k) noexcept;
AttackPower parse_attack_power(std::string_view s);
AttackKind parse_attack_kind(std::string_view s);

struct AttackConfig {
    AttackKind kind = AttackKind::fgsm;
    double epsilon = 0.0;
    /// Unset means 2.5 * epsilon / iterations.
    std::optional<double> step_size;
    std::size_t iterations = 10;
    double momentum_decay = 1.0;
    bool random_start = true;
    std::uint64_t seed = 0;

    /// Throws ConfigError on a negative epsilon, zero iterations, a
    /// non-positive explicit step size or a negative momentum decay.
    void validate() const;
    static AttackConfig of(AttackKind kind, double epsilon) {
        AttackConfig c;
        c.kind = kind;
        c.epsilon = epsilon;
        return c;
    }
    double effective_step_size() const noexcept;
    /// FGSM always runs a single step.
    std::size_t effective_iterations() const noexcept;

    friend bool operator==(const AttackConfig&, const AttackConfig&) = default;
};

// Every attack treats the rows of x independently: each row is pushed up
// its own loss (mean over that row's outputs) and the result satisfies
// |x_adv - x| <= epsilon coordinatewise. sign(0) is 0.

Matrix fgsm(const MlpModel& model, const Matrix& x, const Matrix& y, double epsilon);

Matrix bim(const MlpModel& model, const Matrix& x, const Matrix& y, double epsilon, double step_size,
           std::size_t iterations);

/// With random_start the perturbation starts uniform in [-eps, eps],
/// drawn row-major from a SplitMix64 stream seeded by `seed`.
Matrix pgd(const MlpModel& model, const Matrix& x, const Matrix& y, double epsilon, double step_size,
           std::size_t iterations, bool random_start, std::uint64_t seed);

/// Velocity g = mu * g + grad / |grad|_1 per row; rows whose gradient L1
/// norm is below 1e-12 contribute a zero direction.
Matrix mim(const MlpModel& model, const Matrix& x, const Matrix& y, double epsilon, double step_size,
           std::size_t iterations, double momentum_decay);

/// Applies the configured attack to every row; targets are carried over.
Dataset craft(const AttackConfig& config, const MlpModel& model, const Dataset& dataset);

/// Matrix form of `craft`.
Matrix craft_inputs(const AttackConfig& config, const MlpModel& model, const Matrix& x,
                    const Matrix& y);

}  // namespace trustlab
