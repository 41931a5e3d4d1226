#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "trustlab/attacks.hpp"
#include "trustlab/errors.hpp"
#include "trustlab/synth.hpp"

using namespace trustlab;
using testing::scalar;
using testing::scalar_linear;

namespace {

double linf(const Matrix& a, const Matrix& b) { return max_abs_diff(a, b); }

struct Case {
    MlpModel model;
    Matrix x, y;
};

Case random_case(SplitMix64& rng) {
    const std::size_t in = 1 + rng.below(6), out = 1 + rng.below(3), rows = 1 + rng.below(6);
    const std::vector<std::size_t> widths{in, 1 + rng.below(8), out};
    return {MlpModel::initialize(widths, rng.next()), testing::random_matrix(rows, in, rng, 0, 1),
            testing::random_matrix(rows, out, rng)};
}

}  // namespace

TEST_CASE("ladder and names") {
    CHECK(epsilon_for(AttackPower::none) == 0.0);
    CHECK(epsilon_for(AttackPower::low) == 0.03);
    CHECK(epsilon_for(AttackPower::medium) == 0.06);
    CHECK(epsilon_for(AttackPower::high) == 0.10);
    for (auto k : kAttackKinds) CHECK(parse_attack_kind(to_string(k)) == k);
    for (auto p : kPowerLadder) CHECK(parse_attack_power(to_string(p)) == p);
    CHECK_THROWS_AS(parse_attack_kind("deepfool"), ConfigError);
}

TEST_CASE("config validation") {
    auto c = AttackConfig::of(AttackKind::bim, -0.1);
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.epsilon = 0.1;
    c.iterations = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.iterations = 4;
    c.step_size = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.step_size.reset();
    CHECK(c.effective_step_size() == doctest::Approx(2.5 * 0.1 / 4));
    CHECK(AttackConfig::of(AttackKind::fgsm, 0.1).effective_iterations() == 1);
}

TEST_CASE("fgsm on a scalar linear model") {
    const auto m = scalar_linear(2.0);
    CHECK(fgsm(m, scalar(1), scalar(0), 0.1)(0, 0) == doctest::Approx(1.1).epsilon(1e-15));
    CHECK(fgsm(m, scalar(1), scalar(5), 0.1)(0, 0) == doctest::Approx(0.9).epsilon(1e-15));
    // Exact fit: zero gradient, sign(0) = 0.
    CHECK(fgsm(m, scalar(1), scalar(2), 0.1) == scalar(1));
}

TEST_CASE("zero budget returns the input for every attack") {
    SplitMix64 rng(1);
    for (int i = 0; i < 10; ++i) {
        const auto c = random_case(rng);
        CHECK(fgsm(c.model, c.x, c.y, 0) == c.x);
        CHECK(bim(c.model, c.x, c.y, 0, 0.1, 5) == c.x);
        CHECK(pgd(c.model, c.x, c.y, 0, 0.1, 5, true, 7) == c.x);
        CHECK(mim(c.model, c.x, c.y, 0, 0.1, 5, 1.0) == c.x);
        for (auto k : kAttackKinds) CHECK(craft_inputs(AttackConfig::of(k, 0.0), c.model, c.x, c.y) == c.x);
    }
}

TEST_CASE("overshooting bim lands on the budget boundary") {
    const auto m = scalar_linear(2.0);
    const Matrix x = Matrix(3, 1, std::vector<double>{0.2, 1.0, -0.5});
    const Matrix y = Matrix(3, 1, std::vector<double>{5.0, 0.0, 0.0});
    const Matrix adv = bim(m, x, y, 0.05, 0.05, 10);
    for (std::size_t r = 0; r < 3; ++r) CHECK(std::abs(adv(r, 0) - x(r, 0)) == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(adv(0, 0) < x(0, 0));
    CHECK(adv(1, 0) > x(1, 0));
}

TEST_CASE("reductions hold exactly") {
    SplitMix64 rng(2);
    for (int i = 0; i < 20; ++i) {
        const auto c = random_case(rng);
        const double eps = rng.uniform(0.001, 0.2);
        const double step = rng.uniform(0.001, 0.1);
        const std::size_t iters = 1 + rng.below(8);
        CHECK(bim(c.model, c.x, c.y, eps, eps, 1) == fgsm(c.model, c.x, c.y, eps));
        const Matrix b = bim(c.model, c.x, c.y, eps, step, iters);
        CHECK(pgd(c.model, c.x, c.y, eps, step, iters, false, rng.next()) == b);
        CHECK(mim(c.model, c.x, c.y, eps, step, iters, 0.0) == b);
    }
}

TEST_CASE("mim equals bim when the gradient sign never flips") {
    const auto m = scalar_linear(-3.0, 1.0);
    const Matrix x = Matrix(2, 1, std::vector<double>{0.3, 0.9});
    const Matrix y = Matrix(2, 1, std::vector<double>{10.0, -10.0});
    for (double mu : {0.5, 1.0, 2.0}) CHECK(mim(m, x, y, 0.1, 0.03, 7, mu) == bim(m, x, y, 0.1, 0.03, 7));
}

TEST_CASE("mim ignores rows with a vanishing gradient") {
    const auto m = scalar_linear(2.0);
    const Matrix x = Matrix(2, 1, std::vector<double>{1.0, 1.0});
    const Matrix y = Matrix(2, 1, std::vector<double>{2.0, 0.0});
    const Matrix adv = mim(m, x, y, 0.1, 0.02, 5, 1.0);
    CHECK(adv(0, 0) == 1.0);
    CHECK(adv(1, 0) > 1.0);
}

TEST_CASE("budget holds for every attack") {
    SplitMix64 rng(3);
    for (int i = 0; i < 200; ++i) {
        const auto c = random_case(rng);
        const double eps = rng.uniform(0.0, 0.3);
        const double step = rng.uniform(0.001, 0.5);
        const std::size_t iters = 1 + rng.below(12);
        CHECK(linf(fgsm(c.model, c.x, c.y, eps), c.x) <= eps + 1e-12);
        CHECK(linf(bim(c.model, c.x, c.y, eps, step, iters), c.x) <= eps + 1e-12);
        CHECK(linf(pgd(c.model, c.x, c.y, eps, step, iters, true, rng.next()), c.x) <= eps + 1e-12);
        CHECK(linf(mim(c.model, c.x, c.y, eps, step, iters, rng.uniform(0, 2)), c.x) <= eps + 1e-12);
    }
}

TEST_CASE("pgd is deterministic per seed") {
    SplitMix64 rng(4);
    const auto c = random_case(rng);
    CHECK(pgd(c.model, c.x, c.y, 0.1, 0.02, 5, true, 9) == pgd(c.model, c.x, c.y, 0.1, 0.02, 5, true, 9));
}

TEST_CASE("attacks treat rows independently") {
    SplitMix64 rng(5);
    const auto m = MlpModel::initialize(std::vector<std::size_t>{3, 5, 2}, 4);
    const Matrix x = testing::random_matrix(5, 3, rng, 0, 1);
    const Matrix y = testing::random_matrix(5, 2, rng);
    for (auto kind : {AttackKind::fgsm, AttackKind::bim, AttackKind::mim}) {
        const auto cfg = AttackConfig::of(kind, 0.07);
        const Matrix all = craft_inputs(cfg, m, x, y);
        for (std::size_t r = 0; r < 5; ++r) {
            const Matrix one = craft_inputs(cfg, m, x.slice_rows(r, 1), y.slice_rows(r, 1));
            for (std::size_t c = 0; c < 3; ++c) CHECK(one(0, c) == all(r, c));
        }
    }
}

TEST_CASE("craft keeps targets and maps perturbations to raw units") {
    const Dataset ds = synth_beamforming({3, 5, 4, 2});
    const auto m = MlpModel::make_default(4, 2, 1);
    const Dataset adv = craft(AttackConfig::of(AttackKind::fgsm, 0.05), m, ds);
    CHECK(adv.rows() == 5);
    CHECK(adv.y == ds.y);
    for (std::size_t r = 0; r < 5; ++r) {
        for (std::size_t c = 0; c < 4; ++c) {
            const double span = ds.scaling.max[c] - ds.scaling.min[c];
            CHECK(adv.raw_x(r, c) - ds.raw_x(r, c) == doctest::Approx((adv.x(r, c) - ds.x(r, c)) * span));
        }
    }
    const Dataset same = craft(AttackConfig::of(AttackKind::pgd, 0.0), m, ds);
    CHECK(same.x == ds.x);
    CHECK(same.raw_x == ds.raw_x);
}
