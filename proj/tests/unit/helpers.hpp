#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "trustlab/matrix.hpp"
#include "trustlab/mlp.hpp"
#include "trustlab/rng.hpp"

namespace testing {

inline std::string read_fixture(const std::string& rel) {
    std::ifstream in(std::string(TRUSTLAB_FIXTURES) + "/" + rel, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline trustlab::Matrix random_matrix(std::size_t rows, std::size_t cols, trustlab::SplitMix64& rng,
                                      double lo = -1.0, double hi = 1.0) {
    trustlab::Matrix m(rows, cols);
    for (double& v : m.data()) v = rng.uniform(lo, hi);
    return m;
}

// f(x) = w x + b with scalar input and output.
inline trustlab::MlpModel scalar_linear(double w, double b = 0.0,
                                        trustlab::LossKind loss = trustlab::LossKind::mse) {
    return trustlab::MlpModel({{trustlab::Matrix(1, 1, w), {b}, trustlab::Activation::linear}}, loss);
}

inline trustlab::Matrix scalar(double v) { return trustlab::Matrix(1, 1, v); }

}  // namespace testing
