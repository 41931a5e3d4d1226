#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "trustlab/matrix.hpp"

namespace trustlab {

/// Per-column min/max recorded when features are min-max normalized.
struct FeatureScaling {
    std::vector<double> min;
    std::vector<double> max;

    /// Fits min/max over each column of `raw`.
    static FeatureScaling fit(const Matrix& raw);

    /// (v - min) / (max - min); constant columns map to 0.
    Matrix apply(const Matrix& raw) const;

    std::size_t size() const noexcept { return min.size(); }
    friend bool operator==(const FeatureScaling&, const FeatureScaling&) = default;
};

/// Paired inputs and targets. `x` holds normalized features, `raw_x`
/// the values as loaded.
struct Dataset {
    Matrix x;
    Matrix y;
    Matrix raw_x;
    FeatureScaling scaling;
    std::string name;
    std::vector<std::string> columns;  // feature names then target names; may be empty

    /// Fits a fresh min-max scaling over raw_x. Throws ShapeError if
    /// the row counts differ or there are no rows.
    static Dataset from_raw(Matrix raw_x, Matrix y, std::string name = {},
                            std::vector<std::string> columns = {});

    /// Renormalizes raw_x with a scaling recorded elsewhere (e.g. the
    /// training data of a saved model).
    Dataset rescaled(const FeatureScaling& scaling) const;

    /// Same dataset with normalized features replaced; raw_x is moved by
    /// the same per-column offset in raw units.
    Dataset with_features(Matrix new_x) const;

    std::size_t rows() const noexcept { return x.rows(); }
    std::size_t input_dim() const noexcept { return x.cols(); }
    std::size_t output_dim() const noexcept { return y.cols(); }

    Dataset select(const std::vector<std::size_t>& indices) const;
};

/// Seeded shuffle then split; the second part receives round(N * fraction)
/// rows. Throws ConfigError when either side would be empty.
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double fraction, std::uint64_t seed);

/// Seeded Fisher-Yates permutation of [0, n).
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

}  // namespace trustlab
