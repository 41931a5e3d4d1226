#include "trustlab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "trustlab/errors.hpp"
#include "trustlab/rng.hpp"

namespace trustlab {

FeatureScaling FeatureScaling::fit(const Matrix& raw) {
    FeatureScaling s;
    s.min.assign(raw.cols(), 0.0);
    s.max.assign(raw.cols(), 0.0);
    if (raw.rows() == 0) return s;
    for (std::size_t c = 0; c < raw.cols(); ++c) {
        double lo = raw(0, c);
        double hi = raw(0, c);
        for (std::size_t r = 1; r < raw.rows(); ++r) {
            lo = std::min(lo, raw(r, c));
            hi = std::max(hi, raw(r, c));
        }
        s.min[c] = lo;
        s.max[c] = hi;
    }
    return s;
}

Matrix FeatureScaling::apply(const Matrix& raw) const {
    if (raw.cols() != min.size()) {
        throw ShapeError("scaling covers " + std::to_string(min.size()) + " columns, data has " +
                         std::to_string(raw.cols()));
    }
    Matrix out(raw.rows(), raw.cols());
    for (std::size_t c = 0; c < raw.cols(); ++c) {
        const double range = max[c] - min[c];
        for (std::size_t r = 0; r < raw.rows(); ++r) {
            out(r, c) = range > 0.0 ? (raw(r, c) - min[c]) / range : 0.0;
        }
    }
    return out;
}

Dataset Dataset::from_raw(Matrix raw_x, Matrix y, std::string name, std::vector<std::string> columns) {
    if (raw_x.rows() == 0) throw ShapeError("dataset has no rows");
    if (raw_x.rows() != y.rows()) {
        throw ShapeError("feature rows (" + std::to_string(raw_x.rows()) +
                         ") differ from target rows (" + std::to_string(y.rows()) + ")");
    }
    if (!columns.empty() && columns.size() != raw_x.cols() + y.cols()) {
        throw ShapeError("column name count does not match data width");
    }
    Dataset ds;
    ds.scaling = FeatureScaling::fit(raw_x);
    ds.x = ds.scaling.apply(raw_x);
    ds.raw_x = std::move(raw_x);
    ds.y = std::move(y);
    ds.name = std::move(name);
    ds.columns = std::move(columns);
    return ds;
}

Dataset Dataset::rescaled(const FeatureScaling& s) const {
    Dataset ds = *this;
    ds.x = s.apply(raw_x);
    ds.scaling = s;
    return ds;
}

Dataset Dataset::with_features(Matrix new_x) const {
    require_same_shape(new_x, x, "with_features");
    Dataset ds = *this;
    for (std::size_t c = 0; c < x.cols(); ++c) {
        const double range = scaling.max[c] - scaling.min[c];
        for (std::size_t r = 0; r < x.rows(); ++r) {
            const double delta = new_x(r, c) - x(r, c);
            if (delta != 0.0) ds.raw_x(r, c) = raw_x(r, c) + delta * range;
        }
    }
    ds.x = std::move(new_x);
    return ds;
}

Dataset Dataset::select(const std::vector<std::size_t>& indices) const {
    Dataset ds;
    ds.x = x.select_rows(indices);
    ds.y = y.select_rows(indices);
    ds.raw_x = raw_x.select_rows(indices);
    ds.scaling = scaling;
    ds.name = name;
    ds.columns = columns;
    return ds;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    SplitMix64 rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        std::swap(idx[i - 1], idx[rng.below(i)]);
    }
    return idx;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw ConfigError("split fraction must lie strictly between 0 and 1");
    }
    const std::size_t n = ds.rows();
    const auto second = static_cast<std::size_t>(std::llround(static_cast<double>(n) * fraction));
    if (second == 0 || second >= n) {
        throw ConfigError("split of " + std::to_string(n) + " rows at fraction " +
                          std::to_string(fraction) + " leaves one side empty");
    }
    const auto idx = shuffled_indices(n, seed);
    std::vector<std::size_t> first_idx(idx.begin(), idx.end() - static_cast<std::ptrdiff_t>(second));
    std::vector<std::size_t> second_idx(idx.end() - static_cast<std::ptrdiff_t>(second), idx.end());
    return {ds.select(first_idx), ds.select(second_idx)};
}

}  // namespace trustlab
