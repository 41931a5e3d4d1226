#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "trustlab/dataset.hpp"
#include "trustlab/errors.hpp"
#include "trustlab/matrix.hpp"

namespace trustlab {

/// Failure categories for the Level-5 MAT reader.
enum class MatErrorKind {
    bad_magic,
    byte_order,
    bad_version,
    truncated,
    unsupported_class,
    unsupported_element,
    malformed,
};

class MatError : public ParseError {
public:
    MatError(MatErrorKind kind, const std::string& what) : ParseError(what), kind_(kind) {}
    MatErrorKind kind() const noexcept { return kind_; }

private:
    MatErrorKind kind_;
};

struct NamedMatrix {
    std::string name;
    Matrix value;
};

/// Decodes the real double-precision 2-D arrays of a Level-5 MAT file,
/// in file order. Both byte orders and zlib-compressed elements are
/// accepted; any other array class (cell, struct, sparse, char, complex,
/// integer or single) raises MatError naming the class.
std::vector<NamedMatrix> parse_mat(std::string_view bytes);

/// Builds a dataset from a MAT file. Variables named X and Y (either case)
/// are used as features and targets; otherwise the file must hold a single
/// matrix whose last `target_columns` columns are the targets.
Dataset dataset_from_mat(std::string_view bytes, std::optional<std::size_t> target_columns,
                         std::string name = {});

}  // namespace trustlab
