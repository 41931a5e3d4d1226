#include "trustlab/matfile.hpp"

#include <zlib.h>

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>

namespace trustlab {

namespace {

// Data element types.
enum : std::uint32_t {
    miINT8 = 1,
    miUINT8 = 2,
    miINT16 = 3,
    miUINT16 = 4,
    miINT32 = 5,
    miUINT32 = 6,
    miSINGLE = 7,
    miDOUBLE = 9,
    miINT64 = 12,
    miUINT64 = 13,
    miMATRIX = 14,
    miCOMPRESSED = 15,
};

constexpr std::uint32_t mxDOUBLE_CLASS = 6;
constexpr std::uint32_t kComplexFlag = 0x0800;
constexpr std::size_t kHeaderSize = 128;

std::string class_name(std::uint32_t cls) {
    switch (cls) {
        case 1: return "cell";
        case 2: return "struct";
        case 3: return "object";
        case 4: return "char";
        case 5: return "sparse";
        case 6: return "double";
        case 7: return "single";
        case 8: return "int8";
        case 9: return "uint8";
        case 10: return "int16";
        case 11: return "uint16";
        case 12: return "int32";
        case 13: return "uint32";
        case 14: return "int64";
        case 15: return "uint64";
        default: return "unknown class " + std::to_string(cls);
    }
}

[[noreturn]] void fail(MatErrorKind kind, const std::string& what) { throw MatError(kind, what); }

class Reader {
public:
    Reader(std::string_view buf, bool swap) : buf_(buf), swap_(swap) {}

    bool at_end() const noexcept { return pos_ >= buf_.size(); }
    std::size_t remaining() const noexcept { return buf_.size() - pos_; }
    std::size_t position() const noexcept { return pos_; }

    std::string_view take(std::size_t n, const char* what) {
        if (n > remaining()) {
            fail(MatErrorKind::truncated, std::string("truncated stream while reading ") + what);
        }
        auto out = buf_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    void skip(std::size_t n) {
        pos_ = n > remaining() ? buf_.size() : pos_ + n;
    }

    template <typename T>
    T decode(std::string_view bytes) const {
        T v;
        std::memcpy(&v, bytes.data(), sizeof(T));
        if (swap_ && sizeof(T) > 1) {
            auto* p = reinterpret_cast<unsigned char*>(&v);
            for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(p[i], p[sizeof(T) - 1 - i]);
        }
        return v;
    }

    std::uint32_t u32(const char* what) { return decode<std::uint32_t>(take(4, what)); }

    bool swapped() const noexcept { return swap_; }

private:
    std::string_view buf_;
    bool swap_;
    std::size_t pos_ = 0;
};

struct Element {
    std::uint32_t type;
    std::string_view data;
};

// Reads a tag and its payload, honouring the small-element packing and
// 8-byte padding for regular elements. Compressed elements are not padded.
Element read_element(Reader& in, bool pad = true) {
    const std::uint32_t first = in.u32("element tag");
    if ((first >> 16) != 0) {
        const std::uint32_t nbytes = first >> 16;
        if (nbytes > 4) fail(MatErrorKind::malformed, "small data element larger than 4 bytes");
        auto payload = in.take(4, "small data element");
        return {first & 0xFFFF, payload.substr(0, nbytes)};
    }
    const std::uint32_t nbytes = in.u32("element size");
    auto payload = in.take(nbytes, "element payload");
    if (pad && first != miCOMPRESSED && nbytes % 8 != 0) in.skip(8 - nbytes % 8);
    return {first, payload};
}

std::size_t type_width(std::uint32_t type) {
    switch (type) {
        case miINT8:
        case miUINT8: return 1;
        case miINT16:
        case miUINT16: return 2;
        case miINT32:
        case miUINT32:
        case miSINGLE: return 4;
        case miDOUBLE:
        case miINT64:
        case miUINT64: return 8;
        default: return 0;
    }
}

std::vector<double> numeric_payload(const Reader& in, const Element& el) {
    const std::size_t width = type_width(el.type);
    if (width == 0) {
        fail(MatErrorKind::unsupported_element,
             "numeric data stored with unsupported element type " + std::to_string(el.type));
    }
    if (el.data.size() % width != 0) fail(MatErrorKind::malformed, "numeric payload size is not a multiple of its element width");
    std::vector<double> out(el.data.size() / width);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto b = el.data.substr(i * width, width);
        switch (el.type) {
            case miINT8: out[i] = in.decode<std::int8_t>(b); break;
            case miUINT8: out[i] = in.decode<std::uint8_t>(b); break;
            case miINT16: out[i] = in.decode<std::int16_t>(b); break;
            case miUINT16: out[i] = in.decode<std::uint16_t>(b); break;
            case miINT32: out[i] = in.decode<std::int32_t>(b); break;
            case miUINT32: out[i] = in.decode<std::uint32_t>(b); break;
            case miSINGLE: out[i] = in.decode<float>(b); break;
            case miDOUBLE: out[i] = in.decode<double>(b); break;
            case miINT64: out[i] = static_cast<double>(in.decode<std::int64_t>(b)); break;
            case miUINT64: out[i] = static_cast<double>(in.decode<std::uint64_t>(b)); break;
        }
    }
    return out;
}

NamedMatrix parse_matrix(std::string_view payload, bool swap) {
    Reader in(payload, swap);

    const Element flags = read_element(in);
    if (flags.type != miUINT32 || flags.data.size() != 8) {
        fail(MatErrorKind::malformed, "array flags subelement is malformed");
    }
    const auto word = in.decode<std::uint32_t>(flags.data.substr(0, 4));
    const std::uint32_t cls = word & 0xFF;

    const Element dims = read_element(in);
    if (dims.type != miINT32 || dims.data.size() % 4 != 0 || dims.data.empty()) {
        fail(MatErrorKind::malformed, "dimensions subelement is malformed");
    }
    std::vector<std::int32_t> shape;
    for (std::size_t i = 0; i < dims.data.size(); i += 4) {
        shape.push_back(in.decode<std::int32_t>(dims.data.substr(i, 4)));
    }

    const Element name_el = read_element(in);
    if (name_el.type != miINT8 && name_el.type != miUINT8) {
        fail(MatErrorKind::malformed, "array name subelement is malformed");
    }
    std::string name(name_el.data);
    const std::string label = name.empty() ? std::string("<unnamed>") : "'" + name + "'";

    if (cls != mxDOUBLE_CLASS) {
        fail(MatErrorKind::unsupported_class,
             "variable " + label + " has unsupported class " + class_name(cls) +
                 " (only real double matrices are supported)");
    }
    if (word & kComplexFlag) {
        fail(MatErrorKind::unsupported_class, "variable " + label + " is complex (only real double matrices are supported)");
    }
    if (shape.size() != 2) {
        fail(MatErrorKind::unsupported_class,
             "variable " + label + " has " + std::to_string(shape.size()) + " dimensions; only 2-D arrays are supported");
    }
    if (shape[0] < 0 || shape[1] < 0) fail(MatErrorKind::malformed, "negative dimension");
    const auto rows = static_cast<std::size_t>(shape[0]);
    const auto cols = static_cast<std::size_t>(shape[1]);

    std::vector<double> column_major;
    if (rows * cols > 0 || !in.at_end()) {
        column_major = numeric_payload(in, read_element(in));
    }
    if (column_major.size() != rows * cols) {
        fail(MatErrorKind::malformed, "variable " + label + " declares " + std::to_string(rows) + "x" +
                                          std::to_string(cols) + " but stores " +
                                          std::to_string(column_major.size()) + " values");
    }
    std::vector<double> row_major(rows * cols);
    for (std::size_t c = 0; c < cols; ++c) {
        for (std::size_t r = 0; r < rows; ++r) row_major[r * cols + c] = column_major[c * rows + r];
    }
    for (double v : row_major) {
        if (!std::isfinite(v)) fail(MatErrorKind::malformed, "variable " + label + " contains non-finite values");
    }
    return {std::move(name), Matrix(rows, cols, std::move(row_major))};
}

std::string inflate_payload(std::string_view compressed) {
    z_stream zs{};
    if (inflateInit(&zs) != Z_OK) fail(MatErrorKind::malformed, "zlib initialisation failed");
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(compressed.data()));
    zs.avail_in = static_cast<uInt>(compressed.size());
    std::string out;
    char chunk[16384];
    int rc = Z_OK;
    while (rc == Z_OK) {
        zs.next_out = reinterpret_cast<Bytef*>(chunk);
        zs.avail_out = sizeof(chunk);
        rc = inflate(&zs, Z_NO_FLUSH);
        out.append(chunk, sizeof(chunk) - zs.avail_out);
        if (rc == Z_BUF_ERROR && zs.avail_in == 0) break;
    }
    inflateEnd(&zs);
    if (rc != Z_STREAM_END) {
        fail(rc == Z_BUF_ERROR ? MatErrorKind::truncated : MatErrorKind::malformed,
             rc == Z_BUF_ERROR ? "truncated stream inside compressed element"
                               : "corrupt compressed element");
    }
    return out;
}

void parse_elements(std::string_view buf, bool swap, bool top_level, std::vector<NamedMatrix>& out) {
    Reader in(buf, swap);
    while (!in.at_end()) {
        // Some writers pad the end of the stream with zero bytes.
        if (in.remaining() < 8) {
            const auto tail = in.take(in.remaining(), "padding");
            if (tail.find_first_not_of('\0') != std::string_view::npos) {
                fail(MatErrorKind::truncated, "truncated stream: partial element tag at end of file");
            }
            break;
        }
        const Element el = read_element(in, /*pad=*/true);
        if (el.type == miCOMPRESSED && top_level) {
            const std::string inflated = inflate_payload(el.data);
            parse_elements(inflated, swap, false, out);
        } else if (el.type == miMATRIX) {
            out.push_back(parse_matrix(el.data, swap));
        } else {
            fail(MatErrorKind::unsupported_element,
                 "unsupported top-level element type " + std::to_string(el.type));
        }
    }
}

}  // namespace

std::vector<NamedMatrix> parse_mat(std::string_view bytes) {
    static constexpr std::string_view kMagic = "MATLAB 5.0 MAT-file";
    if (bytes.size() < kMagic.size() || bytes.substr(0, kMagic.size()) != kMagic) {
        fail(MatErrorKind::bad_magic, "bad magic: not a Level-5 MAT file");
    }
    if (bytes.size() < kHeaderSize) fail(MatErrorKind::truncated, "truncated stream: header shorter than 128 bytes");

    const char e0 = bytes[126];
    const char e1 = bytes[127];
    bool file_little_endian;
    if (e0 == 'I' && e1 == 'M') {
        file_little_endian = true;
    } else if (e0 == 'M' && e1 == 'I') {
        file_little_endian = false;
    } else {
        fail(MatErrorKind::byte_order, "byte-order indicator is neither 'IM' nor 'MI'");
    }
    const bool swap = file_little_endian != (std::endian::native == std::endian::little);

    Reader header(bytes.substr(124, 2), swap);
    const auto version = header.decode<std::uint16_t>(bytes.substr(124, 2));
    if (version == 0x0001) {
        fail(MatErrorKind::byte_order, "byte-order indicator contradicts the version field");
    }
    if (version != 0x0100) {
        fail(MatErrorKind::bad_version, "unsupported MAT version 0x" + [&] {
            char buf[8];
            std::snprintf(buf, sizeof(buf), "%04x", version);
            return std::string(buf);
        }());
    }

    std::vector<NamedMatrix> out;
    parse_elements(bytes.substr(kHeaderSize), swap, true, out);
    return out;
}

Dataset dataset_from_mat(std::string_view bytes, std::optional<std::size_t> target_columns,
                         std::string name) {
    auto vars = parse_mat(bytes);
    const auto find = [&](char upper) -> const NamedMatrix* {
        for (const auto& v : vars) {
            if (v.name.size() == 1 && std::toupper(static_cast<unsigned char>(v.name[0])) == upper) return &v;
        }
        return nullptr;
    };
    const NamedMatrix* xv = find('X');
    const NamedMatrix* yv = find('Y');
    if (xv && yv) {
        if (xv->value.rows() != yv->value.rows()) {
            throw MatError(MatErrorKind::malformed, "X has " + std::to_string(xv->value.rows()) +
                                                        " rows but Y has " + std::to_string(yv->value.rows()));
        }
        if (xv->value.empty() || yv->value.empty()) throw MatError(MatErrorKind::malformed, "X and Y must be non-empty");
        return Dataset::from_raw(xv->value, yv->value, std::move(name));
    }
    if (vars.size() != 1) {
        throw MatError(MatErrorKind::malformed,
                       "expected variables X and Y or a single matrix, found " + std::to_string(vars.size()) +
                           " variables");
    }
    const Matrix& m = vars.front().value;
    if (!target_columns) throw ConfigError("target_columns is required for a single-matrix MAT file");
    if (*target_columns == 0 || *target_columns >= m.cols()) {
        throw ConfigError("target_columns must lie in [1, " + std::to_string(m.cols()) + ")");
    }
    if (m.rows() == 0) throw MatError(MatErrorKind::malformed, "matrix has no rows");
    const std::size_t nx = m.cols() - *target_columns;
    Matrix x(m.rows(), nx), y(m.rows(), *target_columns);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) (c < nx ? x(r, c) : y(r, c - nx)) = m(r, c);
    }
    return Dataset::from_raw(std::move(x), std::move(y), std::move(name));
}

}  // namespace trustlab
