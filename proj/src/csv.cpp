#include "trustlab/csv.hpp"

#include <charconv>
#include <cmath>
#include <optional>

#include "trustlab/errors.hpp"

namespace trustlab {

namespace {

struct Record {
    std::size_t line;
    std::vector<std::string> fields;
};

std::vector<Record> split_records(std::string_view text) {
    std::vector<Record> records;
    std::size_t line = 1;
    std::size_t pos = 0;
    const std::size_t n = text.size();
    while (pos < n) {
        Record rec{line, {}};
        std::string field;
        bool any_content = false;
        bool in_quotes = false;
        bool was_quoted = false;
        for (;;) {
            if (pos >= n) {
                if (in_quotes) throw ParseError("unterminated quoted field", rec.line);
                rec.fields.push_back(std::move(field));
                break;
            }
            const char ch = text[pos];
            if (in_quotes) {
                if (ch == '"') {
                    if (pos + 1 < n && text[pos + 1] == '"') {
                        field.push_back('"');
                        pos += 2;
                    } else {
                        in_quotes = false;
                        ++pos;
                    }
                } else {
                    if (ch == '\n') ++line;
                    field.push_back(ch);
                    ++pos;
                }
                continue;
            }
            if (ch == '"' && field.empty() && !was_quoted) {
                in_quotes = true;
                was_quoted = true;
                any_content = true;
                ++pos;
            } else if (ch == ',') {
                rec.fields.push_back(std::move(field));
                field.clear();
                was_quoted = false;
                any_content = true;
                ++pos;
            } else if (ch == '\r' && pos + 1 < n && text[pos + 1] == '\n') {
                pos += 2;
                ++line;
                rec.fields.push_back(std::move(field));
                break;
            } else if (ch == '\n') {
                ++pos;
                ++line;
                rec.fields.push_back(std::move(field));
                break;
            } else {
                field.push_back(ch);
                any_content = true;
                ++pos;
            }
        }
        const bool blank = !any_content && rec.fields.size() == 1 && rec.fields[0].empty();
        if (!blank) records.push_back(std::move(rec));
    }
    return records;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

std::optional<double> to_number(std::string_view cell) {
    cell = trim(cell);
    if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
    if (cell.empty()) return std::nullopt;
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (ec != std::errc() || ptr != cell.data() + cell.size()) return std::nullopt;
    return value;
}

}  // namespace

CsvTable read_csv_table(std::string_view bytes) {
    if (bytes.size() >= 3 && bytes.substr(0, 3) == "\xEF\xBB\xBF") bytes.remove_prefix(3);
    auto records = split_records(bytes);
    CsvTable table;
    std::size_t first = 0;
    if (!records.empty()) {
        bool header = false;
        for (const auto& f : records[0].fields) header = header || !to_number(f).has_value();
        if (header) {
            for (auto& f : records[0].fields) table.header.emplace_back(trim(f));
            first = 1;
        }
    }
    if (records.size() <= first) throw ParseError("no data rows");

    const std::size_t width = records[first].fields.size();
    if (!table.header.empty() && table.header.size() != width) {
        throw ParseError("expected " + std::to_string(table.header.size()) + " fields, found " +
                             std::to_string(width),
                         records[first].line);
    }
    std::vector<double> values;
    values.reserve((records.size() - first) * width);
    for (std::size_t r = first; r < records.size(); ++r) {
        const auto& rec = records[r];
        if (rec.fields.size() != width) {
            throw ParseError("expected " + std::to_string(width) + " fields, found " +
                                 std::to_string(rec.fields.size()),
                             rec.line);
        }
        for (std::size_t c = 0; c < width; ++c) {
            const auto v = to_number(rec.fields[c]);
            if (!v) {
                throw ParseError("column " + std::to_string(c + 1) + ": '" + rec.fields[c] +
                                     "' is not a number",
                                 rec.line);
            }
            if (!std::isfinite(*v)) {
                throw ParseError("column " + std::to_string(c + 1) + ": non-finite value", rec.line);
            }
            values.push_back(*v);
        }
    }
    table.values = Matrix(records.size() - first, width, std::move(values));
    return table;
}

Dataset parse_csv(std::string_view bytes, std::size_t target_columns, std::string name) {
    auto table = read_csv_table(bytes);
    const std::size_t total = table.values.cols();
    if (target_columns < 1 || target_columns >= total) {
        throw ConfigError("target_columns must be between 1 and " + std::to_string(total - 1) +
                          " for a " + std::to_string(total) + "-column file");
    }
    const std::size_t features = total - target_columns;
    const std::size_t n = table.values.rows();
    Matrix raw_x(n, features);
    Matrix y(n, target_columns);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < features; ++c) raw_x(r, c) = table.values(r, c);
        for (std::size_t c = 0; c < target_columns; ++c) y(r, c) = table.values(r, features + c);
    }
    return Dataset::from_raw(std::move(raw_x), std::move(y), std::move(name), std::move(table.header));
}

std::string format_double(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

std::string write_csv(const Dataset& dataset) {
    std::string out;
    const std::size_t features = dataset.raw_x.cols();
    const std::size_t targets = dataset.y.cols();
    for (std::size_t c = 0; c < features + targets; ++c) {
        if (c > 0) out.push_back(',');
        if (!dataset.columns.empty()) {
            out += dataset.columns[c];
        } else {
            out += c < features ? "x" + std::to_string(c) : "y" + std::to_string(c - features);
        }
    }
    out.push_back('\n');
    for (std::size_t r = 0; r < dataset.rows(); ++r) {
        for (std::size_t c = 0; c < features; ++c) {
            if (c > 0) out.push_back(',');
            out += format_double(dataset.raw_x(r, c));
        }
        for (std::size_t c = 0; c < targets; ++c) {
            out.push_back(',');
            out += format_double(dataset.y(r, c));
        }
        out.push_back('\n');
    }
    return out;
}

std::size_t infer_target_columns(std::string_view bytes) {
    const auto records = split_records(bytes.substr(0, bytes.find('\n')));
    if (records.empty()) return 0;
    const auto& fields = records[0].fields;
    for (const auto& f : fields) {
        if (!to_number(f)) {
            std::size_t count = 0;
            for (auto it = fields.rbegin(); it != fields.rend(); ++it) {
                const auto name = trim(*it);
                if (name.empty() || (name.front() != 'y' && name.front() != 'Y')) break;
                ++count;
            }
            return count;
        }
    }
    return 0;
}

}  // namespace trustlab
