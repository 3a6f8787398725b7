#pragma once

#include "fleetsim/error.hpp"

#include <charconv>
#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fleetsim::csv {

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split(std::string_view line, char delim = ',') {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(delim, start);
        out.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

/// Header-addressed delimited table. Blank lines and `#` comments are skipped.
class Table {
public:
    static Table read(std::istream& in, std::string_view what) {
        Table t;
        t.what_ = what;
        std::string line;
        std::size_t line_no = 0;
        bool have_header = false;
        while (std::getline(in, line)) {
            ++line_no;
            const auto body = trim(line);
            if (body.empty() || body.front() == '#') continue;
            auto fields = split(body);
            if (!have_header) {
                t.header_ = std::move(fields);
                have_header = true;
                continue;
            }
            if (fields.size() != t.header_.size())
                throw SchemaError(std::string(what) + ": line " + std::to_string(line_no) + " has " +
                                  std::to_string(fields.size()) + " fields, expected " +
                                  std::to_string(t.header_.size()));
            t.rows_.push_back(std::move(fields));
            t.line_numbers_.push_back(line_no);
        }
        if (!have_header) throw SchemaError(std::string(what) + ": missing header");
        return t;
    }

    const std::vector<std::string>& header() const { return header_; }
    std::size_t size() const { return rows_.size(); }

    std::optional<std::size_t> column(std::string_view name) const {
        for (std::size_t i = 0; i < header_.size(); ++i)
            if (header_[i] == name) return i;
        return std::nullopt;
    }

    std::size_t require_column(std::string_view name) const {
        if (auto c = column(name)) return *c;
        throw SchemaError(what_ + ": missing column '" + std::string(name) + "'");
    }

    const std::string& cell(std::size_t row, std::size_t col) const { return rows_[row][col]; }

    std::int64_t as_int(std::size_t row, std::size_t col) const {
        const auto& s = cell(row, col);
        std::int64_t v = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || p != s.data() + s.size()) fail(row, col, "integer");
        return v;
    }

    double as_double(std::size_t row, std::size_t col) const {
        const auto& s = cell(row, col);
        double v = 0.0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || p != s.data() + s.size()) fail(row, col, "number");
        return v;
    }

    /// Empty cells read as nullopt; anything else must be an integer.
    std::optional<std::int64_t> as_optional_int(std::size_t row, std::size_t col) const {
        if (cell(row, col).empty()) return std::nullopt;
        return as_int(row, col);
    }

private:
    [[noreturn]] void fail(std::size_t row, std::size_t col, std::string_view kind) const {
        throw SchemaError(what_ + ": line " + std::to_string(line_numbers_[row]) + " column '" + header_[col] +
                          "' is not a valid " + std::string(kind) + ": '" + rows_[row][col] + "'");
    }

    std::string what_;
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
    std::vector<std::size_t> line_numbers_;
};

}  // namespace fleetsim::csv
