#include "collapsim/csv.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "collapsim/error.hpp"

namespace collapsim::csv {

std::string format_double(double value) {
    if (std::isnan(value)) {
        return "nan";
    }
    if (std::isinf(value)) {
        return value > 0 ? "inf" : "-inf";
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

Writer::Writer(const std::filesystem::path& path, const std::vector<std::string>& header)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc), columns_(header.size()) {
    if (!out_) {
        throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    }
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i > 0) {
            out_ << ',';
        }
        out_ << header[i];
    }
    out_ << '\n';
}

void Writer::separator() {
    if (column_ > 0) {
        out_ << ',';
    }
    ++column_;
}

Writer& Writer::field(double value) {
    separator();
    out_ << format_double(value);
    return *this;
}

Writer& Writer::field(std::int64_t value) {
    separator();
    out_ << value;
    return *this;
}

Writer& Writer::field(std::uint64_t value) {
    separator();
    out_ << value;
    return *this;
}

Writer& Writer::field(std::string_view value) {
    separator();
    out_ << value;
    return *this;
}

void Writer::end_row() {
    if (column_ != columns_) {
        throw Error(ErrorCode::Io, path_.string() + ": row has " + std::to_string(column_) +
                                       " fields, header has " + std::to_string(columns_));
    }
    out_ << '\n';
    column_ = 0;
    if (!out_) {
        throw Error(ErrorCode::Io, "write failed for " + path_.string());
    }
}

namespace {

bool parse_number(const std::string& token, double& out) {
    const char* begin = token.c_str();
    while (*begin == ' ' || *begin == '\t') {
        ++begin;
    }
    if (*begin == '\0') {
        return false;
    }
    char* end = nullptr;
    out = std::strtod(begin, &end);
    while (end != nullptr && (*end == ' ' || *end == '\t' || *end == '\r')) {
        ++end;
    }
    return end != nullptr && *end == '\0';
}

} // namespace

std::vector<std::vector<double>> read_numeric(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open " + path.string());
    }
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty() || line[0] == '#') {
            continue;
        }
        std::vector<double> row;
        std::stringstream ss(line);
        std::string token;
        bool numeric = true;
        while (std::getline(ss, token, ',')) {
            double v = 0.0;
            if (!parse_number(token, v)) {
                numeric = false;
                break;
            }
            row.push_back(v);
        }
        if (!numeric) {
            if (rows.empty()) {
                continue;
            }
            throw Error(ErrorCode::Validation,
                        path.string() + ":" + std::to_string(line_no) + ": non-numeric field");
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace collapsim::csv
