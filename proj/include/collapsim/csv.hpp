// Minimal CSV reading and writing with a fixed header line.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace collapsim::csv {

/// Shortest round-trip decimal form ("%.17g"); NaN is written as "nan".
std::string format_double(double value);

class Writer {
public:
    Writer(const std::filesystem::path& path, const std::vector<std::string>& header);

    Writer& field(double value);
    Writer& field(std::int64_t value);
    Writer& field(std::uint64_t value);
    Writer& field(int value) { return field(static_cast<std::int64_t>(value)); }
    Writer& field(std::string_view value);
    void end_row();

    const std::filesystem::path& path() const noexcept { return path_; }

private:
    void separator();

    std::filesystem::path path_;
    std::ofstream out_;
    std::size_t columns_;
    std::size_t column_ = 0;
};

/// Numeric table; rows whose first field does not parse as a number are skipped
/// only if they appear before any data (header lines).
std::vector<std::vector<double>> read_numeric(const std::filesystem::path& path);

} // namespace collapsim::csv
