#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace flowlab {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

/// Comma-separated writer: header row first, newline-terminated rows.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);

    CsvWriter& cell(double v);
    CsvWriter& cell(long long v);
    CsvWriter& cell(std::string_view v);
    CsvWriter& empty();
    void end_row();

    std::size_t rows() const { return rows_; }

private:
    void separator();

    std::ofstream out_;
    bool row_started_ = false;
    std::size_t rows_ = 0;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace flowlab
