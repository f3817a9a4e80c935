#include "flowlab/io.hpp"

#include <charconv>
#include <sstream>
#include <stdexcept>

#include "flowlab/errors.hpp"

namespace flowlab {

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : out_(path, std::ios::trunc) {
    if (!out_) {
        throw std::runtime_error("cannot write " + path.string());
    }
    for (const auto& h : header) {
        cell(h);
    }
    end_row();
    rows_ = 0;
}

void CsvWriter::separator() {
    if (row_started_) {
        out_ << ',';
    }
    row_started_ = true;
}

CsvWriter& CsvWriter::cell(double v) {
    separator();
    out_ << format_double(v);
    return *this;
}

CsvWriter& CsvWriter::cell(long long v) {
    separator();
    out_ << v;
    return *this;
}

CsvWriter& CsvWriter::cell(std::string_view v) {
    separator();
    out_ << v;
    return *this;
}

CsvWriter& CsvWriter::empty() {
    separator();
    return *this;
}

void CsvWriter::end_row() {
    out_ << '\n';
    row_started_ = false;
    ++rows_;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw InputError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw std::runtime_error("cannot write " + path.string());
    }
    f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
}

}  // namespace flowlab
