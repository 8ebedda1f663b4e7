#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "meshfield/common.hpp"

namespace meshfield {

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    if (!in.good() && !in.eof()) throw IoError("read failed: " + path);
    return os.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open file for write: " + path);
    out << content;
    if (!out.good()) throw IoError("write failed: " + path);
}

inline std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

/// Rows of a CSV file including the header row. Blank lines are skipped.
inline std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::istringstream in(read_text_file(path));
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        rows.push_back(split_csv_row(line));
    }
    return rows;
}

class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) {
        append_row(header);
        columns_ = header.size();
    }

    void row(const std::vector<std::string>& cells) {
        if (cells.size() != columns_) throw IoError("csv: column count mismatch");
        append_row(cells);
    }

    const std::string& str() const { return buf_; }

    void save(const std::string& path) const { write_text_file(path, buf_); }

private:
    void append_row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) buf_ += ',';
            buf_ += cells[i];
        }
        buf_ += '\n';
    }

    std::string buf_;
    std::size_t columns_ = 0;
};

/// Shortest round-trip decimal form, stable across runs.
inline std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    std::string s = os.str();
    // prefer the shorter representation when it round-trips
    std::ostringstream os2;
    os2.precision(12);
    os2 << v;
    if (std::stod(os2.str()) == v) return os2.str();
    return s;
}

}  // namespace meshfield
