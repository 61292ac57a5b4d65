#include "mixrom/io.hpp"

#include "mixrom/error.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <system_error>

namespace mixrom::io {

std::string format_double(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    std::array<char, 32> buf{};
    const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    if (ec != std::errc{}) {
        throw IoError("format_double: conversion failed");
    }
    return {buf.data(), end};
}

double parse_double(std::string_view s) {
    if (s == "nan") {
        return std::nan("");
    }
    if (s == "inf") {
        return INFINITY;
    }
    if (s == "-inf") {
        return -INFINITY;
    }
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw IoError("cannot parse '" + std::string(s) + "' as a number");
    }
    return v;
}

void write_text_atomic(const std::filesystem::path& path, std::string_view content) {
    std::error_code ec;
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) {
            throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
        }
    }
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open " + tmp.string() + " for writing");
        }
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) {
            throw IoError("write failed for " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
    }
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t CsvTable::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) {
            return i;
        }
    }
    throw IoError("CSV column '" + std::string(name) + "' not found");
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string current;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(std::move(current));
            current.clear();
        } else if (ch != '\r') {
            current.push_back(ch);
        }
    }
    fields.push_back(std::move(current));
    return fields;
}

}  // namespace

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) {
        throw IoError("empty CSV file " + path.string());
    }
    table.header = split_line(line);
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") {
            continue;
        }
        auto fields = split_line(line);
        if (fields.size() != table.header.size()) {
            throw IoError("ragged row in " + path.string());
        }
        table.rows.push_back(std::move(fields));
    }
    return table;
}

std::string csv_line(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i > 0) {
            out.push_back(',');
        }
        out += fields[i];
    }
    out.push_back('\n');
    return out;
}

}  // namespace mixrom::io
