#include "lyapframe/csv.hpp"

#include <charconv>
#include <sstream>

#include "lyapframe/errors.hpp"

namespace lyapframe {

std::string format_double(double v)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw Error("format_double: conversion failed");
    return std::string(buf, ptr);
}

double parse_double(std::string_view s)
{
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw Error("parse_double: cannot parse '" + std::string(s) + "'");
    return v;
}

std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) {
        if (!cell.empty() && cell.back() == '\r') cell.pop_back();
        out.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

void write_csv_row(std::ostream& os, std::span<const double> values)
{
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) os << ',';
        os << format_double(values[i]);
    }
    os << '\n';
}

} // namespace lyapframe
