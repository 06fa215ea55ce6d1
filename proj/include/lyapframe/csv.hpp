#pragma once

#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lyapframe {

/// Shortest decimal that round-trips to the same double.
std::string format_double(double v);
double parse_double(std::string_view s);

std::vector<std::string> split_csv_line(const std::string& line);
void write_csv_row(std::ostream& os, std::span<const double> values);

} // namespace lyapframe
