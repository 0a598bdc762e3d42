#pragma once

#include "solarst/core.hpp"

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace solarst {

/// Shortest decimal text that round-trips to the same double.
std::string format_number(double value);

/// Integer or decimal epoch seconds, or ISO-8601 `YYYY-MM-DDTHH:MM:SS[.fff][Z|+HH:MM|-HH:MM]`.
double parse_timestamp(std::string_view text);

std::vector<std::string> split_csv_line(std::string_view line);

/// Header `timestamp,sensor_id,value` with an optional fourth `missing` column
/// (0/1). A value of `NA` or an empty cell also marks a missing observation.
std::vector<Measurement> read_measurements_csv(std::istream& in);
std::vector<Measurement> read_measurements_csv(const std::string& path);

/// Writes the long form of `field`, missing cells as `NA`.
void write_measurements_csv(std::ostream& out, const SpatioTemporalField& field);
void write_measurements_csv(const std::string& path, const SpatioTemporalField& field);

/// Header `sensor_id,x_m,y_m`.
SensorLayout read_layout_csv(std::istream& in);
SensorLayout read_layout_csv(const std::string& path);
void write_layout_csv(std::ostream& out, const SensorLayout& layout);
void write_layout_csv(const std::string& path, const SensorLayout& layout);

} // namespace solarst
