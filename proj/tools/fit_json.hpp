#pragma once

#include "solarst/fcar.hpp"
#include "solarst/fcsar.hpp"
#include "solarst/spatial.hpp"

#include <json.hpp>

#include <string>

namespace solarst::cli {

using Json = nlohmann::ordered_json;

Json to_json(const FcarSpec& spec);
Json to_json(const FcarFit& fit, const std::string& sensor_id);
Json to_json(const SarTrace& trace);
Json to_json(const NeighborGraph& graph, const SensorLayout& layout);
Json to_json(const FcsarFit& fit, const SensorLayout& layout);
Json to_json(const SeparableFit& fit, const SensorLayout& layout);
Json to_json(const SeparabilityReport& report);

/// Writes `value` with two-space indentation and a trailing newline.
void write_json(const std::string& path, const Json& value);

} // namespace solarst::cli
