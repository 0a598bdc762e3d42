#pragma once

#include <string>
#include <string_view>

namespace solarst {

enum class Kernel { epanechnikov, gaussian };

/// K(z) normalised to integrate to one.
double kernel_value(Kernel kernel, double z);

/// Half-width (in bandwidth units) beyond which K is treated as zero.
/// Epanechnikov has compact support on [-1, 1]; the Gaussian is truncated
/// where its weight drops below 1e-8 of the peak.
double kernel_support(Kernel kernel);

std::string to_string(Kernel kernel);
Kernel parse_kernel(std::string_view name);

} // namespace solarst
