#include "solarst/kernel.hpp"

#include "solarst/error.hpp"

#include <cmath>
#include <numbers>

namespace solarst {

double kernel_value(Kernel kernel, double z)
{
    switch (kernel) {
    case Kernel::epanechnikov: {
        const double a = std::abs(z);
        return a < 1.0 ? 0.75 * (1.0 - z * z) : 0.0;
    }
    case Kernel::gaussian:
        if (std::abs(z) > kernel_support(kernel))
            return 0.0;
        return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
    }
    return 0.0;
}

double kernel_support(Kernel kernel)
{
    return kernel == Kernel::epanechnikov ? 1.0 : 6.0;
}

std::string to_string(Kernel kernel)
{
    return kernel == Kernel::epanechnikov ? "epanechnikov" : "gaussian";
}

Kernel parse_kernel(std::string_view name)
{
    if (name == "epanechnikov")
        return Kernel::epanechnikov;
    if (name == "gaussian")
        return Kernel::gaussian;
    throw Error("unknown kernel '" + std::string(name) + "'");
}

} // namespace solarst
