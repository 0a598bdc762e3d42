#include "solarst/spline_basis.hpp"

#include "solarst/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace solarst {

SplineBasis::SplineBasis(int interior_knots)
    : n_(interior_knots)
    , h_(1.0 / (interior_knots + 1.0))
{
    if (interior_knots < 0)
        throw Error("interior knot count must be non-negative");
}

double SplineBasis::knot(int k) const
{
    if (k < 0 || k > n_ + 1)
        throw Error("knot index out of range");
    return k == n_ + 1 ? 1.0 : k / (n_ + 1.0);
}

std::vector<double> SplineBasis::knots() const
{
    std::vector<double> out(static_cast<std::size_t>(n_ + 2));
    for (int k = 0; k <= n_ + 1; ++k)
        out[static_cast<std::size_t>(k)] = knot(k);
    return out;
}

SplineBasis::Support SplineBasis::locate(double u) const
{
    if (!(u >= 0.0 && u <= 1.0))
        throw Error("spline argument " + std::to_string(u) + " outside [0, 1]");
    const double scaled = u * (n_ + 1.0);
    int k = std::min(static_cast<int>(std::floor(scaled)), n_);
    // (N+1)u - k in [0, 1]: the rising part of b_{k+1} and falling part of b_k
    const double frac = std::clamp(scaled - k, 0.0, 1.0);
    return {k, 1.0 - frac, frac};
}

Eigen::VectorXd SplineBasis::eval(double u) const
{
    const Support s = locate(u);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(size());
    b(s.index) = s.left;
    b(s.index + 1) = s.right;
    return b;
}

int default_knot_count(std::size_t sample_size)
{
    const double T = static_cast<double>(sample_size);
    const double raw = std::round(std::pow(T, 0.4) * std::log(T));
    const int ceiling = std::max(1, static_cast<int>(sample_size / 4));
    return std::clamp(static_cast<int>(raw), 1, ceiling);
}

} // namespace solarst
