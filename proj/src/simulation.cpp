#include "solarst/simulation.hpp"

#include "solarst/error.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

namespace solarst {

double NormalRng::uniform()
{
    double u = 0.0;
    while (u == 0.0)
        u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    return u;
}

double NormalRng::normal()
{
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double theta = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

void Expar2Config::validate() const
{
    if (burn_in < 100)
        throw Error("EXPAR burn-in must be at least 100 steps");
    if (!(noise_sd >= 0.0))
        throw Error("EXPAR noise sd must be non-negative");
    if (T < 3)
        throw Error("EXPAR series length must be at least 3");
}

std::vector<double> simulate_expar2(const Expar2Config& cfg)
{
    cfg.validate();
    NormalRng rng(cfg.seed);
    double x2 = cfg.x0, x1 = cfg.x0;
    std::vector<double> out;
    out.reserve(cfg.T);
    for (std::size_t t = 0; t < cfg.burn_in + cfg.T; ++t) {
        const double e = std::exp(-cfg.gamma * x1 * x1);
        const double x = (cfg.a1 + cfg.b1 * e) * x1 + (cfg.a2 + cfg.b2 * e) * x2 + cfg.noise_sd * rng.normal();
        if (!(std::abs(x) <= 1e6))
            throw Error("EXPAR recursion diverged at step " + std::to_string(t) + " (seed " +
                        std::to_string(cfg.seed) + ")");
        x2 = x1;
        x1 = x;
        if (t >= cfg.burn_in)
            out.push_back(x);
    }
    const double mean = std::accumulate(out.begin(), out.end(), 0.0) / static_cast<double>(out.size());
    for (double& v : out)
        v -= mean;
    return out;
}

double expar2_intercept(const Expar2Config& cfg, double u)
{
    return (cfg.a1 + cfg.b1 * std::exp(-cfg.gamma * u * u)) * u;
}

double expar2_lag2(const Expar2Config& cfg, double u)
{
    return cfg.a2 + cfg.b2 * std::exp(-cfg.gamma * u * u);
}

std::string to_string(Regime regime)
{
    switch (regime) {
    case Regime::clear:
        return "clear";
    case Regime::partly_cloudy:
        return "partly_cloudy";
    case Regime::overcast:
        return "overcast";
    }
    return "?";
}

Regime parse_regime(std::string_view name)
{
    if (name == "clear")
        return Regime::clear;
    if (name == "partly_cloudy" || name == "partly-cloudy")
        return Regime::partly_cloudy;
    if (name == "overcast")
        return Regime::overcast;
    throw Error("unknown regime '" + std::string(name) + "'");
}

std::string to_string(SimMode mode)
{
    return mode == SimMode::separable ? "separable" : "advective";
}

SimMode parse_sim_mode(std::string_view name)
{
    if (name == "separable")
        return SimMode::separable;
    if (name == "advective")
        return SimMode::advective;
    throw Error("unknown simulation mode '" + std::string(name) + "'");
}

void FieldSimConfig::validate() const
{
    if (T < 2)
        throw Error("simulated field needs at least two time points");
    if (!(dt > 0.0))
        throw Error("time step must be positive");
    if (!(correlation_length > 0.0))
        throw Error("correlation length must be positive");
    if (!(std::abs(ar_coefficient) < 1.0))
        throw Error("AR coefficient must lie in (-1, 1)");
    if (!(field_sd >= 0.0) || !(noise_sd >= 0.0) || !(fast_noise_sd >= 0.0))
        throw Error("standard deviations must be non-negative");
    if (!std::isfinite(velocity_x) || !std::isfinite(velocity_y))
        throw Error("advection velocity must be finite");
    if (features < 1)
        throw Error("random field needs at least one Fourier feature");
}

FieldSimConfig FieldSimConfig::preset(Regime regime, SimMode mode, double spacing, double dt)
{
    if (!(spacing > 0.0) || !(dt > 0.0))
        throw Error("preset needs positive spacing and time step");
    FieldSimConfig cfg;
    cfg.layout = grid_layout(4, 4, spacing);
    cfg.regime = regime;
    cfg.mode = mode;
    cfg.dt = dt;
    cfg.T = static_cast<std::size_t>(std::floor(144.0 * 600.0 / dt + 1e-9));
    double ar_600 = 0.8;
    double speed = spacing / 600.0;
    switch (regime) {
    case Regime::clear:
        cfg.field_sd = 0.05;
        cfg.noise_sd = 0.01;
        cfg.fast_noise_sd = 0.005;
        cfg.correlation_length = 1.5 * spacing;
        ar_600 = 0.9;
        break;
    case Regime::partly_cloudy:
        cfg.field_sd = 1.0;
        cfg.noise_sd = 0.1;
        cfg.fast_noise_sd = 0.05;
        cfg.correlation_length = 1.2 * spacing;
        break;
    case Regime::overcast:
        cfg.field_sd = 0.6;
        cfg.noise_sd = 0.2;
        cfg.fast_noise_sd = 0.3;
        cfg.correlation_length = 1.2 * spacing;
        speed = 0.5 * spacing / 600.0;
        break;
    }
    cfg.velocity_x = speed / std::numbers::sqrt2;
    cfg.velocity_y = speed / std::numbers::sqrt2;
    cfg.ar_coefficient = std::pow(ar_600, dt / 600.0);
    // white noise is specified at the 600 s scale
    cfg.fast_noise_sd *= std::sqrt(600.0 / dt);
    return cfg;
}

SpatioTemporalField simulate_field(const FieldSimConfig& cfg)
{
    cfg.validate();
    const std::size_t S = cfg.layout.size();
    const auto rows = static_cast<Eigen::Index>(S);
    const auto cols = static_cast<Eigen::Index>(cfg.T);
    NormalRng rng(cfg.seed);
    Eigen::MatrixXd z = Eigen::MatrixXd::Zero(rows, cols);

    if (cfg.mode == SimMode::advective) {
        const int M = cfg.features;
        std::vector<double> wx(static_cast<std::size_t>(M)), wy(wx), phase(wx);
        for (int m = 0; m < M; ++m) {
            wx[static_cast<std::size_t>(m)] = rng.normal() / cfg.correlation_length;
            wy[static_cast<std::size_t>(m)] = rng.normal() / cfg.correlation_length;
            phase[static_cast<std::size_t>(m)] = 2.0 * std::numbers::pi * rng.uniform();
        }
        const double amp = cfg.field_sd * std::sqrt(2.0 / M);
        for (Eigen::Index t = 0; t < cols; ++t) {
            const double shift_x = cfg.velocity_x * cfg.dt * static_cast<double>(t);
            const double shift_y = cfg.velocity_y * cfg.dt * static_cast<double>(t);
            for (Eigen::Index s = 0; s < rows; ++s) {
                const double x = cfg.layout[static_cast<std::size_t>(s)].x - shift_x;
                const double y = cfg.layout[static_cast<std::size_t>(s)].y - shift_y;
                double g = 0.0;
                for (int m = 0; m < M; ++m) {
                    const auto mi = static_cast<std::size_t>(m);
                    g += std::cos(wx[mi] * x + wy[mi] * y + phase[mi]);
                }
                z(s, t) = amp * g;
            }
        }
        const double innov = cfg.noise_sd * std::sqrt(1.0 - cfg.ar_coefficient * cfg.ar_coefficient);
        Eigen::VectorXd e(rows);
        for (Eigen::Index s = 0; s < rows; ++s)
            e(s) = cfg.noise_sd * rng.normal();
        for (Eigen::Index t = 0; t < cols; ++t) {
            if (t > 0)
                for (Eigen::Index s = 0; s < rows; ++s)
                    e(s) = cfg.ar_coefficient * e(s) + innov * rng.normal();
            z.col(t) += e;
        }
    } else {
        Eigen::MatrixXd gamma(rows, rows);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < rows; ++j) {
                const auto& a = cfg.layout[static_cast<std::size_t>(i)];
                const auto& b = cfg.layout[static_cast<std::size_t>(j)];
                gamma(i, j) = cfg.field_sd * cfg.field_sd *
                              std::exp(-std::hypot(a.x - b.x, a.y - b.y) / cfg.correlation_length);
            }
        const Eigen::LLT<Eigen::MatrixXd> llt(gamma);
        if (llt.info() != Eigen::Success)
            throw Error("spatial covariance is not positive definite");
        const Eigen::MatrixXd L = llt.matrixL();
        const double innov = std::sqrt(1.0 - cfg.ar_coefficient * cfg.ar_coefficient);
        Eigen::VectorXd eta(rows);
        for (Eigen::Index s = 0; s < rows; ++s)
            eta(s) = rng.normal();
        z.col(0) = L * eta;
        for (Eigen::Index t = 1; t < cols; ++t) {
            for (Eigen::Index s = 0; s < rows; ++s)
                eta(s) = rng.normal();
            z.col(t) = cfg.ar_coefficient * z.col(t - 1) + innov * (L * eta);
        }
    }

    if (cfg.fast_noise_sd > 0.0)
        for (Eigen::Index t = 0; t < cols; ++t)
            for (Eigen::Index s = 0; s < rows; ++s)
                z(s, t) += cfg.fast_noise_sd * rng.normal();

    std::vector<double> times(cfg.T);
    for (std::size_t t = 0; t < cfg.T; ++t)
        times[t] = cfg.start_time + cfg.dt * static_cast<double>(t);
    return SpatioTemporalField(cfg.layout, std::move(times), std::move(z), FieldKind::detrended);
}

std::vector<std::string> field_sim_warnings(const FieldSimConfig& cfg)
{
    std::vector<std::string> out;
    const double step = std::hypot(cfg.velocity_x, cfg.velocity_y) * cfg.dt;
    if (cfg.mode == SimMode::advective && step > 3.0 * cfg.correlation_length)
        out.push_back("advection moves the field " + std::to_string(step) +
                      " m per step, more than three correlation lengths; successive samples are nearly independent");
    return out;
}

} // namespace solarst
