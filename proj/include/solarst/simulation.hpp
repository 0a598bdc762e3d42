#pragma once

#include "solarst/core.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace solarst {

/// Standard normals from mt19937_64 through the Box-Muller transform, so a
/// sequence can be reproduced from (seed, algorithm) alone.
class NormalRng {
public:
    explicit NormalRng(std::uint64_t seed)
        : engine_(seed)
    {
    }

    /// Uniform on (0, 1) from the top 53 bits.
    double uniform();
    double normal();

    static constexpr std::string_view algorithm() { return "mt19937_64 + Box-Muller"; }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// X_t = (a1 + b1 e^{-g X_{t-1}^2}) X_{t-1} + (a2 + b2 e^{-g X_{t-1}^2}) X_{t-2} + sd * w_t
struct Expar2Config {
    double a1 = 0.5;
    double b1 = -1.1;
    double a2 = 0.3;
    double b2 = -0.5;
    double gamma = 50.0;
    double noise_sd = 0.2;
    std::size_t T = 500;
    std::size_t burn_in = 500;
    std::uint64_t seed = 1;
    double x0 = 0.0; ///< initial X_{-1} and X_{-2}

    void validate() const;
};

/// Mean-centred realisation of length T after the burn-in.
std::vector<double> simulate_expar2(const Expar2Config& cfg);

/// Coefficient functions of the recursion written with delay u = X_{t-1}:
/// intercept m0(u) = (a1 + b1 e^{-g u^2}) u and lag-2 coefficient a2 + b2 e^{-g u^2}.
double expar2_intercept(const Expar2Config& cfg, double u);
double expar2_lag2(const Expar2Config& cfg, double u);

enum class Regime { clear, partly_cloudy, overcast };
enum class SimMode { separable, advective };

std::string to_string(Regime regime);
Regime parse_regime(std::string_view name);
std::string to_string(SimMode mode);
SimMode parse_sim_mode(std::string_view name);

struct FieldSimConfig {
    SensorLayout layout = grid_layout(4, 4, 10.0);
    std::size_t T = 144;
    double dt = 600.0; ///< seconds between samples
    double start_time = 0.0;
    Regime regime = Regime::partly_cloudy;
    SimMode mode = SimMode::advective;
    double velocity_x = 10.0 / 600.0; ///< m/s
    double velocity_y = 0.0;
    double correlation_length = 6.0; ///< m
    double ar_coefficient = 0.8;
    double field_sd = 1.0;      ///< advected or separable component
    double noise_sd = 0.1;      ///< AR(1) noise, independent across sensors
    double fast_noise_sd = 0.05; ///< white noise
    int features = 400;          ///< random Fourier features of the frozen field
    std::uint64_t seed = 1;

    void validate() const;

    /// Regime-specific amplitudes, length scales and a diagonal wind for a 4x4
    /// grid with the given spacing, covering one day (T = 86400 / dt). The AR(1)
    /// coefficient and white-noise sd are rescaled from their 600 s values so
    /// that block means over 600 s are comparable across native steps.
    static FieldSimConfig preset(Regime regime, SimMode mode, double spacing = 10.0, double dt = 600.0);
};

/// Advective mode: a frozen Gaussian random field (squared-exponential
/// covariance with the correlation length) translated at the advection
/// velocity, plus AR(1) and white noise. Separable mode: matrix-normal AR(1)
/// Z_t = phi Z_{t-1} + sqrt(1 - phi^2) L e_t with L L' = field_sd^2 exp(-d / length),
/// whose covariance is a Kronecker product, plus optional white noise.
SpatioTemporalField simulate_field(const FieldSimConfig& cfg);

/// Human-readable concerns about a configuration (e.g. a field that
/// decorrelates within one step).
std::vector<std::string> field_sim_warnings(const FieldSimConfig& cfg);

} // namespace solarst
