#pragma once

#include "solarst/kernel.hpp"
#include "solarst/spline_basis.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace solarst {

/// Order of a functional-coefficient autoregression
///   X_t = m_0(u_t) + sum_{j=1..p} m_j(u_t) X_{t-j} + w_t,   u_t = X_{t-d}.
struct FcarSpec {
    int p = 2;
    int d = 1;
    bool intercept_function = false;

    void validate() const;

    /// Coefficient functions that are estimated, in ascending order. With the
    /// intercept function enabled, lag d is folded into m_0: m_d(u) X_{t-d} =
    /// m_d(u) u is a function of u alone and cannot be separated from m_0.
    std::vector<int> blocks() const;
};

/// Affine rescaling of the delay variable onto [0, 1] (min-max of the fitted sample).
struct AffineMap {
    double offset = 0.0;
    double scale = 1.0;

    static AffineMap fit(std::span<const double> values);
    double to_unit(double x) const { return (x - offset) / scale; }
    double from_unit(double v) const { return offset + scale * v; }
};

/// Regression rows of an FCAR fit. Row i corresponds to source time first + i.
/// `regressors` has one column per block: ones for m_0, X_{t-j} for lag j.
/// The response is usually the series itself but may be any aligned series
/// (the FCSAR temporal stage regresses spatial residuals on lags of Z).
struct LaggedData {
    std::vector<int> blocks;
    Eigen::VectorXd response;
    Eigen::MatrixXd regressors;
    Eigen::VectorXd delay; ///< u_t on the data scale
    std::size_t first = 0;
    std::size_t source_length = 0;

    std::size_t rows() const { return static_cast<std::size_t>(response.size()); }
    /// Column of `regressors` holding block j; throws when j is not estimated.
    Eigen::Index column_of(int j) const;
};

LaggedData make_lagged_data(std::span<const double> lag_source, std::span<const double> response,
                            const FcarSpec& spec, std::size_t first);
LaggedData make_lagged_data(std::span<const double> series, const FcarSpec& spec);

/// Least-squares linear-spline pre-estimate of every coefficient function.
struct SplineFit {
    SplineBasis basis{1};
    AffineMap u_map;
    std::vector<int> blocks;
    Eigen::MatrixXd coeffs; ///< (N+2) x (p+1); columns of blocks not estimated are zero
    int rank = 0;
    Eigen::VectorXd fitted;
    Eigen::VectorXd residuals;
    /// F (D_F' D_F)^+ F' with F the knot-deletion fill and D_F = D F, columns
    /// ordered knot-major (k * blocks + b).
    Eigen::MatrixXd gram_pinv;

    /// m~_j at a point already mapped to [0, 1].
    double value_unit(int j, double v) const;
    double value(int j, double u) const { return value_unit(j, u_map.to_unit(u)); }
};

/// Solves the spline least-squares problem with a rank-revealing factorisation.
/// Knots whose basis function has fewer than `min_support` observations in its
/// support are deleted: the coefficient is tied to the linear interpolation of
/// the nearest kept knots of the same block (constant beyond the ends).
/// Remaining rank deficiency is resolved by the minimum-norm solution unless
/// an entire block is collinear with the others, which is an error naming
/// that block.
SplineFit spline_preestimate(const LaggedData& data, const SplineBasis& basis, const AffineMap& u_map,
                             int min_support = 1);
SplineFit spline_preestimate(std::span<const double> series, const FcarSpec& spec, const SplineBasis& basis,
                             int min_support = 1);

/// W_t = Y_t - sum over estimated blocks j != target of m~_j(u_t) * regressor_j(t).
Eigen::VectorXd pseudo_responses(const LaggedData& data, const SplineFit& spline, int target_j);

struct SbkCurve {
    int lag = 0;
    Eigen::VectorXd grid;     ///< evaluation points on the unit scale
    Eigen::VectorXd estimate; ///< kernel estimate, spline value where unreliable
    Eigen::VectorXd se;       ///< NaN where unreliable
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
    std::vector<bool> reliable;
    std::vector<int> local_count; ///< observations with |u_t - u| <= h
};

/// How pointwise standard errors are formed.
///  kernel_sandwich: local-linear sandwich treating the pseudo-responses as data.
///  full_smoother: the estimate is linear in the response, a' Y, through both the
///    spline pre-estimate and the kernel step; se = sigma * |a| with sigma^2 the
///    spline residual variance RSS / (n - rank). Accounts for pre-estimate noise
///    carried into the pseudo-responses.
enum class BandMethod { kernel_sandwich, full_smoother };

struct SbkOptions {
    double bandwidth = 0.1; ///< unit scale
    Kernel kernel = Kernel::epanechnikov;
    double z = 1.959963984540054; ///< two-sided 95% normal quantile
    int min_local = 5;
    BandMethod bands = BandMethod::full_smoother;
};

/// Local-linear kernel estimate of m_j on `grid` from pseudo-responses, with
/// approximate pointwise bands from the sandwich variance. Grid points with
/// fewer than `min_local` observations inside the bandwidth, or a singular
/// local 2x2 system, are flagged unreliable; `fallback` (if given) supplies
/// their reported estimate. full_smoother bands need `fallback` and fall back
/// to the kernel sandwich without it.
SbkCurve sbk_estimate(const LaggedData& data, const AffineMap& u_map, const Eigen::VectorXd& pseudo,
                      int target_j, const Eigen::VectorXd& grid, const SbkOptions& options,
                      const SplineFit* fallback = nullptr);

/// Trace of the local-linear smoother that maps pseudo-responses to fitted
/// values m^_j(u_t) * regressor_j(t) at the observed u_t.
double smoother_trace(const LaggedData& data, const AffineMap& u_map, int target_j, double bandwidth,
                      Kernel kernel);

/// Rule of thumb 1.06 * sd(u) * n^(-1/5) on the unit scale.
double default_fcar_bandwidth(const LaggedData& data, const AffineMap& u_map);

struct FcarOptions {
    std::optional<int> knots;        ///< default: default_knot_count, reduced until identifiable
    std::optional<double> bandwidth; ///< unit scale; default: rule of thumb
    Kernel kernel = Kernel::epanechnikov;
    int grid_size = 101;
    int min_local = 5;
    /// Knot deletion threshold of the spline pre-estimate.
    int spline_min_support = 5;
    BandMethod bands = BandMethod::full_smoother;
};

struct FcarFit {
    FcarSpec spec;
    AffineMap u_map;
    SplineFit spline;
    double bandwidth = 0.0; ///< unit scale
    Kernel kernel = Kernel::epanechnikov;
    std::vector<SbkCurve> curves; ///< one per estimated block, ascending lag
    std::vector<double> traces;   ///< smoother trace per block
    Eigen::VectorXd fitted;
    Eigen::VectorXd residuals;
    std::size_t first = 0;
    double effective_params = 0.0;

    bool has_block(int j) const;
    const SbkCurve& curve(int j) const;

    /// m^_j(u) on the data scale: linear interpolation on the SBK grid, the
    /// spline pre-estimate where a bracketing grid point is unreliable.
    /// u outside the fitted range is clamped to it.
    double coefficient(int j, double u) const;

    /// Range of reliable grid points on the data scale.
    std::pair<double, double> reliable_range() const;

    double bandwidth_data_scale() const { return bandwidth * u_map.scale; }
    double residual_variance() const;
};

/// Full single-pass SBK fit: spline pre-estimate, pseudo-responses and a
/// kernel refinement per coefficient function.
FcarFit fit_fcar(const LaggedData& data, const FcarSpec& spec, const FcarOptions& options = {});
FcarFit fit_fcar(std::span<const double> series, const FcarSpec& spec, const FcarOptions& options = {});

double effective_params(const FcarFit& fit);

/// Plug-in iteration of the fitted recursion. `history` is chronological and
/// must hold at least p values; u is clamped to the reliable grid range.
std::vector<double> forecast_fcar(const FcarFit& fit, std::span<const double> history, int steps);

struct OrderCandidate {
    FcarSpec spec;
    double residual_variance = 0.0;
    double effective_params = 0.0;
    double criterion = 0.0;
};

struct OrderSelection {
    FcarSpec best;
    std::vector<OrderCandidate> candidates;
};

/// AIC-style search over p in 1..max_p, d in 1..p on common targets:
/// n log(RSS/n) + 2 * effective_params.
OrderSelection select_fcar_order(std::span<const double> series, const FcarOptions& options, int max_p = 4,
                                 bool intercept_function = false);

} // namespace solarst
