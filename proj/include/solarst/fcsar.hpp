#pragma once

#include "solarst/core.hpp"
#include "solarst/fcar.hpp"
#include "solarst/spatial.hpp"
#include "solarst/voronoi.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace solarst {

/// Space-time model
///   Z_{s,t} = sum_{w=1..b} sum_{l in N_s} beta_{s,l,w} Z_{l,t-w}
///           + sum_j m_{s,j}(Z_{s,t-d_s}) Z_{s,t-j} + e_{s,t}.
struct FcsarSpec {
    int b = 2;
    NeighborGraph graph;
    std::vector<FcarSpec> fcar; ///< one per sensor

    static FcsarSpec uniform(const NeighborGraph& graph, int b, const FcarSpec& fcar);
    void validate() const;
    int max_p() const;
};

struct FcsarOptions {
    FcarOptions fcar;
    /// First time index of the common support; default max(b, max p_s).
    std::optional<std::size_t> support_start;
    /// Skip the spatial stage (beta = 0): each sensor is a plain FCAR fit.
    bool freeze_beta_zero = false;
    /// Compare against the embedded model of order b - 1 and keep the one
    /// with the smaller in-sample residual sum of squares.
    bool nested_guard = true;
    int threads = 1;
};

struct FcsarFit {
    FcsarSpec spec;
    std::size_t support_start = 0;
    /// beta[s] is b x k: row w - 1, column = position in the neighbour list.
    std::vector<Eigen::MatrixXd> beta;
    std::vector<FcarFit> fcar_fits;
    Eigen::MatrixXd spatial;   ///< spatial component; NaN before the support
    Eigen::MatrixXd temporal;  ///< FCAR component; NaN before the support
    Eigen::MatrixXd fitted;    ///< NaN before the support
    Eigen::MatrixXd residuals; ///< NaN before the support
    double total_params = 0.0;
    /// Order actually kept after the nested comparison (<= spec.b).
    int effective_b = 0;
};

FcsarFit fit_fcsar(const SpatioTemporalField& field, const FcsarSpec& spec, const FcsarOptions& options = {});

enum class FitOrder { space_then_time, time_then_space };

std::string to_string(FitOrder order);
FitOrder parse_fit_order(std::string_view name);

struct SeparableFit {
    FitOrder order = FitOrder::space_then_time;
    std::size_t support_start = 0;
    SarTrace sar;                  ///< per-time SAR fits of the spatial stage
    std::vector<FcarFit> fcar_fits; ///< per-sensor fits of the temporal stage
    Eigen::MatrixXd stage_one_residuals;
    Eigen::MatrixXd fitted;    ///< NaN before the support
    Eigen::MatrixXd residuals; ///< NaN before the support
    double stage_one_rmse = 0.0;
    double rmse = 0.0;
    double total_params = 0.0;
};

struct SeparableOptions {
    FcarOptions fcar;
    std::optional<std::size_t> support_start; ///< default max p_s
    int threads = 1;
};

/// Two-stage fit: per-time SAR and per-sensor FCAR, the second stage
/// consuming the residuals of the first.
SeparableFit fit_separable(const SpatioTemporalField& field, FitOrder order, const NeighborGraph& graph,
                           const std::vector<FcarSpec>& fcar, const SeparableOptions& options = {});

struct MissingSensorPrediction {
    Eigen::VectorXd values; ///< NaN for t < b
    std::vector<std::size_t> neighbors; ///< training indices used
    std::vector<std::size_t> donors;    ///< training sensors whose beta was borrowed
};

/// Prediction at an unobserved location from the lagged values of its k
/// nearest training sensors, with coefficients borrowed from the nearest
/// training sensor (averaged over ties). Each borrowed neighbour coefficient is
/// matched to the target neighbour in the most similar direction.
MissingSensorPrediction predict_missing_sensor(const FcsarFit& fit, const SpatioTemporalField& train,
                                               const Sensor& target);

struct SeparabilityReport {
    std::string label;
    double st_rmse = 0.0;
    double ts_rmse = 0.0;
    double fcsar_b1_rmse = 0.0;
    double fcsar_b2_rmse = 0.0;
    double order_ratio = 0.0; ///< max / min of the two fit-order RMSEs
    double threshold = 1.5;
    std::string verdict;
};

struct DiagnosticOptions {
    FcarOptions fcar;
    double threshold = 1.5;
    int threads = 1;
    std::string label;
};

/// Fits both separable orders and FCSAR with b = 1, 2 on a common support.
SeparabilityReport separability_diagnostic(const SpatioTemporalField& field, const NeighborGraph& graph,
                                           const FcarSpec& fcar, const DiagnosticOptions& options = {});

/// CSV `label,st_rmse,ts_rmse,fcsar_b1_rmse,fcsar_b2_rmse`.
void write_table1_csv(std::ostream& out, const std::vector<SeparabilityReport>& rows);
void write_table1_csv(const std::string& path, const std::vector<SeparabilityReport>& rows);

} // namespace solarst
