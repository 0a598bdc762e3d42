#pragma once

#include "solarst/core.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace solarst {

enum class WeightStyle { row_standardized, binary };

std::string to_string(WeightStyle style);
WeightStyle parse_weight_style(std::string_view name);

/// k-nearest-neighbour structure of a layout with its SAR weight matrix.
/// Neighbour lists are ordered by (distance, sensor id).
class NeighborGraph {
public:
    NeighborGraph() = default;
    NeighborGraph(const SensorLayout& layout, int k, WeightStyle style = WeightStyle::row_standardized);

    int k() const { return k_; }
    WeightStyle style() const { return style_; }
    std::size_t size() const { return neighbors_.size(); }
    const std::vector<std::size_t>& neighbors(std::size_t s) const { return neighbors_[s]; }
    const std::vector<std::vector<std::size_t>>& neighbor_lists() const { return neighbors_; }
    const Eigen::MatrixXd& weights() const { return w_; }
    const Eigen::VectorXcd& eigenvalues() const { return eig_; }

    /// Open interval of rho for which I - rho W is invertible:
    /// (1 / min Re(lambda), 1 / max Re(lambda)).
    double rho_lower() const { return lower_; }
    double rho_upper() const { return upper_; }

private:
    int k_ = 0;
    WeightStyle style_ = WeightStyle::row_standardized;
    std::vector<std::vector<std::size_t>> neighbors_;
    Eigen::MatrixXd w_;
    Eigen::VectorXcd eig_;
    double lower_ = 0.0;
    double upper_ = 0.0;
};

NeighborGraph build_neighbor_graph(const SensorLayout& layout, int k,
                                   WeightStyle style = WeightStyle::row_standardized);

/// The k sensors of `layout` nearest to (x, y), ordered by (distance, id).
std::vector<std::size_t> nearest_sensors(const SensorLayout& layout, double x, double y, std::size_t k);

struct SarFit {
    double rho = 0.0;
    double sigma2 = 0.0;
    double loglik = 0.0;
    Eigen::VectorXd residuals; ///< (I - rho W) y
    Eigen::MatrixXd weights;
};

/// Gaussian profile log-likelihood of y = rho W y + e at rho.
double sar_profile_loglik(const Eigen::VectorXd& y, const NeighborGraph& graph, double rho);

/// Maximum likelihood fit: coarse grid over the admissible interval followed
/// by golden-section refinement to 1e-6 in rho.
SarFit sar_fit_ml(const Eigen::VectorXd& y, const NeighborGraph& graph);

struct SarTrace {
    std::vector<double> timestamps;
    std::vector<double> rho;
    std::vector<double> sigma2;
    std::vector<double> loglik;
};

struct SarResiduals {
    Eigen::MatrixXd fitted;   ///< rho_t W Z_t
    Eigen::MatrixXd residuals; ///< (I - rho_t W) Z_t
    SarTrace trace;
};

/// Independent SAR fit at every time column of a complete S x T matrix.
SarResiduals sar_fit_columns(const Eigen::MatrixXd& values, const std::vector<double>& timestamps,
                             const NeighborGraph& graph, int threads = 1);

/// Residual field (kind residual) of per-time SAR fits, with the rho trace.
struct SarResidualField {
    SpatioTemporalField residuals;
    SarTrace trace;
};
SarResidualField sar_residuals_field(const SpatioTemporalField& field, const NeighborGraph& graph, int threads = 1);

/// CSV `t,rho,sigma2,loglik`, t being the column timestamp.
void write_sar_trace_csv(std::ostream& out, const SarTrace& trace);
void write_sar_trace_csv(const std::string& path, const SarTrace& trace);

} // namespace solarst
