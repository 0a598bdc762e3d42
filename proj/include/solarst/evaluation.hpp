#pragma once

#include "solarst/core.hpp"
#include "solarst/fcar.hpp"
#include "solarst/spatial.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace solarst {

/// Root mean squared difference over all sensors and t >= support_start.
double rmse(const Eigen::MatrixXd& observed, const Eigen::MatrixXd& fitted, std::size_t support_start = 0);

/// (1 / (T k)) * sum over s in omega, t >= support_start of squared errors.
/// No square root is taken; see rmpe_rooted.
double rmpe(const Eigen::MatrixXd& observed, const Eigen::MatrixXd& predicted, const std::vector<std::size_t>& omega,
            std::size_t support_start = 0);
double rmpe_rooted(const Eigen::MatrixXd& observed, const Eigen::MatrixXd& predicted,
                   const std::vector<std::size_t>& omega, std::size_t support_start = 0);

/// 1 - [SS_fit / (TS - nu)] / [SS_total / (TS)] over t >= support_start.
double adjusted_r2(const Eigen::MatrixXd& observed, const Eigen::MatrixXd& fitted, double nu_fit,
                   std::size_t support_start = 0);

/// "0.16 (0.999)"
std::string format_rmse_r2(double rmse, double adj_r2);

struct CrossvalPlan {
    std::size_t sensors = 0;
    std::size_t k = 0;
    std::vector<std::vector<std::size_t>> subsets; ///< sorted, unique
    bool sampled = false;
    std::size_t cap = 2000;
    std::uint64_t seed = 0;
};

/// Every size-k subset of S sensors, or `cap` distinct subsets drawn with a
/// seeded generator when C(S, k) exceeds the cap.
CrossvalPlan make_crossval_plan(std::size_t sensors, std::size_t k, std::size_t cap = 2000, std::uint64_t seed = 1);

/// Number of size-k subsets of n items, saturating at SIZE_MAX.
std::size_t binomial(std::size_t n, std::size_t k);

enum class PredictionModel { fcsar, natural_neighbor };

std::string to_string(PredictionModel model);

struct CrossvalSpec {
    int b = 2;
    int knn = 2;
    FcarSpec fcar;
    FcarOptions fcar_options;
    /// First time index entering the RMPE; default b, where FCSAR predictions start.
    std::size_t support_start = 2;
    int threads = 1;
};

struct MetricsReport {
    PredictionModel model = PredictionModel::fcsar;
    std::size_t k = 0;
    std::vector<std::vector<std::size_t>> subsets;
    std::vector<double> rmpe;
    std::vector<double> rmpe_rooted;
    double mean_rmpe = 0.0;
    double mean_rmpe_rooted = 0.0;
    /// Subsets where some held-out sensor lay outside the training hull.
    std::size_t hull_fallbacks = 0;
};

/// Leave-k-out: refit on the training sensors of every subset and predict each
/// held-out sensor individually.
MetricsReport crossval(const SpatioTemporalField& field, const CrossvalPlan& plan, PredictionModel model,
                       const CrossvalSpec& spec);

/// mean_rmpe(a) / mean_rmpe(b); both reports must come from the same plan.
double rmpe_ratio(const MetricsReport& a, const MetricsReport& b);

struct Table2Row {
    std::string label;
    double window = 0.0;
    double rmse = 0.0;
    double adj_r2 = 0.0;
};

struct Fig8Row {
    std::string label;
    std::size_t k = 0;
    double ratio = 0.0;
};

/// `label,window,rmse,adj_r2`
void write_table2_csv(std::ostream& out, const std::vector<Table2Row>& rows);
void write_table2_csv(const std::string& path, const std::vector<Table2Row>& rows);
/// `label,k,ratio`
void write_fig8_csv(std::ostream& out, const std::vector<Fig8Row>& rows);
void write_fig8_csv(const std::string& path, const std::vector<Fig8Row>& rows);

} // namespace solarst
