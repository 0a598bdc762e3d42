#include "solarst/spatial.hpp"

#include "solarst/csv_io.hpp"
#include "solarst/error.hpp"
#include "solarst/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>

namespace solarst {

namespace {

/// Sufficient statistics for RSS(rho) = yy - 2 rho yWy + rho^2 WyWy.
struct SarMoments {
    double yy = 0.0;
    double ywy = 0.0;
    double wywy = 0.0;

    SarMoments(const Eigen::VectorXd& y, const Eigen::MatrixXd& w)
    {
        const Eigen::VectorXd wy = w * y;
        yy = y.squaredNorm();
        ywy = y.dot(wy);
        wywy = wy.squaredNorm();
    }

    double rss(double rho) const { return yy - 2.0 * rho * ywy + rho * rho * wywy; }
};

double log_det(const Eigen::VectorXcd& eig, double rho)
{
    double sum = 0.0;
    for (const auto& lambda : eig)
        sum += std::log(std::abs(std::complex<double>(1.0, 0.0) - rho * lambda));
    return sum;
}

double profile(const SarMoments& mom, const Eigen::VectorXcd& eig, double rho)
{
    const double S = static_cast<double>(eig.size());
    const double rss = std::max(mom.rss(rho), 0.0);
    return log_det(eig, rho) - 0.5 * S * std::log(rss / S) - 0.5 * S * (1.0 + std::log(2.0 * std::numbers::pi));
}

void require_vector(const Eigen::VectorXd& y, const NeighborGraph& graph)
{
    if (graph.size() < 3)
        throw Error("SAR fit needs at least three sensors");
    if (static_cast<std::size_t>(y.size()) != graph.size())
        throw Error("SAR response length " + std::to_string(y.size()) + " does not match graph size " +
                    std::to_string(graph.size()));
    if (!y.allFinite())
        throw Error("SAR response contains non-finite values");
}

} // namespace

std::string to_string(WeightStyle style)
{
    return style == WeightStyle::binary ? "binary" : "row_standardized";
}

WeightStyle parse_weight_style(std::string_view name)
{
    if (name == "row_standardized" || name == "row")
        return WeightStyle::row_standardized;
    if (name == "binary")
        return WeightStyle::binary;
    throw Error("unknown weight style '" + std::string(name) + "'");
}

std::vector<std::size_t> nearest_sensors(const SensorLayout& layout, double x, double y, std::size_t k)
{
    std::vector<std::size_t> order(layout.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> dist(layout.size());
    for (std::size_t i = 0; i < layout.size(); ++i)
        dist[i] = std::hypot(layout[i].x - x, layout[i].y - y);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (dist[a] != dist[b])
            return dist[a] < dist[b];
        return layout[a].id < layout[b].id;
    });
    order.resize(std::min(k, order.size()));
    return order;
}

NeighborGraph::NeighborGraph(const SensorLayout& layout, int k, WeightStyle style)
    : k_(k)
    , style_(style)
{
    const std::size_t S = layout.size();
    if (S < 3)
        throw Error("neighbour graph needs at least three sensors, got " + std::to_string(S));
    if (k < 1)
        throw Error("neighbour count k must be at least 1");
    if (static_cast<std::size_t>(k) >= S)
        throw Error("neighbour count k = " + std::to_string(k) + " must be below the sensor count " +
                    std::to_string(S));

    w_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(S));
    neighbors_.resize(S);
    for (std::size_t s = 0; s < S; ++s) {
        auto near = nearest_sensors(layout, layout[s].x, layout[s].y, static_cast<std::size_t>(k) + 1);
        near.erase(std::find(near.begin(), near.end(), s));
        near.resize(static_cast<std::size_t>(k));
        neighbors_[s] = near;
        const double weight = style == WeightStyle::row_standardized ? 1.0 / k : 1.0;
        for (std::size_t l : near)
            w_(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(l)) = weight;
    }

    eig_ = Eigen::EigenSolver<Eigen::MatrixXd>(w_, false).eigenvalues();
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& lambda : eig_) {
        lo = std::min(lo, lambda.real());
        hi = std::max(hi, lambda.real());
    }
    if (!(lo < 0.0) || !(hi > 0.0))
        throw Error("weight matrix spectrum does not bracket zero; admissible rho interval undefined");
    lower_ = 1.0 / lo;
    upper_ = 1.0 / hi;
}

NeighborGraph build_neighbor_graph(const SensorLayout& layout, int k, WeightStyle style)
{
    return NeighborGraph(layout, k, style);
}

double sar_profile_loglik(const Eigen::VectorXd& y, const NeighborGraph& graph, double rho)
{
    require_vector(y, graph);
    if (!(rho > graph.rho_lower() && rho < graph.rho_upper()))
        throw Error("rho outside the admissible interval");
    return profile(SarMoments(y, graph.weights()), graph.eigenvalues(), rho);
}

SarFit sar_fit_ml(const Eigen::VectorXd& y, const NeighborGraph& graph)
{
    require_vector(y, graph);
    const SarMoments mom(y, graph.weights());
    const auto& eig = graph.eigenvalues();
    const double lo = graph.rho_lower(), hi = graph.rho_upper();
    const auto f = [&](double rho) { return profile(mom, eig, rho); };

    constexpr int cells = 202;
    int best = 1;
    double best_value = -std::numeric_limits<double>::infinity();
    for (int i = 1; i < cells; ++i) {
        const double v = f(lo + (hi - lo) * i / cells);
        if (v > best_value) {
            best_value = v;
            best = i;
        }
    }
    if (!std::isfinite(best_value))
        throw Error("SAR likelihood is not finite (degenerate response)");

    double a = lo + (hi - lo) * (best - 1) / cells;
    double b = lo + (hi - lo) * (best + 1) / cells;
    if (best == 1)
        a = lo + (hi - lo) * 0.5 / cells;
    if (best == cells - 1)
        b = lo + (hi - lo) * (cells - 0.5) / cells;
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > 1e-6) {
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if (b <= a)
        throw Error("SAR golden-section bracket collapsed");
    double rho = 0.5 * (a + b);
    double value = f(rho);
    const double grid_rho = lo + (hi - lo) * best / cells;
    if (!(value >= best_value)) {
        rho = grid_rho;
        value = best_value;
    }
    if (!std::isfinite(value))
        throw Error("SAR likelihood is not finite at the optimum");

    SarFit fit;
    fit.rho = rho;
    fit.weights = graph.weights();
    fit.residuals = y - rho * (graph.weights() * y);
    fit.sigma2 = fit.residuals.squaredNorm() / static_cast<double>(y.size());
    fit.loglik = value;
    return fit;
}

SarResiduals sar_fit_columns(const Eigen::MatrixXd& values, const std::vector<double>& timestamps,
                             const NeighborGraph& graph, int threads)
{
    const auto T = static_cast<std::size_t>(values.cols());
    if (timestamps.size() != T)
        throw Error("timestamp count does not match field columns");
    SarResiduals out;
    out.fitted.resize(values.rows(), values.cols());
    out.residuals.resize(values.rows(), values.cols());
    out.trace.timestamps = timestamps;
    out.trace.rho.resize(T);
    out.trace.sigma2.resize(T);
    out.trace.loglik.resize(T);
    parallel_for(T, threads, [&](std::size_t t) {
        const auto col = static_cast<Eigen::Index>(t);
        SarFit fit;
        try {
            fit = sar_fit_ml(values.col(col), graph);
        } catch (const Error& e) {
            throw Error("SAR fit failed at time index " + std::to_string(t) + ": " + e.what());
        }
        out.residuals.col(col) = fit.residuals;
        out.fitted.col(col) = values.col(col) - fit.residuals;
        out.trace.rho[t] = fit.rho;
        out.trace.sigma2[t] = fit.sigma2;
        out.trace.loglik[t] = fit.loglik;
    });
    return out;
}

SarResidualField sar_residuals_field(const SpatioTemporalField& field, const NeighborGraph& graph, int threads)
{
    field.require_complete("SAR residuals");
    SarResiduals r = sar_fit_columns(field.values(), field.timestamps(), graph, threads);
    return {field.with_values(std::move(r.residuals), FieldKind::residual), std::move(r.trace)};
}

void write_sar_trace_csv(std::ostream& out, const SarTrace& trace)
{
    out << "t,rho,sigma2,loglik\n";
    for (std::size_t i = 0; i < trace.rho.size(); ++i)
        out << format_number(trace.timestamps[i]) << ',' << format_number(trace.rho[i]) << ','
            << format_number(trace.sigma2[i]) << ',' << format_number(trace.loglik[i]) << '\n';
}

void write_sar_trace_csv(const std::string& path, const SarTrace& trace)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot open '" + path + "' for writing");
    write_sar_trace_csv(out, trace);
}

} // namespace solarst
