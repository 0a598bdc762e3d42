#include "solarst/fcsar.hpp"

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

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double support_rss(const Eigen::MatrixXd& residuals, std::size_t start)
{
    const auto t0 = static_cast<Eigen::Index>(start);
    return residuals.rightCols(residuals.cols() - t0).squaredNorm();
}

double support_rmse(const Eigen::MatrixXd& residuals, std::size_t start)
{
    const auto t0 = static_cast<Eigen::Index>(start);
    const double n = static_cast<double>(residuals.rows() * (residuals.cols() - t0));
    return std::sqrt(support_rss(residuals, start) / n);
}

std::vector<double> row_vector(const Eigen::MatrixXd& m, Eigen::Index s)
{
    std::vector<double> out(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index t = 0; t < m.cols(); ++t)
        out[static_cast<std::size_t>(t)] = m(s, t);
    return out;
}

/// Lagged neighbour regressors of sensor s for targets t0..T-1; column
/// (w - 1) * k + position of the neighbour.
Eigen::MatrixXd neighbour_design(const Eigen::MatrixXd& z, const std::vector<std::size_t>& nbrs, int b,
                                 std::size_t t0)
{
    const auto n = z.cols() - static_cast<Eigen::Index>(t0);
    const auto k = static_cast<Eigen::Index>(nbrs.size());
    Eigen::MatrixXd x(n, b * k);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index t = static_cast<Eigen::Index>(t0) + i;
        for (int w = 1; w <= b; ++w)
            for (Eigen::Index l = 0; l < k; ++l)
                x(i, (w - 1) * k + l) = z(static_cast<Eigen::Index>(nbrs[static_cast<std::size_t>(l)]), t - w);
    }
    return x;
}

Eigen::VectorXd ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::string& sensor)
{
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (qr.rank() < x.cols())
        throw Error("collinear neighbour regressors at sensor '" + sensor + "'");
    return qr.solve(y);
}

struct SensorFit {
    Eigen::MatrixXd beta;
    FcarFit fcar;
    Eigen::VectorXd spatial; ///< support rows only
};

int max_order(const std::vector<FcarSpec>& specs)
{
    int p = 0;
    for (const FcarSpec& s : specs)
        p = std::max(p, s.p);
    return p;
}

void check_fcar_specs(const std::vector<FcarSpec>& specs, std::size_t sensors)
{
    if (specs.size() != sensors)
        throw Error("expected one FCAR specification per sensor (" + std::to_string(sensors) + "), got " +
                    std::to_string(specs.size()));
    for (const FcarSpec& s : specs)
        s.validate();
}

FcsarFit fit_fixed_order(const SpatioTemporalField& field, const FcsarSpec& spec, int b, std::size_t t0,
                         const FcsarOptions& options)
{
    const Eigen::MatrixXd& z = field.values();
    const std::size_t S = field.sensors();
    const auto T = z.cols();
    const auto n = T - static_cast<Eigen::Index>(t0);
    const auto k = static_cast<Eigen::Index>(spec.graph.k());

    std::vector<SensorFit> per(S);
    parallel_for(S, options.threads, [&](std::size_t s) {
        const auto row = static_cast<Eigen::Index>(s);
        const std::string& id = field.layout()[s].id;
        const FcarSpec& fs = spec.fcar[s];
        const std::vector<double> series = row_vector(z, row);
        const Eigen::VectorXd target = z.row(row).tail(n).transpose();
        SensorFit& out = per[s];

        if (options.freeze_beta_zero || b == 0) {
            out.beta = Eigen::MatrixXd::Zero(std::max(b, 0), k);
            out.spatial = Eigen::VectorXd::Zero(n);
            out.fcar = fit_fcar(make_lagged_data(series, series, fs, t0), fs, options.fcar);
            return;
        }

        const Eigen::MatrixXd x = neighbour_design(z, spec.graph.neighbors(s), b, t0);
        const auto temporal_stage = [&](const Eigen::VectorXd& spatial) {
            std::vector<double> response = series;
            for (Eigen::Index i = 0; i < n; ++i)
                response[t0 + static_cast<std::size_t>(i)] -= spatial(i);
            return fit_fcar(make_lagged_data(series, response, fs, t0), fs, options.fcar);
        };

        Eigen::VectorXd coef = ols(x, target, id);
        Eigen::VectorXd spatial = x * coef;
        FcarFit fcar = temporal_stage(spatial);
        coef = ols(x, target - fcar.fitted, id);
        spatial = x * coef;
        out.fcar = temporal_stage(spatial);
        out.spatial = spatial;
        out.beta = Eigen::Map<const Eigen::MatrixXd>(coef.data(), k, b).transpose();
    });

    FcsarFit fit;
    fit.spec = spec;
    fit.support_start = t0;
    fit.effective_b = options.freeze_beta_zero ? 0 : b;
    fit.spatial = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(S), T, kNaN);
    fit.temporal = fit.spatial;
    fit.fitted = fit.spatial;
    fit.residuals = fit.spatial;
    fit.total_params = options.freeze_beta_zero ? 0.0 : static_cast<double>(S) * b * static_cast<double>(k);
    for (std::size_t s = 0; s < S; ++s) {
        const auto row = static_cast<Eigen::Index>(s);
        SensorFit& sf = per[s];
        fit.spatial.row(row).tail(n) = sf.spatial.transpose();
        fit.temporal.row(row).tail(n) = sf.fcar.fitted.transpose();
        fit.fitted.row(row).tail(n) = (sf.spatial + sf.fcar.fitted).transpose();
        fit.residuals.row(row).tail(n) = z.row(row).tail(n) - fit.fitted.row(row).tail(n);
        fit.total_params += sf.fcar.effective_params;
        Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(spec.b, k);
        beta.topRows(sf.beta.rows()) = sf.beta;
        fit.beta.push_back(std::move(beta));
        fit.fcar_fits.push_back(std::move(sf.fcar));
    }
    return fit;
}

double angle_between(double ax, double ay, double bx, double by)
{
    const double d = std::abs(std::atan2(ay, ax) - std::atan2(by, bx));
    return std::min(d, 2.0 * std::numbers::pi - d);
}

} // namespace

FcsarSpec FcsarSpec::uniform(const NeighborGraph& graph, int b, const FcarSpec& fcar)
{
    return {b, graph, std::vector<FcarSpec>(graph.size(), fcar)};
}

void FcsarSpec::validate() const
{
    if (b < 1)
        throw Error("spatial time order b must be at least 1");
    if (graph.size() == 0)
        throw Error("FCSAR specification has no neighbour graph");
    check_fcar_specs(fcar, graph.size());
}

int FcsarSpec::max_p() const
{
    return max_order(fcar);
}

FcsarFit fit_fcsar(const SpatioTemporalField& field, const FcsarSpec& spec, const FcsarOptions& options)
{
    spec.validate();
    field.require_complete("FCSAR fit");
    if (field.sensors() != spec.graph.size())
        throw Error("neighbour graph has " + std::to_string(spec.graph.size()) + " sensors, field has " +
                    std::to_string(field.sensors()));
    const std::size_t minimum = static_cast<std::size_t>(std::max(spec.b, spec.max_p()));
    const std::size_t t0 = options.support_start.value_or(minimum);
    if (t0 < minimum)
        throw Error("support start " + std::to_string(t0) + " precedes the largest lag " + std::to_string(minimum));
    if (t0 >= field.times())
        throw Error("series too short for FCSAR: no observations after the largest lag");

    FcsarFit fit = fit_fixed_order(field, spec, spec.b, t0, options);
    if (options.nested_guard && !options.freeze_beta_zero && spec.b > 1) {
        FcsarSpec lower_spec = spec;
        lower_spec.b = spec.b - 1;
        FcsarOptions lower_options = options;
        lower_options.support_start = t0;
        FcsarFit lower = fit_fcsar(field, lower_spec, lower_options);
        if (support_rss(lower.residuals, t0) < support_rss(fit.residuals, t0)) {
            for (Eigen::MatrixXd& beta : lower.beta) {
                Eigen::MatrixXd padded = Eigen::MatrixXd::Zero(spec.b, beta.cols());
                padded.topRows(beta.rows()) = beta;
                beta = std::move(padded);
            }
            lower.spec = spec;
            return lower;
        }
    }
    return fit;
}

std::string to_string(FitOrder order)
{
    return order == FitOrder::space_then_time ? "space_then_time" : "time_then_space";
}

FitOrder parse_fit_order(std::string_view name)
{
    if (name == "space_then_time" || name == "st" || name == "separable-st")
        return FitOrder::space_then_time;
    if (name == "time_then_space" || name == "ts" || name == "separable-ts")
        return FitOrder::time_then_space;
    throw Error("unknown fit order '" + std::string(name) + "'");
}

SeparableFit fit_separable(const SpatioTemporalField& field, FitOrder order, const NeighborGraph& graph,
                           const std::vector<FcarSpec>& fcar, const SeparableOptions& options)
{
    field.require_complete("separable fit");
    const std::size_t S = field.sensors();
    if (graph.size() != S)
        throw Error("neighbour graph size does not match the field");
    check_fcar_specs(fcar, S);
    const std::size_t minimum = static_cast<std::size_t>(max_order(fcar));
    const std::size_t t0 = options.support_start.value_or(minimum);
    if (t0 < minimum)
        throw Error("support start precedes the largest FCAR lag");
    if (t0 >= field.times())
        throw Error("series too short for the separable fit");

    const Eigen::MatrixXd& z = field.values();
    const auto T = z.cols();
    const auto n = T - static_cast<Eigen::Index>(t0);

    SeparableFit fit;
    fit.order = order;
    fit.support_start = t0;
    fit.fcar_fits.resize(S);
    fit.fitted = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(S), T, kNaN);
    fit.residuals = fit.fitted;

    const auto temporal = [&](const Eigen::MatrixXd& source, Eigen::MatrixXd& component) {
        component = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(S), T, kNaN);
        parallel_for(S, options.threads, [&](std::size_t s) {
            const std::vector<double> series = row_vector(source, static_cast<Eigen::Index>(s));
            fit.fcar_fits[s] = fit_fcar(make_lagged_data(series, series, fcar[s], t0), fcar[s], options.fcar);
            component.row(static_cast<Eigen::Index>(s)).tail(n) = fit.fcar_fits[s].fitted.transpose();
        });
    };

    Eigen::MatrixXd temporal_part;
    if (order == FitOrder::space_then_time) {
        SarResiduals sar = sar_fit_columns(z, field.timestamps(), graph, options.threads);
        fit.stage_one_residuals = sar.residuals;
        temporal(sar.residuals, temporal_part);
        fit.fitted.rightCols(n) = sar.fitted.rightCols(n) + temporal_part.rightCols(n);
        fit.sar = std::move(sar.trace);
    } else {
        temporal(z, temporal_part);
        const Eigen::MatrixXd innovations = z.rightCols(n) - temporal_part.rightCols(n);
        const std::vector<double> times(field.timestamps().begin() + static_cast<std::ptrdiff_t>(t0),
                                        field.timestamps().end());
        SarResiduals sar = sar_fit_columns(innovations, times, graph, options.threads);
        fit.stage_one_residuals = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(S), T, kNaN);
        fit.stage_one_residuals.rightCols(n) = innovations;
        fit.fitted.rightCols(n) = temporal_part.rightCols(n) + sar.fitted;
        fit.sar = std::move(sar.trace);
    }
    fit.residuals.rightCols(n) = z.rightCols(n) - fit.fitted.rightCols(n);
    fit.stage_one_rmse = support_rmse(fit.stage_one_residuals, t0);
    fit.rmse = support_rmse(fit.residuals, t0);
    fit.total_params = static_cast<double>(n);
    for (const FcarFit& f : fit.fcar_fits)
        fit.total_params += f.effective_params;
    return fit;
}

MissingSensorPrediction predict_missing_sensor(const FcsarFit& fit, const SpatioTemporalField& train,
                                               const Sensor& target)
{
    train.require_complete("missing-sensor prediction");
    const SensorLayout& layout = train.layout();
    if (layout.size() != fit.beta.size())
        throw Error("training field does not match the fitted model");
    if (layout.find(target.id))
        throw Error("target sensor '" + target.id + "' is part of the training layout");
    for (const Sensor& s : layout.sensors())
        if (s.x == target.x && s.y == target.y)
            throw Error("target location coincides with training sensor '" + s.id + "'");

    const auto k = static_cast<std::size_t>(fit.spec.graph.k());
    const int b = fit.spec.b;
    MissingSensorPrediction out;
    out.neighbors = nearest_sensors(layout, target.x, target.y, k);
    if (out.neighbors.size() < k)
        throw Error("not enough training sensors around '" + target.id + "'");

    const auto dist = [&](std::size_t i) { return std::hypot(layout[i].x - target.x, layout[i].y - target.y); };
    double dmin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < layout.size(); ++i)
        dmin = std::min(dmin, dist(i));
    for (std::size_t i = 0; i < layout.size(); ++i)
        if (dist(i) - dmin <= 1e-9 * std::max(1.0, dmin))
            out.donors.push_back(i);

    Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(b, static_cast<Eigen::Index>(k));
    for (std::size_t donor : out.donors) {
        const auto& donor_nbrs = fit.spec.graph.neighbors(donor);
        std::vector<std::size_t> perm(k);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::vector<std::size_t> best = perm;
        double best_cost = std::numeric_limits<double>::infinity();
        do {
            double cost = 0.0;
            for (std::size_t i = 0; i < k; ++i) {
                const Sensor& tn = layout[out.neighbors[i]];
                const Sensor& dn = layout[donor_nbrs[perm[i]]];
                cost += angle_between(tn.x - target.x, tn.y - target.y, dn.x - layout[donor].x,
                                      dn.y - layout[donor].y);
            }
            if (cost < best_cost - 1e-12) {
                best_cost = cost;
                best = perm;
            }
        } while (k <= 8 && std::next_permutation(perm.begin(), perm.end()));
        for (std::size_t i = 0; i < k; ++i)
            beta.col(static_cast<Eigen::Index>(i)) += fit.beta[donor].col(static_cast<Eigen::Index>(best[i]));
    }
    beta /= static_cast<double>(out.donors.size());

    const Eigen::MatrixXd& z = train.values();
    const auto T = z.cols();
    out.values = Eigen::VectorXd::Constant(T, kNaN);
    for (Eigen::Index t = b; t < T; ++t) {
        double v = 0.0;
        for (int w = 1; w <= b; ++w)
            for (std::size_t i = 0; i < k; ++i)
                v += beta(w - 1, static_cast<Eigen::Index>(i)) * z(static_cast<Eigen::Index>(out.neighbors[i]), t - w);
        out.values(t) = v;
    }
    return out;
}

SeparabilityReport separability_diagnostic(const SpatioTemporalField& field, const NeighborGraph& graph,
                                           const FcarSpec& fcar, const DiagnosticOptions& options)
{
    if (!(options.threshold > 1.0))
        throw Error("separability threshold must exceed 1");
    const std::vector<FcarSpec> specs(field.sensors(), fcar);
    const std::size_t t0 = static_cast<std::size_t>(std::max(2, fcar.p));

    SeparableOptions sep;
    sep.fcar = options.fcar;
    sep.support_start = t0;
    sep.threads = options.threads;
    FcsarOptions fo;
    fo.fcar = options.fcar;
    fo.support_start = t0;
    fo.threads = options.threads;

    SeparabilityReport r;
    r.label = options.label;
    r.threshold = options.threshold;
    r.st_rmse = fit_separable(field, FitOrder::space_then_time, graph, specs, sep).rmse;
    r.ts_rmse = fit_separable(field, FitOrder::time_then_space, graph, specs, sep).rmse;
    r.fcsar_b1_rmse = support_rmse(fit_fcsar(field, FcsarSpec::uniform(graph, 1, fcar), fo).residuals, t0);
    r.fcsar_b2_rmse = support_rmse(fit_fcsar(field, FcsarSpec::uniform(graph, 2, fcar), fo).residuals, t0);
    r.order_ratio = std::max(r.st_rmse, r.ts_rmse) / std::min(r.st_rmse, r.ts_rmse);
    r.verdict = r.order_ratio > r.threshold ? "separability not supported" : "separability plausible";
    return r;
}

void write_table1_csv(std::ostream& out, const std::vector<SeparabilityReport>& rows)
{
    out << "label,st_rmse,ts_rmse,fcsar_b1_rmse,fcsar_b2_rmse\n";
    for (const SeparabilityReport& r : rows)
        out << r.label << ',' << format_number(r.st_rmse) << ',' << format_number(r.ts_rmse) << ','
            << format_number(r.fcsar_b1_rmse) << ',' << format_number(r.fcsar_b2_rmse) << '\n';
}

void write_table1_csv(const std::string& path, const std::vector<SeparabilityReport>& rows)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot open '" + path + "' for writing");
    write_table1_csv(out, rows);
}

} // namespace solarst
