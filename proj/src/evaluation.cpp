#include "solarst/evaluation.hpp"

#include "solarst/csv_io.hpp"
#include "solarst/error.hpp"
#include "solarst/fcsar.hpp"
#include "solarst/parallel.hpp"
#include "solarst/voronoi.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <set>

namespace solarst {

namespace {

void check_shapes(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, std::size_t support_start)
{
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw Error("shape mismatch: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                    std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    if (support_start >= static_cast<std::size_t>(a.cols()))
        throw Error("support start leaves no time points");
}

std::ofstream open_output(const std::string& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot open '" + path + "' for writing");
    return out;
}

std::string subset_text(const std::vector<std::size_t>& omega, const SensorLayout& layout)
{
    std::string s = "{";
    for (std::size_t i = 0; i < omega.size(); ++i)
        s += (i ? "," : "") + layout[omega[i]].id;
    return s + "}";
}

} // namespace

double rmse(const Eigen::MatrixXd& observed, const Eigen::MatrixXd& fitted, std::size_t support_start)
{
    check_shapes(observed, fitted, support_start);
    const auto n = observed.cols() - static_cast<Eigen::Index>(support_start);
    const double ss = (observed.rightCols(n) - fitted.rightCols(n)).squaredNorm();
    return std::sqrt(ss / static_cast<double>(observed.rows() * n));
}

double rmpe(const Eigen::MatrixXd& observed, const Eigen::MatrixXd& predicted, const std::vector<std::size_t>& omega,
            std::size_t support_start)
{
    check_shapes(observed, predicted, support_start);
    if (omega.empty())
        throw Error("RMPE needs at least one held-out sensor");
    const auto n = observed.cols() - static_cast<Eigen::Index>(support_start);
    double ss = 0.0;
    for (std::size_t s : omega) {
        if (s >= static_cast<std::size_t>(observed.rows()))
            throw Error("held-out sensor index out of range");
        const auto row = static_cast<Eigen::Index>(s);
        const auto diff = (predicted.row(row).tail(n) - observed.row(row).tail(n)).eval();
        if (!diff.allFinite())
            throw Error("missing prediction for held-out sensor " + std::to_string(s));
        ss += diff.squaredNorm();
    }
    return ss / (static_cast<double>(n) * static_cast<double>(omega.size()));
}

double rmpe_rooted(const Eigen::MatrixXd& observed, const Eigen::MatrixXd& predicted,
                   const std::vector<std::size_t>& omega, std::size_t support_start)
{
    return std::sqrt(rmpe(observed, predicted, omega, support_start));
}

double adjusted_r2(const Eigen::MatrixXd& observed, const Eigen::MatrixXd& fitted, double nu_fit,
                   std::size_t support_start)
{
    check_shapes(observed, fitted, support_start);
    const auto n = observed.cols() - static_cast<Eigen::Index>(support_start);
    const double ts = static_cast<double>(observed.rows() * n);
    if (!(nu_fit < ts) || nu_fit < 0.0)
        throw Error("effective parameter count must lie in [0, TS)");
    const auto obs = observed.rightCols(n);
    const double mean = obs.mean();
    const double ss_total = (obs.array() - mean).square().sum();
    if (!(ss_total > 0.0))
        throw Error("adjusted R2 undefined for a constant field");
    const double ss_fit = (obs - fitted.rightCols(n)).squaredNorm();
    return 1.0 - (ss_fit / (ts - nu_fit)) / (ss_total / ts);
}

std::string format_rmse_r2(double rmse_value, double adj_r2)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f (%.3f)", rmse_value, adj_r2);
    return buf;
}

std::size_t binomial(std::size_t n, std::size_t k)
{
    if (k > n)
        return 0;
    k = std::min(k, n - k);
    std::size_t r = 1;
    for (std::size_t i = 1; i <= k; ++i) {
        const std::size_t num = n - k + i;
        if (r > std::numeric_limits<std::size_t>::max() / num)
            return std::numeric_limits<std::size_t>::max();
        r = r * num / i;
    }
    return r;
}

CrossvalPlan make_crossval_plan(std::size_t sensors, std::size_t k, std::size_t cap, std::uint64_t seed)
{
    if (k < 1 || k >= sensors)
        throw Error("held-out count k must satisfy 1 <= k < S");
    if (cap < 1)
        throw Error("subset cap must be positive");
    CrossvalPlan plan;
    plan.sensors = sensors;
    plan.k = k;
    plan.cap = cap;
    plan.seed = seed;
    const std::size_t total = binomial(sensors, k);
    if (total <= cap) {
        std::vector<bool> pick(sensors, false);
        std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(k), true);
        do {
            std::vector<std::size_t> subset;
            for (std::size_t i = 0; i < sensors; ++i)
                if (pick[i])
                    subset.push_back(i);
            plan.subsets.push_back(std::move(subset));
        } while (std::prev_permutation(pick.begin(), pick.end()));
        return plan;
    }
    plan.sampled = true;
    std::mt19937_64 rng(seed);
    std::set<std::vector<std::size_t>> seen;
    std::vector<std::size_t> all(sensors);
    std::iota(all.begin(), all.end(), std::size_t{0});
    while (plan.subsets.size() < cap) {
        // partial Fisher-Yates with an explicit draw so the sequence is portable
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng() % (sensors - i));
            std::swap(all[i], all[j]);
        }
        std::vector<std::size_t> subset(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));
        std::sort(subset.begin(), subset.end());
        if (seen.insert(subset).second)
            plan.subsets.push_back(std::move(subset));
    }
    return plan;
}

std::string to_string(PredictionModel model)
{
    return model == PredictionModel::fcsar ? "fcsar" : "natural_neighbor";
}

MetricsReport crossval(const SpatioTemporalField& field, const CrossvalPlan& plan, PredictionModel model,
                       const CrossvalSpec& spec)
{
    field.require_complete("cross-validation");
    const std::size_t S = field.sensors();
    if (plan.sensors != S)
        throw Error("cross-validation plan was built for " + std::to_string(plan.sensors) + " sensors, field has " +
                    std::to_string(S));
    if (model == PredictionModel::fcsar && spec.support_start < static_cast<std::size_t>(spec.b))
        throw Error("RMPE support must start at or after b");

    MetricsReport report;
    report.model = model;
    report.k = plan.k;
    report.subsets = plan.subsets;
    report.rmpe.resize(plan.subsets.size());
    report.rmpe_rooted.resize(plan.subsets.size());
    std::vector<int> fallback(plan.subsets.size(), 0);

    parallel_for(plan.subsets.size(), spec.threads, [&](std::size_t i) {
        const auto& omega = plan.subsets[i];
        for (std::size_t s : omega)
            if (s >= S)
                throw Error("cross-validation subset references sensor index " + std::to_string(s));
        try {
            std::vector<std::size_t> keep;
            for (std::size_t s = 0; s < S; ++s)
                if (!std::binary_search(omega.begin(), omega.end(), s))
                    keep.push_back(s);
            const SpatioTemporalField train = field.select_sensors(keep);
            Eigen::MatrixXd predicted = Eigen::MatrixXd::Constant(field.values().rows(), field.values().cols(),
                                                                  std::numeric_limits<double>::quiet_NaN());
            if (model == PredictionModel::natural_neighbor) {
                for (std::size_t s : omega) {
                    const Sensor& target = field.layout()[s];
                    const auto p = natural_neighbor_predict(train, {target.x, target.y});
                    fallback[i] |= p.weights.hull_fallback ? 1 : 0;
                    predicted.row(static_cast<Eigen::Index>(s)) = p.values.transpose();
                }
            } else {
                const NeighborGraph graph(train.layout(), spec.knn);
                FcsarOptions options;
                options.fcar = spec.fcar_options;
                const FcsarFit fit = fit_fcsar(train, FcsarSpec::uniform(graph, spec.b, spec.fcar), options);
                for (std::size_t s : omega)
                    predicted.row(static_cast<Eigen::Index>(s)) =
                        predict_missing_sensor(fit, train, field.layout()[s]).values.transpose();
            }
            report.rmpe[i] = rmpe(field.values(), predicted, omega, spec.support_start);
            report.rmpe_rooted[i] = std::sqrt(report.rmpe[i]);
        } catch (const Error& e) {
            throw Error("cross-validation failed for held-out set " + subset_text(omega, field.layout()) + ": " +
                        e.what());
        }
    });

    const double count = static_cast<double>(plan.subsets.size());
    report.mean_rmpe = std::accumulate(report.rmpe.begin(), report.rmpe.end(), 0.0) / count;
    report.mean_rmpe_rooted = std::accumulate(report.rmpe_rooted.begin(), report.rmpe_rooted.end(), 0.0) / count;
    report.hull_fallbacks = static_cast<std::size_t>(std::count(fallback.begin(), fallback.end(), 1));
    return report;
}

double rmpe_ratio(const MetricsReport& a, const MetricsReport& b)
{
    if (a.subsets != b.subsets)
        throw Error("RMPE ratio needs reports from the same cross-validation plan");
    if (b.mean_rmpe == 0.0)
        throw Error("RMPE ratio undefined: reference mean RMPE is zero");
    return a.mean_rmpe / b.mean_rmpe;
}

void write_table2_csv(std::ostream& out, const std::vector<Table2Row>& rows)
{
    out << "label,window,rmse,adj_r2\n";
    for (const Table2Row& r : rows)
        out << r.label << ',' << format_number(r.window) << ',' << format_number(r.rmse) << ','
            << format_number(r.adj_r2) << '\n';
}

void write_table2_csv(const std::string& path, const std::vector<Table2Row>& rows)
{
    auto out = open_output(path);
    write_table2_csv(out, rows);
}

void write_fig8_csv(std::ostream& out, const std::vector<Fig8Row>& rows)
{
    out << "label,k,ratio\n";
    for (const Fig8Row& r : rows)
        out << r.label << ',' << r.k << ',' << format_number(r.ratio) << '\n';
}

void write_fig8_csv(const std::string& path, const std::vector<Fig8Row>& rows)
{
    auto out = open_output(path);
    write_fig8_csv(out, rows);
}

} // namespace solarst
