#include "fit_json.hpp"

#include "solarst/error.hpp"

#include <cmath>
#include <fstream>

namespace solarst::cli {

namespace {

Json number(double v)
{
    return std::isfinite(v) ? Json(v) : Json(nullptr);
}

Json vector_json(const Eigen::VectorXd& v)
{
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i)
        out.push_back(number(v(i)));
    return out;
}

Json vector_json(const std::vector<double>& v)
{
    Json out = Json::array();
    for (double x : v)
        out.push_back(number(x));
    return out;
}

Json fcar_list(const std::vector<FcarFit>& fits, const SensorLayout& layout)
{
    Json out = Json::array();
    for (std::size_t s = 0; s < fits.size(); ++s)
        out.push_back(to_json(fits[s], layout[s].id));
    return out;
}

} // namespace

Json to_json(const FcarSpec& spec)
{
    return Json{{"p", spec.p}, {"d", spec.d}, {"intercept_function", spec.intercept_function}};
}

Json to_json(const FcarFit& fit, const std::string& sensor_id)
{
    Json curves = Json::array();
    for (const SbkCurve& c : fit.curves) {
        Json u = Json::array();
        for (Eigen::Index i = 0; i < c.grid.size(); ++i)
            u.push_back(fit.u_map.from_unit(c.grid(i)));
        Json reliable = Json::array();
        for (bool r : c.reliable)
            reliable.push_back(r);
        curves.push_back(Json{{"lag", c.lag},
                              {"u", u},
                              {"estimate", vector_json(c.estimate)},
                              {"se", vector_json(c.se)},
                              {"lower", vector_json(c.lower)},
                              {"upper", vector_json(c.upper)},
                              {"reliable", reliable}});
    }
    const auto range = fit.reliable_range();
    return Json{{"sensor", sensor_id},
                {"spec", to_json(fit.spec)},
                {"first", fit.first},
                {"knots", fit.spline.basis.interior_knots()},
                {"spline_rank", fit.spline.rank},
                {"bandwidth", number(fit.bandwidth_data_scale())},
                {"kernel", to_string(fit.kernel)},
                {"effective_params", number(fit.effective_params)},
                {"residual_variance", number(fit.residual_variance())},
                {"reliable_range", Json::array({number(range.first), number(range.second)})},
                {"curves", curves}};
}

Json to_json(const SarTrace& trace)
{
    return Json{{"t", vector_json(trace.timestamps)},
                {"rho", vector_json(trace.rho)},
                {"sigma2", vector_json(trace.sigma2)},
                {"loglik", vector_json(trace.loglik)}};
}

Json to_json(const NeighborGraph& graph, const SensorLayout& layout)
{
    Json lists = Json::object();
    for (std::size_t s = 0; s < graph.size(); ++s) {
        Json ids = Json::array();
        for (std::size_t n : graph.neighbors(s))
            ids.push_back(layout[n].id);
        lists[layout[s].id] = ids;
    }
    return Json{{"k", graph.k()},
                {"weights", to_string(graph.style())},
                {"rho_interval", Json::array({number(graph.rho_lower()), number(graph.rho_upper())})},
                {"neighbors", lists}};
}

Json to_json(const FcsarFit& fit, const SensorLayout& layout)
{
    Json beta = Json::object();
    for (std::size_t s = 0; s < fit.beta.size(); ++s) {
        Json rows = Json::array();
        for (Eigen::Index w = 0; w < fit.beta[s].rows(); ++w)
            rows.push_back(vector_json(Eigen::VectorXd(fit.beta[s].row(w).transpose())));
        beta[layout[s].id] = rows;
    }
    return Json{{"b", fit.spec.b},
                {"effective_b", fit.effective_b},
                {"support_start", fit.support_start},
                {"total_params", number(fit.total_params)},
                {"graph", to_json(fit.spec.graph, layout)},
                {"beta", beta},
                {"fcar", fcar_list(fit.fcar_fits, layout)}};
}

Json to_json(const SeparableFit& fit, const SensorLayout& layout)
{
    return Json{{"order", to_string(fit.order)},
                {"support_start", fit.support_start},
                {"stage_one_rmse", number(fit.stage_one_rmse)},
                {"total_params", number(fit.total_params)},
                {"sar", to_json(fit.sar)},
                {"fcar", fcar_list(fit.fcar_fits, layout)}};
}

Json to_json(const SeparabilityReport& report)
{
    return Json{{"label", report.label},
                {"st_rmse", number(report.st_rmse)},
                {"ts_rmse", number(report.ts_rmse)},
                {"fcsar_b1_rmse", number(report.fcsar_b1_rmse)},
                {"fcsar_b2_rmse", number(report.fcsar_b2_rmse)},
                {"order_ratio", number(report.order_ratio)},
                {"threshold", report.threshold},
                {"verdict", report.verdict}};
}

void write_json(const std::string& path, const Json& value)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot open '" + path + "' for writing");
    out << value.dump(2) << '\n';
    if (!out)
        throw Error("failed writing '" + path + "'");
}

} // namespace solarst::cli
