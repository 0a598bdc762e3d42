#include "fit_json.hpp"

#include "solarst/core.hpp"
#include "solarst/csv_io.hpp"
#include "solarst/error.hpp"
#include "solarst/evaluation.hpp"
#include "solarst/fcar.hpp"
#include "solarst/fcsar.hpp"
#include "solarst/parallel.hpp"
#include "solarst/simulation.hpp"
#include "solarst/spatial.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace solarst;
using solarst::cli::Json;

namespace {

constexpr double nan_value = std::numeric_limits<double>::quiet_NaN();

struct CommonArgs {
    std::string out = ".";
    int threads = 1;
    bool verbose = false;
};

struct DataArgs {
    std::string measurements;
    std::string layout;
    double window = 600.0;
    bool detrend = false;
    std::optional<double> detrend_bandwidth;
    int detrend_degree = 1;
    std::string label;
};

struct ModelArgs {
    int p = 2;
    int d = 1;
    bool intercept = false;
    std::optional<int> knots;
    std::optional<double> bandwidth;
    std::string kernel = "epanechnikov";
    int b = 2;
    int knn = 2;
    std::string weights = "row_standardized";

    FcarSpec fcar_spec() const { return FcarSpec{p, d, intercept}; }
    FcarOptions fcar_options() const
    {
        FcarOptions o;
        o.knots = knots;
        o.bandwidth = bandwidth;
        o.kernel = parse_kernel(kernel);
        return o;
    }
    NeighborGraph graph(const SensorLayout& layout) const
    {
        return NeighborGraph(layout, knn, parse_weight_style(weights));
    }
};

/// Non-fatal failure after parsing: runtime error, exit code 1.
struct OutputCheckFailed : Error {
    using Error::Error;
};

void log(const CommonArgs& common, const std::string& text)
{
    if (common.verbose)
        std::cerr << text << '\n';
}

std::string num(double v)
{
    return format_number(v);
}

std::string fixed(double v, int digits)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

void add_common(CLI::App* sub, CommonArgs& common)
{
    sub->add_option("--config", "key=value configuration file; command-line flags take precedence")
        ->check(CLI::ExistingFile);
    sub->add_option("--out", common.out, "Output directory")->capture_default_str();
    sub->add_option("--threads", common.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_flag("--verbose", common.verbose, "Progress messages on stderr");
}

void add_data(CLI::App* sub, DataArgs& data, bool window)
{
    sub->add_option("--measurements", data.measurements, "Measurements CSV (timestamp,sensor_id,value)")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--layout", data.layout, "Layout CSV (sensor_id,x_m,y_m)")->required()->check(CLI::ExistingFile);
    if (window)
        sub->add_option("--window", data.window, "Averaging window in seconds")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
    sub->add_flag("--detrend", data.detrend, "Remove the diurnal trend after averaging");
    sub->add_option("--detrend-bandwidth", data.detrend_bandwidth, "Detrending bandwidth in seconds")
        ->check(CLI::PositiveNumber);
    sub->add_option("--detrend-degree", data.detrend_degree, "Local polynomial degree (1 or 2)")
        ->check(CLI::Range(1, 2))
        ->capture_default_str();
    sub->add_option("--label", data.label, "Row label in report CSVs (default: measurements file stem)");
}

void add_model(CLI::App* sub, ModelArgs& model, bool spatial)
{
    sub->add_option("--p", model.p, "Autoregressive order")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--d", model.d, "Delay of the coefficient variable")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_flag("--intercept", model.intercept, "Estimate an intercept function m0(u)");
    sub->add_option("--knots", model.knots, "Interior spline knots")->check(CLI::PositiveNumber);
    sub->add_option("--bandwidth", model.bandwidth, "SBK bandwidth on the unit delay scale")
        ->check(CLI::PositiveNumber);
    sub->add_option("--kernel", model.kernel, "SBK kernel")
        ->check(CLI::IsMember({"epanechnikov", "gaussian"}))
        ->capture_default_str();
    if (!spatial)
        return;
    sub->add_option("--b", model.b, "Spatial time order")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--knn", model.knn, "Nearest neighbours per sensor")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--weights", model.weights, "SAR weight style")
        ->check(CLI::IsMember({"row_standardized", "row", "binary"}))
        ->capture_default_str();
}

/// Every option of `sub` with its resolved value, defaults included.
Json echo_options(const CLI::App* sub)
{
    Json out = Json::object();
    for (const CLI::Option* opt : sub->get_options()) {
        const std::string name = opt->get_single_name();
        if (name == "help" || name == "help-all" || name.empty())
            continue;
        if (opt->get_expected_max() == 0) {
            out[name] = opt->count() > 0;
            continue;
        }
        const auto& results = opt->results();
        if (!results.empty())
            out[name] = results.size() == 1 ? Json(results.front()) : Json(results);
        else if (!opt->get_default_str().empty())
            out[name] = opt->get_default_str();
        else
            out[name] = nullptr;
    }
    return out;
}

void write_run_json(const CommonArgs& common, const CLI::App* sub, const std::vector<std::string>& outputs,
                    const Json& extra = Json::object())
{
    Json run = Json::object();
    run["command"] = sub->get_name();
    run["options"] = echo_options(sub);
    run["rng"] = std::string(NormalRng::algorithm());
    run["outputs"] = outputs;
    for (const auto& [k, v] : extra.items())
        run[k] = v;
    cli::write_json((fs::path(common.out) / "run.json").string(), run);
}

std::string out_path(const CommonArgs& common, const std::string& name)
{
    return (fs::path(common.out) / name).string();
}

void ensure_out_dir(const CommonArgs& common)
{
    std::error_code ec;
    fs::create_directories(common.out, ec);
    if (ec || !fs::is_directory(common.out))
        throw Error("cannot create output directory '" + common.out + "'");
}

std::ofstream open_out(const std::string& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot open '" + path + "' for writing");
    return out;
}

SpatioTemporalField load_field(const DataArgs& data)
{
    const SensorLayout layout = read_layout_csv(data.layout);
    const auto records = read_measurements_csv(data.measurements);
    return ingest_field(records, layout);
}

SpatioTemporalField prepare(const SpatioTemporalField& field, double window, const DataArgs& data,
                            const CommonArgs& common)
{
    SpatioTemporalField out = time_average(field, window);
    log(common, "averaged to " + num(window) + " s: " + std::to_string(out.times()) + " time points");
    if (data.detrend) {
        DetrendOptions o;
        o.bandwidth = data.detrend_bandwidth;
        o.degree = data.detrend_degree;
        out = detrend(out.with_values(out.values(), FieldKind::raw), o).residuals;
    }
    return out;
}

std::string default_label(const DataArgs& data)
{
    return data.label.empty() ? fs::path(data.measurements).stem().string() : data.label;
}

void require_finite(const Eigen::MatrixXd& m, std::size_t support_start, const std::string& what)
{
    const auto n = m.cols() - static_cast<Eigen::Index>(support_start);
    if (!m.rightCols(n).allFinite())
        throw OutputCheckFailed(what + " contains non-finite values");
}

/// `t,sensor,observed,fitted` and `t,sensor,residual` over the support.
void write_fit_tables(const CommonArgs& common, const SpatioTemporalField& field, const Eigen::MatrixXd& fitted,
                      const Eigen::MatrixXd& residuals, std::size_t support_start)
{
    auto plot = open_out(out_path(common, "plot_data.csv"));
    auto res = open_out(out_path(common, "residuals.csv"));
    plot << "t,sensor,observed,fitted\n";
    res << "t,sensor,residual\n";
    const auto& layout = field.layout();
    for (std::size_t t = support_start; t < field.times(); ++t) {
        const auto tt = static_cast<Eigen::Index>(t);
        for (std::size_t s = 0; s < field.sensors(); ++s) {
            const auto ss = static_cast<Eigen::Index>(s);
            const std::string stamp = num(field.timestamps()[t]);
            plot << stamp << ',' << layout[s].id << ',' << num(field.values()(ss, tt)) << ','
                 << num(fitted(ss, tt)) << '\n';
            res << stamp << ',' << layout[s].id << ',' << num(residuals(ss, tt)) << '\n';
        }
    }
    if (!plot || !res)
        throw Error("failed writing fit tables");
}

struct ModelFit {
    Eigen::MatrixXd fitted;
    Eigen::MatrixXd residuals;
    std::size_t support_start = 0;
    double params = 0.0;
    Json detail;
};

ModelFit run_fcar(const SpatioTemporalField& field, const ModelArgs& model, int threads)
{
    const std::size_t S = field.sensors();
    std::vector<FcarFit> fits(S);
    const FcarSpec spec = model.fcar_spec();
    const FcarOptions options = model.fcar_options();
    parallel_for(S, threads, [&](std::size_t s) {
        const Eigen::VectorXd row = field.values().row(static_cast<Eigen::Index>(s)).transpose();
        try {
            fits[s] = fit_fcar(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())), spec,
                               options);
        } catch (const Error& e) {
            throw Error("sensor '" + field.layout()[s].id + "': " + e.what());
        }
    });
    ModelFit out;
    out.fitted = Eigen::MatrixXd::Constant(field.values().rows(), field.values().cols(), nan_value);
    out.residuals = out.fitted;
    Json list = Json::array();
    for (std::size_t s = 0; s < S; ++s) {
        out.support_start = std::max(out.support_start, fits[s].first);
        const auto first = static_cast<Eigen::Index>(fits[s].first);
        const auto row = static_cast<Eigen::Index>(s);
        out.fitted.row(row).segment(first, fits[s].fitted.size()) = fits[s].fitted.transpose();
        out.residuals.row(row).segment(first, fits[s].residuals.size()) = fits[s].residuals.transpose();
        out.params += fits[s].effective_params;
        list.push_back(cli::to_json(fits[s], field.layout()[s].id));
    }
    out.detail = Json{{"fcar", list}};
    return out;
}

ModelFit run_model(const std::string& name, const SpatioTemporalField& field, const ModelArgs& model, int threads)
{
    field.require_complete("model fitting");
    if (name == "fcar")
        return run_fcar(field, model, threads);
    const NeighborGraph graph = model.graph(field.layout());
    ModelFit out;
    if (name == "sar") {
        const SarResiduals sar = sar_fit_columns(field.values(), field.timestamps(), graph, threads);
        out.fitted = sar.fitted;
        out.residuals = sar.residuals;
        out.params = static_cast<double>(field.times());
        out.detail = Json{{"graph", cli::to_json(graph, field.layout())}, {"sar", cli::to_json(sar.trace)}};
        return out;
    }
    if (name == "fcsar") {
        FcsarOptions o;
        o.fcar = model.fcar_options();
        o.threads = threads;
        const FcsarFit fit = fit_fcsar(field, FcsarSpec::uniform(graph, model.b, model.fcar_spec()), o);
        out.fitted = fit.fitted;
        out.residuals = fit.residuals;
        out.support_start = fit.support_start;
        out.params = fit.total_params;
        out.detail = cli::to_json(fit, field.layout());
        return out;
    }
    SeparableOptions o;
    o.fcar = model.fcar_options();
    o.threads = threads;
    const std::vector<FcarSpec> specs(field.sensors(), model.fcar_spec());
    const SeparableFit fit = fit_separable(field, parse_fit_order(name), graph, specs, o);
    out.fitted = fit.fitted;
    out.residuals = fit.residuals;
    out.support_start = fit.support_start;
    out.params = fit.total_params;
    out.detail = cli::to_json(fit, field.layout());
    return out;
}

std::vector<double> parse_number_list(const std::string& text, const std::string& what)
{
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const double v = std::stod(item, &used);
            if (used != item.size() || !(v > 0.0))
                throw std::invalid_argument(item);
            out.push_back(v);
        } catch (const std::exception&) {
            throw CLI::ValidationError("--" + what, "expected positive numbers separated by commas, got '" + text + "'");
        }
    }
    if (out.empty())
        throw CLI::ValidationError("--" + what, "empty list");
    return out;
}

std::string day_label(double timestamp)
{
    using namespace std::chrono;
    const auto days = static_cast<int>(std::floor(timestamp / 86400.0));
    const year_month_day ymd{sys_days{std::chrono::days{days}}};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()));
    return buf;
}

/// Splits a field into calendar days (UTC).
std::vector<std::pair<std::string, SpatioTemporalField>> split_days(const SpatioTemporalField& field)
{
    std::vector<std::pair<std::string, SpatioTemporalField>> out;
    const auto& ts = field.timestamps();
    std::size_t start = 0;
    for (std::size_t t = 1; t <= ts.size(); ++t) {
        if (t < ts.size() && std::floor(ts[t] / 86400.0) == std::floor(ts[start] / 86400.0))
            continue;
        const auto n = static_cast<Eigen::Index>(t - start);
        std::vector<double> stamps(ts.begin() + static_cast<std::ptrdiff_t>(start),
                                   ts.begin() + static_cast<std::ptrdiff_t>(t));
        MissingMask mask;
        if (field.has_missing())
            mask = field.missing().middleCols(static_cast<Eigen::Index>(start), n);
        out.emplace_back(day_label(ts[start]),
                         SpatioTemporalField(field.layout(), std::move(stamps),
                                             field.values().middleCols(static_cast<Eigen::Index>(start), n),
                                             field.kind(), std::move(mask)));
        start = t;
    }
    return out;
}

std::string trim(const std::string& text)
{
    const auto begin = text.find_first_not_of(" \t\r");
    if (begin == std::string::npos)
        return "";
    const auto end = text.find_last_not_of(" \t\r");
    return text.substr(begin, end - begin + 1);
}

/// Arguments after the subcommand name, with the entries of `--config FILE`
/// inserted ahead of them unless the same option appears on the command line.
/// Lines are `key = value`; blank lines, `#`/`;` comments and `[section]`
/// headers are ignored.
std::vector<std::string> expand_config(std::vector<std::string> args)
{
    std::string path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size())
            path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0)
            path = args[i].substr(9);
    }
    if (path.empty())
        return args;
    std::ifstream in(path);
    if (!in)
        return args;
    const auto on_command_line = [&](const std::string& key) {
        for (const std::string& a : args)
            if (a == "--" + key || a.rfind("--" + key + "=", 0) == 0)
                return true;
        return false;
    };
    std::vector<std::string> extra;
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        line = trim(line);
        if (line.empty() || line[0] == '#' || line[0] == ';' || line[0] == '[')
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw CLI::ConversionError("config line " + std::to_string(number) + " is not key=value: " + line);
        const std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front())
            value = value.substr(1, value.size() - 2);
        if (key == "config" || on_command_line(key))
            continue;
        extra.push_back("--" + key + "=" + value);
    }
    auto pos = std::find_if(args.begin(), args.end(), [](const std::string& a) { return !a.starts_with("-"); });
    if (pos != args.end())
        ++pos;
    args.insert(pos, extra.begin(), extra.end());
    return args;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Semiparametric spatio-temporal models for irradiance sensor networks", "solarst"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Help for every subcommand");

    CommonArgs common;
    DataArgs data;
    ModelArgs model;

    // simulate
    auto* sim = app.add_subcommand("simulate", "Write a synthetic field (measurements.csv, layout.csv)");
    add_common(sim, common);
    std::string sim_mode = "advective";
    std::string regime = "partly_cloudy";
    std::uint64_t seed = 1;
    std::optional<std::size_t> sim_T;
    double dt = 600.0;
    double spacing = 10.0;
    double start_time = 0.0;
    std::optional<double> vx, vy, corr_len, ar, field_sd, noise_sd, fast_sd;
    sim->add_option("--mode", sim_mode, "advective, separable or expar2")
        ->check(CLI::IsMember({"advective", "separable", "expar2"}))
        ->capture_default_str();
    sim->add_option("--regime", regime, "clear, partly_cloudy or overcast")
        ->check(CLI::IsMember({"clear", "partly_cloudy", "partly-cloudy", "overcast"}))
        ->capture_default_str();
    sim->add_option("--seed", seed, "Random seed")->capture_default_str();
    sim->add_option("--T", sim_T, "Number of time points (default: one day, or 500 for expar2)")
        ->check(CLI::PositiveNumber);
    sim->add_option("--dt", dt, "Seconds between samples")->check(CLI::PositiveNumber)->capture_default_str();
    sim->add_option("--spacing", spacing, "Grid spacing in metres")->check(CLI::PositiveNumber)->capture_default_str();
    sim->add_option("--start-time", start_time, "First timestamp (epoch seconds)")->capture_default_str();
    sim->add_option("--velocity-x", vx, "Advection velocity, m/s");
    sim->add_option("--velocity-y", vy, "Advection velocity, m/s");
    sim->add_option("--correlation-length", corr_len, "Spatial correlation length, m")->check(CLI::PositiveNumber);
    sim->add_option("--ar", ar, "AR(1) coefficient per step")->check(CLI::Range(-0.999999, 0.999999));
    sim->add_option("--field-sd", field_sd, "Field standard deviation")->check(CLI::NonNegativeNumber);
    sim->add_option("--noise-sd", noise_sd, "AR noise sd (expar2: innovation sd)")->check(CLI::NonNegativeNumber);
    sim->add_option("--fast-noise-sd", fast_sd, "White noise sd")->check(CLI::NonNegativeNumber);

    // detrend
    auto* det = app.add_subcommand("detrend", "Remove the diurnal trend by local polynomial regression");
    add_common(det, common);
    det->add_option("--measurements", data.measurements, "Measurements CSV")->required()->check(CLI::ExistingFile);
    det->add_option("--layout", data.layout, "Layout CSV")->required()->check(CLI::ExistingFile);
    det->add_option("--bandwidth", data.detrend_bandwidth, "Bandwidth in seconds (default span/8)")
        ->check(CLI::PositiveNumber);
    det->add_option("--degree", data.detrend_degree, "Local polynomial degree (1 or 2)")
        ->check(CLI::Range(1, 2))
        ->capture_default_str();
    std::optional<double> det_window;
    det->add_option("--window", det_window, "Average to this window first (seconds)")->check(CLI::PositiveNumber);

    // fit
    auto* fit = app.add_subcommand("fit", "Fit a model and write fit.json, residuals and plot data");
    add_common(fit, common);
    add_data(fit, data, true);
    add_model(fit, model, true);
    std::string model_name = "fcsar";
    fit->add_option("--model", model_name, "fcar, sar, separable-st, separable-ts or fcsar")
        ->check(CLI::IsMember({"fcar", "sar", "separable-st", "separable-ts", "fcsar"}))
        ->capture_default_str();

    // crossval
    auto* cv = app.add_subcommand("crossval", "Leave-k-out prediction: FCSAR against natural neighbour");
    add_common(cv, common);
    add_data(cv, data, true);
    add_model(cv, model, true);
    std::vector<std::size_t> ks{1};
    std::size_t cap = 2000;
    std::uint64_t plan_seed = 1;
    cv->add_option("--k", ks, "Held-out counts (repeat or comma-separate)")
        ->delimiter(',')
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cv->add_option("--cap", cap, "Subsets per k before sampling")->check(CLI::PositiveNumber)->capture_default_str();
    cv->add_option("--seed", plan_seed, "Subset sampling seed")->capture_default_str();

    // diagnose
    auto* dia = app.add_subcommand("diagnose", "Separability diagnostic (both fit orders, FCSAR b=1,2)");
    add_common(dia, common);
    add_data(dia, data, true);
    add_model(dia, model, true);
    double threshold = 1.5;
    dia->add_option("--threshold", threshold, "Order-RMSE ratio above which separability is rejected")
        ->check(CLI::Range(1.0, std::numeric_limits<double>::max()))
        ->capture_default_str();

    // report
    auto* rep = app.add_subcommand("report", "FCSAR fits across averaging windows, one block of rows per day");
    add_common(rep, common);
    add_data(rep, data, false);
    add_model(rep, model, true);
    std::string windows_text = "30,60,300,600";
    rep->add_option("--windows", windows_text, "Averaging windows in seconds")->capture_default_str();

    try {
        std::vector<std::string> args = expand_config(std::vector<std::string>(argv + 1, argv + argc));
        std::reverse(args.begin(), args.end());
        app.parse(args);
        if (model.d > model.p && !model.intercept)
            throw CLI::ValidationError("--d", "delay must not exceed p without an intercept function");
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        ensure_out_dir(common);

        if (sim->parsed()) {
            SpatioTemporalField field = [&] {
                if (sim_mode == "expar2") {
                    Expar2Config cfg;
                    cfg.seed = seed;
                    if (sim_T)
                        cfg.T = *sim_T;
                    if (noise_sd)
                        cfg.noise_sd = *noise_sd;
                    const auto series = simulate_expar2(cfg);
                    Eigen::MatrixXd values(1, static_cast<Eigen::Index>(series.size()));
                    std::vector<double> times(series.size());
                    for (std::size_t t = 0; t < series.size(); ++t) {
                        values(0, static_cast<Eigen::Index>(t)) = series[t];
                        times[t] = start_time + dt * static_cast<double>(t);
                    }
                    return SpatioTemporalField(SensorLayout({Sensor{"X", 0.0, 0.0}}), std::move(times),
                                               std::move(values), FieldKind::detrended);
                }
                FieldSimConfig cfg = FieldSimConfig::preset(parse_regime(regime), parse_sim_mode(sim_mode), spacing, dt);
                cfg.seed = seed;
                cfg.start_time = start_time;
                if (sim_T)
                    cfg.T = *sim_T;
                if (vx)
                    cfg.velocity_x = *vx;
                if (vy)
                    cfg.velocity_y = *vy;
                if (corr_len)
                    cfg.correlation_length = *corr_len;
                if (ar)
                    cfg.ar_coefficient = *ar;
                if (field_sd)
                    cfg.field_sd = *field_sd;
                if (noise_sd)
                    cfg.noise_sd = *noise_sd;
                if (fast_sd)
                    cfg.fast_noise_sd = *fast_sd;
                for (const std::string& w : field_sim_warnings(cfg))
                    std::cerr << "warning: " << w << '\n';
                return simulate_field(cfg);
            }();
            write_measurements_csv(out_path(common, "measurements.csv"), field);
            write_layout_csv(out_path(common, "layout.csv"), field.layout());
            write_run_json(common, sim, {"measurements.csv", "layout.csv"});
            const auto& v = field.values();
            const double mean = v.mean();
            const double sd = std::sqrt((v.array() - mean).square().sum() / static_cast<double>(v.size()));
            std::cout << "sensors=" << field.sensors() << " times=" << field.times() << " mean=" << fixed(mean, 4)
                      << " sd=" << fixed(sd, 4) << " min=" << fixed(v.minCoeff(), 4)
                      << " max=" << fixed(v.maxCoeff(), 4) << '\n';
            return 0;
        }

        if (det->parsed()) {
            SpatioTemporalField field = load_field(data);
            if (det_window)
                field = time_average(field, *det_window);
            DetrendOptions o;
            o.bandwidth = data.detrend_bandwidth;
            o.degree = data.detrend_degree;
            const DetrendResult result = detrend(field, o);
            write_measurements_csv(out_path(common, "detrended.csv"), result.residuals);
            auto trend = open_out(out_path(common, "trend.csv"));
            trend << "t,sensor,trend\n";
            for (std::size_t t = 0; t < field.times(); ++t)
                for (std::size_t s = 0; s < field.sensors(); ++s)
                    trend << num(field.timestamps()[t]) << ',' << field.layout()[s].id << ','
                          << num(result.trend.trend(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t)))
                          << '\n';
            if (!trend)
                throw Error("failed writing trend.csv");
            write_run_json(common, det, {"detrended.csv", "trend.csv"},
                           Json{{"bandwidth_used", result.trend.bandwidth}});
            std::cout << "bandwidth=" << num(result.trend.bandwidth) << " s\n";
            return 0;
        }

        const SpatioTemporalField raw = load_field(data);
        const std::string label = default_label(data);

        if (fit->parsed()) {
            const SpatioTemporalField field = prepare(raw, data.window, data, common);
            const ModelFit mf = run_model(model_name, field, model, common.threads);
            require_finite(mf.fitted, mf.support_start, "fitted values");
            const double e = rmse(field.values(), mf.fitted, mf.support_start);
            const double r2 = adjusted_r2(field.values(), mf.fitted, mf.params, mf.support_start);
            Json fit_json = Json::object();
            fit_json["model"] = model_name;
            fit_json["label"] = label;
            fit_json["window"] = data.window;
            fit_json["sensors"] = field.sensors();
            fit_json["times"] = field.times();
            fit_json["support_start"] = mf.support_start;
            fit_json["rmse"] = e;
            fit_json["adj_r2"] = r2;
            fit_json["effective_params"] = mf.params;
            fit_json["spec"] = cli::to_json(model.fcar_spec());
            for (const auto& [k, v] : mf.detail.items())
                fit_json[k] = v;
            cli::write_json(out_path(common, "fit.json"), fit_json);
            write_fit_tables(common, field, mf.fitted, mf.residuals, mf.support_start);
            write_run_json(common, fit, {"fit.json", "residuals.csv", "plot_data.csv"});
            std::cout << "label=" << label << " model=" << model_name << " window=" << num(data.window)
                      << " rmse=" << fixed(e, 4) << " adj_r2=" << fixed(r2, 4) << " table=\"" << format_rmse_r2(e, r2)
                      << "\"\n";
            return 0;
        }

        if (cv->parsed()) {
            const SpatioTemporalField field = prepare(raw, data.window, data, common);
            CrossvalSpec spec;
            spec.b = model.b;
            spec.knn = model.knn;
            spec.fcar = model.fcar_spec();
            spec.fcar_options = model.fcar_options();
            spec.support_start = static_cast<std::size_t>(std::max(model.b, model.p));
            spec.threads = common.threads;
            std::vector<Fig8Row> rows;
            auto detail = open_out(out_path(common, "crossval.csv"));
            detail << "k,subset,fcsar_rmpe,nn_rmpe\n";
            for (std::size_t k : ks) {
                const CrossvalPlan plan = make_crossval_plan(field.sensors(), k, cap, plan_seed);
                log(common, "k=" + std::to_string(k) + ": " + std::to_string(plan.subsets.size()) + " subsets");
                const MetricsReport a = crossval(field, plan, PredictionModel::fcsar, spec);
                const MetricsReport b = crossval(field, plan, PredictionModel::natural_neighbor, spec);
                const double ratio = rmpe_ratio(a, b);
                if (!std::isfinite(ratio))
                    throw OutputCheckFailed("non-finite RMPE ratio at k=" + std::to_string(k));
                rows.push_back({label, k, ratio});
                for (std::size_t i = 0; i < plan.subsets.size(); ++i) {
                    std::string ids;
                    for (std::size_t s : plan.subsets[i])
                        ids += (ids.empty() ? "" : " ") + field.layout()[s].id;
                    detail << k << ',' << ids << ',' << num(a.rmpe[i]) << ',' << num(b.rmpe[i]) << '\n';
                }
                std::cout << "label=" << label << " k=" << k << " subsets=" << plan.subsets.size()
                          << (plan.sampled ? " (sampled)" : "") << " fcsar_rmpe=" << fixed(a.mean_rmpe, 6)
                          << " nn_rmpe=" << fixed(b.mean_rmpe, 6) << " ratio=" << fixed(ratio, 4)
                          << " hull_fallbacks=" << b.hull_fallbacks << '\n';
            }
            if (!detail)
                throw Error("failed writing crossval.csv");
            write_fig8_csv(out_path(common, "fig8.csv"), rows);
            write_run_json(common, cv, {"fig8.csv", "crossval.csv"});
            return 0;
        }

        if (dia->parsed()) {
            const SpatioTemporalField field = prepare(raw, data.window, data, common);
            DiagnosticOptions o;
            o.fcar = model.fcar_options();
            o.threshold = threshold;
            o.threads = common.threads;
            o.label = label;
            const SeparabilityReport r =
                separability_diagnostic(field, model.graph(field.layout()), model.fcar_spec(), o);
            for (double v : {r.st_rmse, r.ts_rmse, r.fcsar_b1_rmse, r.fcsar_b2_rmse})
                if (!std::isfinite(v))
                    throw OutputCheckFailed("non-finite RMSE in the diagnostic");
            write_table1_csv(out_path(common, "table1.csv"), {r});
            cli::write_json(out_path(common, "diagnostic.json"), cli::to_json(r));
            write_run_json(common, dia, {"table1.csv", "diagnostic.json"});
            std::cout << "label=" << label << " st=" << fixed(r.st_rmse, 4) << " ts=" << fixed(r.ts_rmse, 4)
                      << " b1=" << fixed(r.fcsar_b1_rmse, 4) << " b2=" << fixed(r.fcsar_b2_rmse, 4)
                      << " ratio=" << fixed(r.order_ratio, 3) << " verdict=\"" << r.verdict << "\"\n";
            return 0;
        }

        if (rep->parsed()) {
            const std::vector<double> windows = parse_number_list(windows_text, "windows");
            const auto days = split_days(raw);
            std::vector<Table2Row> rows;
            for (const auto& [day, day_field] : days) {
                const std::string row_label = days.size() == 1 && !data.label.empty() ? data.label
                                              : data.label.empty()                  ? day
                                                                                    : data.label + " " + day;
                for (double w : windows) {
                    const SpatioTemporalField field = prepare(day_field, w, data, common);
                    const ModelFit mf = run_model("fcsar", field, model, common.threads);
                    require_finite(mf.fitted, mf.support_start, "fitted values");
                    const double e = rmse(field.values(), mf.fitted, mf.support_start);
                    const double r2 = adjusted_r2(field.values(), mf.fitted, mf.params, mf.support_start);
                    rows.push_back({row_label, w, e, r2});
                    std::cout << "label=" << row_label << " window=" << num(w) << " times=" << field.times()
                              << " rmse=" << fixed(e, 4) << " adj_r2=" << fixed(r2, 4) << " table=\""
                              << format_rmse_r2(e, r2) << "\"\n";
                }
            }
            write_table2_csv(out_path(common, "table2.csv"), rows);
            write_run_json(common, rep, {"table2.csv"});
            return 0;
        }
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
