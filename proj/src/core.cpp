#include "solarst/core.hpp"

#include "solarst/error.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

namespace solarst {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string describe_time(double t)
{
    std::ostringstream os;
    os << std::setprecision(15) << t;
    return os.str();
}

} // namespace

SensorLayout::SensorLayout(std::vector<Sensor> sensors)
    : sensors_(std::move(sensors))
{
    if (sensors_.empty())
        throw Error("sensor layout is empty");
    for (std::size_t i = 0; i < sensors_.size(); ++i) {
        const Sensor& s = sensors_[i];
        if (s.id.empty())
            throw Error("sensor at position " + std::to_string(i) + " has an empty id");
        if (!std::isfinite(s.x) || !std::isfinite(s.y))
            throw Error("sensor '" + s.id + "' has non-finite coordinates");
        if (!index_.emplace(s.id, i).second)
            throw Error("duplicate sensor id '" + s.id + "'");
    }
    for (std::size_t i = 0; i < sensors_.size(); ++i)
        for (std::size_t j = i + 1; j < sensors_.size(); ++j)
            if (sensors_[i].x == sensors_[j].x && sensors_[i].y == sensors_[j].y)
                throw Error("duplicate coordinates for sensors '" + sensors_[i].id + "' and '" +
                            sensors_[j].id + "'");
}

std::optional<std::size_t> SensorLayout::find(std::string_view id) const
{
    auto it = index_.find(std::string(id));
    if (it == index_.end())
        return std::nullopt;
    return it->second;
}

std::size_t SensorLayout::index_of(std::string_view id) const
{
    if (auto i = find(id))
        return *i;
    throw Error("unknown sensor '" + std::string(id) + "'");
}

SensorLayout SensorLayout::subset(std::span<const std::size_t> indices) const
{
    std::vector<Sensor> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) {
        if (i >= sensors_.size())
            throw Error("sensor index out of range");
        out.push_back(sensors_[i]);
    }
    return SensorLayout(std::move(out));
}

SensorLayout SensorLayout::without(std::span<const std::size_t> excluded) const
{
    std::vector<Sensor> out;
    for (std::size_t i = 0; i < sensors_.size(); ++i)
        if (std::find(excluded.begin(), excluded.end(), i) == excluded.end())
            out.push_back(sensors_[i]);
    return SensorLayout(std::move(out));
}

SensorLayout grid_layout(int rows, int cols, double spacing)
{
    if (rows < 1 || cols < 1 || !(spacing > 0.0))
        throw Error("grid layout needs positive rows, cols and spacing");
    const int width = rows * cols > 100 ? 3 : 2;
    std::vector<Sensor> sensors;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            std::ostringstream id;
            id << 'S' << std::setw(width) << std::setfill('0') << r * cols + c;
            sensors.push_back({id.str(), c * spacing, r * spacing});
        }
    return SensorLayout(std::move(sensors));
}

std::string to_string(FieldKind kind)
{
    switch (kind) {
    case FieldKind::raw: return "raw";
    case FieldKind::detrended: return "detrended";
    case FieldKind::residual: return "residual";
    }
    return "raw";
}

FieldKind parse_field_kind(std::string_view name)
{
    if (name == "raw")
        return FieldKind::raw;
    if (name == "detrended")
        return FieldKind::detrended;
    if (name == "residual")
        return FieldKind::residual;
    throw Error("unknown field kind '" + std::string(name) + "'");
}

SpatioTemporalField::SpatioTemporalField(SensorLayout layout, std::vector<double> timestamps,
                                         Eigen::MatrixXd values, FieldKind kind, MissingMask missing)
    : layout_(std::move(layout))
    , timestamps_(std::move(timestamps))
    , values_(std::move(values))
    , kind_(kind)
    , missing_(std::move(missing))
{
    if (static_cast<std::size_t>(values_.rows()) != layout_.size())
        throw Error("field has " + std::to_string(values_.rows()) + " rows but layout has " +
                    std::to_string(layout_.size()) + " sensors");
    if (static_cast<std::size_t>(values_.cols()) != timestamps_.size())
        throw Error("field has " + std::to_string(values_.cols()) + " columns but " +
                    std::to_string(timestamps_.size()) + " timestamps");
    for (std::size_t t = 1; t < timestamps_.size(); ++t)
        if (!(timestamps_[t] > timestamps_[t - 1]))
            throw Error("timestamps must be strictly increasing (index " + std::to_string(t) + ")");
    if (missing_.size() == 0)
        missing_ = MissingMask::Constant(values_.rows(), values_.cols(), false);
    if (missing_.rows() != values_.rows() || missing_.cols() != values_.cols())
        throw Error("missing-value mask does not match field dimensions");
    for (Eigen::Index s = 0; s < values_.rows(); ++s)
        for (Eigen::Index t = 0; t < values_.cols(); ++t) {
            if (missing_(s, t))
                values_(s, t) = kNaN;
            else if (!std::isfinite(values_(s, t)))
                throw Error("non-finite value for sensor '" + layout_[s].id + "' at time " +
                            describe_time(timestamps_[t]) + " is not marked missing");
        }
}

bool SpatioTemporalField::has_missing() const { return missing_.any(); }

bool SpatioTemporalField::is_missing(std::size_t s, std::size_t t) const
{
    return missing_(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t));
}

void SpatioTemporalField::require_complete(std::string_view what) const
{
    if (has_missing())
        throw Error(std::string(what) + " requires a complete field (missing values present)");
}

double SpatioTemporalField::spacing() const
{
    if (timestamps_.size() < 2)
        throw Error("field needs at least two timestamps to define a spacing");
    const double dt = timestamps_[1] - timestamps_[0];
    for (std::size_t t = 2; t < timestamps_.size(); ++t) {
        const double step = timestamps_[t] - timestamps_[t - 1];
        if (std::abs(step - dt) > 1e-9 * std::max(1.0, std::abs(dt)))
            throw Error("timestamps are not uniformly spaced (index " + std::to_string(t) + ")");
    }
    return dt;
}

SpatioTemporalField SpatioTemporalField::select_sensors(std::span<const std::size_t> indices) const
{
    Eigen::MatrixXd v(static_cast<Eigen::Index>(indices.size()), values_.cols());
    MissingMask m(static_cast<Eigen::Index>(indices.size()), values_.cols());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        v.row(static_cast<Eigen::Index>(r)) = values_.row(static_cast<Eigen::Index>(indices[r]));
        m.row(static_cast<Eigen::Index>(r)) = missing_.row(static_cast<Eigen::Index>(indices[r]));
    }
    return SpatioTemporalField(layout_.subset(indices), timestamps_, std::move(v), kind_, std::move(m));
}

SpatioTemporalField SpatioTemporalField::with_values(Eigen::MatrixXd values, FieldKind kind) const
{
    return SpatioTemporalField(layout_, timestamps_, std::move(values), kind, missing_);
}

SpatioTemporalField ingest_field(std::span<const Measurement> records, const SensorLayout& layout)
{
    if (records.empty())
        throw Error("empty input: no measurement records");
    if (layout.empty())
        throw Error("empty sensor layout");

    std::vector<double> last(layout.size(), -std::numeric_limits<double>::infinity());
    std::map<double, std::size_t> times;
    for (const Measurement& m : records) {
        const auto idx = layout.find(m.sensor_id);
        if (!idx)
            throw Error("unknown sensor '" + m.sensor_id + "'");
        if (!std::isfinite(m.timestamp))
            throw Error("non-finite timestamp for sensor '" + m.sensor_id + "'");
        if (m.timestamp == last[*idx])
            throw Error("duplicate record for sensor '" + m.sensor_id + "' at time " +
                        describe_time(m.timestamp));
        if (m.timestamp < last[*idx])
            throw Error("non-monotone timestamps for sensor '" + m.sensor_id + "' at time " +
                        describe_time(m.timestamp));
        last[*idx] = m.timestamp;
        times.emplace(m.timestamp, 0);
    }

    std::vector<double> timestamps;
    timestamps.reserve(times.size());
    for (auto& [t, col] : times) {
        col = timestamps.size();
        timestamps.push_back(t);
    }

    const auto S = static_cast<Eigen::Index>(layout.size());
    const auto T = static_cast<Eigen::Index>(timestamps.size());
    Eigen::MatrixXd values = Eigen::MatrixXd::Constant(S, T, kNaN);
    MissingMask missing = MissingMask::Constant(S, T, true);
    for (const Measurement& m : records) {
        const auto s = static_cast<Eigen::Index>(layout.index_of(m.sensor_id));
        const auto t = static_cast<Eigen::Index>(times.at(m.timestamp));
        if (m.value) {
            if (!std::isfinite(*m.value))
                throw Error("non-finite value for sensor '" + m.sensor_id + "'");
            values(s, t) = *m.value;
            missing(s, t) = false;
        }
    }
    return SpatioTemporalField(layout, std::move(timestamps), std::move(values), FieldKind::raw,
                               std::move(missing));
}

std::vector<Measurement> to_measurements(const SpatioTemporalField& field)
{
    std::vector<Measurement> out;
    out.reserve(field.sensors() * field.times());
    for (std::size_t t = 0; t < field.times(); ++t)
        for (std::size_t s = 0; s < field.sensors(); ++s) {
            Measurement m{field.timestamps()[t], field.layout()[s].id, std::nullopt};
            if (!field.is_missing(s, t))
                m.value = field.values()(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t));
            out.push_back(std::move(m));
        }
    return out;
}

SpatioTemporalField time_average(const SpatioTemporalField& field, double window)
{
    if (field.kind() == FieldKind::residual)
        throw Error("time averaging expects a raw or detrended field");
    const double dt = field.spacing();
    if (!(window > 0.0) || window < dt * (1.0 - 1e-9))
        throw Error("averaging window smaller than the native spacing");
    const double ratio = window / dt;
    const double n_round = std::round(ratio);
    if (std::abs(ratio - n_round) > 1e-9 * ratio)
        throw Error("averaging window is not a multiple of the native spacing");

    const auto n = static_cast<std::size_t>(n_round);
    const std::size_t blocks = field.times() / n;
    if (blocks == 0)
        throw Error("averaging window longer than the series");

    const auto S = static_cast<Eigen::Index>(field.sensors());
    Eigen::MatrixXd out(S, static_cast<Eigen::Index>(blocks));
    MissingMask missing(S, static_cast<Eigen::Index>(blocks));
    std::vector<double> stamps(blocks);
    for (std::size_t b = 0; b < blocks; ++b) {
        double tsum = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            tsum += field.timestamps()[b * n + i];
        stamps[b] = tsum / static_cast<double>(n);
        for (Eigen::Index s = 0; s < S; ++s) {
            double sum = 0.0;
            std::size_t count = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t t = b * n + i;
                if (field.is_missing(static_cast<std::size_t>(s), t))
                    continue;
                sum += field.values()(s, static_cast<Eigen::Index>(t));
                ++count;
            }
            const auto col = static_cast<Eigen::Index>(b);
            missing(s, col) = count == 0;
            out(s, col) = count == 0 ? kNaN : sum / static_cast<double>(count);
        }
    }
    return SpatioTemporalField(field.layout(), std::move(stamps), std::move(out), field.kind(),
                               std::move(missing));
}

double default_detrend_bandwidth(const SpatioTemporalField& field)
{
    const auto& ts = field.timestamps();
    if (ts.size() < 2)
        throw Error("detrending needs at least two timestamps");
    return (ts.back() - ts.front()) / 8.0;
}

Eigen::VectorXd local_polynomial_smooth(std::span<const double> x, std::span<const double> y,
                                        std::span<const double> at, double bandwidth, int degree,
                                        Kernel kernel)
{
    if (x.size() != y.size())
        throw Error("local polynomial regression: x and y lengths differ");
    if (!(bandwidth > 0.0))
        throw Error("local polynomial regression: bandwidth must be positive");
    if (degree < 0 || degree > 3)
        throw Error("local polynomial regression: degree must be 0..3");
    if (!std::is_sorted(x.begin(), x.end()))
        throw Error("local polynomial regression: x must be sorted");

    const int q = degree + 1;
    const double reach = kernel_support(kernel) * bandwidth;
    Eigen::VectorXd out(static_cast<Eigen::Index>(at.size()));
    Eigen::MatrixXd gram(q, q);
    Eigen::VectorXd rhs(q);
    Eigen::VectorXd powers(q);

    for (std::size_t i = 0; i < at.size(); ++i) {
        const double x0 = at[i];
        const auto lo = std::lower_bound(x.begin(), x.end(), x0 - reach);
        const auto hi = std::upper_bound(x.begin(), x.end(), x0 + reach);
        gram.setZero();
        rhs.setZero();
        int active = 0;
        for (auto it = lo; it != hi; ++it) {
            const double z = (*it - x0) / bandwidth;
            const double w = kernel_value(kernel, z);
            if (w <= 0.0)
                continue;
            ++active;
            powers(0) = 1.0;
            for (int k = 1; k < q; ++k)
                powers(k) = powers(k - 1) * z;
            gram.noalias() += w * powers * powers.transpose();
            rhs.noalias() += w * y[static_cast<std::size_t>(it - x.begin())] * powers;
        }
        if (active < q)
            throw Error("singular local design at time index " + std::to_string(i) +
                        " (bandwidth too small)");
        Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
        lu.setThreshold(1e-10);
        if (lu.rank() < q)
            throw Error("singular local design at time index " + std::to_string(i) +
                        " (bandwidth too small)");
        out(static_cast<Eigen::Index>(i)) = lu.solve(rhs)(0);
    }
    return out;
}

DetrendResult detrend(const SpatioTemporalField& field, const DetrendOptions& options)
{
    if (field.kind() != FieldKind::raw)
        throw Error("detrending expects a raw field");
    if (options.degree != 1 && options.degree != 2)
        throw Error("detrending degree must be 1 or 2");
    const double bandwidth = options.bandwidth.value_or(default_detrend_bandwidth(field));
    if (!(bandwidth > 0.0))
        throw Error("detrending bandwidth must be positive");

    const auto& ts = field.timestamps();
    const std::size_t T = ts.size();
    std::vector<double> grid;
    const bool use_grid = T > options.max_eval_points && options.max_eval_points >= 2;
    if (use_grid) {
        grid.resize(options.max_eval_points);
        const double step = (ts.back() - ts.front()) / static_cast<double>(grid.size() - 1);
        for (std::size_t g = 0; g < grid.size(); ++g)
            grid[g] = ts.front() + step * static_cast<double>(g);
        grid.back() = ts.back();
    }

    const auto S = static_cast<Eigen::Index>(field.sensors());
    Eigen::MatrixXd trend(S, static_cast<Eigen::Index>(T));
    for (Eigen::Index s = 0; s < S; ++s) {
        std::vector<double> x, y;
        x.reserve(T);
        y.reserve(T);
        for (std::size_t t = 0; t < T; ++t)
            if (!field.is_missing(static_cast<std::size_t>(s), t)) {
                x.push_back(ts[t]);
                y.push_back(field.values()(s, static_cast<Eigen::Index>(t)));
            }
        if (!use_grid) {
            trend.row(s) = local_polynomial_smooth(x, y, ts, bandwidth, options.degree, options.kernel);
            continue;
        }
        const Eigen::VectorXd at_grid =
            local_polynomial_smooth(x, y, grid, bandwidth, options.degree, options.kernel);
        std::size_t g = 0;
        for (std::size_t t = 0; t < T; ++t) {
            while (g + 2 < grid.size() && grid[g + 1] < ts[t])
                ++g;
            const double w = (ts[t] - grid[g]) / (grid[g + 1] - grid[g]);
            trend(s, static_cast<Eigen::Index>(t)) =
                (1.0 - w) * at_grid(static_cast<Eigen::Index>(g)) + w * at_grid(static_cast<Eigen::Index>(g + 1));
        }
    }

    Eigen::MatrixXd residual = field.values() - trend;
    TrendModel model{std::move(trend), bandwidth, options.degree, options.kernel};
    return {field.with_values(std::move(residual), FieldKind::detrended), std::move(model)};
}

SpatioTemporalField retrend(const SpatioTemporalField& detrended, const TrendModel& trend)
{
    if (trend.trend.rows() != detrended.values().rows() || trend.trend.cols() != detrended.values().cols())
        throw Error("trend dimensions do not match the field");
    return detrended.with_values(detrended.values() + trend.trend, FieldKind::raw);
}

} // namespace solarst
