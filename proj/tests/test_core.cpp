#include "solarst/core.hpp"
#include "solarst/csv_io.hpp"
#include "solarst/error.hpp"
#include "solarst/simulation.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace solarst;

namespace {

SensorLayout two_sensors()
{
    return SensorLayout({{"A", 0.0, 0.0}, {"B", 1.0, 0.0}});
}

SpatioTemporalField series_field(const std::vector<double>& values, double dt = 1.0)
{
    Eigen::MatrixXd v(1, static_cast<Eigen::Index>(values.size()));
    std::vector<double> times(values.size());
    for (std::size_t t = 0; t < values.size(); ++t) {
        v(0, static_cast<Eigen::Index>(t)) = values[t];
        times[t] = dt * static_cast<double>(t);
    }
    return SpatioTemporalField(SensorLayout({{"A", 0.0, 0.0}}), times, v, FieldKind::raw);
}

/// Half-sine day curve sampled every `dt` seconds.
SpatioTemporalField day_curve(double amplitude, double noise_sd, std::uint64_t seed, double dt = 60.0)
{
    const std::size_t T = static_cast<std::size_t>(86400.0 / dt);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd v(1, static_cast<Eigen::Index>(T));
    std::vector<double> times(T);
    for (std::size_t t = 0; t < T; ++t) {
        times[t] = dt * static_cast<double>(t);
        v(0, static_cast<Eigen::Index>(t)) =
            amplitude * std::sin(std::numbers::pi * times[t] / 86400.0) + noise_sd * normal(rng);
    }
    return SpatioTemporalField(SensorLayout({{"A", 0.0, 0.0}}), times, v, FieldKind::raw);
}

} // namespace

TEST_CASE("layout validation")
{
    CHECK_THROWS_WITH_AS(SensorLayout({{"A", 0, 0}, {"A", 1, 0}}), doctest::Contains("duplicate sensor id"), Error);
    CHECK_THROWS_WITH_AS(SensorLayout({{"A", 0, 0}, {"B", 0, 0}}), doctest::Contains("duplicate coordinates"), Error);
    CHECK_THROWS_AS(SensorLayout({{"A", NAN, 0}}), Error);
    CHECK_THROWS_AS(SensorLayout(std::vector<Sensor>{}), Error);
    const SensorLayout grid = grid_layout(4, 4, 10.0);
    CHECK(grid.size() == 16);
    CHECK(grid[0].id == "S00");
    CHECK(grid[5].x == doctest::Approx(10.0));
    CHECK(grid[5].y == doctest::Approx(10.0));
    CHECK(grid.index_of("S15") == 15);
    CHECK_THROWS_WITH_AS(grid.index_of("S99"), doctest::Contains("unknown sensor"), Error);
}

TEST_CASE("ingest_field reshapes complete records")
{
    std::vector<Measurement> records;
    for (int t = 0; t < 3; ++t) {
        records.push_back({static_cast<double>(t), "A", 1.0 + t});
        records.push_back({static_cast<double>(t), "B", 10.0 + t});
    }
    const SpatioTemporalField f = ingest_field(records, two_sensors());
    CHECK(f.sensors() == 2);
    CHECK(f.times() == 3);
    CHECK(f.kind() == FieldKind::raw);
    CHECK(f.values()(1, 2) == 12.0);
    CHECK_FALSE(f.has_missing());
}

TEST_CASE("ingest_field errors")
{
    SUBCASE("unknown sensor")
    {
        std::vector<Measurement> r{{0.0, "S99", 1.0}};
        CHECK_THROWS_WITH_AS(ingest_field(r, two_sensors()), doctest::Contains("unknown sensor"), Error);
    }
    SUBCASE("duplicate record")
    {
        std::vector<Measurement> r{{0.0, "A", 1.0}, {0.0, "A", 2.0}};
        CHECK_THROWS_WITH_AS(ingest_field(r, two_sensors()), doctest::Contains("duplicate"), Error);
    }
    SUBCASE("non-monotone")
    {
        std::vector<Measurement> r{{1.0, "A", 1.0}, {0.0, "A", 2.0}};
        CHECK_THROWS_WITH_AS(ingest_field(r, two_sensors()), doctest::Contains("non-monotone"), Error);
    }
    SUBCASE("empty")
    {
        CHECK_THROWS_WITH_AS(ingest_field({}, two_sensors()), doctest::Contains("empty"), Error);
    }
}

TEST_CASE("missing values are carried by the mask")
{
    std::vector<Measurement> r{{0.0, "A", 1.0}, {0.0, "B", std::nullopt}, {1.0, "A", 2.0}, {1.0, "B", 3.0}};
    const SpatioTemporalField f = ingest_field(r, two_sensors());
    CHECK(f.has_missing());
    CHECK(f.is_missing(1, 0));
    CHECK(std::isnan(f.values()(1, 0)));
    CHECK_THROWS_WITH_AS(f.require_complete("fit"), doctest::Contains("complete"), Error);
}

TEST_CASE("CSV round trip is the identity")
{
    FieldSimConfig cfg = FieldSimConfig::preset(Regime::overcast, SimMode::advective, 10.0, 1.0);
    cfg.features = 20;
    cfg.seed = 11;
    const SpatioTemporalField f = simulate_field(cfg);
    REQUIRE(f.sensors() == 16);
    REQUIRE(f.times() == 86400);

    std::stringstream meas, lay;
    write_measurements_csv(meas, f);
    write_layout_csv(lay, f.layout());
    const SensorLayout layout = read_layout_csv(lay);
    const auto records = read_measurements_csv(meas);
    const SpatioTemporalField g = ingest_field(records, layout);
    CHECK(g.sensors() == 16);
    CHECK(g.times() == 86400);
    CHECK(g.timestamps() == f.timestamps());
    CHECK(g.values() == f.values());
    for (std::size_t s = 0; s < 16; ++s) {
        CHECK(g.layout()[s].id == f.layout()[s].id);
        CHECK(g.layout()[s].x == f.layout()[s].x);
        CHECK(g.layout()[s].y == f.layout()[s].y);
    }
}

TEST_CASE("CSV parsing")
{
    std::istringstream in("timestamp,sensor_id,value\n2013-02-03T00:00:00Z,A,1.5\n2013-02-03T00:00:01Z,A,NA\n");
    const auto r = read_measurements_csv(in);
    REQUIRE(r.size() == 2);
    CHECK(r[0].timestamp == 1359849600.0);
    CHECK(r[1].timestamp == 1359849601.0);
    CHECK(r[0].value == 1.5);
    CHECK_FALSE(r[1].value.has_value());
    CHECK(parse_timestamp("2013-02-03T01:00:00+01:00") == 1359849600.0);
    CHECK(parse_timestamp("12.5") == 12.5);
    CHECK_THROWS_AS(parse_timestamp("yesterday"), Error);

    std::istringstream bad("time,sensor,value\n");
    CHECK_THROWS_AS(read_measurements_csv(bad), Error);
    CHECK(format_number(0.1) == "0.1");
    CHECK(std::stod(format_number(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("time_average examples")
{
    SUBCASE("block means")
    {
        const auto a = time_average(series_field({1, 2, 3, 4}), 2.0);
        REQUIRE(a.times() == 2);
        CHECK(a.values()(0, 0) == 1.5);
        CHECK(a.values()(0, 1) == 3.5);
        CHECK(a.timestamps()[0] == 0.5);
        CHECK(a.timestamps()[1] == 2.5);
        CHECK(a.spacing() == 2.0);
    }
    SUBCASE("constant field")
    {
        const auto a = time_average(series_field(std::vector<double>(12, 7.25)), 3.0);
        CHECK(a.times() == 4);
        CHECK((a.values().array() == 7.25).all());
    }
    SUBCASE("trailing partial window dropped")
    {
        CHECK(time_average(series_field({1, 2, 3, 4, 5}), 2.0).times() == 2);
    }
    SUBCASE("errors")
    {
        CHECK_THROWS_WITH_AS(time_average(series_field({1, 2, 3, 4}, 2.0), 1.0), doctest::Contains("smaller"), Error);
        CHECK_THROWS_WITH_AS(time_average(series_field({1, 2, 3, 4}, 2.0), 3.0), doctest::Contains("multiple"),
                             Error);
    }
}

TEST_CASE("time_average matches a streaming accumulator on a day of 1 s samples")
{
    std::mt19937_64 rng(5);
    std::normal_distribution<double> normal(0.0, 100.0);
    std::vector<double> v(86400);
    for (double& x : v)
        x = 500.0 + normal(rng);
    const auto a = time_average(series_field(v), 600.0);
    REQUIRE(a.times() == 144);
    double worst = 0.0;
    std::size_t block = 0, count = 0;
    long double acc = 0.0L;
    for (double x : v) {
        acc += x;
        if (++count == 600) {
            const double mean = static_cast<double>(acc / 600.0L);
            worst = std::max(worst, std::abs(mean - a.values()(0, static_cast<Eigen::Index>(block))));
            acc = 0.0L;
            count = 0;
            ++block;
        }
    }
    CHECK(worst < 1e-12 * 500.0);
}

TEST_CASE("time_average is linear")
{
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-5, 5);
    std::vector<double> f(60), g(60), h(60);
    for (std::size_t i = 0; i < 60; ++i) {
        f[i] = u(rng);
        g[i] = u(rng);
        h[i] = 2.5 * f[i] - 0.75 * g[i];
    }
    const auto af = time_average(series_field(f), 6.0);
    const auto ag = time_average(series_field(g), 6.0);
    const auto ah = time_average(series_field(h), 6.0);
    CHECK((ah.values() - (2.5 * af.values() - 0.75 * ag.values())).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("detrend examples")
{
    SUBCASE("noiseless half-sine day")
    {
        const auto f = day_curve(800.0, 0.0, 1);
        DetrendOptions o;
        o.bandwidth = 8640.0;
        const DetrendResult r = detrend(f, o);
        CHECK(r.residuals.kind() == FieldKind::detrended);
        CHECK(r.residuals.values().cwiseAbs().maxCoeff() < 0.01 * 800.0);
    }
    SUBCASE("constant series")
    {
        const DetrendResult r = detrend(series_field(std::vector<double>(200, 3.0), 60.0));
        CHECK(r.residuals.values().cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("noise sd is preserved")
    {
        int within = 0;
        double mean_sd = 0.0;
        for (std::uint64_t rep = 0; rep < 50; ++rep) {
            const auto f = day_curve(800.0, 10.0, 100 + rep);
            DetrendOptions o;
            o.bandwidth = 8640.0;
            const auto res = detrend(f, o).residuals.values();
            const double sd = std::sqrt((res.array() - res.mean()).square().mean());
            mean_sd += sd / 50.0;
            within += std::abs(sd - 10.0) < 1.5;
        }
        CHECK(within == 50);
        CHECK(mean_sd == doctest::Approx(10.0).epsilon(0.15));
    }
    SUBCASE("errors")
    {
        CHECK_THROWS_AS(detrend(series_field({1, 2, 3}).with_values(Eigen::MatrixXd::Ones(1, 3), FieldKind::detrended)),
                        Error);
        DetrendOptions o;
        o.degree = 3;
        CHECK_THROWS_AS(detrend(series_field({1, 2, 3, 4}), o), Error);
        o.degree = 1;
        o.bandwidth = 0.4;
        CHECK_THROWS_WITH_AS(detrend(series_field({1, 2, 3, 4}), o), doctest::Contains("time index"), Error);
    }
}

TEST_CASE("detrend then retrend reproduces the input")
{
    FieldSimConfig cfg = FieldSimConfig::preset(Regime::partly_cloudy, SimMode::advective);
    cfg.seed = 3;
    const SpatioTemporalField sim = simulate_field(cfg);
    Eigen::MatrixXd raw = sim.values();
    for (Eigen::Index t = 0; t < raw.cols(); ++t)
        raw.col(t).array() += 600.0 * std::sin(std::numbers::pi * static_cast<double>(t) / raw.cols());
    const SpatioTemporalField field = sim.with_values(raw, FieldKind::raw);
    for (int degree : {1, 2}) {
        DetrendOptions o;
        o.degree = degree;
        const DetrendResult r = detrend(field, o);
        CHECK(r.trend.trend.allFinite());
        const SpatioTemporalField back = retrend(r.residuals, r.trend);
        const double rel = ((back.values() - raw).array().abs() / raw.array().abs().max(1.0)).maxCoeff();
        CHECK(rel < 1e-9);
    }
}

TEST_CASE("local polynomial smooth reproduces polynomials of its degree")
{
    std::vector<double> x(50), y1(50), y2(50);
    for (int i = 0; i < 50; ++i) {
        x[static_cast<std::size_t>(i)] = i;
        y1[static_cast<std::size_t>(i)] = 3.0 - 0.5 * i;
        y2[static_cast<std::size_t>(i)] = 1.0 + 0.1 * i - 0.02 * i * i;
    }
    const auto a = local_polynomial_smooth(x, y1, x, 6.0, 1, Kernel::epanechnikov);
    const auto b = local_polynomial_smooth(x, y2, x, 6.0, 2, Kernel::gaussian);
    for (int i = 0; i < 50; ++i) {
        CHECK(a(i) == doctest::Approx(y1[static_cast<std::size_t>(i)]).epsilon(1e-10));
        CHECK(b(i) == doctest::Approx(y2[static_cast<std::size_t>(i)]).epsilon(1e-9));
    }
}
