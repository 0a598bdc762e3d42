#include "solarst/error.hpp"
#include "solarst/fcar.hpp"
#include "solarst/simulation.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace solarst;

namespace {

std::vector<double> ar_series(std::vector<double> coef, double sd, std::size_t T, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, sd);
    std::vector<double> x(T + 200, 0.0);
    for (std::size_t t = coef.size(); t < x.size(); ++t) {
        double v = normal(rng);
        for (std::size_t j = 0; j < coef.size(); ++j)
            v += coef[j] * x[t - 1 - j];
        x[t] = v;
    }
    return {x.end() - static_cast<std::ptrdiff_t>(T), x.end()};
}

std::vector<double> uniform_series(std::size_t T, std::uint64_t seed, double lo = -1.0, double hi = 1.0)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> x(T);
    for (double& v : x)
        v = u(rng);
    return x;
}

/// Explicit spline design D (blocks in data order, knot index inner) and its
/// normal-equations solution.
Eigen::MatrixXd design(const LaggedData& data, const SplineBasis& basis, const AffineMap& map)
{
    const auto n = static_cast<Eigen::Index>(data.rows());
    const int K = basis.size();
    const auto nb = static_cast<Eigen::Index>(data.blocks.size());
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, nb * K);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd b = basis.eval(std::clamp(map.to_unit(data.delay(i)), 0.0, 1.0));
        for (Eigen::Index blk = 0; blk < nb; ++blk)
            for (int k = 0; k < K; ++k)
                D(i, blk * K + k) = b(k) * data.regressors(i, blk);
    }
    return D;
}

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace

TEST_CASE("basis evaluation")
{
    SUBCASE("knot peaks")
    {
        const SplineBasis basis(4);
        for (int k = 0; k < basis.size(); ++k) {
            const Eigen::VectorXd b = basis.eval(basis.knot(k));
            for (int i = 0; i < basis.size(); ++i)
                CHECK(b(i) == doctest::Approx(i == k ? 1.0 : 0.0));
        }
    }
    SUBCASE("N = 1 at u = 0.25")
    {
        const Eigen::VectorXd b = SplineBasis(1).eval(0.25);
        REQUIRE(b.size() == 3);
        CHECK(b(0) == doctest::Approx(0.5));
        CHECK(b(1) == doctest::Approx(0.5));
        CHECK(b(2) == 0.0);
    }
    SUBCASE("knots equally spaced on [0, 1]")
    {
        const SplineBasis basis(7);
        CHECK(basis.knot(0) == 0.0);
        CHECK(basis.knot(8) == doctest::Approx(1.0));
        CHECK(basis.spacing() == doctest::Approx(1.0 / 8.0));
    }
    SUBCASE("partition of unity, nonnegative, at most two nonzeros")
    {
        std::mt19937_64 rng(1);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const SplineBasis basis(13);
        double worst = 0.0;
        bool ok = true;
        for (int i = 0; i < 10000; ++i) {
            const Eigen::VectorXd b = basis.eval(u(rng));
            worst = std::max(worst, std::abs(b.sum() - 1.0));
            ok = ok && (b.array() >= 0.0).all() && (b.array() != 0.0).count() <= 2;
        }
        CHECK(worst < 1e-12);
        CHECK(ok);
    }
    SUBCASE("outside [0, 1]")
    {
        CHECK_THROWS_AS(SplineBasis(3).eval(1.5), Error);
        CHECK_THROWS_AS(SplineBasis(3).eval(-0.1), Error);
    }
}

TEST_CASE("default knot count")
{
    CHECK(default_knot_count(500) == 75);
    CHECK(default_knot_count(10) >= 1);
    CHECK(default_knot_count(10) <= 2);
    CHECK(default_knot_count(10000) <= 2500);
    CHECK(default_knot_count(144) == 36);
}

TEST_CASE("FcarSpec")
{
    CHECK_THROWS_AS((FcarSpec{0, 1, false}.validate()), Error);
    CHECK_THROWS_AS((FcarSpec{2, 3, false}.validate()), Error);
    CHECK(FcarSpec{2, 1, false}.blocks() == std::vector<int>{1, 2});
    CHECK(FcarSpec{2, 1, true}.blocks() == std::vector<int>{0, 2});
    CHECK(FcarSpec{3, 2, true}.blocks() == std::vector<int>{0, 1, 3});
}

TEST_CASE("affine map round trip")
{
    const std::vector<double> v{-3.5, 2.0, 7.25, 0.1};
    const AffineMap m = AffineMap::fit(v);
    CHECK(m.to_unit(-3.5) == 0.0);
    CHECK(m.to_unit(7.25) == 1.0);
    for (double x : {0.0, 0.3, 0.77, 1.0})
        CHECK(std::abs(m.to_unit(m.from_unit(x)) - x) < 1e-12);
    CHECK_THROWS_AS(AffineMap::fit(std::vector<double>{1.0, 1.0}), Error);
}

TEST_CASE("spline pre-estimate recovers an AR(1) constant")
{
    const FcarSpec spec{1, 1, false};
    const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(91, 0.05, 0.95);
    std::vector<std::vector<double>> values(static_cast<std::size_t>(grid.size()));
    for (std::uint64_t rep = 0; rep < 50; ++rep) {
        const auto x = ar_series({0.5}, 1.0, 2000, 1000 + rep);
        const SplineFit fit = spline_preestimate(x, spec, SplineBasis(20));
        for (Eigen::Index g = 0; g < grid.size(); ++g)
            values[static_cast<std::size_t>(g)].push_back(fit.value_unit(1, grid(g)));
    }
    double worst = 0.0;
    for (const auto& v : values)
        worst = std::max(worst, std::abs(median(v) - 0.5));
    CHECK(worst < 0.1);
}

TEST_CASE("spline pre-estimate is exact when the truth is in the spline span")
{
    const FcarSpec spec{1, 1, false};
    const auto src = uniform_series(400, 3);
    const SplineBasis basis(5);
    const AffineMap map = AffineMap::fit(std::span<const double>(src.data(), src.size() - 1));
    const Eigen::VectorXd lambda = (Eigen::VectorXd(7) << 0.3, -0.2, 0.5, 0.9, -0.4, 0.1, 0.6).finished();
    std::vector<double> y(src.size(), 0.0);
    for (std::size_t t = 1; t < src.size(); ++t)
        y[t] = basis.eval(map.to_unit(src[t - 1])).dot(lambda) * src[t - 1];
    const LaggedData data = make_lagged_data(src, y, spec, 1);
    const SplineFit fit = spline_preestimate(data, basis, map);
    CHECK((fit.coeffs.col(1) - lambda).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(fit.residuals.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("spline pre-estimate equals the normal-equations solution")
{
    for (const FcarSpec spec : {FcarSpec{1, 1, false}, FcarSpec{2, 1, true}, FcarSpec{2, 2, false}}) {
        const auto x = ar_series({0.4, -0.2}, 1.0, 30, 77);
        const LaggedData data = make_lagged_data(x, spec);
        const SplineBasis basis(2);
        std::vector<double> delay(data.delay.data(), data.delay.data() + data.delay.size());
        const AffineMap map = AffineMap::fit(delay);
        const Eigen::MatrixXd D = design(data, basis, map);
        const Eigen::VectorXd lambda = (D.transpose() * D).ldlt().solve(D.transpose() * data.response);
        const SplineFit fit = spline_preestimate(data, basis, map);
        const int K = basis.size();
        for (std::size_t b = 0; b < data.blocks.size(); ++b)
            for (int k = 0; k < K; ++k)
                CHECK(std::abs(fit.coeffs(k, data.blocks[b]) - lambda(static_cast<Eigen::Index>(b) * K + k)) < 1e-8);
    }
}

TEST_CASE("spline residuals are orthogonal to every design column")
{
    const FcarSpec spec{2, 1, true};
    const auto x = simulate_expar2(Expar2Config{});
    const LaggedData data = make_lagged_data(x, spec);
    const SplineBasis basis(default_knot_count(x.size()));
    std::vector<double> delay(data.delay.data(), data.delay.data() + data.delay.size());
    const AffineMap map = AffineMap::fit(delay);
    const SplineFit fit = spline_preestimate(data, basis, map);
    const Eigen::MatrixXd D = design(data, basis, map);
    double worst = 0.0;
    for (Eigen::Index c = 0; c < D.cols(); ++c) {
        const double norm = D.col(c).norm();
        if (norm == 0.0)
            continue;
        worst = std::max(worst, std::abs(D.col(c).dot(fit.residuals)) / (norm * fit.residuals.norm()));
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("spline pre-estimate errors")
{
    const FcarSpec spec{1, 1, false};
    const auto x = uniform_series(20, 5);
    CHECK_THROWS_AS(spline_preestimate(x, spec, SplineBasis(30)), Error);
    const std::vector<double> flat(40, 2.0);
    CHECK_THROWS_AS(spline_preestimate(flat, spec, SplineBasis(2)), Error);
}

TEST_CASE("knot deletion keeps sparse knots tied to their neighbours")
{
    const FcarSpec spec{1, 1, false};
    auto x = ar_series({0.5}, 1.0, 300, 21);
    const LaggedData data = make_lagged_data(x, spec);
    const SplineBasis basis(40);
    std::vector<double> delay(data.delay.data(), data.delay.data() + data.delay.size());
    const AffineMap map = AffineMap::fit(delay);
    const SplineFit loose = spline_preestimate(data, basis, map, 1);
    const SplineFit tied = spline_preestimate(data, basis, map, 5);
    CHECK(tied.rank <= loose.rank);
    CHECK(tied.coeffs.allFinite());
    // fewer free coefficients cannot fit better
    CHECK(tied.residuals.squaredNorm() >= loose.residuals.squaredNorm() - 1e-9);
}

TEST_CASE("pseudo-responses")
{
    const auto x = simulate_expar2(Expar2Config{});
    SUBCASE("intercept plus lag-2 model: target 2 removes m0 only")
    {
        const FcarSpec spec{2, 1, true};
        const LaggedData data = make_lagged_data(x, spec);
        const SplineFit fit = spline_preestimate(x, spec, SplineBasis(10));
        const Eigen::VectorXd w = pseudo_responses(data, fit, 2);
        for (Eigen::Index i = 0; i < w.size(); ++i)
            CHECK(w(i) == doctest::Approx(data.response(i) - fit.value(0, data.delay(i))).epsilon(1e-12));
    }
    SUBCASE("zero coefficients leave the series unchanged")
    {
        const FcarSpec spec{2, 1, false};
        const LaggedData data = make_lagged_data(x, spec);
        SplineFit fit = spline_preestimate(x, spec, SplineBasis(10));
        fit.coeffs.setZero();
        CHECK(pseudo_responses(data, fit, 1) == data.response);
        CHECK(pseudo_responses(data, fit, 2) == data.response);
    }
    SUBCASE("summed removals equal (K - 1) times the spline fit")
    {
        for (const FcarSpec spec : {FcarSpec{2, 1, true}, FcarSpec{3, 1, false}}) {
            std::vector<double> head(x.begin(), x.begin() + 50);
            const LaggedData data = make_lagged_data(head, spec);
            const SplineFit fit = spline_preestimate(head, spec, SplineBasis(2));
            Eigen::VectorXd sum = Eigen::VectorXd::Zero(data.response.size());
            for (int j : data.blocks)
                sum += data.response - pseudo_responses(data, fit, j);
            const double K = static_cast<double>(data.blocks.size());
            CHECK((sum - (K - 1.0) * fit.fitted).cwiseAbs().maxCoeff() < 1e-10);
        }
    }
    SUBCASE("invalid target")
    {
        const FcarSpec spec{2, 1, false};
        const LaggedData data = make_lagged_data(x, spec);
        const SplineFit fit = spline_preestimate(x, spec, SplineBasis(10));
        CHECK_THROWS_AS(pseudo_responses(data, fit, 3), Error);
        CHECK_THROWS_AS(pseudo_responses(data, fit, -1), Error);
    }
}

TEST_CASE("SBK estimate on EXPAR(2) covers the truth")
{
    std::vector<double> coverage;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        Expar2Config cfg;
        cfg.seed = seed;
        const auto x = simulate_expar2(cfg);
        const FcarFit fit = fit_fcar(x, FcarSpec{2, 1, true});
        int inside = 0, total = 0;
        for (const SbkCurve& c : fit.curves)
            for (Eigen::Index g = 0; g < c.grid.size(); ++g) {
                if (!c.reliable[static_cast<std::size_t>(g)])
                    continue;
                const double u = fit.u_map.from_unit(c.grid(g));
                const double truth = c.lag == 0 ? expar2_intercept(cfg, u) : expar2_lag2(cfg, u);
                ++total;
                inside += c.lower(g) <= truth && truth <= c.upper(g);
            }
        REQUIRE(total > 0);
        coverage.push_back(static_cast<double>(inside) / total);
    }
    CHECK(median(coverage) >= 0.9);
}

TEST_CASE("SBK estimate of a constant function is exact")
{
    const FcarSpec spec{2, 1, false};
    const auto x = ar_series({0.3, 0.2}, 1.0, 300, 8);
    const LaggedData data = make_lagged_data(x, spec);
    std::vector<double> delay(data.delay.data(), data.delay.data() + data.delay.size());
    const AffineMap map = AffineMap::fit(delay);
    const Eigen::VectorXd pseudo = 0.7 * data.regressors.col(data.column_of(2));
    SbkOptions o;
    o.bandwidth = 0.15;
    o.bands = BandMethod::kernel_sandwich;
    const SbkCurve c = sbk_estimate(data, map, pseudo, 2, Eigen::VectorXd::LinSpaced(41, 0, 1), o);
    int reliable = 0;
    for (Eigen::Index g = 0; g < c.grid.size(); ++g)
        if (c.reliable[static_cast<std::size_t>(g)]) {
            ++reliable;
            CHECK(std::abs(c.estimate(g) - 0.7) < 1e-6);
        }
    CHECK(reliable > 20);
}

TEST_CASE("SBK estimate at one grid point matches weighted least squares")
{
    const FcarSpec spec{2, 1, false};
    const auto x = ar_series({0.5, -0.3}, 1.0, 40, 13);
    const LaggedData data = make_lagged_data(x, spec);
    std::vector<double> delay(data.delay.data(), data.delay.data() + data.delay.size());
    const AffineMap map = AffineMap::fit(delay);
    const Eigen::VectorXd pseudo = data.response;
    for (Kernel kernel : {Kernel::epanechnikov, Kernel::gaussian}) {
        SbkOptions o;
        o.bandwidth = 0.3;
        o.kernel = kernel;
        o.min_local = 1;
        const double u0 = 0.45;
        const SbkCurve c = sbk_estimate(data, map, pseudo, 1, Eigen::VectorXd::Constant(1, u0), o);

        const auto n = static_cast<Eigen::Index>(data.rows());
        Eigen::MatrixXd C(n, 2);
        Eigen::VectorXd w(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double v = map.to_unit(data.delay(i));
            const double z = data.regressors(i, 0);
            C(i, 0) = z;
            C(i, 1) = z * (v - u0);
            w(i) = kernel_value(kernel, (v - u0) / o.bandwidth) / o.bandwidth;
        }
        const Eigen::MatrixXd A = C.transpose() * w.asDiagonal() * C;
        const Eigen::VectorXd beta = A.ldlt().solve(C.transpose() * w.asDiagonal() * pseudo);
        CHECK(std::abs(c.estimate(0) - beta(0)) < 1e-8);
    }
}

TEST_CASE("sparse grid points are flagged unreliable")
{
    const FcarSpec spec{1, 1, false};
    auto x = ar_series({0.5}, 1.0, 200, 4);
    const LaggedData data = make_lagged_data(x, spec);
    std::vector<double> delay(data.delay.data(), data.delay.data() + data.delay.size());
    const AffineMap map = AffineMap::fit(delay);
    SbkOptions o;
    o.bandwidth = 0.01;
    const SbkCurve c = sbk_estimate(data, map, data.response, 1, Eigen::VectorXd::LinSpaced(101, 0, 1), o);
    int flagged = 0;
    for (std::size_t g = 0; g < c.reliable.size(); ++g)
        if (!c.reliable[g]) {
            ++flagged;
            CHECK(c.local_count[g] < 5);
        }
    CHECK(flagged > 0);
}

TEST_CASE("fit_fcar examples")
{
    SUBCASE("EXPAR(2) residual variance")
    {
        std::vector<double> v;
        for (std::uint64_t seed = 1; seed <= 50; ++seed) {
            Expar2Config cfg;
            cfg.seed = seed;
            v.push_back(fit_fcar(simulate_expar2(cfg), FcarSpec{2, 1, true}).residual_variance());
        }
        CHECK(median(v) == doctest::Approx(0.04).epsilon(0.25));
    }
    SUBCASE("AR(2) data against least squares")
    {
        const auto x = ar_series({0.5, -0.3}, 1.0, 1000, 31);
        const FcarFit fit = fit_fcar(x, FcarSpec{2, 1, false});
        const LaggedData data = make_lagged_data(x, FcarSpec{2, 1, false});
        const Eigen::VectorXd phi = data.regressors.colPivHouseholderQr().solve(data.response);
        const double ols = (data.response - data.regressors * phi).squaredNorm() / static_cast<double>(data.rows());
        CHECK(fit.residual_variance() == doctest::Approx(ols).epsilon(0.10));
    }
    SUBCASE("white noise has no structure")
    {
        std::mt19937_64 rng(2);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<double> x(1000);
        for (double& v : x)
            v = normal(rng);
        const FcarFit fit = fit_fcar(x, FcarSpec{1, 1, false}, FcarOptions{.bandwidth = 0.3});
        const SbkCurve& c = fit.curve(1);
        for (Eigen::Index g = 0; g < c.grid.size(); ++g)
            if (c.grid(g) >= 0.25 && c.grid(g) <= 0.75)
                CHECK(std::abs(c.estimate(g)) < 0.15);
    }
    SUBCASE("bands finite on the interior")
    {
        const FcarFit fit = fit_fcar(simulate_expar2(Expar2Config{}), FcarSpec{2, 1, true});
        for (const SbkCurve& c : fit.curves)
            for (Eigen::Index g = 30; g <= 70; ++g)
                CHECK(std::isfinite(c.estimate(g)));
        CHECK(fit.effective_params >= 0.0);
        CHECK(fit.effective_params <= static_cast<double>(fit.residuals.size()));
    }
}

TEST_CASE("constant coefficient functions reduce to linear AR")
{
    std::vector<double> range;
    for (std::uint64_t rep = 0; rep < 50; ++rep) {
        const auto x = ar_series({0.5}, 1.0, 2000, 500 + rep);
        const FcarFit fit = fit_fcar(x, FcarSpec{1, 1, false}, FcarOptions{.bandwidth = 0.3});
        const SbkCurve& c = fit.curve(1);
        double lo = 1e9, hi = -1e9;
        for (Eigen::Index g = 0; g < c.grid.size(); ++g)
            if (c.grid(g) >= 0.25 && c.grid(g) <= 0.75) {
                lo = std::min(lo, c.estimate(g));
                hi = std::max(hi, c.estimate(g));
            }
        range.push_back(hi - lo);
    }
    CHECK(median(range) < 0.1);
}

TEST_CASE("effective parameters")
{
    const FcarSpec spec{1, 1, false};
    const auto x = ar_series({0.5}, 1.0, 60, 17);
    const LaggedData data = make_lagged_data(x, spec);
    std::vector<double> delay(data.delay.data(), data.delay.data() + data.delay.size());
    const AffineMap map = AffineMap::fit(delay);

    SUBCASE("dense smoother matrix oracle")
    {
        const double h = 0.25;
        const auto n = static_cast<Eigen::Index>(data.rows());
        double trace = 0.0;
        for (Eigen::Index t = 0; t < n; ++t) {
            const double u0 = map.to_unit(data.delay(t));
            Eigen::MatrixXd C(n, 2);
            Eigen::VectorXd w(n);
            for (Eigen::Index i = 0; i < n; ++i) {
                const double v = map.to_unit(data.delay(i));
                C(i, 0) = data.regressors(i, 0);
                C(i, 1) = data.regressors(i, 0) * (v - u0);
                w(i) = kernel_value(Kernel::epanechnikov, (v - u0) / h) / h;
            }
            const Eigen::MatrixXd L =
                (C.transpose() * w.asDiagonal() * C).inverse() * C.transpose() * w.asDiagonal();
            trace += data.regressors(t, 0) * L(0, t);
        }
        CHECK(std::abs(smoother_trace(data, map, 1, h, Kernel::epanechnikov) - trace) < 1e-10);
    }
    SUBCASE("infinite bandwidth gives a global linear fit")
    {
        CHECK(smoother_trace(data, map, 1, 1e6, Kernel::epanechnikov) == doctest::Approx(2.0).epsilon(1e-6));
        const FcarFit fit = fit_fcar(simulate_expar2(Expar2Config{}), FcarSpec{2, 1, true},
                                     FcarOptions{.bandwidth = 1e6});
        CHECK(effective_params(fit) == doctest::Approx(4.0).epsilon(1e-6));
    }
    SUBCASE("trace grows as the bandwidth shrinks")
    {
        const auto big = make_lagged_data(ar_series({0.5}, 1.0, 500, 5), spec);
        std::vector<double> d2(big.delay.data(), big.delay.data() + big.delay.size());
        const AffineMap m2 = AffineMap::fit(d2);
        const double h = 0.2;
        const double a = smoother_trace(big, m2, 1, h, Kernel::epanechnikov);
        const double b = smoother_trace(big, m2, 1, h / 2, Kernel::epanechnikov);
        const double c = smoother_trace(big, m2, 1, h / 4, Kernel::epanechnikov);
        CHECK(a < b);
        CHECK(b < c);
    }
}

TEST_CASE("forecasting")
{
    SUBCASE("constant coefficients reproduce the AR predictor")
    {
        const FcarSpec spec{2, 1, false};
        const auto src = uniform_series(400, 19);
        std::vector<double> y(src.size(), 0.0);
        for (std::size_t t = 2; t < src.size(); ++t)
            y[t] = 0.6 * src[t - 1] - 0.25 * src[t - 2];
        const FcarFit fit = fit_fcar(make_lagged_data(src, y, spec, 2), spec);
        const std::vector<double> history{0.2, -0.4, 0.3};
        const auto f = forecast_fcar(fit, history, 1);
        REQUIRE(f.size() == 1);
        CHECK(std::abs(f[0] - (0.6 * 0.3 - 0.25 * -0.4)) < 1e-8);
    }
    SUBCASE("multi-step equals chained single steps")
    {
        const auto x = simulate_expar2(Expar2Config{});
        const FcarFit fit = fit_fcar(x, FcarSpec{2, 1, true});
        std::vector<double> history(x.end() - 5, x.end());
        const auto three = forecast_fcar(fit, history, 3);
        for (int s = 0; s < 3; ++s) {
            const auto one = forecast_fcar(fit, history, 1);
            CHECK(one[0] == three[static_cast<std::size_t>(s)]);
            history.push_back(one[0]);
        }
    }
    SUBCASE("EXPAR(2) one-step error close to the true model")
    {
        Expar2Config cfg;
        cfg.T = 3000;
        cfg.seed = 4;
        const auto x = simulate_expar2(cfg);
        const std::vector<double> train(x.begin(), x.begin() + 2000);
        const FcarFit fit = fit_fcar(train, FcarSpec{2, 1, true});
        double mse_fit = 0.0, mse_true = 0.0;
        for (std::size_t t = 2000; t < x.size(); ++t) {
            const std::vector<double> h{x[t - 2], x[t - 1]};
            const double f = forecast_fcar(fit, h, 1)[0];
            const double truth = expar2_intercept(cfg, x[t - 1]) + expar2_lag2(cfg, x[t - 1]) * x[t - 2];
            mse_fit += (x[t] - f) * (x[t] - f);
            mse_true += (x[t] - truth) * (x[t] - truth);
        }
        CHECK(mse_fit <= 1.3 * mse_true);
    }
    SUBCASE("errors")
    {
        const FcarFit fit = fit_fcar(simulate_expar2(Expar2Config{}), FcarSpec{2, 1, true});
        CHECK_THROWS_AS(forecast_fcar(fit, std::vector<double>{0.1}, 1), Error);
        CHECK_THROWS_AS(forecast_fcar(fit, std::vector<double>{0.1, 0.2}, 0), Error);
    }
}

TEST_CASE("order selection enumerates p and d")
{
    const auto x = ar_series({0.6}, 1.0, 400, 23);
    const OrderSelection sel = select_fcar_order(x, FcarOptions{}, 3);
    CHECK(sel.candidates.size() == 6);
    CHECK(sel.best.p >= 1);
    CHECK(sel.best.p <= 3);
    for (const auto& c : sel.candidates)
        CHECK(std::isfinite(c.criterion));
}
