#include "solarst/fcar.hpp"

#include "solarst/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>

namespace solarst {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Observations sorted by their unit-scale delay value so that compact
/// kernel windows can be located by binary search.
class DelayIndex {
public:
    explicit DelayIndex(const Eigen::VectorXd& unit)
        : order_(static_cast<std::size_t>(unit.size()))
    {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        std::stable_sort(order_.begin(), order_.end(),
                         [&](std::size_t a, std::size_t b) { return unit(static_cast<Eigen::Index>(a)) < unit(static_cast<Eigen::Index>(b)); });
        sorted_.reserve(order_.size());
        for (std::size_t i : order_)
            sorted_.push_back(unit(static_cast<Eigen::Index>(i)));
    }

    template <class Fn>
    void for_each_within(double lo, double hi, Fn&& fn) const
    {
        auto first = std::lower_bound(sorted_.begin(), sorted_.end(), lo);
        auto last = std::upper_bound(sorted_.begin(), sorted_.end(), hi);
        for (auto it = first; it != last; ++it)
            fn(order_[static_cast<std::size_t>(it - sorted_.begin())]);
    }

private:
    std::vector<std::size_t> order_;
    std::vector<double> sorted_;
};

/// Upper-triangular factor of a least-squares problem built one row at a time
/// with Givens rotations. Rows with a contiguous non-zero window keep R banded,
/// so each update costs O(window^2).
class GivensTriangle {
public:
    explicit GivensTriangle(Eigen::Index m)
        : r_(Eigen::MatrixXd::Zero(m, m))
        , qty_(Eigen::VectorXd::Zero(m))
        , end_(static_cast<std::size_t>(m), -1)
    {
    }

    /// Consumes `x` (non-zero only in [lo, hi]) and leaves it zeroed.
    void add_row(Eigen::VectorXd& x, Eigen::Index lo, Eigen::Index hi, double y)
    {
        for (Eigen::Index j = lo; j <= hi; ++j) {
            const double xj = x(j);
            if (xj == 0.0)
                continue;
            Eigen::Index& end = end_[static_cast<std::size_t>(j)];
            if (end < j) {
                r_.row(j).segment(j, hi - j + 1) = x.segment(j, hi - j + 1).transpose();
                qty_(j) = y;
                end = hi;
                x.segment(j, hi - j + 1).setZero();
                return;
            }
            const double rjj = r_(j, j);
            const double norm = std::hypot(rjj, xj);
            const double c = rjj / norm, s = xj / norm;
            const Eigen::Index last = std::max(hi, end);
            for (Eigen::Index col = j; col <= last; ++col) {
                const double a = r_(j, col), b = x(col);
                r_(j, col) = c * a + s * b;
                x(col) = c * b - s * a;
            }
            const double qa = qty_(j);
            qty_(j) = c * qa + s * y;
            y = c * y - s * qa;
            x(j) = 0.0;
            end = last;
            hi = last;
        }
        x.segment(lo, hi - lo + 1).setZero();
    }

    const Eigen::MatrixXd& r() const { return r_; }
    const Eigen::VectorXd& qty() const { return qty_; }

private:
    Eigen::MatrixXd r_;
    Eigen::VectorXd qty_;
    std::vector<Eigen::Index> end_;
};

/// Kernel-weighted normal equations of the local-linear fit at one point,
/// with regressor c = (z, z (u - v) / h).
struct LocalSystem {
    double a00 = 0, a01 = 0, a11 = 0;
    double b00 = 0, b01 = 0, b11 = 0; // sum of w^2 c c'
    double r0 = 0, r1 = 0;
    double sw = 0, sw2 = 0;
    int count = 0;

    double det() const { return a00 * a11 - a01 * a01; }
    bool singular() const { return !(a00 > 0.0) || !(a11 > 0.0) || det() <= 1e-12 * a00 * a11; }
};

Eigen::VectorXd to_unit(const Eigen::VectorXd& delay, const AffineMap& map)
{
    Eigen::VectorXd out(delay.size());
    for (Eigen::Index i = 0; i < delay.size(); ++i)
        out(i) = std::clamp(map.to_unit(delay(i)), 0.0, 1.0);
    return out;
}

/// Variance of the SBK estimate viewed as a linear smoother of the response:
/// m^(v) = l' W = l' (Y - D_{-j} (D'D)^+ D' Y) = a' Y with a = l - D (D'D)^+ D_{-j}' l,
/// and Var = sigma^2 |a|^2 with sigma^2 from the spline fit, RSS / (n - rank).
class SmootherVariance {
public:
    SmootherVariance(const LaggedData& data, const SplineFit& spline, const Eigen::VectorXd& unit, int target_j)
        : data_(data)
        , spline_(spline)
        , nb_(static_cast<Eigen::Index>(data.blocks.size()))
        , target_(data.column_of(target_j))
        , weight_(Eigen::VectorXd::Zero(unit.size()))
    {
        support_.reserve(static_cast<std::size_t>(unit.size()));
        for (Eigen::Index i = 0; i < unit.size(); ++i)
            support_.push_back(spline.basis.locate(unit(i)));
        const double dof = std::max(1.0, static_cast<double>(unit.size()) - spline.rank);
        sigma2_ = spline.residuals.squaredNorm() / dof;
    }

    double variance(const DelayIndex& index, const Eigen::VectorXd& unit, const Eigen::VectorXd& z, double v,
                    double h, double i00, double i01, Kernel kernel)
    {
        const Eigen::Index cols = spline_.gram_pinv.rows();
        Eigen::VectorXd g = Eigen::VectorXd::Zero(cols);
        std::vector<std::size_t> touched;
        const double reach = kernel_support(kernel) * h;
        index.for_each_within(v - reach, v + reach, [&](std::size_t i) {
            const auto ii = static_cast<Eigen::Index>(i);
            const double off = (unit(ii) - v) / h;
            const double w = kernel_value(kernel, off) / h;
            if (w <= 0.0)
                return;
            const double l = w * (i00 * z(ii) + i01 * z(ii) * off);
            weight_(ii) = l;
            touched.push_back(i);
            const auto& s = support_[i];
            for (Eigen::Index b = 0; b < nb_; ++b) {
                if (b == target_)
                    continue;
                const double zb = data_.regressors(ii, b);
                g(s.index * nb_ + b) += l * s.left * zb;
                g((s.index + 1) * nb_ + b) += l * s.right * zb;
            }
        });
        const Eigen::VectorXd coef = spline_.gram_pinv * g;
        double sum = 0.0;
        for (std::size_t i = 0; i < support_.size(); ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            const auto& s = support_[i];
            double dv = 0.0;
            for (Eigen::Index b = 0; b < nb_; ++b)
                dv += data_.regressors(ii, b) * (s.left * coef(s.index * nb_ + b) + s.right * coef((s.index + 1) * nb_ + b));
            const double a = weight_(ii) - dv;
            sum += a * a;
        }
        for (std::size_t i : touched)
            weight_(static_cast<Eigen::Index>(i)) = 0.0;
        return sigma2_ * sum;
    }

private:
    const LaggedData& data_;
    const SplineFit& spline_;
    Eigen::Index nb_;
    Eigen::Index target_;
    Eigen::VectorXd weight_;
    std::vector<SplineBasis::Support> support_;
    double sigma2_ = 0.0;
};

LocalSystem accumulate(const DelayIndex& index, const Eigen::VectorXd& unit, const Eigen::VectorXd& z,
                       const Eigen::VectorXd* response, double v, double h, Kernel kernel)
{
    LocalSystem sys;
    const double reach = kernel_support(kernel) * h;
    index.for_each_within(v - reach, v + reach, [&](std::size_t i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const double off = (unit(ii) - v) / h;
        const double w = kernel_value(kernel, off) / h;
        if (std::abs(unit(ii) - v) <= h)
            ++sys.count;
        if (w <= 0.0)
            return;
        const double c0 = z(ii);
        const double c1 = z(ii) * off;
        sys.a00 += w * c0 * c0;
        sys.a01 += w * c0 * c1;
        sys.a11 += w * c1 * c1;
        sys.b00 += w * w * c0 * c0;
        sys.b01 += w * w * c0 * c1;
        sys.b11 += w * w * c1 * c1;
        sys.sw += w;
        sys.sw2 += w * w;
        if (response) {
            sys.r0 += w * c0 * (*response)(ii);
            sys.r1 += w * c1 * (*response)(ii);
        }
    });
    return sys;
}

void check_block(const LaggedData& data, int j)
{
    if (std::find(data.blocks.begin(), data.blocks.end(), j) == data.blocks.end())
        throw Error("coefficient function " + std::to_string(j) + " is not estimated by this model");
}

} // namespace

void FcarSpec::validate() const
{
    if (p < 1)
        throw Error("FCAR order p must be at least 1");
    if (d < 1 || d > p)
        throw Error("FCAR delay d must satisfy 1 <= d <= p");
}

std::vector<int> FcarSpec::blocks() const
{
    validate();
    std::vector<int> out;
    if (intercept_function)
        out.push_back(0);
    for (int j = 1; j <= p; ++j)
        if (!(intercept_function && j == d))
            out.push_back(j);
    return out;
}

AffineMap AffineMap::fit(std::span<const double> values)
{
    if (values.empty())
        throw Error("cannot rescale an empty delay variable");
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    if (!(*hi > *lo))
        throw Error("delay variable is constant; functional coefficients are not identifiable");
    return {*lo, *hi - *lo};
}

Eigen::Index LaggedData::column_of(int j) const
{
    auto it = std::find(blocks.begin(), blocks.end(), j);
    if (it == blocks.end())
        throw Error("coefficient function " + std::to_string(j) + " is not estimated by this model");
    return static_cast<Eigen::Index>(it - blocks.begin());
}

LaggedData make_lagged_data(std::span<const double> lag_source, std::span<const double> response,
                            const FcarSpec& spec, std::size_t first)
{
    spec.validate();
    if (lag_source.size() != response.size())
        throw Error("response and lag source lengths differ");
    if (first < static_cast<std::size_t>(spec.p))
        throw Error("first target index must be at least p");
    if (first >= lag_source.size())
        throw Error("series too short: no target observations");

    LaggedData data;
    data.blocks = spec.blocks();
    data.first = first;
    data.source_length = lag_source.size();
    const auto n = static_cast<Eigen::Index>(lag_source.size() - first);
    const auto nb = static_cast<Eigen::Index>(data.blocks.size());
    data.response.resize(n);
    data.regressors.resize(n, nb);
    data.delay.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::size_t t = first + static_cast<std::size_t>(i);
        data.response(i) = response[t];
        data.delay(i) = lag_source[t - static_cast<std::size_t>(spec.d)];
        for (Eigen::Index b = 0; b < nb; ++b) {
            const int j = data.blocks[static_cast<std::size_t>(b)];
            data.regressors(i, b) = j == 0 ? 1.0 : lag_source[t - static_cast<std::size_t>(j)];
        }
    }
    if (!data.response.allFinite() || !data.regressors.allFinite() || !data.delay.allFinite())
        throw Error("FCAR input contains non-finite values");
    return data;
}

LaggedData make_lagged_data(std::span<const double> series, const FcarSpec& spec)
{
    spec.validate();
    return make_lagged_data(series, series, spec, static_cast<std::size_t>(spec.p));
}

double SplineFit::value_unit(int j, double v) const
{
    if (j < 0 || j >= coeffs.cols())
        throw Error("coefficient index out of range");
    const auto s = basis.locate(std::clamp(v, 0.0, 1.0));
    return s.left * coeffs(s.index, j) + s.right * coeffs(s.index + 1, j);
}

SplineFit spline_preestimate(const LaggedData& data, const SplineBasis& basis, const AffineMap& u_map,
                             int min_support)
{
    min_support = std::max(1, min_support);
    const auto n = static_cast<Eigen::Index>(data.rows());
    const auto nb = static_cast<Eigen::Index>(data.blocks.size());
    const Eigen::Index K = basis.size();
    const Eigen::Index cols = nb * K;
    if (n <= cols)
        throw Error("series too short: " + std::to_string(n) + " observations for " + std::to_string(cols) +
                    " spline coefficients");

    // Columns are ordered knot-major (k * nb + b) so every row touches one
    // contiguous window of 2 * nb columns.
    const Eigen::VectorXd unit = to_unit(data.delay, u_map);
    std::vector<SplineBasis::Support> support;
    support.reserve(static_cast<std::size_t>(n));
    Eigen::VectorXd colnorm = Eigen::VectorXd::Zero(cols);
    std::vector<int> colcount(static_cast<std::size_t>(cols), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto s = basis.locate(unit(i));
        support.push_back(s);
        for (Eigen::Index b = 0; b < nb; ++b) {
            const double z = data.regressors(i, b);
            colnorm(s.index * nb + b) += s.left * s.left * z * z;
            colnorm((s.index + 1) * nb + b) += s.right * s.right * z * z;
            if (s.left * z != 0.0)
                ++colcount[static_cast<std::size_t>(s.index * nb + b)];
            if (s.right * z != 0.0)
                ++colcount[static_cast<std::size_t>((s.index + 1) * nb + b)];
        }
    }

    // Knots whose basis support holds fewer than min_support observations are
    // deleted: their coefficient is tied to the linear interpolation of the
    // nearest kept knots of the same block (constant beyond the ends).
    std::vector<Eigen::Index> position(static_cast<std::size_t>(cols), -1);
    std::vector<Eigen::Index> kept;
    std::vector<bool> keep(static_cast<std::size_t>(cols), false);
    for (Eigen::Index b = 0; b < nb; ++b) {
        Eigen::Index busiest = -1;
        bool any = false;
        for (Eigen::Index k = 0; k < K; ++k) {
            const Eigen::Index c = k * nb + b;
            const auto ci = static_cast<std::size_t>(c);
            if (!(colnorm(c) > 0.0))
                continue;
            if (busiest < 0 || colcount[ci] > colcount[static_cast<std::size_t>(busiest)])
                busiest = c;
            if (colcount[ci] >= min_support) {
                keep[ci] = true;
                any = true;
            }
        }
        if (busiest < 0)
            throw Error("rank-deficient design: block for coefficient function " +
                        std::to_string(data.blocks[static_cast<std::size_t>(b)]) + " is identically zero");
        if (!any)
            keep[static_cast<std::size_t>(busiest)] = true;
    }
    for (Eigen::Index c = 0; c < cols; ++c)
        if (keep[static_cast<std::size_t>(c)]) {
            position[static_cast<std::size_t>(c)] = static_cast<Eigen::Index>(kept.size());
            kept.push_back(c);
        }
    const auto m = static_cast<Eigen::Index>(kept.size());

    // fill[c]: kept positions and weights expressing coefficient c
    std::vector<std::vector<std::pair<Eigen::Index, double>>> fill(static_cast<std::size_t>(cols));
    for (Eigen::Index b = 0; b < nb; ++b)
        for (Eigen::Index k = 0; k < K; ++k) {
            const Eigen::Index c = k * nb + b;
            auto& f = fill[static_cast<std::size_t>(c)];
            if (keep[static_cast<std::size_t>(c)]) {
                f.emplace_back(position[static_cast<std::size_t>(c)], 1.0);
                continue;
            }
            Eigen::Index lo = k - 1, hi = k + 1;
            while (lo >= 0 && !keep[static_cast<std::size_t>(lo * nb + b)])
                --lo;
            while (hi < K && !keep[static_cast<std::size_t>(hi * nb + b)])
                ++hi;
            if (lo >= 0 && hi < K) {
                const double a = double(k - lo) / double(hi - lo);
                f.emplace_back(position[static_cast<std::size_t>(lo * nb + b)], 1.0 - a);
                f.emplace_back(position[static_cast<std::size_t>(hi * nb + b)], a);
            } else if (lo >= 0) {
                f.emplace_back(position[static_cast<std::size_t>(lo * nb + b)], 1.0);
            } else {
                f.emplace_back(position[static_cast<std::size_t>(hi * nb + b)], 1.0);
            }
        }

    GivensTriangle tri(m);
    Eigen::VectorXd row = Eigen::VectorXd::Zero(m);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& s = support[static_cast<std::size_t>(i)];
        Eigen::Index lo = m, hi = -1;
        for (Eigen::Index b = 0; b < nb; ++b) {
            const double z = data.regressors(i, b);
            const std::pair<Eigen::Index, double> entries[2] = {{s.index * nb + b, s.left * z},
                                                                {(s.index + 1) * nb + b, s.right * z}};
            for (const auto& [c, v] : entries) {
                if (v == 0.0)
                    continue;
                for (const auto& [pos, w] : fill[static_cast<std::size_t>(c)]) {
                    row(pos) += v * w;
                    lo = std::min(lo, pos);
                    hi = std::max(hi, pos);
                }
            }
        }
        if (hi >= 0)
            tri.add_row(row, lo, hi, data.response(i));
    }
    const Eigen::MatrixXd& R = tri.r();

    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(R);
    const auto rank = cod.rank();
    if (rank < m) {
        for (Eigen::Index b = 0; b < nb; ++b) {
            std::vector<Eigen::Index> others;
            for (Eigen::Index c = 0; c < m; ++c)
                if (kept[static_cast<std::size_t>(c)] % nb != b)
                    others.push_back(c);
            if (others.empty())
                continue;
            Eigen::MatrixXd sub(m, static_cast<Eigen::Index>(others.size()));
            for (std::size_t c = 0; c < others.size(); ++c)
                sub.col(static_cast<Eigen::Index>(c)) = R.col(others[c]);
            Eigen::ColPivHouseholderQR<Eigen::MatrixXd> check(sub);
            check.setThreshold(cod.threshold());
            if (check.rank() >= rank)
                throw Error("rank-deficient design: block for coefficient function " +
                            std::to_string(data.blocks[static_cast<std::size_t>(b)]) +
                            " is collinear with the remaining blocks");
        }
    }
    const Eigen::VectorXd solution = cod.solve(tri.qty());
    const Eigen::MatrixXd r_pinv = cod.pseudoInverse();

    Eigen::MatrixXd fill_matrix = Eigen::MatrixXd::Zero(cols, m);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (const auto& [pos, w] : fill[static_cast<std::size_t>(c)])
            fill_matrix(c, pos) += w;
    const Eigen::VectorXd full = fill_matrix * solution;
    const Eigen::MatrixXd mapped = fill_matrix * r_pinv;

    SplineFit fit;
    fit.basis = basis;
    fit.u_map = u_map;
    fit.blocks = data.blocks;
    fit.rank = static_cast<int>(rank);
    fit.coeffs = Eigen::MatrixXd::Zero(K, *std::max_element(data.blocks.begin(), data.blocks.end()) + 1);
    for (Eigen::Index b = 0; b < nb; ++b)
        for (Eigen::Index k = 0; k < K; ++k)
            fit.coeffs(k, data.blocks[static_cast<std::size_t>(b)]) = full(k * nb + b);
    fit.gram_pinv = mapped * mapped.transpose();

    fit.fitted.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& s = support[static_cast<std::size_t>(i)];
        double f = 0.0;
        for (Eigen::Index b = 0; b < nb; ++b)
            f += (s.left * full(s.index * nb + b) + s.right * full((s.index + 1) * nb + b)) * data.regressors(i, b);
        fit.fitted(i) = f;
    }
    fit.residuals = data.response - fit.fitted;
    return fit;
}

SplineFit spline_preestimate(std::span<const double> series, const FcarSpec& spec, const SplineBasis& basis,
                             int min_support)
{
    const LaggedData data = make_lagged_data(series, spec);
    std::vector<double> delay(data.delay.data(), data.delay.data() + data.delay.size());
    return spline_preestimate(data, basis, AffineMap::fit(delay), min_support);
}

Eigen::VectorXd pseudo_responses(const LaggedData& data, const SplineFit& spline, int target_j)
{
    if (target_j < 0 || target_j > *std::max_element(data.blocks.begin(), data.blocks.end()))
        throw Error("target coefficient index " + std::to_string(target_j) + " outside 0..p");
    check_block(data, target_j);
    Eigen::VectorXd w = data.response;
    for (std::size_t b = 0; b < data.blocks.size(); ++b) {
        const int j = data.blocks[b];
        if (j == target_j)
            continue;
        for (Eigen::Index i = 0; i < w.size(); ++i)
            w(i) -= spline.value(j, data.delay(i)) * data.regressors(i, static_cast<Eigen::Index>(b));
    }
    return w;
}

SbkCurve sbk_estimate(const LaggedData& data, const AffineMap& u_map, const Eigen::VectorXd& pseudo, int target_j,
                      const Eigen::VectorXd& grid, const SbkOptions& options, const SplineFit* fallback)
{
    if (!(options.bandwidth > 0.0))
        throw Error("SBK bandwidth must be positive");
    if (pseudo.size() != static_cast<Eigen::Index>(data.rows()))
        throw Error("pseudo-response length does not match the data");
    const Eigen::VectorXd z = data.regressors.col(data.column_of(target_j));
    const Eigen::VectorXd unit = to_unit(data.delay, u_map);
    const DelayIndex index(unit);
    const double h = options.bandwidth;

    std::optional<SmootherVariance> full;
    if (options.bands == BandMethod::full_smoother && fallback && fallback->gram_pinv.size() > 0)
        full.emplace(data, *fallback, unit, target_j);

    SbkCurve curve;
    curve.lag = target_j;
    curve.grid = grid;
    const Eigen::Index G = grid.size();
    curve.estimate.resize(G);
    curve.se.resize(G);
    curve.lower.resize(G);
    curve.upper.resize(G);
    curve.reliable.assign(static_cast<std::size_t>(G), false);
    curve.local_count.assign(static_cast<std::size_t>(G), 0);

    for (Eigen::Index g = 0; g < G; ++g) {
        const double v = grid(g);
        const LocalSystem sys = accumulate(index, unit, z, &pseudo, v, h, options.kernel);
        curve.local_count[static_cast<std::size_t>(g)] = sys.count;
        double est = kNaN, se = kNaN;
        bool ok = !sys.singular() && sys.count >= options.min_local;
        if (!sys.singular()) {
            const double det = sys.det();
            // inverse of [[a00 a01][a01 a11]]
            const double i00 = sys.a11 / det, i01 = -sys.a01 / det, i11 = sys.a00 / det;
            est = i00 * sys.r0 + i01 * sys.r1;
            const double slope = i01 * sys.r0 + i11 * sys.r1;

            double rss = 0.0;
            const double reach = kernel_support(options.kernel) * h;
            index.for_each_within(v - reach, v + reach, [&](std::size_t i) {
                const auto ii = static_cast<Eigen::Index>(i);
                const double off = (unit(ii) - v) / h;
                const double w = kernel_value(options.kernel, off) / h;
                if (w <= 0.0)
                    return;
                const double e = pseudo(ii) - (est + slope * off) * z(ii);
                rss += w * e * e;
            });
            const double n_eff = sys.sw * sys.sw / sys.sw2;
            if (n_eff > 2.0) {
                const double sigma2 = rss / sys.sw * n_eff / (n_eff - 2.0);
                double var = 0.0;
                if (full) {
                    var = full->variance(index, unit, z, v, h, i00, i01, options.kernel);
                } else {
                    // e1' A^-1 B A^-1 e1
                    const double v0 = i00 * sys.b00 + i01 * sys.b01;
                    const double v1 = i00 * sys.b01 + i01 * sys.b11;
                    var = sigma2 * (v0 * i00 + v1 * i01);
                }
                se = var > 0.0 ? std::sqrt(var) : 0.0;
            } else {
                ok = false;
            }
        }
        ok = ok && std::isfinite(est) && std::isfinite(se);
        curve.reliable[static_cast<std::size_t>(g)] = ok;
        if (ok) {
            curve.estimate(g) = est;
            curve.se(g) = se;
            curve.lower(g) = est - options.z * se;
            curve.upper(g) = est + options.z * se;
        } else {
            curve.estimate(g) = fallback ? fallback->value_unit(target_j, v) : est;
            curve.se(g) = kNaN;
            curve.lower(g) = kNaN;
            curve.upper(g) = kNaN;
        }
    }
    return curve;
}

double smoother_trace(const LaggedData& data, const AffineMap& u_map, int target_j, double bandwidth, Kernel kernel)
{
    if (!(bandwidth > 0.0))
        throw Error("smoother bandwidth must be positive");
    const Eigen::VectorXd z = data.regressors.col(data.column_of(target_j));
    const Eigen::VectorXd unit = to_unit(data.delay, u_map);
    const DelayIndex index(unit);
    const double k0 = kernel_value(kernel, 0.0) / bandwidth;
    double trace = 0.0;
    for (Eigen::Index t = 0; t < unit.size(); ++t) {
        const LocalSystem sys = accumulate(index, unit, z, nullptr, unit(t), bandwidth, kernel);
        if (z(t) == 0.0)
            continue;
        if (sys.singular()) {
            // the local fit interpolates this observation
            trace += 1.0;
            continue;
        }
        trace += k0 * z(t) * z(t) * sys.a11 / sys.det();
    }
    return trace;
}

double default_fcar_bandwidth(const LaggedData& data, const AffineMap& u_map)
{
    const Eigen::VectorXd unit = to_unit(data.delay, u_map);
    const double n = static_cast<double>(unit.size());
    if (n < 2)
        throw Error("bandwidth rule needs at least two observations");
    const double mean = unit.mean();
    const double sd = std::sqrt((unit.array() - mean).square().sum() / (n - 1.0));
    return 1.06 * sd * std::pow(n, -0.2);
}

bool FcarFit::has_block(int j) const
{
    return std::any_of(curves.begin(), curves.end(), [j](const SbkCurve& c) { return c.lag == j; });
}

const SbkCurve& FcarFit::curve(int j) const
{
    for (const SbkCurve& c : curves)
        if (c.lag == j)
            return c;
    throw Error("coefficient function " + std::to_string(j) + " is not part of this fit");
}

double FcarFit::coefficient(int j, double u) const
{
    const SbkCurve& c = curve(j);
    const double v = std::clamp(u_map.to_unit(u), 0.0, 1.0);
    const Eigen::Index G = c.grid.size();
    if (G == 1)
        return c.reliable[0] ? c.estimate(0) : spline.value_unit(j, v);
    const double pos = (v - c.grid(0)) / (c.grid(G - 1) - c.grid(0)) * static_cast<double>(G - 1);
    const Eigen::Index i = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::floor(pos)), 0, G - 2);
    const double w = std::clamp(pos - static_cast<double>(i), 0.0, 1.0);
    const bool left_ok = c.reliable[static_cast<std::size_t>(i)];
    const bool right_ok = c.reliable[static_cast<std::size_t>(i + 1)];
    if (w == 0.0 && left_ok)
        return c.estimate(i);
    if (w == 1.0 && right_ok)
        return c.estimate(i + 1);
    if (left_ok && right_ok)
        return (1.0 - w) * c.estimate(i) + w * c.estimate(i + 1);
    return spline.value_unit(j, v);
}

std::pair<double, double> FcarFit::reliable_range() const
{
    double lo = 1.0, hi = 0.0;
    for (const SbkCurve& c : curves)
        for (Eigen::Index g = 0; g < c.grid.size(); ++g)
            if (c.reliable[static_cast<std::size_t>(g)]) {
                lo = std::min(lo, c.grid(g));
                hi = std::max(hi, c.grid(g));
            }
    if (lo > hi) {
        lo = 0.0;
        hi = 1.0;
    }
    return {u_map.from_unit(lo), u_map.from_unit(hi)};
}

double FcarFit::residual_variance() const
{
    if (residuals.size() == 0)
        return kNaN;
    return residuals.squaredNorm() / static_cast<double>(residuals.size());
}

FcarFit fit_fcar(const LaggedData& data, const FcarSpec& spec, const FcarOptions& options)
{
    spec.validate();
    if (data.blocks != spec.blocks())
        throw Error("lagged data was built for a different FCAR specification");
    if (options.grid_size < 2)
        throw Error("SBK grid needs at least two points");

    std::vector<double> delay(data.delay.data(), data.delay.data() + data.delay.size());
    const AffineMap u_map = AffineMap::fit(delay);

    const auto nb = static_cast<int>(data.blocks.size());
    const auto T = static_cast<long>(data.source_length);
    const auto fits = [&](int N) { return T > static_cast<long>(nb) * (N + 2) + spec.p && static_cast<long>(data.rows()) > static_cast<long>(nb) * (N + 2); };
    int knots = 0;
    if (options.knots) {
        knots = *options.knots;
        if (knots < 1)
            throw Error("interior knot count must be at least 1");
        if (!fits(knots))
            throw Error("series too short for " + std::to_string(knots) + " interior knots");
    } else {
        knots = default_knot_count(data.source_length);
        while (knots > 1 && !fits(knots))
            --knots;
        if (!fits(knots))
            throw Error("series too short: " + std::to_string(data.source_length) +
                        " observations cannot identify the spline pre-estimate");
    }

    FcarFit fit;
    fit.spec = spec;
    fit.u_map = u_map;
    fit.kernel = options.kernel;
    fit.first = data.first;
    fit.spline = spline_preestimate(data, SplineBasis(knots), u_map, options.spline_min_support);
    fit.bandwidth = options.bandwidth.value_or(default_fcar_bandwidth(data, u_map));
    if (!(fit.bandwidth > 0.0))
        throw Error("SBK bandwidth must be positive");

    const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(options.grid_size, 0.0, 1.0);
    SbkOptions sbk;
    sbk.bandwidth = fit.bandwidth;
    sbk.kernel = options.kernel;
    sbk.min_local = options.min_local;
    sbk.bands = options.bands;
    for (int j : data.blocks) {
        const Eigen::VectorXd pseudo = pseudo_responses(data, fit.spline, j);
        fit.curves.push_back(sbk_estimate(data, u_map, pseudo, j, grid, sbk, &fit.spline));
        fit.traces.push_back(smoother_trace(data, u_map, j, fit.bandwidth, options.kernel));
    }

    const auto n = static_cast<Eigen::Index>(data.rows());
    fit.fitted = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (std::size_t b = 0; b < data.blocks.size(); ++b)
            fit.fitted(i) += fit.coefficient(data.blocks[b], data.delay(i)) * data.regressors(i, static_cast<Eigen::Index>(b));
    fit.residuals = data.response - fit.fitted;
    fit.effective_params = std::accumulate(fit.traces.begin(), fit.traces.end(), 0.0);
    return fit;
}

FcarFit fit_fcar(std::span<const double> series, const FcarSpec& spec, const FcarOptions& options)
{
    return fit_fcar(make_lagged_data(series, spec), spec, options);
}

double effective_params(const FcarFit& fit)
{
    // no parametric terms in the FCAR recursion itself
    return std::accumulate(fit.traces.begin(), fit.traces.end(), 0.0);
}

std::vector<double> forecast_fcar(const FcarFit& fit, std::span<const double> history, int steps)
{
    if (steps < 1)
        throw Error("forecast needs at least one step");
    if (history.size() < static_cast<std::size_t>(fit.spec.p))
        throw Error("forecast history shorter than p");
    std::vector<double> path(history.begin(), history.end());
    const auto [lo, hi] = fit.reliable_range();
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(steps));
    for (int s = 0; s < steps; ++s) {
        const std::size_t n = path.size();
        const double u = std::clamp(path[n - static_cast<std::size_t>(fit.spec.d)], lo, hi);
        double next = 0.0;
        for (const SbkCurve& c : fit.curves)
            next += fit.coefficient(c.lag, u) * (c.lag == 0 ? 1.0 : path[n - static_cast<std::size_t>(c.lag)]);
        path.push_back(next);
        out.push_back(next);
    }
    return out;
}

OrderSelection select_fcar_order(std::span<const double> series, const FcarOptions& options, int max_p,
                                 bool intercept_function)
{
    if (max_p < 1)
        throw Error("order search needs max_p >= 1");
    OrderSelection sel;
    double best = std::numeric_limits<double>::infinity();
    for (int p = 1; p <= max_p; ++p)
        for (int d = 1; d <= p; ++d) {
            const FcarSpec spec{p, d, intercept_function};
            if (spec.blocks().empty())
                continue;
            const LaggedData data = make_lagged_data(series, series, spec, static_cast<std::size_t>(max_p));
            const FcarFit fit = fit_fcar(data, spec, options);
            OrderCandidate c;
            c.spec = spec;
            c.residual_variance = fit.residual_variance();
            c.effective_params = fit.effective_params;
            const double n = static_cast<double>(data.rows());
            c.criterion = n * std::log(c.residual_variance) + 2.0 * c.effective_params;
            if (c.criterion < best) {
                best = c.criterion;
                sel.best = spec;
            }
            sel.candidates.push_back(c);
        }
    return sel;
}

} // namespace solarst
