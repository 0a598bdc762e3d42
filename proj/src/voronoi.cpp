#include "solarst/voronoi.hpp"

#include "solarst/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace solarst {

namespace {

using Polygon = std::vector<Point>;

double cross(Point o, Point a, Point b)
{
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

/// Keeps the part of a convex polygon with n.x <= c.
Polygon clip(const Polygon& poly, Point n, double c)
{
    Polygon out;
    if (poly.empty())
        return out;
    out.reserve(poly.size() + 1);
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const Point a = poly[i];
        const Point b = poly[(i + 1) % poly.size()];
        const double fa = n.x * a.x + n.y * a.y - c;
        const double fb = n.x * b.x + n.y * b.y - c;
        if (fa <= 0.0)
            out.push_back(a);
        if ((fa < 0.0 && fb > 0.0) || (fa > 0.0 && fb < 0.0)) {
            const double t = fa / (fa - fb);
            out.push_back({a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)});
        }
    }
    return out;
}

/// Half-plane of points at least as close to p as to q.
Polygon clip_bisector(const Polygon& poly, Point p, Point q)
{
    const Point n{q.x - p.x, q.y - p.y};
    const double c = 0.5 * ((q.x * q.x + q.y * q.y) - (p.x * p.x + p.y * p.y));
    return clip(poly, n, c);
}

double area(const Polygon& poly)
{
    double a = 0.0;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const Point& p = poly[i];
        const Point& q = poly[(i + 1) % poly.size()];
        a += p.x * q.y - q.x * p.y;
    }
    return 0.5 * std::abs(a);
}

/// Sensors in a normalised frame (centred, unit extent) to keep the geometry well conditioned.
struct Frame {
    double cx = 0.0, cy = 0.0, scale = 1.0;
    std::vector<Point> pts;

    explicit Frame(const SensorLayout& layout)
    {
        double minx = std::numeric_limits<double>::infinity(), maxx = -minx, miny = minx, maxy = -minx;
        for (const Sensor& s : layout.sensors()) {
            minx = std::min(minx, s.x);
            maxx = std::max(maxx, s.x);
            miny = std::min(miny, s.y);
            maxy = std::max(maxy, s.y);
        }
        cx = 0.5 * (minx + maxx);
        cy = 0.5 * (miny + maxy);
        scale = std::max(maxx - minx, maxy - miny);
        if (!(scale > 0.0))
            scale = 1.0;
        for (const Sensor& s : layout.sensors())
            pts.push_back(map({s.x, s.y}));
    }

    Point map(Point p) const { return {(p.x - cx) / scale, (p.y - cy) / scale}; }
};

std::vector<Point> convex_hull(std::vector<Point> pts)
{
    std::sort(pts.begin(), pts.end(), [](Point a, Point b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
    std::vector<Point> hull(2 * pts.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0)
            --k;
        hull[k++] = pts[i];
    }
    for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
        while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i - 1]) <= 0.0)
            --k;
        hull[k++] = pts[i - 1];
    }
    hull.resize(k > 0 ? k - 1 : 0);
    return hull;
}

std::vector<Point> checked_hull(const Frame& frame)
{
    if (frame.pts.size() < 3)
        throw Error("natural-neighbour interpolation needs at least three sensors");
    auto hull = convex_hull(frame.pts);
    if (hull.size() < 3 || area(hull) < 1e-12)
        throw Error("degenerate sensor geometry: all sensors are collinear");
    return hull;
}

bool inside(const std::vector<Point>& hull, Point q)
{
    constexpr double eps = 1e-10;
    for (std::size_t i = 0; i < hull.size(); ++i)
        if (cross(hull[i], hull[(i + 1) % hull.size()], q) <= eps)
            return false;
    return true;
}

std::size_t nearest(const SensorLayout& layout, Point q)
{
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < layout.size(); ++i) {
        const double d = std::hypot(layout[i].x - q.x, layout[i].y - q.y);
        if (d < best_d || (d == best_d && layout[i].id < layout[best].id)) {
            best_d = d;
            best = i;
        }
    }
    return best;
}

} // namespace

bool strictly_inside_hull(const SensorLayout& layout, Point query)
{
    const Frame frame(layout);
    return inside(checked_hull(frame), frame.map(query));
}

VoronoiWeights voronoi_weights(const SensorLayout& layout, Point query)
{
    if (!std::isfinite(query.x) || !std::isfinite(query.y))
        throw Error("query location is not finite");
    const Frame frame(layout);
    const auto hull = checked_hull(frame);
    const Point q = frame.map(query);

    VoronoiWeights out;
    for (std::size_t i = 0; i < frame.pts.size(); ++i)
        if (std::hypot(frame.pts[i].x - q.x, frame.pts[i].y - q.y) < 1e-12) {
            out.weights.emplace_back(i, 1.0);
            return out;
        }
    if (!inside(hull, q)) {
        out.weights.emplace_back(nearest(layout, query), 1.0);
        out.hull_fallback = true;
        return out;
    }

    constexpr double box = 1e3;
    Polygon cell{{-box, -box}, {box, -box}, {box, box}, {-box, box}};
    for (const Point& p : frame.pts)
        cell = clip_bisector(cell, q, p);

    std::vector<double> stolen(frame.pts.size(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < frame.pts.size(); ++i) {
        Polygon part = cell;
        for (std::size_t j = 0; j < frame.pts.size() && !part.empty(); ++j)
            if (j != i)
                part = clip_bisector(part, frame.pts[i], frame.pts[j]);
        stolen[i] = part.size() >= 3 ? area(part) : 0.0;
        total += stolen[i];
    }
    if (!(total > 0.0))
        throw Error("natural-neighbour cell of the query has zero area");
    for (std::size_t i = 0; i < stolen.size(); ++i)
        if (stolen[i] > 0.0)
            out.weights.emplace_back(i, stolen[i] / total);
    return out;
}

NaturalNeighborPrediction natural_neighbor_predict(const SpatioTemporalField& train, Point query)
{
    train.require_complete("natural-neighbour prediction");
    NaturalNeighborPrediction out;
    out.weights = voronoi_weights(train.layout(), query);
    out.values = Eigen::VectorXd::Zero(train.values().cols());
    for (const auto& [i, w] : out.weights.weights)
        out.values += w * train.values().row(static_cast<Eigen::Index>(i)).transpose();
    return out;
}

} // namespace solarst
