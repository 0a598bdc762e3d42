#pragma once

#include "solarst/core.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <utility>
#include <vector>

namespace solarst {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

/// Natural-neighbour weights of a query point. `hull_fallback` is set when the
/// query is not strictly inside the convex hull of the layout; the weights are
/// then a single 1 on the nearest sensor.
struct VoronoiWeights {
    std::vector<std::pair<std::size_t, double>> weights;
    bool hull_fallback = false;
};

/// Sibson weights: area each sensor's Voronoi cell loses to the cell of the
/// inserted query, over the area of that new cell.
VoronoiWeights voronoi_weights(const SensorLayout& layout, Point query);

bool strictly_inside_hull(const SensorLayout& layout, Point query);

struct NaturalNeighborPrediction {
    Eigen::VectorXd values;
    VoronoiWeights weights;
};

/// Per-time weighted average of the sensors of `train` at the query location.
NaturalNeighborPrediction natural_neighbor_predict(const SpatioTemporalField& train, Point query);

} // namespace solarst
