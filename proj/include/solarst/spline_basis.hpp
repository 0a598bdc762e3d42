#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace solarst {

/// Linear B-spline (tent) basis on N equally spaced interior knots in [0, 1].
/// Knots are xi_k = k * H, k = 0..N+1, with H = 1 / (N + 1).
class SplineBasis {
public:
    explicit SplineBasis(int interior_knots);

    int interior_knots() const { return n_; }
    /// Number of basis functions, N + 2.
    int size() const { return n_ + 2; }
    double spacing() const { return h_; }
    double knot(int k) const;
    std::vector<double> knots() const;

    /// The (at most) two non-zero basis functions at u: b_index(u) = left and
    /// b_{index+1}(u) = right. At u = 1 the index is N and right is 1.
    struct Support {
        int index;
        double left;
        double right;
    };
    Support locate(double u) const;

    /// b_0(u) .. b_{N+1}(u); throws when u is outside [0, 1].
    Eigen::VectorXd eval(double u) const;

private:
    int n_;
    double h_;
};

/// round(T^(2/5) * ln T), clamped to [1, T/4].
int default_knot_count(std::size_t sample_size);

} // namespace solarst
