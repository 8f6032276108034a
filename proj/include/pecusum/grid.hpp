// =============================================================================
// Grids over [0,1] and trapezoid quadrature.
//
// Every curve in the project lives on a Grid; integrals, norms and inner
// products are quadrature sums with the grid's trapezoid weights. Trapezoid is
// exact for piecewise-linear integrands on the grid's own knots.
// =============================================================================
#pragma once

#include "pecusum/types.hpp"

namespace pecusum {

struct Grid {
    Vec points;   // strictly increasing, within [0,1]
    Vec weights;  // strictly positive, sum = points(last) - points(first)

    int size() const { return static_cast<int>(points.size()); }
};

// g equally spaced points on [0,1] inclusive, trapezoid weights.
// Throws std::invalid_argument for g < 2.
Grid make_uniform_grid(int g);

// Trapezoid grid over arbitrary strictly increasing points in [0,1].
Grid make_grid(const Vec& points);

// Validates the Grid invariants; throws std::invalid_argument on violation.
void validate(const Grid& grid);

// Quadrature integral of curve values over the grid.
double integrate(const Vec& values, const Grid& grid);

// Squared L2 norm: sum_j w_j * values_j^2.
double l2_norm_sq(const Vec& values, const Grid& grid);

// L2 inner product: sum_j w_j * a_j * b_j. inner(c, c) == l2_norm_sq(c).
double l2_inner(const Vec& a, const Vec& b, const Grid& grid);

// Linear interpolation of a curve from one grid onto another. Points of `to`
// outside the span of `from` are clamped to the boundary values.
Vec resample_linear(const Vec& values, const Grid& from, const Grid& to);

}  // namespace pecusum
