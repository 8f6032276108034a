#include "pecusum/grid.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace pecusum {

namespace {

// Trapezoid weights for strictly increasing knots:
//   w_0 = (x_1-x_0)/2, w_j = (x_{j+1}-x_{j-1})/2, w_last = (x_last-x_{last-1})/2.
Vec trapezoid_weights(const Vec& points) {
    const int g = static_cast<int>(points.size());
    Vec w(g);
    w(0) = 0.5 * (points(1) - points(0));
    for (int j = 1; j < g - 1; ++j) w(j) = 0.5 * (points(j + 1) - points(j - 1));
    w(g - 1) = 0.5 * (points(g - 1) - points(g - 2));
    return w;
}

}  // namespace

Grid make_uniform_grid(int g) {
    if (g < 2) throw std::invalid_argument("make_uniform_grid: need at least 2 points");
    Vec points(g);
    const double h = 1.0 / (g - 1);
    for (int j = 0; j < g; ++j) points(j) = j * h;
    points(g - 1) = 1.0;  // exact endpoint regardless of rounding in j*h
    Grid grid{std::move(points), Vec()};
    grid.weights = trapezoid_weights(grid.points);
    return grid;
}

Grid make_grid(const Vec& points) {
    Grid grid{points, Vec()};
    if (points.size() < 2) throw std::invalid_argument("make_grid: need at least 2 points");
    grid.weights = trapezoid_weights(points);
    validate(grid);
    return grid;
}

void validate(const Grid& grid) {
    const int g = grid.size();
    if (g < 2) throw std::invalid_argument("grid: need at least 2 points");
    if (grid.weights.size() != g)
        throw std::invalid_argument("grid: weights length mismatch");
    if (!(grid.points(0) >= 0.0) || !(grid.points(g - 1) <= 1.0))
        throw std::invalid_argument("grid: points must lie in [0,1]");
    for (int j = 1; j < g; ++j)
        if (!(grid.points(j) > grid.points(j - 1)))
            throw std::invalid_argument("grid: points must be strictly increasing");
    double wsum = 0.0;
    for (int j = 0; j < g; ++j) {
        if (!(grid.weights(j) > 0.0))
            throw std::invalid_argument("grid: weights must be strictly positive");
        wsum += grid.weights(j);
    }
    const double span = grid.points(g - 1) - grid.points(0);
    if (std::abs(wsum - span) > 1e-12)
        throw std::invalid_argument("grid: weights must sum to covered span");
}

namespace {

void check_length(const Vec& values, const Grid& grid, const char* where) {
    if (values.size() != grid.points.size())
        throw std::invalid_argument(std::string(where) + ": curve/grid length mismatch");
}

}  // namespace

double integrate(const Vec& values, const Grid& grid) {
    check_length(values, grid, "integrate");
    return grid.weights.dot(values);
}

double l2_norm_sq(const Vec& values, const Grid& grid) {
    check_length(values, grid, "l2_norm_sq");
    return grid.weights.dot(values.cwiseProduct(values));
}

double l2_inner(const Vec& a, const Vec& b, const Grid& grid) {
    check_length(a, grid, "l2_inner");
    check_length(b, grid, "l2_inner");
    return grid.weights.dot(a.cwiseProduct(b));
}

Vec resample_linear(const Vec& values, const Grid& from, const Grid& to) {
    check_length(values, from, "resample_linear");
    const int gf = from.size();
    Vec out(to.size());
    for (int j = 0; j < to.size(); ++j) {
        const double x = to.points(j);
        if (x <= from.points(0)) {
            out(j) = values(0);
            continue;
        }
        if (x >= from.points(gf - 1)) {
            out(j) = values(gf - 1);
            continue;
        }
        // Upper bound of the bracketing segment [k-1, k].
        int lo = 0, hi = gf - 1;
        while (hi - lo > 1) {
            const int mid = (lo + hi) / 2;
            (from.points(mid) <= x ? lo : hi) = mid;
        }
        const double x0 = from.points(lo), x1 = from.points(hi);
        const double f = (x - x0) / (x1 - x0);
        out(j) = (1.0 - f) * values(lo) + f * values(hi);
    }
    return out;
}

}  // namespace pecusum
