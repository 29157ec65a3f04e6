#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace trailstop::numeric {

using ScalarFn = std::function<double(double)>;

// Root of f in [a, b]; f(a) and f(b) must have opposite signs (or be zero).
double bracketed_root(const ScalarFn& f, double a, double b);

// Same, with the endpoint values already known.
double bracketed_root(const ScalarFn& f, double a, double b, double fa, double fb);

// Index i of the first pair (nodes[i], nodes[i+1]) where the sampled values go
// from > 0 to <= 0.
std::optional<std::size_t> first_down_crossing(std::span<const double> values);

struct Extremum {
  double x;
  double value;
};

// Maximizer of a unimodal function on [a, b] (Brent's parabolic/golden search).
Extremum brent_maximize(const ScalarFn& f, double a, double b);

enum class Tie { leftmost, rightmost };

// Index of the grid maximum; values within tie_tol * (1 + |max|) of the
// maximum count as tied and the leftmost or rightmost tied neighbor of the
// incumbent is returned.
std::size_t grid_argmax(std::span<const double> values, Tie tie, double tie_tol = 1e-10);

std::vector<double> linspace(double a, double b, std::size_t n);
std::vector<double> geomspace(double a, double b, std::size_t n);

// Piecewise cubic Hermite interpolant through (x_i, y_i, y'_i); x strictly increasing.
class HermiteTable {
 public:
  HermiteTable() = default;
  HermiteTable(std::vector<double> x, std::vector<double> y, std::vector<double> dy);

  double operator()(double x) const;
  double derivative(double x) const;
  double front() const { return x_.front(); }
  double back() const { return x_.back(); }
  bool empty() const { return x_.empty(); }
  std::span<const double> nodes() const { return x_; }
  std::span<const double> values() const { return y_; }

 private:
  std::size_t segment(double x) const;
  std::vector<double> x_, y_, dy_;
};

// Sign pattern of the second differences of a sampled curve.
struct ConvexityReport {
  // +1 convex, -1 concave, 0 undetermined (within tolerance) per interior node
  std::vector<int> signs;
  // abscissae where the classified sign flips (midpoint between the two nodes)
  std::vector<double> switches;
  std::vector<int> switch_from;  // sign before each switch
  std::vector<std::pair<double, double>> brackets;  // classified nodes around each switch
};

// Classifies second divided differences; |D2| <= rel_tol * local scale is
// treated as zero, where the local scale is the magnitude of the adjacent
// slopes divided by the local spacing.
ConvexityReport classify_convexity(std::span<const double> x, std::span<const double> y, double rel_tol = 1e-8);

// Upper concave envelope of points sorted by abscissa; returns the indices of
// the hull vertices.
std::vector<std::size_t> upper_hull(std::span<const double> x, std::span<const double> y);

}  // namespace trailstop::numeric
