#pragma once

namespace trailstop::specialfn {

// Parabolic cylinder function D_nu(x) for real order nu <= 0.
//
// The value is carried as sign * exp(log_magnitude) so that arguments deep in
// the tails stay representable; log_derivative is D'/D.
struct CylinderEval {
  double order = 0.0;
  double argument = 0.0;
  double value = 0.0;        // NaN-free only when !log_scaled
  bool log_scaled = false;   // true when |value| over/underflows a double
  int sign = 1;
  double log_magnitude = 0.0;
  double log_derivative = 0.0;
};

// Throws DomainError for nu > 0 or non-finite input.
CylinderEval parabolic_cylinder_eval(double nu, double x);

// Plain value; throws RangeError when the result over/underflows.
double parabolic_cylinder(double nu, double x);

// log D_nu(x) and D'/D; the workhorse for the closed-form exp-OU backend.
struct LogCylinder {
  double log_value;
  double log_derivative;
};
LogCylinder log_parabolic_cylinder(double nu, double x);

namespace detail {

// Individual evaluation routes, exposed for cross-checking in tests.
// Each returns log D and D'/D.
struct SeriesResult {
  LogCylinder eval;
  double condition;  // sum |terms| / |sum|
};
SeriesResult maclaurin_with_condition(double nu, double x);
LogCylinder maclaurin(double nu, double x);
// Any x: steps down from the asymptotic start (the stable direction everywhere).
LogCylinder from_positive_asymptotic(double nu, double x);
LogCylinder from_negative_side(double nu, double x);        // x <= -4, steps out from the series at -4
LogCylinder negative_asymptotic(double nu, double x);       // x << 0
double asymptotic_start(double nu);

}  // namespace detail

}  // namespace trailstop::specialfn
