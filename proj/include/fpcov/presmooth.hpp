/// \file presmooth.hpp
/// \brief Per-curve kernel presmoothing onto the shared grid.
///
/// Each observed curve (T_j, Y_j), j = 1..m, is turned into four node
/// vectors: the smoothed curve, its analytic derivative, and the same pair
/// for the squared observations.  The smoother is the plain kernel average
///   X(s) = (1/m) sum_j Y_j K((s - T_j)/h) / h,
/// whose s-derivative is available in closed form because the quartic
/// kernel is differentiable.  Work per observation is O(1): the kernel
/// support covers at most three grid nodes.
#pragma once

#include <string>
#include <vector>

#include "fpcov/grid.hpp"

namespace fpcov {

/// One subject's raw observations.
struct ObservedCurve {
  std::string id;
  std::vector<double> times;   ///< T_j, must lie in [0,1]
  std::vector<double> values;  ///< Y_j

  int m() const { return static_cast<int>(times.size()); }

  /// Throws NonFiniteInput if any time/value is NaN or infinite, or any
  /// time lies outside [0,1]; throws NoData if the curve is empty.
  void validate() const;
};

/// Kernel-smoothed representation of one curve on the grid.
struct PresmoothedCurve {
  std::string id;
  int m = 0;
  /// Pairing weight m/(m-1); zero when m < 2 (curve is ineligible for the
  /// off-diagonal covariance stage but still contributes to the diagonal).
  double pair_weight = 0.0;
  std::vector<double> x;     ///< smoothed values at the nodes
  std::vector<double> dx;    ///< smoothed derivative at the nodes
  std::vector<double> sq;    ///< smoothed squared values at the nodes
  std::vector<double> dsq;   ///< derivative of the smoothed squares

  bool eligible() const { return m >= 2; }
};

/// Presmooth one validated curve onto the grid.
PresmoothedCurve presmooth_curve(const ObservedCurve& curve,
                                 const SmoothGrid& grid);

/// Evaluate the B-spline linearization of a field given by node values v
/// and node derivatives dv at an arbitrary point t:
///   sum_l [ v_l + (t - s_l) dv_l ] Q((t - s_l)/h).
/// Only the <= 4 nodes with |t - s_l| < 2h contribute.
double linearized_value(const SmoothGrid& grid, const std::vector<double>& v,
                        const std::vector<double>& dv, double t);

}  // namespace fpcov
