/// \file grid.hpp
/// \brief Design density models and the common smoothing grid.
///
/// All estimators evaluate on one shared grid of spacing h that overhangs
/// the unit interval by the B-spline half-support (2 cells) on each side,
/// so that every kernel window touching [0,1] is fully resolved.  Node l
/// sits at s_l = (l - 2) h; in particular s = 0 is always a node.
///
/// Functions of one variable are carried as node vectors and understood as
/// their piecewise-linear interpolants; the quadrature weights below make
/// integration of such interpolants over [0,1] exact.
#pragma once

#include <functional>
#include <string>
#include <vector>

namespace fpcov {

/// Design density g on [0,1], extended by clamping beyond the ends and
/// floored away from zero so that 1/g stays bounded.
class DensityModel {
 public:
  /// Lower clip applied to every evaluation.
  static constexpr double kFloor = 0.05;

  static DensityModel uniform();
  /// g(t) = 0.5 + t on [0,1].
  static DensityModel truncated_linear();
  /// Quartic-kernel KDE of the pooled observation times with boundary
  /// reflection at 0 and 1 and a plug-in bandwidth.
  static DensityModel estimate(const std::vector<double>& pooled_times);

  /// Evaluate at t, clamping t into [0,1] and flooring the result.
  double operator()(double t) const;

  std::string describe() const;

 private:
  enum class Kind { kUniform, kTruncatedLinear, kKde };
  Kind kind_ = Kind::kUniform;
  std::vector<double> sample_;  ///< sorted pooled times (KDE only)
  double bandwidth_ = 0.0;      ///< KDE bandwidth

  double kde_raw(double t) const;
};

/// The shared evaluation grid for one bandwidth h.
struct SmoothGrid {
  double h = 0.0;
  int size = 0;                      ///< number of nodes L
  std::vector<double> points;        ///< s_l = (l - 2) h
  std::vector<double> g;             ///< density at the nodes
  std::vector<double> unit_weights;  ///< integral of each hat basis over [0,1]
  int unit_first = 2;                ///< first node inside [0,1] (always s=0)
  int unit_last = 2;                 ///< first node with s_l >= 1
  DensityModel density;

  /// Build the grid for bandwidth h: L = ceil(1/h) + 5 nodes.
  static SmoothGrid build(double h, const DensityModel& density);

  double point(int l) const { return points[l]; }

  /// True if the two grids have identical geometry (same h and size).
  bool same_geometry(const SmoothGrid& other) const {
    return h == other.h && size == other.size;
  }

  /// Index of the cell containing t, clamped to [0, size-2].
  int cell_of(double t) const;

  /// Piecewise-linear interpolation of a node vector at t (clamped).
  double interp(const std::vector<double>& values, double t) const;

  /// Exact integral of the piecewise-linear interpolant of `values`
  /// over [a, b] (a <= b, both within the grid span).
  double integrate_linear(const std::vector<double>& values, double a,
                          double b) const;

  /// Integrate an arbitrary callable over [a, b] by splitting at the grid
  /// knots and applying a Gauss-Legendre rule on each piece: order 5
  /// (default, exact to degree 9) or order 7 (exact to degree 13) for the
  /// piecewise polynomials with on-grid knots that arise here.
  double integrate_cellwise(double a, double b,
                            const std::function<double(double)>& f,
                            int order = 5) const;

  /// Density evaluated directly from the model (not interpolated).
  double density_at(double t) const { return density(t); }
};

}  // namespace fpcov
