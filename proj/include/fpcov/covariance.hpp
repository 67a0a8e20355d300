/// \file covariance.hpp
/// \brief Covariance surface estimators on the smoothing grid.
///
/// Three estimators live here:
///  - the pairing-corrected off-diagonal surface, built from per-curve
///    summability vectors V_i (a B-spline linearization of the presmoothed
///    curve) as a weighted average of rank-one products V_i V_i^T;
///  - the diagonal curve, built from the smoothed squared observations,
///    which alone carries same-observation information;
///  - the naive empirical covariance of presmoothed curves, kept for
///    diagnostics (its diagonal is inflated by a known kernel factor).
///
/// The merge step blends the off-diagonal surface with the noise-corrected
/// diagonal curve through the smoothed band indicator.
#pragma once

#include <functional>
#include <vector>

#include "fpcov/grid.hpp"
#include "fpcov/kernels.hpp"
#include "fpcov/presmooth.hpp"

namespace fpcov {

enum class SurfaceKind { kOffDiagonal, kMerged, kNaive, kCustom };

/// A symmetric surface sampled on the grid nodes (row-major L x L),
/// understood between nodes as its bilinear interpolant.
struct CovarianceSurface {
  SmoothGrid grid;
  SurfaceKind kind = SurfaceKind::kCustom;
  std::vector<double> values;

  double at(int a, int b) const { return values[a * grid.size + b]; }
  double& at(int a, int b) { return values[a * grid.size + b]; }

  /// Bilinear interpolation at (s, t), clamped to the grid span.
  double bilinear(double s, double t) const;

  /// Replace by the symmetric part (C + C^T)/2.
  void symmetrize();

  /// Sample an analytic surface on the grid (used for truth and tests).
  static CovarianceSurface from_function(
      const SmoothGrid& grid, const std::function<double(double, double)>& f,
      SurfaceKind kind = SurfaceKind::kCustom);
};

/// The diagonal estimate: node values of the smoothed-squares curve
/// (already divided by the design density) plus the averaged smoothed
/// squares themselves, so the curve can be evaluated between nodes via the
/// same B-spline linearization used on the nodes.
struct DiagonalCurve {
  SmoothGrid grid;
  std::vector<double> values;    ///< diag estimate at the nodes
  std::vector<double> sq_mean;   ///< average smoothed squares
  std::vector<double> dsq_mean;  ///< average smoothed-squares derivative

  /// Evaluate at an arbitrary point (midpoints of grid pairs in practice).
  double value_at(double t) const;
};

/// Per-curve summability vector V_i at the nodes: a 3-tap B-spline
/// linearization of (x, dx), executed as two short convolutions through
/// the FFT path.  Zero-extension beyond the grid is exact because the
/// presmoothed fields vanish there.
std::vector<double> summability_vector(const SmoothGrid& grid,
                                       const PresmoothedCurve& curve);

/// Pairing-corrected off-diagonal estimator
///   C(s_a, s_b) = [g(s_a) g(s_b)]^{-1} (1/n_e) sum_i w(m_i) V_i(a) V_i(b)
/// over curves with m_i >= 2 (weight w(m) = m/(m-1)); n_e is the number of
/// such curves.  Throws NoEligibleCurves when none qualify.
/// If `u_vectors_out` is non-null it receives V_i/g for each curve
/// (empty vectors for ineligible curves), which later stages reuse.
CovarianceSurface estimate_offdiag(
    const std::vector<PresmoothedCurve>& curves, const SmoothGrid& grid,
    std::vector<std::vector<double>>* u_vectors_out = nullptr);

/// Diagonal estimator from the smoothed squared observations, averaged
/// over all curves (m_i = 1 curves contribute here).
DiagonalCurve estimate_diag(const std::vector<PresmoothedCurve>& curves,
                            const SmoothGrid& grid);

/// Naive empirical covariance (1/n) sum_i x_i x_i^T of the presmoothed
/// curves: no pairing correction, no density normalization.  Its diagonal
/// is inflated by the same-observation kernel term.
CovarianceSurface naive_covariance(const std::vector<PresmoothedCurve>& curves,
                                   const SmoothGrid& grid);

/// Blend the off-diagonal surface with the noise-corrected diagonal curve:
///   C_c(s,t) = (1-W) C_offdiag(s,t) + W * max{ D((s+t)/2) - sigma2, h^2 }
/// where W is the smoothed band indicator.  The result is symmetrized.
/// Throws GridMismatch if the inputs live on different grids.
CovarianceSurface merge(const CovarianceSurface& offdiag,
                        const DiagonalCurve& diag, double sigma2,
                        const kern::DiagonalWeight& weight);

}  // namespace fpcov
