#include "fpcov/noise.hpp"

#include <algorithm>
#include <cmath>

#include "fpcov/errors.hpp"
#include "fpcov/kernels.hpp"

namespace fpcov {

namespace {

/// Smallest admissible oblique offset: half of the shared-observation zone
/// 2(B_K + C_Q)h expressed in units of h.
constexpr double kMinOffset =
    kern::kQuarticHalfSupport + kern::kBsplineHalfSupport;  // 3

/// The oblique segments may read the surface slightly beyond [0,1]: the
/// grid (and the estimator) extends C_Q h past each end, and bilinear
/// evaluation is exact up to the overhang nodes.
constexpr double kOverhang = kern::kBsplineHalfSupport;  // C_Q = 2

bool window_fits(double t0, double t1, double a2, double h, double slack) {
  return t0 - a2 * h >= -slack * h - 1e-12 &&
         t1 + a2 * h <= 1.0 + slack * h + 1e-12 && t1 > t0;
}

}  // namespace

SigmaBand SigmaConfig::resolve(double h) const {
  if (!(h > 0.0)) throw InvalidConfig("sigma band: h must be positive");
  if (a1 < kMinOffset) {
    throw InvalidConfig(
        "sigma band: lower offset must be >= 3 to clear the "
        "shared-observation zone");
  }
  if (!(a2 > a1)) throw InvalidConfig("sigma band: need a2 > a1");
  if (!(0.0 < t0 && t0 < t1 && t1 < 1.0)) {
    throw InvalidConfig("sigma band: need 0 < t0 < t1 < 1");
  }

  SigmaBand band;
  band.nodes = std::max(nodes, 32);
  band.a1 = a1;
  band.a2 = a2;
  band.t0 = t0;
  band.t1 = t1;

  if (window_fits(t0, t1, a2, h, 0.0)) return band;

  // The requested band leaves the design interval.  Fall back to the
  // smallest decontaminated offsets -- the oblique pairs then sit closest
  // to the diagonal, which minimizes the curvature bias of the average.
  const double width = a2 - a1;
  band.a1 = kMinOffset;
  band.a2 = kMinOffset + std::min(width, 1.0);
  if (window_fits(t0, t1, band.a2, h, 0.0)) {
    band.adapted = true;
    band.note = "oblique offsets lowered to the contamination floor";
    return band;
  }

  // Floored offsets still leave [0,1]; narrow the t-window, keeping the
  // segments inside the interval where the surface is well supported.
  const double min_width = std::max(2.0 * h, 0.02);
  {
    const double nt0 = std::max(t0, band.a2 * h);
    const double nt1 = std::min(t1, 1.0 - band.a2 * h);
    if (nt1 - nt0 >= min_width - 1e-12) {
      band.t0 = nt0;
      band.t1 = nt1;
      band.adapted = true;
      band.note = "oblique offsets floored and t-window narrowed";
      return band;
    }
  }

  // No interior window is wide enough; let the segments reach into the
  // grid overhang, where the surface is still defined (if thinly
  // supported), rather than give up outright.
  if (window_fits(t0, t1, band.a2, h, kOverhang)) {
    band.adapted = true;
    band.note = "oblique offsets floored; segments extend past [0,1]";
    return band;
  }
  {
    const double nt0 = std::max(t0, (band.a2 - kOverhang) * h);
    const double nt1 = std::min(t1, 1.0 - (band.a2 - kOverhang) * h);
    if (nt1 - nt0 >= min_width - 1e-12) {
      band.t0 = nt0;
      band.t1 = nt1;
      band.adapted = true;
      band.note =
          "oblique offsets floored, t-window narrowed, segments extend "
          "past [0,1]";
      return band;
    }
  }
  throw DomainExceeded(
      "sigma band: no feasible oblique window at this bandwidth");
}

namespace {

/// Oblique average of an arbitrary symmetric surface evaluator.
template <typename Eval>
std::vector<double> oblique_impl(const SmoothGrid& grid, const SigmaBand& band,
                                 Eval&& eval) {
  std::vector<double> out(grid.size, 0.0);
  const double h = grid.h;
  const double du = (band.a2 - band.a1) / band.nodes;
  for (int l = 0; l < grid.size; ++l) {
    const double t = grid.points[l];
    if (t - band.a2 * h < -kOverhang * h - 1e-12 ||
        t + band.a2 * h > 1.0 + kOverhang * h + 1e-12) {
      continue;
    }
    double acc = 0.0;
    for (int k = 0; k < band.nodes; ++k) {
      const double u = band.a1 + (k + 0.5) * du;
      // Average both orientations; for exactly symmetric surfaces this is
      // a no-op but it keeps the estimator insensitive to storage order.
      acc += 0.5 * (eval(t - u * h, t + u * h) + eval(t + u * h, t - u * h));
    }
    out[l] = acc / band.nodes;
  }
  return out;
}

}  // namespace

std::vector<double> oblique_diagonal(const CovarianceSurface& offdiag,
                                     const SigmaBand& band) {
  return oblique_impl(offdiag.grid, band, [&](double s, double t) {
    return offdiag.bilinear(s, t);
  });
}

std::vector<double> oblique_rank_one(const SmoothGrid& grid,
                                     const std::vector<double>& u_vec,
                                     const SigmaBand& band) {
  // Bilinear interpolation of the rank-one surface u u^T factorizes into a
  // product of linear interpolations, so the subtraction used by the
  // leave-one-out path reproduces the full-surface computation exactly.
  return oblique_impl(grid, band, [&](double s, double t) {
    return grid.interp(u_vec, s) * grid.interp(u_vec, t);
  });
}

SigmaEstimate estimate_sigma2(const DiagonalCurve& diag,
                              const CovarianceSurface& offdiag,
                              const SigmaBand& band) {
  if (!diag.grid.same_geometry(offdiag.grid)) {
    throw GridMismatch("estimate_sigma2: inputs live on different grids");
  }
  const std::vector<double> oblique = oblique_diagonal(offdiag, band);
  std::vector<double> gap(diag.values.size());
  for (std::size_t l = 0; l < gap.size(); ++l) {
    gap[l] = diag.values[l] - oblique[l];
  }
  SigmaEstimate est;
  est.band = band;
  est.value = diag.grid.integrate_linear(gap, band.t0, band.t1) /
              (band.t1 - band.t0);
  return est;
}

}  // namespace fpcov
