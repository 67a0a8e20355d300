#include "fpcov/covariance.hpp"

#include <algorithm>
#include <cmath>

#include "fpcov/errors.hpp"
#include "fpcov/fft.hpp"

namespace fpcov {

double CovarianceSurface::bilinear(double s, double t) const {
  const int a = grid.cell_of(s);
  const int b = grid.cell_of(t);
  const double u = std::clamp((s - grid.points[a]) / grid.h, 0.0, 1.0);
  const double v = std::clamp((t - grid.points[b]) / grid.h, 0.0, 1.0);
  return (1.0 - u) * (1.0 - v) * at(a, b) + u * (1.0 - v) * at(a + 1, b) +
         (1.0 - u) * v * at(a, b + 1) + u * v * at(a + 1, b + 1);
}

void CovarianceSurface::symmetrize() {
  const int n = grid.size;
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      const double m = 0.5 * (at(a, b) + at(b, a));
      at(a, b) = m;
      at(b, a) = m;
    }
  }
}

CovarianceSurface CovarianceSurface::from_function(
    const SmoothGrid& grid, const std::function<double(double, double)>& f,
    SurfaceKind kind) {
  CovarianceSurface s;
  s.grid = grid;
  s.kind = kind;
  s.values.resize(static_cast<std::size_t>(grid.size) * grid.size);
  for (int a = 0; a < grid.size; ++a) {
    for (int b = 0; b < grid.size; ++b) {
      s.at(a, b) = f(grid.points[a], grid.points[b]);
    }
  }
  return s;
}

double DiagonalCurve::value_at(double t) const {
  return linearized_value(grid, sq_mean, dsq_mean, t) / grid.density_at(t);
}

std::vector<double> summability_vector(const SmoothGrid& grid,
                                       const PresmoothedCurve& curve) {
  // V(s_a) = sum_d Q(d) x[a-d] + h sum_d d Q(d) dx[a-d], d in {-1,0,1}.
  // Written as full convolutions with the taps below, the value at node a
  // is entry a+1 of the convolution output.
  static const std::vector<double> kTap0 = {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0};
  static const std::vector<double> kTap1 = {-1.0 / 6.0, 0.0, 1.0 / 6.0};
  const std::vector<double> c0 = fft_convolve(curve.x, kTap0);
  const std::vector<double> c1 = fft_convolve(curve.dx, kTap1);
  std::vector<double> v(grid.size);
  for (int a = 0; a < grid.size; ++a) {
    v[a] = c0[a + 1] + grid.h * c1[a + 1];
  }
  return v;
}

CovarianceSurface estimate_offdiag(
    const std::vector<PresmoothedCurve>& curves, const SmoothGrid& grid,
    std::vector<std::vector<double>>* u_vectors_out) {
  const int L = grid.size;
  CovarianceSurface out;
  out.grid = grid;
  out.kind = SurfaceKind::kOffDiagonal;
  out.values.assign(static_cast<std::size_t>(L) * L, 0.0);

  if (u_vectors_out) {
    u_vectors_out->assign(curves.size(), {});
  }

  int eligible = 0;
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const PresmoothedCurve& c = curves[i];
    if (c.x.size() != static_cast<std::size_t>(L)) {
      throw GridMismatch("estimate_offdiag: curve not presmoothed on this grid");
    }
    if (!c.eligible()) continue;
    ++eligible;
    std::vector<double> u = summability_vector(grid, c);
    for (int a = 0; a < L; ++a) u[a] /= grid.g[a];
    const double w = c.pair_weight;
    for (int a = 0; a < L; ++a) {
      const double wa = w * u[a];
      double* row = &out.values[static_cast<std::size_t>(a) * L];
      for (int b = 0; b < L; ++b) row[b] += wa * u[b];
    }
    if (u_vectors_out) (*u_vectors_out)[i] = std::move(u);
  }
  if (eligible == 0) {
    throw NoEligibleCurves(
        "off-diagonal covariance needs at least one curve with m >= 2");
  }
  const double inv = 1.0 / eligible;
  for (double& v : out.values) v *= inv;
  return out;
}

DiagonalCurve estimate_diag(const std::vector<PresmoothedCurve>& curves,
                            const SmoothGrid& grid) {
  if (curves.empty()) {
    throw NoEligibleCurves("diagonal estimator needs at least one curve");
  }
  const int L = grid.size;
  DiagonalCurve out;
  out.grid = grid;
  out.sq_mean.assign(L, 0.0);
  out.dsq_mean.assign(L, 0.0);
  for (const PresmoothedCurve& c : curves) {
    if (c.sq.size() != static_cast<std::size_t>(L)) {
      throw GridMismatch("estimate_diag: curve not presmoothed on this grid");
    }
    for (int l = 0; l < L; ++l) {
      out.sq_mean[l] += c.sq[l];
      out.dsq_mean[l] += c.dsq[l];
    }
  }
  const double inv = 1.0 / static_cast<double>(curves.size());
  for (int l = 0; l < L; ++l) {
    out.sq_mean[l] *= inv;
    out.dsq_mean[l] *= inv;
  }
  // Node values through the same tap structure as the summability vector.
  static const std::vector<double> kTap0 = {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0};
  static const std::vector<double> kTap1 = {-1.0 / 6.0, 0.0, 1.0 / 6.0};
  const std::vector<double> c0 = fft_convolve(out.sq_mean, kTap0);
  const std::vector<double> c1 = fft_convolve(out.dsq_mean, kTap1);
  out.values.resize(L);
  for (int a = 0; a < L; ++a) {
    out.values[a] = (c0[a + 1] + grid.h * c1[a + 1]) / grid.g[a];
  }
  return out;
}

CovarianceSurface naive_covariance(const std::vector<PresmoothedCurve>& curves,
                                   const SmoothGrid& grid) {
  if (curves.empty()) {
    throw NoEligibleCurves("naive covariance needs at least one curve");
  }
  const int L = grid.size;
  CovarianceSurface out;
  out.grid = grid;
  out.kind = SurfaceKind::kNaive;
  out.values.assign(static_cast<std::size_t>(L) * L, 0.0);
  for (const PresmoothedCurve& c : curves) {
    if (c.x.size() != static_cast<std::size_t>(L)) {
      throw GridMismatch("naive_covariance: curve not presmoothed on this grid");
    }
    for (int a = 0; a < L; ++a) {
      const double xa = c.x[a];
      double* row = &out.values[static_cast<std::size_t>(a) * L];
      for (int b = 0; b < L; ++b) row[b] += xa * c.x[b];
    }
  }
  const double inv = 1.0 / static_cast<double>(curves.size());
  for (double& v : out.values) v *= inv;
  return out;
}

CovarianceSurface merge(const CovarianceSurface& offdiag,
                        const DiagonalCurve& diag, double sigma2,
                        const kern::DiagonalWeight& weight) {
  if (!offdiag.grid.same_geometry(diag.grid)) {
    throw GridMismatch("merge: off-diagonal surface and diagonal curve grids differ");
  }
  if (weight.h != offdiag.grid.h) {
    throw GridMismatch("merge: weight bandwidth differs from grid bandwidth");
  }
  const SmoothGrid& grid = offdiag.grid;
  const int L = grid.size;
  const double floor_val = grid.h * grid.h;
  CovarianceSurface out;
  out.grid = grid;
  out.kind = SurfaceKind::kMerged;
  out.values.assign(static_cast<std::size_t>(L) * L, 0.0);
  for (int a = 0; a < L; ++a) {
    for (int b = 0; b < L; ++b) {
      const double w = weight.weight(grid.points[a], grid.points[b]);
      double diag_part = 0.0;
      if (w > 0.0) {
        const double mid = 0.5 * (grid.points[a] + grid.points[b]);
        diag_part = std::max(diag.value_at(mid) - sigma2, floor_val);
      }
      out.at(a, b) = (1.0 - w) * offdiag.at(a, b) + w * diag_part;
    }
  }
  out.symmetrize();
  return out;
}

}  // namespace fpcov
