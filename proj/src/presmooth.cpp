#include "fpcov/presmooth.hpp"

#include <algorithm>
#include <cmath>

#include "fpcov/errors.hpp"
#include "fpcov/kernels.hpp"

namespace fpcov {

void ObservedCurve::validate() const {
  if (times.empty()) {
    throw NoData("curve '" + id + "' has no observations");
  }
  if (times.size() != values.size()) {
    throw ParseError("curve '" + id + "': times/values length mismatch");
  }
  for (std::size_t j = 0; j < times.size(); ++j) {
    if (!std::isfinite(times[j]) || !std::isfinite(values[j])) {
      throw NonFiniteInput("curve '" + id + "': non-finite observation");
    }
    if (times[j] < 0.0 || times[j] > 1.0) {
      throw NonFiniteInput("curve '" + id + "': time outside [0,1]");
    }
  }
}

PresmoothedCurve presmooth_curve(const ObservedCurve& curve,
                                 const SmoothGrid& grid) {
  curve.validate();
  PresmoothedCurve out;
  out.id = curve.id;
  out.m = curve.m();
  out.pair_weight =
      out.m >= 2 ? static_cast<double>(out.m) / (out.m - 1.0) : 0.0;
  out.x.assign(grid.size, 0.0);
  out.dx.assign(grid.size, 0.0);
  out.sq.assign(grid.size, 0.0);
  out.dsq.assign(grid.size, 0.0);

  const double h = grid.h;
  const double inv_m = 1.0 / out.m;
  const int overhang = 2;  // node index of s = 0
  for (int j = 0; j < out.m; ++j) {
    const double t = curve.times[j];
    const double y = curve.values[j];
    const double y2 = y * y;
    // Nodes with |s_l - t| < h; at most three of them.
    const int lo = std::max(0, static_cast<int>(std::ceil(t / h - 1.0)) + overhang);
    const int hi = std::min(grid.size - 1,
                            static_cast<int>(std::floor(t / h + 1.0)) + overhang);
    for (int l = lo; l <= hi; ++l) {
      const double u = (grid.points[l] - t) / h;
      const double k = kern::quartic(u) / h;
      const double kd = kern::quartic_deriv(u) / (h * h);
      out.x[l] += inv_m * y * k;
      out.dx[l] += inv_m * y * kd;
      out.sq[l] += inv_m * y2 * k;
      out.dsq[l] += inv_m * y2 * kd;
    }
  }
  return out;
}

double linearized_value(const SmoothGrid& grid, const std::vector<double>& v,
                        const std::vector<double>& dv, double t) {
  const double h = grid.h;
  const int overhang = 2;
  const int lo =
      std::max(0, static_cast<int>(std::ceil(t / h - 2.0)) + overhang);
  const int hi = std::min(grid.size - 1,
                          static_cast<int>(std::floor(t / h + 2.0)) + overhang);
  double acc = 0.0;
  for (int l = lo; l <= hi; ++l) {
    const double d = t - grid.points[l];
    const double q = kern::bspline(d / h);
    if (q != 0.0) acc += (v[l] + d * dv[l]) * q;
  }
  return acc;
}

}  // namespace fpcov
