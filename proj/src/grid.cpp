#include "fpcov/grid.hpp"

#include <algorithm>
#include <cmath>

#include "fpcov/errors.hpp"
#include "fpcov/kernels.hpp"
#include "fpcov/quadrature.hpp"

namespace fpcov {

DensityModel DensityModel::uniform() {
  DensityModel m;
  m.kind_ = Kind::kUniform;
  return m;
}

DensityModel DensityModel::truncated_linear() {
  DensityModel m;
  m.kind_ = Kind::kTruncatedLinear;
  return m;
}

DensityModel DensityModel::estimate(const std::vector<double>& pooled_times) {
  if (pooled_times.size() < 2) {
    throw InvalidConfig("density estimate needs at least two observation times");
  }
  DensityModel m;
  m.kind_ = Kind::kKde;
  m.sample_ = pooled_times;
  std::sort(m.sample_.begin(), m.sample_.end());

  const double n = static_cast<double>(m.sample_.size());
  double mean = 0.0;
  for (double t : m.sample_) mean += t;
  mean /= n;
  double var = 0.0;
  for (double t : m.sample_) var += (t - mean) * (t - mean);
  var /= (n - 1.0);
  const double sd = std::sqrt(std::max(var, 1e-12));
  const std::size_t q1 = m.sample_.size() / 4;
  const std::size_t q3 = (3 * m.sample_.size()) / 4;
  const double iqr = m.sample_[q3] - m.sample_[q1];
  double spread = sd;
  if (iqr > 0.0) spread = std::min(sd, iqr / 1.349);
  // Plug-in bandwidth for the quartic kernel (canonical factor ~2.78),
  // kept inside (0, 1) so boundary reflection stays well defined.
  double bw = 2.78 * spread * std::pow(n, -0.2);
  m.bandwidth_ = std::clamp(bw, 0.02, 0.45);
  return m;
}

double DensityModel::kde_raw(double t) const {
  // Plain KDE over the sorted sample; only points within one bandwidth
  // contribute because the kernel has compact support.
  const double b = bandwidth_;
  auto lo = std::lower_bound(sample_.begin(), sample_.end(), t - b);
  auto hi = std::upper_bound(sample_.begin(), sample_.end(), t + b);
  double acc = 0.0;
  for (auto it = lo; it != hi; ++it) {
    acc += kern::quartic((t - *it) / b);
  }
  return acc / (static_cast<double>(sample_.size()) * b);
}

double DensityModel::operator()(double t) const {
  const double u = std::clamp(t, 0.0, 1.0);
  double v = 1.0;
  switch (kind_) {
    case Kind::kUniform:
      v = 1.0;
      break;
    case Kind::kTruncatedLinear:
      v = 0.5 + u;
      break;
    case Kind::kKde:
      // Boundary reflection at both ends restores mass that the plain
      // KDE would spill outside [0,1].
      v = kde_raw(u) + kde_raw(-u) + kde_raw(2.0 - u);
      break;
  }
  return std::max(v, kFloor);
}

std::string DensityModel::describe() const {
  switch (kind_) {
    case Kind::kUniform:
      return "uniform";
    case Kind::kTruncatedLinear:
      return "truncated_linear";
    case Kind::kKde:
      return "kde";
  }
  return "unknown";
}

SmoothGrid SmoothGrid::build(double h, const DensityModel& density) {
  if (!(h > 0.0) || h > 0.25) {
    throw InvalidConfig("grid bandwidth must lie in (0, 0.25]");
  }
  SmoothGrid grid;
  grid.h = h;
  grid.density = density;
  const int overhang = static_cast<int>(kern::kBsplineHalfSupport);  // 2 cells
  const int interior = static_cast<int>(std::ceil(1.0 / h));
  grid.size = interior + 2 * overhang + 1;
  grid.points.resize(grid.size);
  grid.g.resize(grid.size);
  for (int l = 0; l < grid.size; ++l) {
    grid.points[l] = (l - overhang) * h;
    grid.g[l] = density(grid.points[l]);
  }

  // Hat-basis integrals over [0,1].  The hat at node l spans
  // [s_{l-1}, s_{l+1}]; integrating its restriction to [0,1] cell by cell
  // is exact and reduces to the trapezoid weights (h interior, h/2 at the
  // ends) whenever 1/h is an integer.
  grid.unit_weights.assign(grid.size, 0.0);
  auto rising_piece = [&](int l, double a, double b) {
    // integral over [a,b] of (t - s_{l-1})/h, for [a,b] within cell l-1
    const double s0 = grid.points[l - 1];
    return ((b - s0) * (b - s0) - (a - s0) * (a - s0)) / (2.0 * h);
  };
  auto falling_piece = [&](int l, double a, double b) {
    // integral over [a,b] of (s_{l+1} - t)/h, for [a,b] within cell l
    const double s1 = grid.points[l + 1];
    return ((s1 - a) * (s1 - a) - (s1 - b) * (s1 - b)) / (2.0 * h);
  };
  for (int l = 0; l < grid.size; ++l) {
    double w = 0.0;
    if (l > 0) {
      const double a = std::max(0.0, grid.points[l - 1]);
      const double b = std::min(1.0, grid.points[l]);
      if (b > a) w += rising_piece(l, a, b);
    }
    if (l + 1 < grid.size) {
      const double a = std::max(0.0, grid.points[l]);
      const double b = std::min(1.0, grid.points[l + 1]);
      if (b > a) w += falling_piece(l, a, b);
    }
    grid.unit_weights[l] = w;
  }

  grid.unit_first = overhang;  // s = 0 exactly
  int last = grid.unit_first;
  while (last + 1 < grid.size && grid.points[last] < 1.0) ++last;
  grid.unit_last = last;
  return grid;
}

int SmoothGrid::cell_of(double t) const {
  const int overhang = 2;
  int l = static_cast<int>(std::floor(t / h)) + overhang;
  return std::clamp(l, 0, size - 2);
}

double SmoothGrid::interp(const std::vector<double>& values, double t) const {
  const int l = cell_of(t);
  const double u = (t - points[l]) / h;
  const double uc = std::clamp(u, 0.0, 1.0);
  return values[l] * (1.0 - uc) + values[l + 1] * uc;
}

double SmoothGrid::integrate_linear(const std::vector<double>& values,
                                    double a, double b) const {
  if (b <= a) return 0.0;
  double acc = 0.0;
  int l = cell_of(a);
  double lo = a;
  while (lo < b) {
    const double hi = std::min(b, points[l + 1]);
    if (hi > lo) {
      // trapezoid on [lo, hi] is exact for the linear piece
      const double flo = values[l] + (values[l + 1] - values[l]) * (lo - points[l]) / h;
      const double fhi = values[l] + (values[l + 1] - values[l]) * (hi - points[l]) / h;
      acc += 0.5 * (flo + fhi) * (hi - lo);
    }
    lo = points[l + 1];
    if (++l > size - 2) break;
  }
  return acc;
}

double SmoothGrid::integrate_cellwise(double a, double b,
                                      const std::function<double(double)>& f,
                                      int order) const {
  if (b <= a) return 0.0;
  double acc = 0.0;
  int l = cell_of(a);
  double lo = a;
  while (lo < b) {
    const double hi = std::min(b, points[l + 1]);
    if (hi > lo) {
      acc += order >= 7 ? quad::gl7(f, lo, hi) : quad::gl5(f, lo, hi);
    }
    lo = points[l + 1];
    if (++l > size - 2) break;
  }
  return acc;
}

}  // namespace fpcov
