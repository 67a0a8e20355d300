#include "fpcov/fit.hpp"

#include <algorithm>
#include <cmath>

#include "fpcov/errors.hpp"

namespace fpcov {

namespace {

/// One curve's kernel average a_i(s_l) = g(s_l)^{-1} m^{-1} sum_j Y_j K_h.
std::vector<double> curve_kernel_average(const ObservedCurve& curve,
                                         const SmoothGrid& grid) {
  std::vector<double> a(grid.size, 0.0);
  const double h = grid.h;
  const int overhang = 2;
  const double inv_m = 1.0 / curve.m();
  for (int j = 0; j < curve.m(); ++j) {
    const double t = curve.times[j];
    const double y = curve.values[j];
    const int lo = std::max(0, static_cast<int>(std::ceil(t / h - 1.0)) + overhang);
    const int hi = std::min(grid.size - 1,
                            static_cast<int>(std::floor(t / h + 1.0)) + overhang);
    for (int l = lo; l <= hi; ++l) {
      a[l] += inv_m * y * kern::quartic((grid.points[l] - t) / h) / h;
    }
  }
  for (int l = 0; l < grid.size; ++l) a[l] /= grid.g[l];
  return a;
}

DensityModel make_density(DensityMode mode,
                          const std::vector<ObservedCurve>& data) {
  switch (mode) {
    case DensityMode::kUniform:
      return DensityModel::uniform();
    case DensityMode::kTruncatedLinear:
      return DensityModel::truncated_linear();
    case DensityMode::kEstimate: {
      std::vector<double> pooled;
      for (const ObservedCurve& c : data) {
        pooled.insert(pooled.end(), c.times.begin(), c.times.end());
      }
      return DensityModel::estimate(pooled);
    }
  }
  return DensityModel::uniform();
}

}  // namespace

std::vector<double> estimate_mean(const std::vector<ObservedCurve>& data,
                                  const SmoothGrid& grid) {
  if (data.empty()) throw NoData("estimate_mean: empty dataset");
  std::vector<double> mu(grid.size, 0.0);
  for (const ObservedCurve& c : data) {
    const std::vector<double> a = curve_kernel_average(c, grid);
    for (int l = 0; l < grid.size; ++l) mu[l] += a[l];
  }
  const double inv_n = 1.0 / static_cast<double>(data.size());
  for (double& v : mu) v *= inv_n;
  return mu;
}

std::vector<double> loo_mean(const std::vector<ObservedCurve>& data, int drop,
                             const std::vector<double>& mu,
                             const SmoothGrid& grid) {
  const int n = static_cast<int>(data.size());
  if (n < 2) throw NumericError("loo_mean: need at least two curves");
  if (drop < 0 || drop >= n) throw IndexOutOfRange("loo_mean: bad curve index");
  const std::vector<double> a = curve_kernel_average(data[drop], grid);
  std::vector<double> out(grid.size);
  for (int l = 0; l < grid.size; ++l) {
    out[l] = mu[l] + (mu[l] - a[l]) / (n - 1.0);
  }
  return out;
}

FitResult fit_pipeline(const std::vector<ObservedCurve>& data,
                       const FitOptions& options) {
  if (data.empty()) throw NoData("fit_pipeline: empty dataset");
  if (options.K < 1) throw InvalidConfig("fit_pipeline: K must be >= 1");
  if (options.sigma == SigmaMode::kKnown && options.sigma_known < 0.0) {
    throw InvalidConfig("fit_pipeline: known sigma2 must be >= 0");
  }
  for (const ObservedCurve& c : data) c.validate();

  FitResult fit;
  fit.options = options;
  fit.n_curves = static_cast<int>(data.size());

  const DensityModel density = make_density(options.density, data);
  fit.grid = SmoothGrid::build(options.h, density);
  fit.weight = kern::DiagonalWeight::make(options.h, options.band_constant);

  // Mean handling: estimate on its own grid, then center the raw values.
  const std::vector<ObservedCurve>* working = &data;
  std::vector<ObservedCurve> centered;
  if (options.mean == MeanMode::kEstimate) {
    const double h_mu = options.mean_bandwidth();
    fit.mean_grid = (h_mu == options.h) ? fit.grid
                                        : SmoothGrid::build(h_mu, density);
    fit.mu = estimate_mean(data, fit.mean_grid);
    centered = data;
    for (ObservedCurve& c : centered) {
      for (int j = 0; j < c.m(); ++j) {
        c.values[j] -= fit.mean_grid.interp(fit.mu, c.times[j]);
      }
    }
    working = &centered;
  } else {
    fit.mean_grid = fit.grid;
  }

  fit.curves.reserve(working->size());
  for (const ObservedCurve& c : *working) {
    fit.curves.push_back(presmooth_curve(c, fit.grid));
  }
  for (const PresmoothedCurve& c : fit.curves) {
    if (c.eligible()) ++fit.n_eligible;
  }

  fit.offdiag = estimate_offdiag(fit.curves, fit.grid, &fit.u_vectors);
  fit.diag = estimate_diag(fit.curves, fit.grid);

  if (options.sigma == SigmaMode::kKnown) {
    fit.sigma_estimated = false;
    fit.sigma2.value = options.sigma_known;
  } else {
    fit.sigma_estimated = true;
    const SigmaBand band = options.sigma_config.resolve(options.h);
    fit.sigma2 = estimate_sigma2(fit.diag, fit.offdiag, band);

    // Per-curve contributions for the exact leave-one-out downdate; only
    // meaningful when the diagonal and off-diagonal stages average over
    // the same curves (every curve eligible).
    if (fit.n_eligible == fit.n_curves) {
      fit.sigma_contrib.resize(fit.curves.size());
      const double span = band.t1 - band.t0;
      for (std::size_t i = 0; i < fit.curves.size(); ++i) {
        const PresmoothedCurve& c = fit.curves[i];
        std::vector<double> di(fit.grid.size);
        for (int l = 0; l < fit.grid.size; ++l) {
          di[l] = linearized_value(fit.grid, c.sq, c.dsq, fit.grid.points[l]) /
                  fit.grid.g[l];
        }
        const std::vector<double> oi =
            oblique_rank_one(fit.grid, fit.u_vectors[i], band);
        std::vector<double> gap(fit.grid.size);
        for (int l = 0; l < fit.grid.size; ++l) {
          gap[l] = di[l] - c.pair_weight * oi[l];
        }
        fit.sigma_contrib[i] =
            fit.grid.integrate_linear(gap, band.t0, band.t1) / span;
      }
    }
  }

  fit.merged = merge(fit.offdiag, fit.diag, fit.sigma2_value(), fit.weight);
  fit.eig = eigendecompose(fit.merged, options.K);
  return fit;
}

}  // namespace fpcov
