/// \file fit.hpp
/// \brief The full estimation pipeline in one call.
///
/// fit_pipeline chains mean estimation/centering, presmoothing, the
/// off-diagonal and diagonal covariance estimators, noise-variance
/// estimation, the diagonal merge, and eigenanalysis.  Its result bundle
/// carries every intermediate the cross-validation stages need.
#pragma once

#include <cstdint>
#include <vector>

#include "fpcov/covariance.hpp"
#include "fpcov/eigensystem.hpp"
#include "fpcov/grid.hpp"
#include "fpcov/kernels.hpp"
#include "fpcov/noise.hpp"
#include "fpcov/presmooth.hpp"

namespace fpcov {

enum class SigmaMode { kEstimate, kKnown };
enum class MeanMode { kZero, kEstimate };
enum class DensityMode { kUniform, kTruncatedLinear, kEstimate };

struct FitOptions {
  double h = 0.1;
  int K = 2;
  double h_mu = 0.0;  ///< mean-smoothing bandwidth; 0 means "use h"
  MeanMode mean = MeanMode::kZero;
  SigmaMode sigma = SigmaMode::kEstimate;
  double sigma_known = 0.0;
  DensityMode density = DensityMode::kUniform;
  double band_constant = kern::kDefaultBandConstant;
  SigmaConfig sigma_config;

  double mean_bandwidth() const { return h_mu > 0.0 ? h_mu : h; }
};

struct FitResult {
  FitOptions options;
  SmoothGrid grid;
  kern::DiagonalWeight weight;

  SmoothGrid mean_grid;    ///< grid of the mean smoother
  std::vector<double> mu;  ///< estimated mean (empty in zero-mean mode)

  std::vector<PresmoothedCurve> curves;  ///< presmoothed, centered curves
  std::vector<std::vector<double>> u_vectors;  ///< V_i/g per curve

  CovarianceSurface offdiag;
  DiagonalCurve diag;
  SigmaEstimate sigma2;
  bool sigma_estimated = false;
  CovarianceSurface merged;
  EigenSystem eig;

  /// Per-curve contribution c_i to sigma2 (eligible curves), such that the
  /// leave-one-out noise estimate is (n sigma2 - c_i)/(n-1) exactly.
  std::vector<double> sigma_contrib;

  int n_curves = 0;
  int n_eligible = 0;

  /// Plug-in noise variance actually used downstream (never negative).
  double sigma2_value() const { return sigma2.floored(); }
};

/// Mean function estimate on `grid`:
///   mu(s) = g(s)^{-1} (1/n) sum_i m_i^{-1} sum_j Y_ij K_h(s - T_ij).
std::vector<double> estimate_mean(const std::vector<ObservedCurve>& data,
                                  const SmoothGrid& grid);

/// Leave-one-out mean via the closed-form update (no refit):
///   mu_loo = mu + (mu - a_i)/(n-1),
/// where a_i is curve i's own kernel average g^{-1} m_i^{-1} sum_j Y_ij K_h.
std::vector<double> loo_mean(const std::vector<ObservedCurve>& data, int drop,
                             const std::vector<double>& mu,
                             const SmoothGrid& grid);

FitResult fit_pipeline(const std::vector<ObservedCurve>& data,
                       const FitOptions& options);

}  // namespace fpcov
