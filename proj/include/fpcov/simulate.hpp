/// \file simulate.hpp
/// \brief Synthetic data generation for sparse functional observations.
///
/// The generative model: subject curves X_i = sum_nu sqrt(lambda_nu)
/// xi_{i,nu} psi_nu with the cosine basis psi_1 = 1, psi_k(t) =
/// sqrt(2) cos((k-1) pi t); observations Y_ij = X_i(T_ij) + sigma eps_ij at
/// design points T_ij drawn from the design density.  Scores of one
/// component across subjects may be cross-correlated: xi_{.,nu} = R^{1/2} z
/// with z iid standard normal, identically for every component.
///
/// Determinism contract: with a fixed config the output is byte-identical
/// regardless of thread count or call order.  Component scores use one
/// substream per component; each curve's (m_i, T_ij, eps_ij) use a
/// per-curve substream, drawn in the documented order m, T_1..T_m,
/// eps_1..eps_m.
#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "fpcov/presmooth.hpp"

namespace fpcov {

enum class CorrelationKind { kIndependent, kAr1, kEquicorrelated, kExplicit };
enum class DesignKind { kUniform, kTruncatedLinear };

struct SimulationConfig {
  int n = 100;
  int m_min = 2;
  int m_max = 5;
  std::vector<double> lambdas = {1.0, 0.4};  ///< positive, non-increasing
  double sigma2 = 0.25;
  DesignKind design = DesignKind::kUniform;
  CorrelationKind correlation = CorrelationKind::kIndependent;
  double rho = 0.0;                    ///< AR(1) / equicorrelated parameter
  std::vector<double> corr_matrix;     ///< n*n row-major, kExplicit only
  bool heavy_tail_noise = false;       ///< scaled t_5 noise instead of normal
  std::vector<double> fixed_times;     ///< if non-empty: common design points
  std::uint64_t seed = 1;

  void validate() const;  ///< throws InvalidConfig
};

/// Everything the generator knows, exposed for evaluation against truth.
struct SyntheticTruth {
  std::vector<double> lambdas;
  double sigma2 = 0.0;
  CorrelationKind correlation = CorrelationKind::kIndependent;
  double rho = 0.0;

  double psi(int k, double t) const;         ///< cosine family, k >= 0
  double covariance(double s, double t) const;
  double design_cdf(double t, DesignKind kind) const;
};

struct SimulatedData {
  std::vector<ObservedCurve> curves;
  SyntheticTruth truth;
};

SimulatedData simulate_dataset(const SimulationConfig& config);

/// Fourth moment of a zero-mean Gaussian quadruple by Wick pairing:
///   E[Z1 Z2 Z3 Z4] = S12 S34 + S13 S24 + S14 S23.
double wick_fourth_moment(const std::array<std::array<double, 4>, 4>& cov);

/// Cross-correlation summary for a configuration:
///  - mean squared off-diagonal entry of R, (1/n^2) sum_{i != j} R_ij^2,
///  - spectral norm of R.
struct CorrelationDiagnostic {
  double mean_sq_offdiag = 0.0;
  double spectral_norm = 1.0;
};
CorrelationDiagnostic correlation_diagnostic(const SimulationConfig& config);

/// Entry (i, j) of the score correlation matrix R for this configuration.
double correlation_entry(const SimulationConfig& config, int i, int j);

}  // namespace fpcov
