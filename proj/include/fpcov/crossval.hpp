/// \file crossval.hpp
/// \brief Model selection by exact and approximate leave-one-out CV.
///
/// The score is a Gaussian Kullback-Leibler style loss: with Sigma_i the
/// fitted covariance of curve i's observation vector,
///   loss_i = (1/2) log det Sigma_i + (1/2) r_i^T Sigma_i^{-1} r_i,
/// r_i the residual after removing the leave-one-out mean, averaged over
/// curves.  The exact score refits the whole pipeline n times; the
/// approximate score replaces each refit by a first-order perturbation of
/// the eigensystem in the direction of curve i's contribution to the
/// covariance estimate.
///
/// The perturbation is evaluated in the same discrete metric as the
/// eigendecomposition (node samples, hat-basis quadrature weights): each
/// curve's leave-one-out surface difference is assembled exactly on the
/// grid -- off-band rank-one part, diagonal-band midpoint part including
/// the clamp floor, and the noise-variance downdate -- so the only
/// remaining error is genuinely second order in 1/n.  The classical
/// convolution/band shortcut tables (gamma, gamma-bar) are exposed
/// separately for diagnostics and tests.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fpcov/eigensystem.hpp"
#include "fpcov/fit.hpp"
#include "fpcov/presmooth.hpp"

namespace fpcov {

/// Gaussian KL-style loss for one curve: residual r = y - mean and a
/// positive-definite covariance (flat row-major m x m).  No 2*pi constant.
/// Throws NotPositiveDefinite when the Cholesky factorization fails.
double kl_loss(const std::vector<double>& y, const std::vector<double>& mean,
               const std::vector<double>& sigma_flat);

/// Convolution tables for the curve-projection coefficients gamma_k: for
/// component k and node l the tables hold the convolution integrals
///   g0[k][l] = int (psi_k/g)(u) Qbar((u - s_l)/h) du
///   g1[k][l] = int (psi_k/g)(u) (u - s_l) Qbar((u - s_l)/h) du
/// so that gamma_k(curve) = sum_l x_l g0[k][l] + dx_l g1[k][l].  Built
/// once per fit and reused across curves.
struct GammaTables {
  int rank = 0;
  int size = 0;            ///< grid size (nodes per component row)
  std::vector<double> g0;  ///< [component * size + node]
  std::vector<double> g1;  ///< [component * size + node]
};

GammaTables make_gamma_tables(const EigenSystem& eig, const SmoothGrid& grid);

/// gamma_k for one presmoothed curve, all components.
std::vector<double> gamma_terms(const PresmoothedCurve& curve,
                                const GammaTables& tables);

/// Banded table for the diagonal-band double integrals gamma_bar_{k,k'}:
/// the inner integral over the band window is collapsed to the closed-form
/// window integral of the spline (the outer function is frozen at the
/// outer argument), leaving one banded table per component pair.  Entries
/// with |l - l'| > band_cells vanish identically.
struct GammaBarTable {
  int rank = 0;
  int size = 0;
  int band_cells = 0;          ///< half-width of the band in cells
  std::vector<double> values;  ///< indexed via at()

  double at(int pair, int l, int dl, int j, int jp) const {
    const int width = 2 * band_cells + 1;
    return values[((static_cast<std::size_t>(pair) * size + l) * width +
                   (dl + band_cells)) *
                      4 +
                  j * 2 + jp];
  }
  int pair_index(int k, int kp) const {  // unordered pair, k <= kp
    if (k > kp) { const int t = k; k = kp; kp = t; }
    return k * rank - k * (k - 1) / 2 + (kp - k);
  }
};

GammaBarTable make_gamma_bar_table(const EigenSystem& eig,
                                   const SmoothGrid& grid,
                                   double band_constant);

/// gamma_bar_{k,k'} for one presmoothed curve; rank x rank, row-major.
std::vector<double> gamma_bar_terms(const PresmoothedCurve& curve,
                                    const GammaBarTable& table);

/// Per-curve leave-one-out adjustments, exposed for diagnostics/tests.
struct LooAdjustments {
  std::vector<std::vector<double>> lambda_tilde;  ///< [curve][component]
  std::vector<std::vector<double>> gamma;  ///< [curve][component], grid metric
  /// First-order eigenfunctions at the curve's own observation times,
  /// [curve][component * m_i + j].
  std::vector<std::vector<double>> psi_tilde;
  std::vector<double> sigma2_loo;                 ///< [curve]
  std::vector<double> sigma_diff;  ///< sigma2_loo - n/(n-1) sigma2, [curve]
  std::vector<double> loss;                       ///< [curve]
  std::vector<int> flagged;  ///< curves where some lambda_tilde strays >50%
};

/// Approximate leave-one-out score from a single fit.  Requires every
/// curve to have m_i >= 2 (the perturbation weights need it).
/// `gamma_tilde_swap` replaces the band-deflated curve projection
/// gamma_tilde_nu(i, .) by its band-free value gamma_nu(i) inside the
/// eigenfunction downdate (an asymptotic shortcut; it costs nothing to
/// keep the exact projection on the grid, so the default is exact).
double approx_loocv(const std::vector<ObservedCurve>& data,
                    const FitResult& fit, LooAdjustments* out = nullptr,
                    bool gamma_tilde_swap = false);

/// Honest leave-one-out: refit the entire pipeline without curve i for
/// every i (mean, covariance, noise, eigensystem), score on the held-out
/// curve, average.  Requires n >= 3.
double exact_loocv(const std::vector<ObservedCurve>& data,
                   const FitOptions& options, int threads = 1);

/// Prediction-error flavored leave-one-out: best linear prediction of the
/// held-out curve's observations from the (approximately) downdated fit;
/// returns the mean over curves of the per-curve mean squared error.
double pred_loocv(const std::vector<ObservedCurve>& data,
                  const FitResult& fit);

struct SelectionRow {
  int K = 0;
  double h = 0.0;
  double approx_score = 0.0;
  std::optional<double> exact_score;
  bool selected = false;
  bool failed = false;
  std::string error;
};

struct SelectionResult {
  std::vector<SelectionRow> rows;  ///< K-major, h-minor order
  int best_k = 0;
  double best_h = 0.0;
};

/// Sweep the (K, h) grid, score each candidate, and pick the minimum of
/// the exact score when `use_exact` (approximate score otherwise); ties go
/// to smaller K, then smaller h.  Individual candidate failures are
/// recorded; if every candidate fails, AllCandidatesFailed is thrown.
/// When `cache_dir` is non-empty, finished cells are persisted there and
/// reused by later runs with identical data and options.
SelectionResult select_model(const std::vector<ObservedCurve>& data,
                             const std::vector<int>& k_grid,
                             const std::vector<double>& h_grid,
                             const FitOptions& base_options, bool use_exact,
                             int threads = 1,
                             const std::string& cache_dir = "");

/// Desk-scale default bandwidth for a dataset of n curves with at least
/// m_low observations each: c0 * (n * m_low)^(-1/5), clamped to (0, 0.25].
double rule_of_thumb_bandwidth(int n, int m_low);

}  // namespace fpcov
