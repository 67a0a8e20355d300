#include "fpcov/crossval.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fpcov/errors.hpp"
#include "fpcov/io.hpp"
#include "fpcov/kernels.hpp"
#include "fpcov/parallel.hpp"

namespace fpcov {

namespace {

/// Hard floor for covariance-matrix eigenvalues in the per-curve loss.
constexpr double kSigmaFloorMin = 1e-8;
/// Relative spectral-gap threshold below which a perturbation coefficient
/// is dropped (the expansion is invalid for coincident eigenvalues and the
/// component is already flagged near-degenerate).
constexpr double kCoefGapRel = 1e-10;
/// Desk-scale constant for the rule-of-thumb bandwidth.
constexpr double kRuleOfThumbC0 = 0.3;
/// Relative deviation of lambda_tilde from lambda beyond which the curve
/// is flagged in the diagnostics (the first-order expansion is suspect).
constexpr double kLambdaSanityRel = 0.5;

Eigen::MatrixXd floor_spd(const Eigen::MatrixXd& m, double floor_val) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
  Eigen::VectorXd ev = solver.eigenvalues().cwiseMax(floor_val);
  return solver.eigenvectors() * ev.asDiagonal() *
         solver.eigenvectors().transpose();
}

/// Sigma = sum_nu lam[nu] psi(nu,:)^T psi(nu,:) + s2 I, eigen-floored.
Eigen::MatrixXd assemble_sigma(const std::vector<double>& lam,
                               const Eigen::MatrixXd& psi_at_t, double s2) {
  const int m = static_cast<int>(psi_at_t.cols());
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(m, m);
  for (std::size_t nu = 0; nu < lam.size(); ++nu) {
    sigma.noalias() += lam[nu] * psi_at_t.row(nu).transpose() * psi_at_t.row(nu);
  }
  const double s2_add = std::max(s2, 0.0);
  sigma.diagonal().array() += s2_add;
  return floor_spd(sigma, std::max(s2_add, kSigmaFloorMin));
}

double kl_loss_eigen(const Eigen::VectorXd& resid, const Eigen::MatrixXd& sigma) {
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite("kl_loss: covariance matrix is not positive definite");
  }
  double logdet = 0.0;
  const auto& l = llt.matrixLLT();
  for (int i = 0; i < sigma.rows(); ++i) logdet += std::log(l(i, i));
  logdet *= 2.0;
  const double quad = resid.dot(llt.solve(resid));
  return 0.5 * (logdet + quad);
}

/// Everything the first-order leave-one-out needs, precomputed once per fit.
///
/// Works in the discrete metric of the eigendecomposition (node samples on
/// the unit range, hat-basis quadrature weights).  For each curve the
/// leave-one-out covariance difference Delta_i = C_hat - C_hat^{(-i)} is
/// assembled exactly on the node lattice:
///   off band: (1 - W)(w_i u_i u_i^T - C_offdiag)/(n - 1),
///   band:     W [max(D, h^2) - max(D^{(-i)}, h^2)] at cell midpoints,
/// where D^{(-i)} carries both the diagonal-curve downdate and the exact
/// noise-variance downdate.  First order in Delta_i,
///   lambda_tilde_nu = lambda_nu - <psi_nu, Delta_i psi_nu>_w,
///   psi_tilde_nu    = psi_nu
///                     + sum_{k: mu_k != lambda_nu} (mu_k - lambda_nu)^{-1}
///                       <phi_k, Delta_i psi_nu>_w phi_k,
/// where (mu_k, phi_k) run over the complete discrete spectrum of the
/// merged operator, so the resolvent H_nu carries no truncation beyond the
/// first-order expansion itself.  The gamma-tilde shortcut replaces the
/// band-deflated curve projection gamma_tilde_nu(i, t) in the rank-one
/// part of the resolvent image by its band-free value gamma_nu(i);
/// `gamma_tilde_swap` enables it (off by default: the exact projection is
/// just as cheap on the grid and markedly more accurate at desk scale).
class LooEngine {
 public:
  LooEngine(const std::vector<ObservedCurve>& data, const FitResult& fit,
            bool gamma_tilde_swap)
      : data_(data), fit_(fit), gamma_tilde_swap_(gamma_tilde_swap) {
    check_inputs();
    build_tables();
  }

  int n() const { return static_cast<int>(data_.size()); }
  int rank() const { return fit_.eig.rank; }

  struct CurveState {
    std::vector<double> lambda_tilde;  ///< per component
    std::vector<double> gamma;         ///< grid-metric curve projections
    Eigen::MatrixXd psi_tilde;         ///< rank x m, evaluated at T_ij
    double sigma2_loo = 0.0;           ///< raw leave-one-out noise variance
    double sigma_diff = 0.0;           ///< sigma2_loo - n/(n-1) sigma2
    bool lambda_flagged = false;       ///< some lambda_tilde strayed >50%
    Eigen::VectorXd resid;             ///< y - loo mean at T_ij
    Eigen::MatrixXd sigma;             ///< assembled + floored covariance
  };

  CurveState curve_state(int i) const;

 private:
  const std::vector<ObservedCurve>& data_;
  const FitResult& fit_;
  bool gamma_tilde_swap_;

  int nn_ = 0;        ///< number of curves
  int uf_ = 0;        ///< first unit node
  int ul_ = 0;        ///< last unit node
  int un_ = 0;        ///< number of unit nodes
  double s2_merge_ = 0.0;  ///< floored sigma2 the full merge subtracted
  double floor_ = 0.0;     ///< h^2 clamp floor of the band
  double gap_scale_ = 1.0;         ///< spectral scale for the gap guard
  std::vector<double> wband_;      ///< band weight at node distance d
  std::vector<double> zmid_;       ///< cell midpoints z_q, q = (a-uf)+(b-uf)
  std::vector<double> cstar_mid_;  ///< diagonal estimate at z_q
  std::vector<double> gmid_;       ///< design density at z_q
  Eigen::VectorXd spec_vals_;      ///< all eigenvalues of the merged operator
  Eigen::MatrixXd spec_funcs_;     ///< node values, column k = phi_k

  void check_inputs();
  void build_tables();
};

void LooEngine::check_inputs() {
  nn_ = static_cast<int>(data_.size());
  if (nn_ < 2) {
    throw NumericError("approximate leave-one-out needs at least 2 curves");
  }
  if (fit_.curves.size() != data_.size()) {
    throw InvalidConfig("approximate leave-one-out: fit does not match dataset");
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (fit_.curves[i].id != data_[i].id ||
        fit_.curves[i].m != data_[i].m()) {
      throw InvalidConfig("approximate leave-one-out: fit does not match dataset");
    }
  }
  if (fit_.n_eligible != fit_.n_curves) {
    throw NoEligibleCurves(
        "approximate leave-one-out requires every curve to have m >= 2");
  }
  if (fit_.u_vectors.size() != data_.size()) {
    throw InvalidConfig("approximate leave-one-out: fit lacks curve vectors");
  }
  if (fit_.eig.rank < 1) {
    throw NumericError("approximate leave-one-out: no positive components");
  }
  if (fit_.sigma_estimated && fit_.sigma_contrib.empty()) {
    throw NumericError("approximate leave-one-out: missing noise contributions");
  }
}

void LooEngine::build_tables() {
  const SmoothGrid& grid = fit_.grid;
  const EigenSystem& eig = fit_.eig;

  uf_ = grid.unit_first;
  ul_ = grid.unit_last;
  un_ = ul_ - uf_ + 1;
  s2_merge_ = fit_.sigma2_value();
  floor_ = grid.h * grid.h;

  wband_.resize(un_);
  for (int d = 0; d < un_; ++d) {
    wband_[d] = fit_.weight.weight_dist(d * grid.h);
  }

  const int mids = 2 * un_ - 1;
  zmid_.resize(mids);
  cstar_mid_.resize(mids);
  gmid_.resize(mids);
  for (int q = 0; q < mids; ++q) {
    const int qa = std::min(q, un_ - 1);
    const int qb = q - qa;
    zmid_[q] = 0.5 * (grid.points[uf_ + qa] + grid.points[uf_ + qb]);
    cstar_mid_[q] = fit_.diag.value_at(zmid_[q]);
    gmid_[q] = grid.density_at(zmid_[q]);
  }

  // Complete discrete spectrum of the merged operator (same weighted
  // matrix the rank-K eigendecomposition diagonalizes), for the resolvent.
  gap_scale_ = std::max(eig.values[0], 1.0);
  Eigen::MatrixXd bmat(un_, un_);
  const std::vector<double>& wq = grid.unit_weights;
  for (int p = 0; p < un_; ++p) {
    for (int q = 0; q < un_; ++q) {
      bmat(p, q) = std::sqrt(wq[uf_ + p]) * fit_.merged.at(uf_ + p, uf_ + q) *
                   std::sqrt(wq[uf_ + q]);
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(bmat);
  if (solver.info() != Eigen::Success) {
    throw NumericError("approximate leave-one-out: eigensolver failed");
  }
  spec_vals_ = solver.eigenvalues();
  spec_funcs_ = solver.eigenvectors();
  for (int p = 0; p < un_; ++p) {
    spec_funcs_.row(p) /= std::sqrt(wq[uf_ + p]);
  }
}

LooEngine::CurveState LooEngine::curve_state(int i) const {
  const SmoothGrid& grid = fit_.grid;
  const EigenSystem& eig = fit_.eig;
  const int r = eig.rank;
  const double n = static_cast<double>(nn_);
  const PresmoothedCurve& c = fit_.curves[i];
  const ObservedCurve& raw = data_[i];
  const int m = raw.m();
  const double w_i = c.pair_weight;
  const std::vector<double>& u = fit_.u_vectors[i];
  const std::vector<double>& wq = grid.unit_weights;

  CurveState st;

  // Leave-one-out noise variance (exact downdate when estimated).
  const double s2_raw = fit_.sigma2.value;
  if (fit_.sigma_estimated) {
    st.sigma2_loo = (n * s2_raw - fit_.sigma_contrib[i]) / (n - 1.0);
  } else {
    st.sigma2_loo = s2_raw;
  }
  st.sigma_diff = st.sigma2_loo - (n / (n - 1.0)) * s2_raw;
  const double s2_loo_merge = st.sigma2_loo > 0.0 ? st.sigma2_loo : 0.0;

  // Curve i's additive part of the diagonal estimate at the midpoints.
  const int mids = 2 * un_ - 1;
  std::vector<double> sbar(mids);
  for (int q = 0; q < mids; ++q) {
    sbar[q] = linearized_value(grid, c.sq, c.dsq, zmid_[q]) / gmid_[q];
  }

  // Exact leave-one-out surface difference on the unit node lattice.
  std::vector<double> delta(static_cast<std::size_t>(un_) * un_);
  for (int p = 0; p < un_; ++p) {
    const int a = uf_ + p;
    for (int q = p; q < un_; ++q) {
      const int b = uf_ + q;
      const double w_ab = wband_[q - p];
      double val = (1.0 - w_ab) *
                   (w_i * u[a] * u[b] - fit_.offdiag.at(a, b)) / (n - 1.0);
      if (w_ab > 0.0) {
        const int zq = p + q;
        const double d_full = std::max(cstar_mid_[zq] - s2_merge_, floor_);
        const double cstar_loo = (n * cstar_mid_[zq] - sbar[zq]) / (n - 1.0);
        const double d_loo = std::max(cstar_loo - s2_loo_merge, floor_);
        val += w_ab * (d_full - d_loo);
      }
      delta[static_cast<std::size_t>(p) * un_ + q] = val;
      delta[static_cast<std::size_t>(q) * un_ + p] = val;
    }
  }

  // Grid-metric curve projections gamma_nu = <psi_nu, u_i>_w.
  st.gamma.assign(r, 0.0);
  for (int nu = 0; nu < r; ++nu) {
    double acc = 0.0;
    for (int p = 0; p < un_; ++p) {
      const int a = uf_ + p;
      acc += wq[a] * eig.functions[nu][a] * u[a];
    }
    st.gamma[nu] = acc;
  }

  // v_nu = Delta_i psi_nu and, when the gamma-tilde shortcut is on, the
  // band part of the rank-one image (to swap out of the tail term).
  std::vector<std::vector<double>> v(r, std::vector<double>(un_, 0.0));
  std::vector<std::vector<double>> band_gamma;
  if (gamma_tilde_swap_) {
    band_gamma.assign(r, std::vector<double>(un_, 0.0));
  }
  for (int p = 0; p < un_; ++p) {
    const std::size_t row = static_cast<std::size_t>(p) * un_;
    for (int q = 0; q < un_; ++q) {
      const int b = uf_ + q;
      const double dv = delta[row + q];
      for (int nu = 0; nu < r; ++nu) {
        v[nu][p] += dv * wq[b] * eig.functions[nu][b];
      }
      if (gamma_tilde_swap_) {
        const double wu = wband_[std::abs(q - p)] * wq[b] * u[b];
        for (int nu = 0; nu < r; ++nu) {
          band_gamma[nu][p] += wu * eig.functions[nu][b];
        }
      }
    }
  }

  // First-order eigenvalue downdates lambda_nu - <psi_nu, Delta_i psi_nu>_w.
  st.lambda_tilde.resize(r);
  for (int nu = 0; nu < r; ++nu) {
    const double lam = eig.values[nu];
    double tr = 0.0;
    for (int p = 0; p < un_; ++p) {
      tr += wq[uf_ + p] * eig.functions[nu][uf_ + p] * v[nu][p];
    }
    st.lambda_tilde[nu] = lam - tr;
    if (std::fabs(tr) > kLambdaSanityRel * lam) st.lambda_flagged = true;
  }

  // First-order eigenfunction downdates through the full-spectrum
  // resolvent, interpolated at the observation times.
  st.psi_tilde.resize(r, m);
  std::vector<double> node(grid.size, 0.0);
  Eigen::VectorXd vw(un_);
  for (int nu = 0; nu < r; ++nu) {
    const double lam = eig.values[nu];
    for (int p = 0; p < un_; ++p) {
      double img = v[nu][p];
      if (gamma_tilde_swap_) {
        img += (w_i / (n - 1.0)) * u[uf_ + p] * band_gamma[nu][p];
      }
      vw(p) = wq[uf_ + p] * img;
    }
    Eigen::VectorXd coef = spec_funcs_.transpose() * vw;
    for (int k = 0; k < un_; ++k) {
      const double gap = spec_vals_(k) - lam;
      coef(k) =
          std::fabs(gap) < kCoefGapRel * gap_scale_ ? 0.0 : coef(k) / gap;
    }
    const Eigen::VectorXd pert = spec_funcs_ * coef;
    std::fill(node.begin(), node.end(), 0.0);
    for (int p = 0; p < un_; ++p) {
      node[uf_ + p] = eig.functions[nu][uf_ + p] + pert(p);
    }
    for (int j = 0; j < m; ++j) {
      st.psi_tilde(nu, j) = grid.interp(node, raw.times[j]);
    }
  }

  // Residual (leave-one-out mean when the mean is estimated).
  st.resid.resize(m);
  if (fit_.options.mean == MeanMode::kEstimate) {
    const std::vector<double> mu_loo =
        loo_mean(data_, i, fit_.mu, fit_.mean_grid);
    for (int j = 0; j < m; ++j) {
      st.resid(j) = raw.values[j] - fit_.mean_grid.interp(mu_loo, raw.times[j]);
    }
  } else {
    for (int j = 0; j < m; ++j) st.resid(j) = raw.values[j];
  }

  st.sigma = assemble_sigma(st.lambda_tilde, st.psi_tilde, st.sigma2_loo);
  return st;
}

}  // namespace

GammaTables make_gamma_tables(const EigenSystem& eig, const SmoothGrid& grid) {
  const int L = grid.size;
  const int r = eig.rank;
  const double h = grid.h;
  GammaTables t;
  t.rank = r;
  t.size = L;
  t.g0.assign(static_cast<std::size_t>(r) * L, 0.0);
  t.g1.assign(static_cast<std::size_t>(r) * L, 0.0);
  for (int k = 0; k < r; ++k) {
    for (int l = 0; l < L; ++l) {
      const double sl = grid.points[l];
      const double lo = std::max(0.0, sl - kern::kBsplineHalfSupport * h);
      const double hi = std::min(1.0, sl + kern::kBsplineHalfSupport * h);
      if (hi <= lo) continue;
      t.g0[static_cast<std::size_t>(k) * L + l] =
          grid.integrate_cellwise(lo, hi, [&](double u) {
            return eig.eval(k, u) / grid.density_at(u) *
                   kern::bspline((u - sl) / h);
          });
      t.g1[static_cast<std::size_t>(k) * L + l] =
          grid.integrate_cellwise(lo, hi, [&](double u) {
            return eig.eval(k, u) / grid.density_at(u) * (u - sl) *
                   kern::bspline((u - sl) / h);
          });
    }
  }
  return t;
}

std::vector<double> gamma_terms(const PresmoothedCurve& curve,
                                const GammaTables& tables) {
  const int L = tables.size;
  if (curve.x.size() != static_cast<std::size_t>(L)) {
    throw GridMismatch("gamma_terms: curve not presmoothed on this grid");
  }
  std::vector<double> gamma(tables.rank, 0.0);
  for (int k = 0; k < tables.rank; ++k) {
    double acc = 0.0;
    for (int l = 0; l < L; ++l) {
      acc += curve.x[l] * tables.g0[static_cast<std::size_t>(k) * L + l] +
             curve.dx[l] * tables.g1[static_cast<std::size_t>(k) * L + l];
    }
    gamma[k] = acc;
  }
  return gamma;
}

GammaBarTable make_gamma_bar_table(const EigenSystem& eig,
                                   const SmoothGrid& grid,
                                   double band_constant) {
  const int L = grid.size;
  const int r = eig.rank;
  const double h = grid.h;
  GammaBarTable t;
  t.rank = r;
  t.size = L;
  t.band_cells = static_cast<int>(
      std::ceil(2.0 * kern::kBsplineHalfSupport + 0.5 * band_constant));
  const int width = 2 * t.band_cells + 1;
  const int pairs = r * (r + 1) / 2;
  t.values.assign(static_cast<std::size_t>(pairs) * L * width * 4, 0.0);
  auto slot = [&](int pair, int l, int dl, int j, int jp) -> double& {
    return t.values[((static_cast<std::size_t>(pair) * L + l) * width +
                     (dl + t.band_cells)) *
                        4 +
                    j * 2 + jp];
  };
  for (int k = 0; k < r; ++k) {
    for (int kp = k; kp < r; ++kp) {
      const int pair = t.pair_index(k, kp);
      for (int l = 0; l < L; ++l) {
        const double sl = grid.points[l];
        const double lo = std::max(0.0, sl - kern::kBsplineHalfSupport * h);
        const double hi = std::min(1.0, sl + kern::kBsplineHalfSupport * h);
        if (hi <= lo) continue;
        for (int dl = -t.band_cells; dl <= t.band_cells; ++dl) {
          const int lp = l + dl;
          if (lp < 0 || lp >= L) continue;
          const double slp = grid.points[lp];
          for (int j = 0; j < 2; ++j) {
            for (int jp = 0; jp < 2; ++jp) {
              const double scale = std::pow(h, jp + 1);
              const double val = grid.integrate_cellwise(
                  lo, hi,
                  [&](double u) {
                    const double rho =
                        eig.eval(k, u) * eig.eval(kp, u) /
                        (grid.density_at(u) * grid.density_at(u));
                    double acc = rho * kern::bspline((u - sl) / h) *
                                 kern::bspline_window_integral(
                                     jp, (u - slp) / h, band_constant);
                    if (j == 1) acc *= (u - sl);
                    return acc;
                  },
                  7);
              slot(pair, l, dl, j, jp) = scale * val;
            }
          }
        }
      }
    }
  }
  return t;
}

std::vector<double> gamma_bar_terms(const PresmoothedCurve& curve,
                                    const GammaBarTable& table) {
  const int L = table.size;
  const int r = table.rank;
  if (curve.x.size() != static_cast<std::size_t>(L)) {
    throw GridMismatch("gamma_bar_terms: curve not presmoothed on this grid");
  }
  std::vector<double> out(static_cast<std::size_t>(r) * r, 0.0);
  for (int k = 0; k < r; ++k) {
    for (int kp = k; kp < r; ++kp) {
      const int pair = table.pair_index(k, kp);
      double acc = 0.0;
      for (int l = 0; l < L; ++l) {
        for (int dl = -table.band_cells; dl <= table.band_cells; ++dl) {
          const int lp = l + dl;
          if (lp < 0 || lp >= L) continue;
          acc += curve.x[l] * curve.x[lp] * table.at(pair, l, dl, 0, 0) +
                 curve.x[l] * curve.dx[lp] * table.at(pair, l, dl, 0, 1) +
                 curve.dx[l] * curve.x[lp] * table.at(pair, l, dl, 1, 0) +
                 curve.dx[l] * curve.dx[lp] * table.at(pair, l, dl, 1, 1);
        }
      }
      out[static_cast<std::size_t>(k) * r + kp] = acc;
      out[static_cast<std::size_t>(kp) * r + k] = acc;
    }
  }
  return out;
}

double kl_loss(const std::vector<double>& y, const std::vector<double>& mean,
               const std::vector<double>& sigma_flat) {
  const int m = static_cast<int>(y.size());
  if (mean.size() != y.size() ||
      sigma_flat.size() != static_cast<std::size_t>(m) * m) {
    throw InvalidConfig("kl_loss: dimension mismatch");
  }
  Eigen::VectorXd resid(m);
  for (int j = 0; j < m; ++j) resid(j) = y[j] - mean[j];
  Eigen::MatrixXd sigma(m, m);
  for (int a = 0; a < m; ++a) {
    for (int b = 0; b < m; ++b) {
      sigma(a, b) = sigma_flat[static_cast<std::size_t>(a) * m + b];
    }
  }
  return kl_loss_eigen(resid, sigma);
}

double approx_loocv(const std::vector<ObservedCurve>& data,
                    const FitResult& fit, LooAdjustments* out,
                    bool gamma_tilde_swap) {
  LooEngine engine(data, fit, gamma_tilde_swap);
  const int n = engine.n();
  if (out) {
    out->lambda_tilde.assign(n, {});
    out->gamma.assign(n, {});
    out->psi_tilde.assign(n, {});
    out->sigma2_loo.assign(n, 0.0);
    out->sigma_diff.assign(n, 0.0);
    out->loss.assign(n, 0.0);
    out->flagged.clear();
  }
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    LooEngine::CurveState st = engine.curve_state(i);
    const double li = kl_loss_eigen(st.resid, st.sigma);
    total += li;
    if (out) {
      out->lambda_tilde[i] = st.lambda_tilde;
      out->gamma[i] = st.gamma;
      const int r = static_cast<int>(st.lambda_tilde.size());
      const int m = static_cast<int>(st.psi_tilde.cols());
      out->psi_tilde[i].resize(static_cast<std::size_t>(r) * m);
      for (int nu = 0; nu < r; ++nu) {
        for (int j = 0; j < m; ++j) {
          out->psi_tilde[i][static_cast<std::size_t>(nu) * m + j] =
              st.psi_tilde(nu, j);
        }
      }
      out->sigma2_loo[i] = st.sigma2_loo;
      out->sigma_diff[i] = st.sigma_diff;
      out->loss[i] = li;
      if (st.lambda_flagged) out->flagged.push_back(i);
    }
  }
  return total / n;
}

double pred_loocv(const std::vector<ObservedCurve>& data,
                  const FitResult& fit) {
  LooEngine engine(data, fit, false);
  const int n = engine.n();
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    LooEngine::CurveState st = engine.curve_state(i);
    Eigen::LLT<Eigen::MatrixXd> llt(st.sigma);
    if (llt.info() != Eigen::Success) {
      throw NotPositiveDefinite("pred_loocv: covariance not positive definite");
    }
    const Eigen::VectorXd alpha = llt.solve(st.resid);
    const int r = static_cast<int>(st.lambda_tilde.size());
    Eigen::VectorXd xi(r);
    for (int nu = 0; nu < r; ++nu) {
      xi(nu) = st.lambda_tilde[nu] * st.psi_tilde.row(nu).dot(alpha);
    }
    const Eigen::VectorXd pred = st.psi_tilde.transpose() * xi;
    total += (st.resid - pred).squaredNorm() / st.resid.size();
  }
  return total / n;
}

double exact_loocv(const std::vector<ObservedCurve>& data,
                   const FitOptions& options, int threads) {
  const int n = static_cast<int>(data.size());
  if (n < 3) throw NumericError("exact leave-one-out needs at least 3 curves");
  std::vector<double> losses(n, 0.0);
  parallel_for(n, threads, [&](int i) {
    std::vector<ObservedCurve> subset;
    subset.reserve(n - 1);
    for (int j = 0; j < n; ++j) {
      if (j != i) subset.push_back(data[j]);
    }
    const FitResult fold = fit_pipeline(subset, options);
    const ObservedCurve& held = data[i];
    const int m = held.m();

    Eigen::VectorXd resid(m);
    for (int j = 0; j < m; ++j) {
      double mean_at = 0.0;
      if (options.mean == MeanMode::kEstimate) {
        mean_at = fold.mean_grid.interp(fold.mu, held.times[j]);
      }
      resid(j) = held.values[j] - mean_at;
    }
    Eigen::MatrixXd psi_t(fold.eig.rank, m);
    for (int nu = 0; nu < fold.eig.rank; ++nu) {
      for (int j = 0; j < m; ++j) psi_t(nu, j) = fold.eig.eval(nu, held.times[j]);
    }
    const Eigen::MatrixXd sigma =
        assemble_sigma(fold.eig.values, psi_t, fold.sigma2_value());
    losses[i] = kl_loss_eigen(resid, sigma);
  });
  double total = 0.0;
  for (double l : losses) total += l;
  return total / n;
}

namespace {

std::string options_fingerprint(const FitOptions& o) {
  std::ostringstream s;
  s << "h_mu=" << io::fmt17(o.mean_bandwidth())
    << ";mean=" << (o.mean == MeanMode::kEstimate ? "estimate" : "zero")
    << ";sigma="
    << (o.sigma == SigmaMode::kKnown ? "known:" + io::fmt17(o.sigma_known)
                                     : std::string("estimate"))
    << ";density=" << static_cast<int>(o.density)
    << ";A=" << io::fmt17(o.band_constant) << ";band="
    << io::fmt17(o.sigma_config.a1) << "," << io::fmt17(o.sigma_config.a2)
    << "," << io::fmt17(o.sigma_config.t0) << ","
    << io::fmt17(o.sigma_config.t1) << "," << o.sigma_config.nodes;
  return s.str();
}

}  // namespace

SelectionResult select_model(const std::vector<ObservedCurve>& data,
                             const std::vector<int>& k_grid,
                             const std::vector<double>& h_grid,
                             const FitOptions& base_options, bool use_exact,
                             int threads, const std::string& cache_dir) {
  if (k_grid.empty() || h_grid.empty()) {
    throw InvalidConfig("select_model: empty candidate grid");
  }
  const std::string data_fp = io::dataset_fingerprint(data);
  const std::string opts_fp = options_fingerprint(base_options);

  SelectionResult sel;
  for (int k : k_grid) {
    for (double h : h_grid) {
      SelectionRow row;
      row.K = k;
      row.h = h;

      std::string cache_path;
      if (!cache_dir.empty()) {
        const std::string key = data_fp + "|" + opts_fp + "|K=" +
                                std::to_string(k) + "|h=" + io::fmt17(h) +
                                "|exact=" + (use_exact ? "1" : "0");
        cache_path =
            cache_dir + "/cell_" + io::hex64(io::fnv1a64(key)) + ".json";
        std::ifstream in(cache_path);
        if (in) {
          try {
            nlohmann::json j = nlohmann::json::parse(in);
            row.approx_score = j.at("approx").get<double>();
            if (!j.at("exact").is_null()) {
              row.exact_score = j.at("exact").get<double>();
            }
            row.failed = j.at("failed").get<bool>();
            row.error = j.value("error", "");
            sel.rows.push_back(row);
            continue;
          } catch (...) {
            // fall through and recompute
          }
        }
      }

      try {
        FitOptions opts = base_options;
        opts.K = k;
        opts.h = h;
        const FitResult fit = fit_pipeline(data, opts);
        row.approx_score = approx_loocv(data, fit);
        if (use_exact) {
          row.exact_score = exact_loocv(data, opts, threads);
        }
      } catch (const NumericError& e) {
        row.failed = true;
        row.error = e.what();
      }

      if (!cache_path.empty()) {
        nlohmann::json j;
        j["K"] = row.K;
        j["h"] = row.h;
        j["approx"] = row.approx_score;
        if (row.exact_score) {
          j["exact"] = *row.exact_score;
        } else {
          j["exact"] = nullptr;
        }
        j["failed"] = row.failed;
        j["error"] = row.error;
        std::ofstream out(cache_path);
        if (out) out << j.dump(2) << "\n";
      }
      sel.rows.push_back(row);
    }
  }

  // Pick the minimizer; rows are in K-major, h-minor ascending order, so
  // keeping the first strict minimum breaks ties toward smaller K then h.
  int best = -1;
  double best_score = 0.0;
  for (std::size_t idx = 0; idx < sel.rows.size(); ++idx) {
    const SelectionRow& row = sel.rows[idx];
    if (row.failed) continue;
    const double score =
        use_exact && row.exact_score ? *row.exact_score : row.approx_score;
    if (best < 0 || score < best_score) {
      best = static_cast<int>(idx);
      best_score = score;
    }
  }
  if (best < 0) {
    throw AllCandidatesFailed("select_model: every candidate failed");
  }
  sel.rows[best].selected = true;
  sel.best_k = sel.rows[best].K;
  sel.best_h = sel.rows[best].h;
  return sel;
}

double rule_of_thumb_bandwidth(int n, int m_low) {
  if (n < 1 || m_low < 1) {
    throw InvalidConfig("rule_of_thumb_bandwidth: need n >= 1, m >= 1");
  }
  const double h =
      kRuleOfThumbC0 * std::pow(static_cast<double>(n) * m_low, -0.2);
  return std::clamp(h, 0.02, 0.25);
}

}  // namespace fpcov
