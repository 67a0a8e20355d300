#include "fpcov/eigensystem.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "fpcov/errors.hpp"

namespace fpcov {

namespace {
/// Relative threshold below which an eigenvalue counts as zero.
constexpr double kZeroEigRel = 1e-12;
/// Relative spectral gap below which components are flagged degenerate.
constexpr double kDegenerateGapRel = 1e-8;
}  // namespace

double EigenSystem::inner(const std::vector<double>& a,
                          const std::vector<double>& b) const {
  double acc = 0.0;
  for (int l = grid.unit_first; l <= grid.unit_last; ++l) {
    acc += a[l] * b[l] * grid.unit_weights[l];
  }
  return acc;
}

EigenSystem eigendecompose(const CovarianceSurface& surface, int K) {
  if (K < 1) throw InvalidConfig("eigendecompose: K must be >= 1");
  const SmoothGrid& grid = surface.grid;
  const int first = grid.unit_first;
  const int last = grid.unit_last;
  const int n = last - first + 1;

  Eigen::MatrixXd B(n, n);
  std::vector<double> sqrtw(n);
  for (int p = 0; p < n; ++p) {
    sqrtw[p] = std::sqrt(grid.unit_weights[first + p]);
  }
  for (int p = 0; p < n; ++p) {
    for (int q = 0; q < n; ++q) {
      B(p, q) = sqrtw[p] * surface.at(first + p, first + q) * sqrtw[q];
    }
  }
  // The surface is symmetric by construction; make that exact for the solver.
  B = 0.5 * (B + B.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(B);
  if (solver.info() != Eigen::Success) {
    throw NumericError("eigendecompose: eigensolver failed to converge");
  }
  const Eigen::VectorXd& evals = solver.eigenvalues();   // ascending
  const Eigen::MatrixXd& evecs = solver.eigenvectors();

  const double lmax = std::max(evals.cwiseAbs().maxCoeff(), 0.0);
  const double zero_tol = kZeroEigRel * std::max(lmax, 1.0);

  EigenSystem out;
  out.grid = grid;
  out.requested = K;
  for (int r = n - 1; r >= 0 && out.rank < K; --r) {
    const double lam = evals(r);
    if (lam <= zero_tol) break;
    std::vector<double> psi(grid.size, 0.0);
    for (int p = 0; p < n; ++p) {
      psi[first + p] = evecs(p, r) / sqrtw[p];
    }
    // Sign convention: nonnegative integral over [0,1], ties resolved by
    // the first nonzero node value.
    double integral = 0.0;
    for (int l = first; l <= last; ++l) {
      integral += psi[l] * grid.unit_weights[l];
    }
    double sign = 0.0;
    if (integral > 1e-12) {
      sign = 1.0;
    } else if (integral < -1e-12) {
      sign = -1.0;
    } else {
      for (int l = first; l <= last && sign == 0.0; ++l) {
        if (psi[l] > 1e-14) sign = 1.0;
        else if (psi[l] < -1e-14) sign = -1.0;
      }
      if (sign == 0.0) sign = 1.0;
    }
    if (sign < 0.0) {
      for (double& v : psi) v = -v;
      integral = -integral;
    }
    out.values.push_back(lam);
    out.functions.push_back(std::move(psi));
    out.integrals.push_back(integral);
    ++out.rank;
  }
  if (out.rank == 0) {
    out.rank_deficient = true;
    return out;
  }
  out.rank_deficient = out.rank < K;
  for (int k = 0; k < out.rank; ++k) {
    const double lam = out.values[k];
    double gap = lmax;
    if (k > 0) gap = std::min(gap, std::fabs(out.values[k - 1] - lam));
    if (k + 1 < out.rank) gap = std::min(gap, std::fabs(lam - out.values[k + 1]));
    if (gap < kDegenerateGapRel * std::max(lmax, 1.0)) {
      out.near_degenerate.push_back(k);
    }
  }
  return out;
}

std::vector<double> apply_surface(const EigenSystem& eig,
                                  const CovarianceSurface& surface,
                                  const std::vector<double>& f) {
  if (!surface.grid.same_geometry(eig.grid)) {
    throw GridMismatch("apply_surface: surface grid differs");
  }
  const SmoothGrid& grid = eig.grid;
  std::vector<double> out(grid.size, 0.0);
  for (int a = grid.unit_first; a <= grid.unit_last; ++a) {
    double acc = 0.0;
    for (int l = grid.unit_first; l <= grid.unit_last; ++l) {
      acc += surface.at(a, l) * grid.unit_weights[l] * f[l];
    }
    out[a] = acc;
  }
  return out;
}

std::vector<double> apply_resolvent(const EigenSystem& eig, int nu,
                                    const std::vector<double>& f) {
  if (nu < 0 || nu >= eig.rank) {
    throw IndexOutOfRange("apply_resolvent: component index out of range");
  }
  const SmoothGrid& grid = eig.grid;
  const double lam_nu = eig.values[nu];
  std::vector<double> out(grid.size, 0.0);
  for (int l = grid.unit_first; l <= grid.unit_last; ++l) {
    out[l] = -f[l] / lam_nu;
  }
  for (int k = 0; k < eig.rank; ++k) {
    const double proj = eig.inner(eig.functions[k], f);
    double coef;
    if (k == nu) {
      coef = proj / lam_nu;
    } else {
      coef = eig.values[k] * proj / (lam_nu * (eig.values[k] - lam_nu));
    }
    for (int l = grid.unit_first; l <= grid.unit_last; ++l) {
      out[l] += coef * eig.functions[k][l];
    }
  }
  return out;
}

std::vector<double> resolvent_row_integrals(const EigenSystem& eig, int nu) {
  if (nu < 0 || nu >= eig.rank) {
    throw IndexOutOfRange("resolvent_row_integrals: component index out of range");
  }
  const SmoothGrid& grid = eig.grid;
  const double lam_nu = eig.values[nu];
  std::vector<double> out(grid.size, 0.0);
  for (int l = grid.unit_first; l <= grid.unit_last; ++l) {
    double acc = -1.0 / lam_nu;
    for (int k = 0; k < eig.rank; ++k) {
      double coef;
      if (k == nu) {
        coef = eig.integrals[k] / lam_nu;
      } else {
        coef = eig.values[k] * eig.integrals[k] /
               (lam_nu * (eig.values[k] - lam_nu));
      }
      acc += coef * eig.functions[k][l];
    }
    out[l] = acc;
  }
  return out;
}

double trace_p_delta(const EigenSystem& eig, int nu,
                     const CovarianceSurface& delta) {
  if (nu < 0 || nu >= eig.rank) {
    throw IndexOutOfRange("trace_p_delta: component index out of range");
  }
  if (!delta.grid.same_geometry(eig.grid)) {
    throw GridMismatch("trace_p_delta: surface grid differs");
  }
  const SmoothGrid& grid = eig.grid;
  const std::vector<double>& psi = eig.functions[nu];
  double acc = 0.0;
  for (int a = grid.unit_first; a <= grid.unit_last; ++a) {
    const double wa = psi[a] * grid.unit_weights[a];
    for (int b = grid.unit_first; b <= grid.unit_last; ++b) {
      acc += wa * delta.at(a, b) * grid.unit_weights[b] * psi[b];
    }
  }
  return acc;
}

double modified_l2_loss(const std::vector<double>& psi_hat,
                        const std::vector<double>& psi_ref,
                        const SmoothGrid& grid) {
  double dot = 0.0;
  for (int l = grid.unit_first; l <= grid.unit_last; ++l) {
    dot += psi_hat[l] * psi_ref[l] * grid.unit_weights[l];
  }
  const double sign = dot < 0.0 ? -1.0 : 1.0;
  double acc = 0.0;
  for (int l = grid.unit_first; l <= grid.unit_last; ++l) {
    const double d = psi_hat[l] - sign * psi_ref[l];
    acc += d * d * grid.unit_weights[l];
  }
  return acc;
}

}  // namespace fpcov
