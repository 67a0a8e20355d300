/// \file eigensystem.hpp
/// \brief Discrete eigenanalysis of a covariance surface on [0,1].
///
/// The integral operator with kernel C is discretized with the hat-basis
/// quadrature weights of the grid: eigenpairs of W^{1/2} C W^{1/2} (a
/// symmetric problem) give eigenfunctions psi = W^{-1/2} u that satisfy
/// sum_l psi(s_l)^2 w_l = 1.  Only nodes whose hat basis overlaps (0,1)
/// participate; eigenfunction vectors are stored full-length with zeros on
/// the overhang nodes.
///
/// The per-component resolvent-style operator used by the leave-one-out
/// perturbation expansions is also provided:
///   H_nu f = sum_{k != nu} c_k <psi_k, f> psi_k
///            + (1/lambda_nu) <psi_nu, f> psi_nu - f / lambda_nu,
///   c_k = lambda_k / (lambda_nu (lambda_k - lambda_nu)).
#pragma once

#include <vector>

#include "fpcov/covariance.hpp"
#include "fpcov/grid.hpp"

namespace fpcov {

struct EigenSystem {
  SmoothGrid grid;
  int requested = 0;           ///< components asked for
  int rank = 0;                ///< components delivered (positive spectrum)
  bool rank_deficient = false; ///< rank < requested
  std::vector<double> values;  ///< eigenvalues, descending
  std::vector<std::vector<double>> functions;  ///< node vectors, full length
  std::vector<double> integrals;               ///< integral of each psi over [0,1]
  std::vector<int> near_degenerate;  ///< component indices with tiny spectral gaps

  /// Evaluate component k at t in [0,1] (piecewise linear).
  double eval(int k, double t) const { return grid.interp(functions[k], t); }

  /// Quadrature inner product <a, b> = sum_l a_l b_l w_l.
  double inner(const std::vector<double>& a, const std::vector<double>& b) const;
};

/// Top-K eigenpairs of the surface.  Negative/zero eigenvalues are never
/// returned: if fewer than K positive eigenvalues exist, the achievable
/// number is returned with rank_deficient set.
/// Sign convention: each eigenfunction integrates to a nonnegative value
/// over [0,1]; exact ties are broken by making the first nonzero node
/// value positive.
EigenSystem eigendecompose(const CovarianceSurface& surface, int K);

/// Quadrature action of a surface on a node vector: (C f)(s_l).
std::vector<double> apply_surface(const EigenSystem& eig,
                                  const CovarianceSurface& surface,
                                  const std::vector<double>& f);

/// Apply H_nu (see file comment) to a node vector.
std::vector<double> apply_resolvent(const EigenSystem& eig, int nu,
                                    const std::vector<double>& f);

/// Row integrals r(t) = integral over u in [0,1] of H_nu(t, u) du as a node
/// vector (meaningful on the unit-interval nodes).
std::vector<double> resolvent_row_integrals(const EigenSystem& eig, int nu);

/// tr(P_nu Delta) where P_nu = psi_nu psi_nu^T under the grid quadrature.
double trace_p_delta(const EigenSystem& eig, int nu,
                     const CovarianceSurface& delta);

/// Sign-aligned squared L2 distance between an estimated and a reference
/// eigenfunction (both node vectors on the grid of `weights`):
///   || psi_hat - sign(<psi_hat, psi_ref>) psi_ref ||^2
/// with sign(0) treated as +1.
double modified_l2_loss(const std::vector<double>& psi_hat,
                        const std::vector<double>& psi_ref,
                        const SmoothGrid& grid);

}  // namespace fpcov
