/// \file noise.hpp
/// \brief Measurement-noise variance estimation.
///
/// The diagonal curve estimates C(t,t) + sigma^2 while the off-diagonal
/// surface, averaged along short oblique segments through (t,t), estimates
/// C(t,t) alone; the gap, averaged over a central window, is sigma^2:
///
///   oblique(t) = avg over u in [a1, a2] of C_off(t - u h, t + u h)
///   sigma^2    = (t1 - t0)^{-1} * integral_{t0}^{t1} (diag - oblique)
///
/// The offsets u must clear the zone |s-t| <= 2(B_K + C_Q) h = 6h where the
/// off-diagonal estimator shares raw observations with the diagonal, so
/// u >= 3 always.  The default window (u in [13,14], t in [0.25, 0.75])
/// assumes a small bandwidth; when t +- a2*h would leave [0,1] the
/// configuration is adapted: first the offsets are shrunk (never below 3),
/// then the t-window is narrowed, and only if nothing feasible remains is
/// DomainExceeded thrown.  Adaptations are reported on the resolved band.
#pragma once

#include <string>
#include <vector>

#include "fpcov/covariance.hpp"
#include "fpcov/grid.hpp"

namespace fpcov {

/// A band configuration made concrete for one bandwidth h.
struct SigmaBand {
  double a1 = 0.0;   ///< lower oblique offset (in units of h)
  double a2 = 0.0;   ///< upper oblique offset
  double t0 = 0.0;   ///< integration window start
  double t1 = 0.0;   ///< integration window end
  int nodes = 32;    ///< midpoint nodes for the u-average
  bool adapted = false;
  std::string note;  ///< what was changed, if anything
};

/// Requested configuration (bandwidth-independent).
struct SigmaConfig {
  double a1 = 13.0;
  double a2 = 14.0;
  double t0 = 0.25;
  double t1 = 0.75;
  int nodes = 64;

  /// Make the configuration concrete for bandwidth h, adapting it if the
  /// requested geometry is impossible.  Throws InvalidConfig for malformed
  /// requests and DomainExceeded when no feasible band exists.
  SigmaBand resolve(double h) const;
};

/// Node values of the oblique average of the off-diagonal surface.  Nodes
/// whose oblique segment would leave the unit square carry 0; the
/// integration window of a resolved band only touches valid nodes.
std::vector<double> oblique_diagonal(const CovarianceSurface& offdiag,
                                     const SigmaBand& band);

/// Same oblique average for a single rank-one term u_vec(s) u_vec(t) given
/// by its node vector; used to subtract one curve's contribution exactly.
std::vector<double> oblique_rank_one(const SmoothGrid& grid,
                                     const std::vector<double>& u_vec,
                                     const SigmaBand& band);

struct SigmaEstimate {
  double value = 0.0;  ///< raw estimate (may be slightly negative)
  SigmaBand band;
  double floored() const { return value > 0.0 ? value : 0.0; }
};

/// Average the diagonal/oblique gap over the resolved window.
SigmaEstimate estimate_sigma2(const DiagonalCurve& diag,
                              const CovarianceSurface& offdiag,
                              const SigmaBand& band);

}  // namespace fpcov
