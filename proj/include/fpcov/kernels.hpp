/// \file kernels.hpp
/// \brief Smoothing kernels and the exact window integrals built from them.
///
/// Everything downstream rests on two compactly supported kernels:
///  - the quartic (biweight) kernel K(x) = (15/16)(1-x^2)^2 on [-1,1], used
///    for presmoothing raw observations, and
///  - the centered cubic B-spline Q(x) on [-2,2], used as the summability
///    kernel when presmoothed curves are turned into covariance estimates.
///
/// The B-spline enters later formulas only through moment integrals over
/// finite windows, which have closed forms (the kernel is piecewise cubic).
/// Those closed forms are implemented here once and reused everywhere so
/// that band-limited quantities vanish *exactly* outside their support.
#pragma once

#include <cstdint>

namespace fpcov {
namespace kern {

/// Half-support of the quartic kernel (B_K).
inline constexpr double kQuarticHalfSupport = 1.0;
/// Half-support of the cubic B-spline kernel (C_Q).
inline constexpr double kBsplineHalfSupport = 2.0;
/// Second moment of the quartic kernel: integral of x^2 K(x) dx.
inline constexpr double kQuarticSecondMoment = 1.0 / 7.0;
/// Integral of K(x)^2 dx; drives the same-observation variance inflation
/// on the covariance diagonal.  Distinct from the second moment above.
inline constexpr double kQuarticSquareIntegral = 5.0 / 7.0;
/// Smallest admissible diagonal band constant A: the oblique transition
/// band must cover 4*(quartic half-support + B-spline half-support).
inline constexpr double kMinBandConstant =
    4.0 * (kQuarticHalfSupport + kBsplineHalfSupport);
/// Default diagonal band constant.
inline constexpr double kDefaultBandConstant = kMinBandConstant;

/// Quartic kernel K(x) = (15/16)(1-x^2)^2 for |x| <= 1, else 0.
double quartic(double x);

/// Derivative K'(x) = -(15/4) x (1-x^2) for |x| <= 1, else 0.
/// (Two-sided zero at the support edges, so no distributional terms.)
double quartic_deriv(double x);

/// Centered cubic B-spline Q(x), supported on [-2,2], integrating to 1.
double bspline(double x);

/// Partial moment integral I_j(b) = int_{-2}^{b} w^j Q(w) dw for j in {0,1}.
/// Closed-form piecewise polynomial; exact (up to rounding) for all b.
double bspline_partial_integral(int j, double b);

/// Window moment integral G_j(y; band) = int_{y-band/2}^{y+band/2} w^j Q(w) dw.
/// Exactly zero iff the window misses the support, i.e. |y| > 2 + band/2.
double bspline_window_integral(int j, double y, double band);

/// The pair of band-limited integrals that transfer squared-curve
/// information onto the diagonal correction terms:
///   beta1(u,s) = int_{u-(A/2)h}^{u+(A/2)h} Q(((u+v)/2 - s)/h) dv
///   beta2(u,s) = int_{u-(A/2)h}^{u+(A/2)h} ((u+v)/2 - s) * Q(((u+v)/2-s)/h) dv
/// where A is the diagonal band constant.  Both vanish exactly when
/// |u - s| > h * (2 + A/4).
struct BetaPair {
  double beta1;
  double beta2;
};
BetaPair beta_integrals(double u, double s, double h, double band_constant);

/// Smoothed indicator weight that splits the plane into a near-diagonal
/// strip (weight ~ 1) and the rest (weight ~ 0).  The hard indicator
/// |s-t| <= band/2 with band = A*h is mollified by a Gaussian of width
/// tau = h/10, which gives the exact closed form below via erf.
/// Complementarity weight + co_weight == 1 holds exactly by construction.
struct DiagonalWeight {
  double h = 0.0;                          ///< smoothing bandwidth
  double band_constant = kDefaultBandConstant;  ///< A; band = A*h
  double tau = 0.0;                        ///< mollifier width; h/10 default

  static DiagonalWeight make(double h, double band_constant = kDefaultBandConstant);

  double band() const { return band_constant * h; }

  /// Weight as a function of the diagonal distance d = s - t.
  double weight_dist(double d) const;
  /// Weight at the point (s, t).
  double weight(double s, double t) const { return weight_dist(s - t); }
  /// Complementary weight, exactly 1 - weight.
  double co_weight(double s, double t) const { return 1.0 - weight(s, t); }
};

}  // namespace kern
}  // namespace fpcov
