#include "fpcov/kernels.hpp"

#include <cmath>

#include "fpcov/errors.hpp"

namespace fpcov {
namespace kern {

double quartic(double x) {
  if (x < -1.0 || x > 1.0) return 0.0;
  const double u = 1.0 - x * x;
  return (15.0 / 16.0) * u * u;
}

double quartic_deriv(double x) {
  if (x < -1.0 || x > 1.0) return 0.0;
  return -(15.0 / 4.0) * x * (1.0 - x * x);
}

double bspline(double x) {
  const double a = std::fabs(x);
  if (a >= 2.0) return 0.0;
  if (a >= 1.0) {
    const double u = 2.0 - a;
    return u * u * u / 6.0;
  }
  // |x| < 1: (3|x|^3 - 6x^2 + 4)/6
  return (3.0 * a * a * a - 6.0 * x * x + 4.0) / 6.0;
}

double bspline_partial_integral(int j, double b) {
  if (j != 0 && j != 1) {
    throw IndexOutOfRange("bspline_partial_integral: moment order must be 0 or 1");
  }
  if (b <= -2.0) return 0.0;
  if (j == 0) {
    if (b >= 2.0) return 1.0;
    if (b <= -1.0) {
      const double u = 2.0 + b;
      return u * u * u * u / 24.0;
    }
    if (b <= 0.0) {
      const double b2 = b * b;
      return (-3.0 * b2 * b2 - 8.0 * b2 * b + 16.0 * b + 12.0) / 24.0;
    }
    if (b <= 1.0) {
      const double b2 = b * b;
      return 0.5 + (3.0 * b2 * b2 - 8.0 * b2 * b + 16.0 * b) / 24.0;
    }
    const double u = 2.0 - b;
    return 1.0 - u * u * u * u / 24.0;
  }
  // j == 1
  if (b >= 2.0) return 0.0;
  if (b <= -1.0) {
    const double u = 2.0 + b;
    const double u4 = u * u * u * u;
    return u4 * u / 30.0 - u4 / 12.0;
  }
  if (b <= 0.0) {
    const double b2 = b * b;
    const double b4 = b2 * b2;
    return (-6.0 * b4 * b - 15.0 * b4 + 20.0 * b2 - 14.0) / 60.0;
  }
  if (b <= 1.0) {
    const double b2 = b * b;
    const double b4 = b2 * b2;
    return (6.0 * b4 * b - 15.0 * b4 + 20.0 * b2) / 60.0 - 7.0 / 30.0;
  }
  const double u = 2.0 - b;
  const double u4 = u * u * u * u;
  return u4 * u / 30.0 - u4 / 12.0;
}

double bspline_window_integral(int j, double y, double band) {
  if (band < 0.0) {
    throw InvalidConfig("bspline_window_integral: band must be nonnegative");
  }
  const double half = 0.5 * band;
  if (std::fabs(y) > kBsplineHalfSupport + half) return 0.0;
  return bspline_partial_integral(j, y + half) -
         bspline_partial_integral(j, y - half);
}

BetaPair beta_integrals(double u, double s, double h, double band_constant) {
  if (h <= 0.0) throw InvalidConfig("beta_integrals: h must be positive");
  // Substituting the window midpoint w = (u+v)/2 - s maps the v-window of
  // half-width (A/2)h onto a w-window of half-width (A/4)h and contributes
  // a Jacobian factor of 2; rescaling w = h*x yields the moment integrals
  // of the standardized kernel over a window of full width A/2.
  const double y = (u - s) / h;
  BetaPair out;
  out.beta1 = 2.0 * h * bspline_window_integral(0, y, 0.5 * band_constant);
  out.beta2 = 2.0 * h * h * bspline_window_integral(1, y, 0.5 * band_constant);
  return out;
}

DiagonalWeight DiagonalWeight::make(double h, double band_constant) {
  if (h <= 0.0) throw InvalidConfig("DiagonalWeight: h must be positive");
  if (band_constant < kMinBandConstant) {
    throw InvalidConfig("DiagonalWeight: band constant below admissible minimum");
  }
  DiagonalWeight w;
  w.h = h;
  w.band_constant = band_constant;
  w.tau = h / 10.0;
  return w;
}

double DiagonalWeight::weight_dist(double d) const {
  // Convolving the indicator 1{|d| <= band/2} with N(0, tau^2):
  //   W(d) = Phi((d + band/2)/tau) - Phi((d - band/2)/tau).
  const double half = 0.5 * band();
  const double inv = 1.0 / (tau * std::sqrt(2.0));
  return 0.5 * (std::erf((d + half) * inv) - std::erf((d - half) * inv));
}

}  // namespace kern
}  // namespace fpcov
