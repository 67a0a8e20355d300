/// \file quadrature.hpp
/// \brief Small fixed-order Gauss-Legendre rules.
///
/// The integrands that arise here are piecewise polynomials whose knots sit
/// on the smoothing grid, so per-cell Gauss-Legendre with a handful of
/// points integrates them exactly (a 5-point rule handles degree <= 9).
#pragma once

#include <array>

namespace fpcov {
namespace quad {

inline constexpr std::array<double, 3> kGl3Nodes = {
    -0.7745966692414834, 0.0, 0.7745966692414834};
inline constexpr std::array<double, 3> kGl3Weights = {
    5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};

inline constexpr std::array<double, 5> kGl5Nodes = {
    -0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
    0.9061798459386640};
inline constexpr std::array<double, 5> kGl5Weights = {
    0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
    0.4786286704993665, 0.2369268850561891};

inline constexpr std::array<double, 7> kGl7Nodes = {
    -0.9491079123427585, -0.7415311855993945, -0.4058451513773972, 0.0,
    0.4058451513773972, 0.7415311855993945, 0.9491079123427585};
inline constexpr std::array<double, 7> kGl7Weights = {
    0.1294849661688697, 0.2797053914892766, 0.3818300505051189,
    0.4179591836734694, 0.3818300505051189, 0.2797053914892766,
    0.1294849661688697};

/// Integrate f over [a, b] with the 5-point Gauss-Legendre rule
/// (exact for polynomial degree <= 9).
template <typename F>
double gl5(F&& f, double a, double b) {
  const double mid = 0.5 * (a + b);
  const double hal = 0.5 * (b - a);
  double acc = 0.0;
  for (int i = 0; i < 5; ++i) {
    acc += kGl5Weights[i] * f(mid + hal * kGl5Nodes[i]);
  }
  return acc * hal;
}

/// 7-point rule (exact for polynomial degree <= 13).
template <typename F>
double gl7(F&& f, double a, double b) {
  const double mid = 0.5 * (a + b);
  const double hal = 0.5 * (b - a);
  double acc = 0.0;
  for (int i = 0; i < 7; ++i) {
    acc += kGl7Weights[i] * f(mid + hal * kGl7Nodes[i]);
  }
  return acc * hal;
}

}  // namespace quad
}  // namespace fpcov
