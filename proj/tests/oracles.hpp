#pragma once

// Independent reference computations used by the tests. None of these call
// into the field engine.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

#include "atomchip/quantities.hpp"

namespace oracle {

using atomchip::Mat3;
using atomchip::Vec3;

inline constexpr double kMu0 = 4.0e-7 * std::numbers::pi;

// Adaptive Gauss-Kronrod (7/15) quadrature of a vector integrand on [a, b].
namespace detail {
inline constexpr double kXk[8] = {0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                                  0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                                  0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                                  0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr double kWk[8] = {0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                                  0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                                  0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                                  0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr double kWg[4] = {0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                                  0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

inline void gk15(const std::function<Vec3(double)>& f, double a, double b, Vec3& kronrod, Vec3& gauss) {
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  const Vec3 fc = f(c);
  kronrod = kWk[7] * fc;
  gauss = kWg[3] * fc;
  for (int j = 0; j < 7; ++j) {
    const Vec3 s = f(c - h * kXk[j]) + f(c + h * kXk[j]);
    kronrod += kWk[j] * s;
    if (j % 2 == 1) gauss += kWg[j / 2] * s;
  }
  kronrod *= h;
  gauss *= h;
}

inline Vec3 adapt(const std::function<Vec3(double)>& f, double a, double b, double abs_tol, int depth) {
  Vec3 k, g;
  gk15(f, a, b, k, g);
  if ((k - g).norm() <= abs_tol || depth > 50) return k;
  const double m = 0.5 * (a + b);
  return adapt(f, a, m, 0.5 * abs_tol, depth + 1) + adapt(f, m, b, 0.5 * abs_tol, depth + 1);
}
}  // namespace detail

inline Vec3 integrate(const std::function<Vec3(double)>& f, double a, double b, double abs_tol) {
  return detail::adapt(f, a, b, abs_tol, 0);
}

// Biot-Savart field of a straight segment by direct quadrature of
// mu0 I / 4pi * dl x r / |r|^3 along the segment.
inline Vec3 biot_savart_quadrature(const Vec3& p, const Vec3& a, const Vec3& b, double current, double rel_tol) {
  const Vec3 dl = b - a;
  auto integrand = [&](double s) -> Vec3 {
    const Vec3 r = p - (a + s * dl);
    const double n = r.norm();
    return dl.cross(r) / (n * n * n);
  };
  // The tolerance is relative to a coarse first estimate of the integral.
  Vec3 k, g;
  detail::gk15(integrand, 0.0, 1.0, k, g);
  const double scale = std::max(k.norm(), g.norm());
  return kMu0 * current / (4 * std::numbers::pi) * integrate(integrand, 0.0, 1.0, rel_tol * 1e-2 * scale);
}

// Infinite flat ribbon of width w along +y, centered at x = 0 in the plane z = 0,
// carrying total current I uniformly. Field at (x, z), z != 0.
inline Vec3 ribbon_field(double I, double w, double x, double z) {
  const double K = I / w;  // A / m
  const double x1 = x + w / 2, x2 = x - w / 2;
  const double bx = kMu0 * K / (2 * std::numbers::pi) * (std::atan2(x1, z) - std::atan2(x2, z));
  const double bz = -kMu0 * K / (4 * std::numbers::pi) * std::log((x1 * x1 + z * z) / (x2 * x2 + z * z));
  return {bx, 0.0, bz};
}

// Central-difference Jacobian dF_i/dx_j with Richardson extrapolation.
inline Mat3 fd_jacobian(const std::function<Vec3(const Vec3&)>& F, const Vec3& p, double h) {
  auto central = [&](double step) {
    Mat3 J;
    for (int j = 0; j < 3; ++j) {
      Vec3 e = Vec3::Zero();
      e[j] = step;
      J.col(j) = (F(p + e) - F(p - e)) / (2 * step);
    }
    return J;
  };
  return (4.0 * central(h / 2) - central(h)) / 3.0;
}

// Harmonic trap frequency (Hz) of a manufactured Ioffe field
// B = (B0 + c x^2, b y, -b z) in the transverse direction: |B| ~ B0 + b^2 r^2 / (2 B0).
inline double ioffe_transverse_frequency(double moment, double mass, double B0, double b) {
  return std::sqrt(moment * b * b / (mass * B0)) / (2 * std::numbers::pi);
}

inline double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace oracle
