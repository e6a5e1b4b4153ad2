#pragma once

// Row kernels for hyperboloid points stored by their spatial coordinates only.
//
// The model keeps every point projected, so x0 = sqrt(1 + |x_s|^2) is a
// function of the spatial part and need not be carried. Each forward kernel
// has a matching vector-Jacobian product (suffix _vjp) that accumulates into
// caller-owned gradient buffers.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "ggcf/lorentz.hpp"

namespace ggcf::spatial {

using lorentz::kMaxHyperbolicArgument;

using In = std::span<const double>;
using Out = std::span<double>;

inline double dot(In a, In b) {
  double s = 0.0;
#pragma omp simd reduction(+ : s)
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(In a) { return std::sqrt(dot(a, a)); }

inline void axpy(double alpha, In x, Out y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

// Thread-local work row. Each call site owns fixed slot numbers so nested
// kernels never alias: the madd family uses 0-3, callers 4 and up.
inline Out scratch(std::size_t slot, std::size_t n) {
  thread_local std::array<std::vector<double>, 16> pool;
  auto& v = pool.at(slot);
  if (v.size() < n) v.resize(n);
  return {v.data(), n};
}

inline Out zeroed_scratch(std::size_t slot, std::size_t n) {
  Out s = scratch(slot, n);
  std::fill(s.begin(), s.end(), 0.0);
  return s;
}

inline double time_of(In s) { return std::sqrt(1.0 + dot(s, s)); }

// sinh(min(n, cap)) / n, continuous at 0.
inline double sinhc(double n) {
  if (n < 1e-4) return 1.0 + n * n / 6.0;
  return std::sinh(std::min(n, kMaxHyperbolicArgument)) / n;
}

// d/dn [sinhc(n)] / n.
inline double sinhc_dn_over_n(double n) {
  if (n > kMaxHyperbolicArgument) return -std::sinh(kMaxHyperbolicArgument) / (n * n * n);
  if (n < 0.1) {
    const double n2 = n * n;
    return 1.0 / 3.0 + n2 * (1.0 / 30.0 + n2 * (1.0 / 840.0 + n2 * (1.0 / 45360.0 + n2 / 3991680.0)));
  }
  return (n * std::cosh(n) - std::sinh(n)) / (n * n * n);
}

inline double cosh_capped(double n) { return std::cosh(std::min(n, kMaxHyperbolicArgument)); }

// d/dn [cosh_capped(n)] / n.
inline double cosh_capped_dn_over_n(double n) {
  return n > kMaxHyperbolicArgument ? 0.0 : sinhc(n);
}

// asinh(r) / r, continuous at 0.
inline double asinhc(double r) {
  if (r < 1e-4) return 1.0 - r * r / 6.0;
  return std::asinh(r) / r;
}

// d/dr [asinhc(r)] / r.
inline double asinhc_dr_over_r(double r) {
  if (r < 0.05) {
    const double r2 = r * r;
    return -1.0 / 3.0 + r2 * (3.0 / 10.0 + r2 * (-15.0 / 56.0 + r2 * (35.0 / 144.0 - r2 * 315.0 / 1408.0)));
  }
  return (r / std::sqrt(1.0 + r * r) - std::asinh(r)) / (r * r * r);
}

inline double arcosh_clamped(double z) { return std::acosh(std::max(z, 1.0)); }

// Zero on the clamped region.
inline double arcosh_clamped_dz(double z) {
  if (z <= 1.0) return 0.0;
  return 1.0 / std::sqrt((z - 1.0) * (z + 1.0));
}

// Spatial part of exp_0(v).
inline void exp0(In v, Out out) {
  const double g = sinhc(norm(v));
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = g * v[i];
}

inline void exp0_vjp(In v, In g_out, Out g_v) {
  const double n = norm(v);
  const double g = sinhc(n);
  const double k = sinhc_dn_over_n(n) * dot(v, g_out);
  for (std::size_t i = 0; i < v.size(); ++i) g_v[i] += g * g_out[i] + k * v[i];
}

// log_0 of the projected point with spatial part s; equals
// arcosh(x0) s / |s| since arcosh(sqrt(1 + r^2)) = asinh(r).
inline void log0(In s, Out out) {
  const double h = asinhc(norm(s));
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = h * s[i];
}

inline void log0_vjp(In s, In g_out, Out g_s) {
  const double r = norm(s);
  const double h = asinhc(r);
  const double k = asinhc_dr_over_r(r) * dot(s, g_out);
  for (std::size_t i = 0; i < s.size(); ++i) g_s[i] += h * g_out[i] + k * s[i];
}

// -<a, b>_L for projected points.
// -<a,b>_L - 1 = (|a - b|^2 - (a0 - b0)^2) / 2, with
// a0 - b0 = (a - b).(a + b) / (a0 + b0). Free of the cancellation in
// a0 b0 - a.b when the points are close.
inline double neg_linner_minus_one(In a, In b) {
  double s = 0.0, t = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double dm = a[i] - b[i];
    s += dm * dm;
    t += dm * (a[i] + b[i]);
  }
  const double dt = t / (time_of(a) + time_of(b));
  return 0.5 * (s - dt * dt);
}

// Accumulates g * d(-<a,b>_L)/da and g * d(-<a,b>_L)/db.
inline void neg_linner_vjp(In a, In b, double g, Out g_a, Out g_b) {
  const double a0 = time_of(a);
  const double b0 = time_of(b);
  for (std::size_t i = 0; i < a.size(); ++i) {
    g_a[i] += g * (b0 * a[i] / a0 - b[i]);
    g_b[i] += g * (a0 * b[i] / b0 - a[i]);
  }
}

// arcosh(1 + q), with the argument clamped at 1 (q at 0).
inline double dist(In a, In b) {
  const double q = neg_linner_minus_one(a, b);
  if (q <= 0.0) return 0.0;
  return std::log1p(q + std::sqrt(q * (q + 2.0)));
}

// Zero on the clamped region.
inline void dist_vjp(In a, In b, double g, Out g_a, Out g_b) {
  const double q = neg_linner_minus_one(a, b);
  if (q <= 0.0) return;
  neg_linner_vjp(a, b, g / std::sqrt(q * (q + 2.0)), g_a, g_b);
}

// log_0(exp_0(v)): the identity until |v| reaches the argument cap.
inline void cap_norm(In v, Out out) {
  const double n = norm(v);
  const double f = n > kMaxHyperbolicArgument ? kMaxHyperbolicArgument / n : 1.0;
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = f * v[i];
}

inline void cap_norm_vjp(In v, In g_out, Out g_v) {
  const double n = norm(v);
  if (n <= kMaxHyperbolicArgument) {
    axpy(1.0, g_out, g_v);
    return;
  }
  const double f = kMaxHyperbolicArgument / n;
  const double vg = dot(v, g_out) / (n * n);
  for (std::size_t i = 0; i < v.size(); ++i) g_v[i] += f * (g_out[i] - vg * v[i]);
}

// Spatial part of exp_x(P_{0->x}(v)) for v in T_0, |v| below the cap.
// Transport is an isometry, so |v| is the tangent norm at x.
inline void madd_tangent(In x, In v, Out out) {
  const std::size_t d = x.size();
  const double n = norm(v);
  if (n == 0.0) {
    std::copy(x.begin(), x.end(), out.begin());
    return;
  }
  const double a = 1.0 / (1.0 + time_of(x));
  const double ca = dot(x, v) * a;
  const double c_n = cosh_capped(n);
  const double s_n = sinhc(n);
  for (std::size_t i = 0; i < d; ++i) {
    const double w = v[i] + ca * x[i];
    out[i] = c_n * x[i] + s_n * w;
  }
}

inline void madd_tangent_vjp(In x, In v, In g_out, Out g_x, Out g_v) {
  const std::size_t d = x.size();
  Out w = scratch(2, d);
  const double n = norm(v);
  const double x0 = time_of(x);
  const double a = 1.0 / (1.0 + x0);
  const double c = dot(x, v);
  for (std::size_t i = 0; i < d; ++i) w[i] = v[i] + c * a * x[i];

  const double c_n = cosh_capped(n);
  const double s_n = sinhc(n);
  // g_w = s_n * g_out, so x . g_w = s_n * (x . g_out).
  const double x_g = dot(x, g_out);
  const double x_gw = s_n * x_g;
  const double radial = cosh_capped_dn_over_n(n) * x_g + sinhc_dn_over_n(n) * dot(w, g_out);
  for (std::size_t i = 0; i < d; ++i) {
    const double gw = s_n * g_out[i];
    g_v[i] += radial * v[i] + gw + a * x_gw * x[i];
    g_x[i] += c_n * g_out[i] + a * c * gw + a * x_gw * v[i] - c * x_gw * a * a / x0 * x[i];
  }
}

// Spatial part of x (+) y = exp_x(P_{0->x}(log_0 y)).
inline void madd(In x, In y, Out out) {
  Out v = scratch(0, x.size());
  log0(y, v);
  madd_tangent(x, v, out);
}

inline void madd_vjp(In x, In y, In g_out, Out g_x, Out g_y) {
  const std::size_t d = x.size();
  Out v = scratch(1, d);
  Out g_v = zeroed_scratch(3, d);
  log0(y, v);
  madd_tangent_vjp(x, v, g_out, g_x, g_v);
  log0_vjp(y, g_v, g_y);
}

}  // namespace ggcf::spatial
