#include "ggcf/lorentz.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ggcf/error.hpp"
#include "ggcf/spatial.hpp"

namespace ggcf::lorentz {

namespace {

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string(what) + ": non-finite coordinate");
  }
}

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": length mismatch (" + std::to_string(a) +
                         " vs " + std::to_string(b) + ")");
  }
}

double euclid_norm(std::span<const double> v) { return spatial::norm(v); }

}  // namespace

AmbientVec::AmbientVec(std::vector<double> coords) : coords_(std::move(coords)) {
  require_finite(coords_, "AmbientVec");
}

AmbientVec AmbientVec::zero(std::size_t ambient_dim) {
  return AmbientVec(std::vector<double>(ambient_dim, 0.0));
}

TangentCoords::TangentCoords(std::vector<double> coords) : coords_(std::move(coords)) {
  require_finite(coords_, "TangentCoords");
}

TangentCoords TangentCoords::zero(std::size_t dim) {
  return TangentCoords(std::vector<double>(dim, 0.0));
}

AmbientVec TangentCoords::lift() const {
  std::vector<double> c(coords_.size() + 1, 0.0);
  std::copy(coords_.begin(), coords_.end(), c.begin() + 1);
  return AmbientVec(std::move(c));
}

double TangentCoords::norm() const { return euclid_norm(coords_); }

HPoint::HPoint(std::vector<double> coords) : coords_(std::move(coords)) {
  if (coords_.size() < 2) throw DimensionError("HPoint: need at least 2 ambient coordinates");
  require_finite(coords_, "HPoint");
  const double x0 = coords_[0];
  const double residual = std::abs(linner(coords_, coords_) + 1.0);
  if (x0 < 1.0 - kManifoldTolerance || residual > kManifoldTolerance * std::max(1.0, x0 * x0)) {
    throw DomainError("HPoint: coordinates are off the hyperboloid (residual " +
                      std::to_string(residual) + ", x0 " + std::to_string(x0) + ")");
  }
}

HPoint HPoint::origin(std::size_t dim) {
  std::vector<double> c(dim + 1, 0.0);
  c[0] = 1.0;
  return HPoint(Trusted{}, std::move(c));
}

double linner(std::span<const double> x, std::span<const double> y) {
  require_same_size(x.size(), y.size(), "linner");
  if (x.size() < 2) throw DimensionError("linner: need at least 2 coordinates");
  return -x[0] * y[0] + spatial::dot(x.subspan(1), y.subspan(1));
}

double linner(const AmbientVec& x, const AmbientVec& y) { return linner(x.coords(), y.coords()); }

double linner(const HPoint& x, const HPoint& y) { return linner(x.coords(), y.coords()); }

double lnorm_abs(std::span<const double> z) { return std::sqrt(std::abs(linner(z, z))); }

double lnorm_abs(const AmbientVec& z) { return lnorm_abs(z.coords()); }

double dist(const HPoint& x, const HPoint& y) {
  require_same_size(x.coords().size(), y.coords().size(), "dist");
  return spatial::dist(x.spatial(), y.spatial());
}

HPoint exp0(const TangentCoords& v) {
  const std::size_t d = v.dim();
  std::vector<double> c(d + 1, 0.0);
  const double n = v.norm();
  if (n == 0.0) return HPoint::origin(d);
  const double s = std::sinh(std::min(n, kMaxHyperbolicArgument)) / n;
  for (std::size_t i = 0; i < d; ++i) c[i + 1] = s * v[i];
  return project(AmbientVec(std::move(c)));
}

TangentCoords log0(const HPoint& x) {
  const std::size_t d = x.dim();
  const HPoint o = HPoint::origin(d);
  // u = x + <0,x>_L 0
  std::vector<double> u(x.coords().begin(), x.coords().end());
  u[0] += linner(o, x);
  const double un = lnorm_abs(u);
  if (un == 0.0) return TangentCoords::zero(d);
  const double scale = dist(o, x) / un;
  std::vector<double> out(d);
  for (std::size_t i = 0; i < d; ++i) out[i] = scale * u[i + 1];
  return TangentCoords(std::move(out));
}

HPoint exp_at(const HPoint& x, const AmbientVec& v) {
  require_same_size(x.coords().size(), v.size(), "exp_at");
  const double tangency = std::abs(linner(x.ambient(), v));
  const double vn_euclid = euclid_norm(v.coords());
  if (tangency > kTangentTolerance * std::max(1.0, x.time() * vn_euclid)) {
    throw DomainError("exp_at: vector is not tangent at the base point (<x,v>_L = " +
                      std::to_string(tangency) + ")");
  }
  const double n = lnorm_abs(v);
  if (n == 0.0) return x;
  const double capped = std::min(n, kMaxHyperbolicArgument);
  const double ch = std::cosh(capped);
  const double sh = std::sinh(capped) / n;
  std::vector<double> c(x.coords().size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = ch * x[i] + sh * v[i];
  return project(AmbientVec(std::move(c)));
}

AmbientVec log_at(const HPoint& x, const HPoint& y) {
  require_same_size(x.coords().size(), y.coords().size(), "log_at");
  if (x == y) return AmbientVec::zero(x.coords().size());
  const double xy = linner(x, y);
  std::vector<double> u(y.coords().begin(), y.coords().end());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] += xy * x[i];
  const double un = lnorm_abs(u);
  if (un == 0.0) return AmbientVec::zero(x.coords().size());
  const double scale = dist(x, y) / un;
  for (double& c : u) c *= scale;
  return AmbientVec(std::move(u));
}

AmbientVec transport_from_origin(const HPoint& x, const TangentCoords& v) {
  require_same_size(x.dim(), v.dim(), "transport_from_origin");
  const AmbientVec lifted = v.lift();
  const double xv = linner(x.ambient(), lifted);
  // 1 - <0,x>_L = 1 + x0
  const double scale = xv / (1.0 + x.time());
  std::vector<double> out(lifted.coords().begin(), lifted.coords().end());
  const HPoint o = HPoint::origin(x.dim());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += (o[i] + x[i]) * scale;
  return AmbientVec(std::move(out));
}

HPoint madd(const HPoint& x, const HPoint& y) {
  require_same_size(x.dim(), y.dim(), "madd");
  return exp_at(x, transport_from_origin(x, log0(y)));
}

HPoint smul(double r, const HPoint& x) {
  if (!std::isfinite(r)) throw NumericError("smul: non-finite scalar");
  const TangentCoords v = log0(x);
  std::vector<double> scaled(v.coords().begin(), v.coords().end());
  for (double& c : scaled) c *= r;
  return exp0(TangentCoords(std::move(scaled)));
}

HPoint centroid(std::span<const double> weights, std::span<const HPoint> points) {
  if (points.empty()) throw DimensionError("centroid: empty point list");
  require_same_size(weights.size(), points.size(), "centroid");
  const std::size_t n = points.front().coords().size();
  std::vector<double> z(n, 0.0);
  bool any_positive = false;
  for (std::size_t j = 0; j < points.size(); ++j) {
    if (weights[j] < 0.0 || !std::isfinite(weights[j])) {
      throw DomainError("centroid: weights must be finite and non-negative");
    }
    require_same_size(points[j].coords().size(), n, "centroid");
    any_positive = any_positive || weights[j] > 0.0;
    for (std::size_t i = 0; i < n; ++i) z[i] += weights[j] * points[j][i];
  }
  if (!any_positive) throw DegenerateInputError("centroid: all weights are zero");
  const double zn = lnorm_abs(z);
  for (double& c : z) c /= zn;
  return project(AmbientVec(std::move(z)));
}

HPoint project(const AmbientVec& x) {
  if (x.size() < 2) throw DimensionError("project: need at least 2 coordinates");
  std::vector<double> c(x.coords().begin(), x.coords().end());
  c[0] = spatial::time_of(std::span<const double>(c).subspan(1));
  if (!std::isfinite(c[0])) throw NumericError("project: spatial part overflows");
  return HPoint(HPoint::Trusted{}, std::move(c));
}

}  // namespace ggcf::lorentz
