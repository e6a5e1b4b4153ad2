#pragma once

// Lorentz (hyperboloid) model of hyperbolic space with curvature -1.
//
// Points live in (d+1)-dimensional Minkowski space with the time-like
// coordinate first. Tangent vectors at the origin are stored with their
// structural leading zero dropped (TangentCoords); general tangent vectors and
// unnormalised sums use the full ambient representation (AmbientVec).

#include <cstddef>
#include <span>
#include <vector>

namespace ggcf::lorentz {

// |<x,x>_L + 1| allowed for a valid point, scaled by max(1, x0^2).
inline constexpr double kManifoldTolerance = 1e-9;
// |<x,v>_L| allowed for v to count as tangent at x, scaled by max(1, x0*|v|).
inline constexpr double kTangentTolerance = 1e-6;
// cosh/sinh arguments are capped here; cosh overflows near 710.
inline constexpr double kMaxHyperbolicArgument = 50.0;

class AmbientVec {
 public:
  AmbientVec() = default;
  explicit AmbientVec(std::vector<double> coords);

  static AmbientVec zero(std::size_t ambient_dim);

  std::span<const double> coords() const { return coords_; }
  std::size_t size() const { return coords_.size(); }
  double operator[](std::size_t i) const { return coords_[i]; }

  friend bool operator==(const AmbientVec&, const AmbientVec&) = default;

 private:
  std::vector<double> coords_;
};

class TangentCoords {
 public:
  TangentCoords() = default;
  explicit TangentCoords(std::vector<double> coords);

  static TangentCoords zero(std::size_t dim);

  std::span<const double> coords() const { return coords_; }
  std::size_t dim() const { return coords_.size(); }
  double operator[](std::size_t i) const { return coords_[i]; }

  // (0, v): the ambient form, tangent at the origin by construction.
  AmbientVec lift() const;
  double norm() const;

  friend bool operator==(const TangentCoords&, const TangentCoords&) = default;

 private:
  std::vector<double> coords_;
};

class HPoint {
 public:
  // Throws DomainError when coords are off the upper sheet of the hyperboloid.
  explicit HPoint(std::vector<double> coords);

  static HPoint origin(std::size_t dim);

  std::span<const double> coords() const { return coords_; }
  std::span<const double> spatial() const { return std::span(coords_).subspan(1); }
  std::size_t dim() const { return coords_.size() - 1; }
  double time() const { return coords_[0]; }
  double operator[](std::size_t i) const { return coords_[i]; }

  AmbientVec ambient() const { return AmbientVec(coords_); }

  friend bool operator==(const HPoint&, const HPoint&) = default;

 private:
  struct Trusted {};
  HPoint(Trusted, std::vector<double> coords) : coords_(std::move(coords)) {}
  friend HPoint project(const AmbientVec& x);

  std::vector<double> coords_;
};

double linner(std::span<const double> x, std::span<const double> y);
double linner(const AmbientVec& x, const AmbientVec& y);
double linner(const HPoint& x, const HPoint& y);

double lnorm_abs(std::span<const double> z);
double lnorm_abs(const AmbientVec& z);

double dist(const HPoint& x, const HPoint& y);

HPoint exp0(const TangentCoords& v);
TangentCoords log0(const HPoint& x);

// v must be tangent at x.
HPoint exp_at(const HPoint& x, const AmbientVec& v);
AmbientVec log_at(const HPoint& x, const HPoint& y);

// Parallel transport of a tangent vector at the origin to the tangent space at x.
AmbientVec transport_from_origin(const HPoint& x, const TangentCoords& v);

// x (+) y = exp_x(P_{0->x}(log_0(y)))
HPoint madd(const HPoint& x, const HPoint& y);
// r (x) x = exp_0(r * log_0(x))
HPoint smul(double r, const HPoint& x);

// Lorentzian centroid z / | ||z||_L | of z = sum_i w_i p_i.
HPoint centroid(std::span<const double> weights, std::span<const HPoint> points);

// Recomputes x0 from the spatial coordinates.
HPoint project(const AmbientVec& x);

}  // namespace ggcf::lorentz
