#pragma once

#include <cstdint>
#include <functional>

#include "cloak/mat3.hpp"

namespace cloak {

/// Material sample at one point, relative to the background fluid:
/// inv_density in units of 1/rho0, bulk_modulus in units of kappa0.
struct MaterialPoint {
  Mat3 inv_density = Mat3::identity();
  double bulk_modulus = 1.0;

  // Bookkeeping flags set by catalog evaluators and push_forward.
  bool out_of_domain = false;
  bool singular_clamped = false;
  bool orientation_reversed = false;

  static MaterialPoint background() { return {}; }
};

/// Piecewise-smooth coordinate map with analytic Jacobian.
/// `map` sends a physical point to its virtual preimage; `jacobian`
/// returns J = d(physical)/d(virtual) evaluated at the physical point.
/// Outside `domain` both are the identity.
struct TransformSpec {
  std::function<Vec3(const Vec3&)> map;
  std::function<Mat3(const Vec3&)> jacobian;
  std::function<bool(const Vec3&)> domain;
};

/// Local spherical frame at azimuth theta, polar angle phi.
struct FrameRotation {
  double theta = 0.0;
  double phi = 0.0;

  /// Columns are the coordinate-basis directions (d/drho, d/dtheta, d/dphi)
  /// without normalization; satisfies J^T J = diag(1, sin^2 phi, 1).
  Mat3 coordinate_matrix() const;

  /// Columns are the orthonormal unit vectors (r_hat, theta_hat, phi_hat).
  Mat3 orthonormal_matrix() const;

  static FrameRotation at_point(const Vec3& x);
};

/// Push-forward of material parameters under J = d(physical)/d(virtual):
/// inv_density' = J inv_density J^T / det J, bulk_modulus' = bulk_modulus det J.
/// Throws on singular J; flags orientation reversal when det J < 0.
MaterialPoint push_forward(const Mat3& jac, const MaterialPoint& material);

/// Central-difference Jacobian of `map` at `x` with step `h`; error O(h^2).
/// Throws if the map produces non-finite values.
Mat3 numeric_jacobian(const std::function<Vec3(const Vec3&)>& map, const Vec3& x, double h);

/// Rotates a tensor diag(d) given in the orthonormal spherical frame into
/// Cartesian components. Throws near the polar axis when the tangential
/// entries differ (the azimuthal direction is undefined there).
Mat3 to_cartesian(const std::array<double, 3>& diag_spherical, const FrameRotation& frame);

}  // namespace cloak
