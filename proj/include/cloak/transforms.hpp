#pragma once

#include <functional>

#include "cloak/material.hpp"

namespace cloak {

/// Singular spherical cloak (point blown up to the ball r <= R1).
struct SphericalCloakSpec {
  double R1 = 0.5;
  double R2 = 1.0;
};

/// Non-singular cloak: ball of radius r0 blown up to radius R1.
struct KohnCloakSpec {
  double r0 = 0.15;
  double R1 = 0.2;
  double R2 = 0.4;

  double alpha() const { return (R2 - R1) / (R2 - r0); }
  double beta() const { return R2 * (R1 - r0) / (R2 - r0); }
};

/// Ground-plane carpet between the bump surface z1 and the carpet top z2.
struct CarpetSpec {
  std::function<double(double, double)> z1;       // bump height
  std::function<double(double, double)> z2;       // carpet top surface
  std::function<Vec3(double, double)> grad_z1;    // (dz1/dx, dz1/dy, 0)
  std::function<Vec3(double, double)> grad_z2;

  /// The parabolic bump and carpet surfaces used by the reference scenarios:
  /// z1 = sqrt(4 - x^2 - y^2) - 1.802776, z2 = sqrt(1 - x^2 - y^2) - 1/2.
  static CarpetSpec reference_bump();
};

/// Fraction of the shell thickness used to clamp queries near the singular
/// inner boundary of the spherical cloak.
inline constexpr double kSingularClampFraction = 1e-6;

MaterialPoint pendry_sphere_material(const SphericalCloakSpec& spec, const Vec3& x);
MaterialPoint kohn_ball_material(const KohnCloakSpec& spec, const Vec3& x);
MaterialPoint carpet_material(const CarpetSpec& spec, const Vec3& x);

/// Analytic map/Jacobian/domain bundles for the catalog transforms,
/// used by the finite-difference verification suite.
TransformSpec spherical_cloak_transform(const SphericalCloakSpec& spec);
TransformSpec kohn_ball_transform(const KohnCloakSpec& spec);
TransformSpec carpet_transform(const CarpetSpec& spec);

}  // namespace cloak
