#include "cloak/transforms.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cloak {

namespace {

/// J for a radial stretch r_phys(r_virt): dr_p/dr_v along r_hat, r_p/r_v tangentially.
Mat3 radial_jacobian(const Vec3& x, double radial_deriv, double tangential_ratio) {
  double r = norm(x);
  Vec3 u = {x[0] / r, x[1] / r, x[2] / r};
  Mat3 proj{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      proj(i, j) = u[static_cast<std::size_t>(i)] * u[static_cast<std::size_t>(j)];
  return radial_deriv * proj + tangential_ratio * (Mat3::identity() - proj);
}

}  // namespace

CarpetSpec CarpetSpec::reference_bump() {
  CarpetSpec s;
  s.z1 = [](double x, double y) { return std::sqrt(std::max(4.0 - x * x - y * y, 0.0)) - 1.802776; };
  s.z2 = [](double x, double y) { return std::sqrt(std::max(1.0 - x * x - y * y, 0.0)) - 0.5; };
  s.grad_z1 = [](double x, double y) -> Vec3 {
    double q = std::sqrt(std::max(4.0 - x * x - y * y, 1e-300));
    return {-x / q, -y / q, 0.0};
  };
  s.grad_z2 = [](double x, double y) -> Vec3 {
    double q = std::sqrt(std::max(1.0 - x * x - y * y, 1e-300));
    return {-x / q, -y / q, 0.0};
  };
  return s;
}

MaterialPoint pendry_sphere_material(const SphericalCloakSpec& spec, const Vec3& x) {
  double r = norm(x);
  if (r > spec.R2) {
    MaterialPoint m;
    m.out_of_domain = true;
    return m;
  }
  if (r <= spec.R1)
    throw std::domain_error("pendry_sphere_material: point inside the cloaked region r <= R1");
  MaterialPoint m;
  double eps = kSingularClampFraction * (spec.R2 - spec.R1);
  if (r < spec.R1 + eps) {
    r = spec.R1 + eps;
    m.singular_clamped = true;
  }
  double alpha = (spec.R2 - spec.R1) / spec.R2;
  double t = r / (r - spec.R1);
  double rho_r = alpha * t * t;
  m.bulk_modulus = alpha * alpha * alpha * t * t;
  m.inv_density = to_cartesian({1.0 / rho_r, 1.0 / alpha, 1.0 / alpha}, FrameRotation::at_point(x));
  return m;
}

MaterialPoint kohn_ball_material(const KohnCloakSpec& spec, const Vec3& x) {
  double r = norm(x);
  if (r > spec.R2) {
    MaterialPoint m;
    m.out_of_domain = true;
    return m;
  }
  MaterialPoint m;
  if (r <= spec.R1) {
    // Core: isotropic image of the small ball, J = (R1/r0) I.
    double s = spec.R1 / spec.r0;
    m.inv_density = Mat3::scaling(1.0 / s);
    m.bulk_modulus = s * s * s;
    return m;
  }
  double alpha = spec.alpha();
  double beta = spec.beta();
  double rv = (r - beta) / alpha;  // virtual radius
  double inv_rho_r = (r - beta) * (r - beta) / (alpha * r * r);
  m.bulk_modulus = alpha * (r / rv) * (r / rv);
  m.inv_density = to_cartesian({inv_rho_r, 1.0 / alpha, 1.0 / alpha}, FrameRotation::at_point(x));
  return m;
}

MaterialPoint carpet_material(const CarpetSpec& spec, const Vec3& x) {
  double z1v = spec.z1(x[0], x[1]);
  double z2v = spec.z2(x[0], x[1]);
  if (z2v <= z1v) {
    if (z2v > 0.0)
      throw std::domain_error("carpet_material: degenerate geometry, z2 <= z1 inside footprint");
    MaterialPoint m;
    m.out_of_domain = true;
    return m;
  }
  if (x[2] < z1v || x[2] > z2v) {
    MaterialPoint m;
    m.out_of_domain = true;
    return m;
  }
  double alpha = (z2v - z1v) / z2v;
  double d = (z2v - z1v) * (z2v - z1v);
  Vec3 g1 = spec.grad_z1(x[0], x[1]);
  Vec3 g2 = spec.grad_z2(x[0], x[1]);
  double zp = x[2];
  double gx = z2v * (zp - z2v) / d * g1[0] - z1v * (zp - z1v) / d * g2[0];
  double gy = z2v * (zp - z2v) / d * g1[1] - z1v * (zp - z1v) / d * g2[1];
  MaterialPoint m;
  Mat3 t{};
  t(0, 0) = t(1, 1) = 1.0 / alpha;
  t(0, 2) = t(2, 0) = -gx;
  t(1, 2) = t(2, 1) = -gy;
  t(2, 2) = (1.0 + gx * gx + gy * gy) * alpha;
  m.inv_density = t;
  m.bulk_modulus = alpha;
  return m;
}

TransformSpec spherical_cloak_transform(const SphericalCloakSpec& spec) {
  TransformSpec t;
  double R1 = spec.R1, R2 = spec.R2;
  double alpha = (R2 - R1) / R2;
  t.domain = [R1, R2](const Vec3& x) {
    double r = norm(x);
    return r > R1 && r <= R2;
  };
  t.map = [=](const Vec3& x) -> Vec3 {
    double r = norm(x);
    if (!(r > R1 && r <= R2)) return x;
    double rv = (r - R1) / alpha;
    return (rv / r) * x;
  };
  t.jacobian = [=](const Vec3& x) -> Mat3 {
    double r = norm(x);
    if (!(r > R1 && r <= R2)) return Mat3::identity();
    double rv = (r - R1) / alpha;
    return radial_jacobian(x, alpha, r / rv);
  };
  return t;
}

TransformSpec kohn_ball_transform(const KohnCloakSpec& spec) {
  TransformSpec t;
  double R1 = spec.R1, R2 = spec.R2;
  double s = spec.R1 / spec.r0;
  double alpha = spec.alpha(), beta = spec.beta();
  t.domain = [R2](const Vec3& x) { return norm(x) <= R2; };
  t.map = [=](const Vec3& x) -> Vec3 {
    double r = norm(x);
    if (r > R2) return x;
    if (r <= R1) return (1.0 / s) * x;
    double rv = (r - beta) / alpha;
    return (rv / r) * x;
  };
  t.jacobian = [=](const Vec3& x) -> Mat3 {
    double r = norm(x);
    if (r > R2) return Mat3::identity();
    if (r <= R1) return Mat3::scaling(s);
    double rv = (r - beta) / alpha;
    return radial_jacobian(x, alpha, r / rv);
  };
  return t;
}

TransformSpec carpet_transform(const CarpetSpec& spec) {
  TransformSpec t;
  auto inside = [spec](const Vec3& x) {
    double a = spec.z1(x[0], x[1]), b = spec.z2(x[0], x[1]);
    return b > a && x[2] >= a && x[2] <= b;
  };
  t.domain = inside;
  t.map = [spec, inside](const Vec3& x) -> Vec3 {
    if (!inside(x)) return x;
    double a = spec.z1(x[0], x[1]), b = spec.z2(x[0], x[1]);
    double alpha = (b - a) / b;
    return {x[0], x[1], (x[2] - a) / alpha};
  };
  t.jacobian = [spec, inside](const Vec3& x) -> Mat3 {
    if (!inside(x)) return Mat3::identity();
    double a = spec.z1(x[0], x[1]), b = spec.z2(x[0], x[1]);
    Vec3 ga = spec.grad_z1(x[0], x[1]);
    Vec3 gb = spec.grad_z2(x[0], x[1]);
    double alpha = (b - a) / b;
    // d alpha = (z1 dz2 - z2 dz1) / z2^2
    double dax = (a * gb[0] - b * ga[0]) / (b * b);
    double day = (a * gb[1] - b * ga[1]) / (b * b);
    double zv = (x[2] - a) / alpha;
    Mat3 j = Mat3::identity();
    j(2, 0) = zv * dax + ga[0];
    j(2, 1) = zv * day + ga[1];
    j(2, 2) = alpha;
    return j;
  };
  return t;
}

}  // namespace cloak
