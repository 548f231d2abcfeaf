#include "cloak/material.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cloak {

Mat3 FrameRotation::coordinate_matrix() const {
  double ct = std::cos(theta), st = std::sin(theta);
  double cp = std::cos(phi), sp = std::sin(phi);
  Mat3 j;
  j(0, 0) = ct * sp;
  j(0, 1) = -st * sp;
  j(0, 2) = ct * cp;
  j(1, 0) = st * sp;
  j(1, 1) = ct * sp;
  j(1, 2) = st * cp;
  j(2, 0) = cp;
  j(2, 1) = 0.0;
  j(2, 2) = -sp;
  return j;
}

Mat3 FrameRotation::orthonormal_matrix() const {
  double ct = std::cos(theta), st = std::sin(theta);
  double cp = std::cos(phi), sp = std::sin(phi);
  Mat3 q;
  // columns: r_hat, theta_hat, phi_hat
  q(0, 0) = ct * sp;
  q(0, 1) = -st;
  q(0, 2) = ct * cp;
  q(1, 0) = st * sp;
  q(1, 1) = ct;
  q(1, 2) = st * cp;
  q(2, 0) = cp;
  q(2, 1) = 0.0;
  q(2, 2) = -sp;
  return q;
}

FrameRotation FrameRotation::at_point(const Vec3& x) {
  double r = norm(x);
  FrameRotation f;
  f.theta = std::atan2(x[1], x[0]);
  f.phi = (r > 0.0) ? std::acos(std::clamp(x[2] / r, -1.0, 1.0)) : 0.0;
  return f;
}

MaterialPoint push_forward(const Mat3& jac, const MaterialPoint& material) {
  double d = det(jac);
  if (d == 0.0 || !std::isfinite(d))
    throw std::domain_error("push_forward: singular Jacobian (det = " + std::to_string(d) + ")");
  MaterialPoint out = material;
  Mat3 s = (1.0 / d) * (jac * material.inv_density * transpose(jac));
  if (asymmetry(s) > 1e-12 * (1.0 + frobenius_norm(s)))
    throw std::runtime_error("push_forward: asymmetric residual exceeds tolerance");
  out.inv_density = symmetrize(s);
  out.bulk_modulus = material.bulk_modulus * d;
  out.orientation_reversed = material.orientation_reversed || (d < 0.0);
  return out;
}

Mat3 numeric_jacobian(const std::function<Vec3(const Vec3&)>& map, const Vec3& x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("numeric_jacobian: step must be positive");
  Mat3 j;
  for (int c = 0; c < 3; ++c) {
    Vec3 xp = x, xm = x;
    xp[static_cast<std::size_t>(c)] += h;
    xm[static_cast<std::size_t>(c)] -= h;
    Vec3 fp = map(xp), fm = map(xm);
    for (int r = 0; r < 3; ++r) {
      double v = (fp[static_cast<std::size_t>(r)] - fm[static_cast<std::size_t>(r)]) / (2.0 * h);
      if (!std::isfinite(v)) throw std::runtime_error("numeric_jacobian: non-finite map output");
      j(r, c) = v;
    }
  }
  return j;
}

Mat3 to_cartesian(const std::array<double, 3>& d, const FrameRotation& frame) {
  double sp = std::sin(frame.phi);
  if (std::abs(sp) < 1e-12 && std::abs(d[1] - d[2]) > 1e-12 * (std::abs(d[1]) + std::abs(d[2])))
    throw std::domain_error("to_cartesian: degenerate frame on the polar axis with anisotropic tangential entries");
  Mat3 q = frame.orthonormal_matrix();
  return symmetrize(q * Mat3::diagonal(d[0], d[1], d[2]) * transpose(q));
}

}  // namespace cloak
