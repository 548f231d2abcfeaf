#pragma once

#include <complex>
#include <string>
#include <vector>

#include "cloak/layers.hpp"

namespace cloak {

using cdouble = std::complex<double>;

/// Spherical Bessel functions j_l, y_l and derivatives for l = 0..l_max.
/// j by downward recurrence (Miller), y by upward recurrence.
struct SphBessel {
  std::vector<double> j, y, jp, yp;
};
SphBessel sph_bessel(int l_max, double x);

/// Partial-wave scattering coefficients against the expansion
///   p_inc = sum (2l+1) i^l j_l(kr) P_l(cos theta),
///   p_sc  = sum (2l+1) i^l s_l h1_l(kr) P_l(cos theta).
struct ModalCoefficients {
  std::vector<cdouble> s;
  double k = 0.0;
};

struct ScatteringResult {
  double sigma_sc = 0.0;
  double sigma_ext = 0.0;
  std::vector<double> far_field;  // |f(theta)| on theta_grid
  std::vector<double> theta_grid;
  ModalCoefficients coefficients;
  bool ill_conditioned = false;
};

/// Wiscombe-style truncation order for size parameter kR.
int default_l_max(double kR);

ModalCoefficients rigid_sphere_coeffs(double ka);

double sigma_sc(const ModalCoefficients& coeffs);
double sigma_ext(const ModalCoefficients& coeffs);

/// Transfer-matrix solution for a plane wave on a radially layered sphere.
/// Propagates [p, rho^-1 dp/dr] outward from the core condition; layer
/// wavenumbers are k_i = k0 sqrt(rho_i / kappa_i) in relative units.
ScatteringResult layered_scatter(const LayerStack& stack, double k0, int l_max_override = -1);

/// Far-field amplitude f(theta); sigma_ext = (4 pi / k) Im f(0).
std::vector<cdouble> far_field(const ModalCoefficients& coeffs, const std::vector<double>& theta_grid);

/// CSV export (l, Re s_l, Im s_l), 9 significant digits.
void export_coeffs_csv(const ModalCoefficients& coeffs, const std::string& path);

}  // namespace cloak
