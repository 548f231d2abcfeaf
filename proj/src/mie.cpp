#include "cloak/mie.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace cloak {

SphBessel sph_bessel(int l_max, double x) {
  if (x == 0.0) throw std::domain_error("sph_bessel: x = 0 (use series limits)");
  if (l_max < 0) throw std::invalid_argument("sph_bessel: l_max must be >= 0");
  SphBessel b;
  std::size_t n = static_cast<std::size_t>(l_max) + 1;
  b.j.resize(n);
  b.y.resize(n);
  b.jp.resize(n);
  b.yp.resize(n);

  // Miller's algorithm: run the j recurrence downward from well above both
  // l_max and |x|, then normalize against the closed-form j_0 or j_1.
  int start = std::max(l_max, static_cast<int>(std::ceil(std::abs(x)))) + 20;
  double fp = 0.0, fc = 1e-30;
  std::vector<double> raw(n);
  for (int l = start; l >= 0; --l) {
    double fm = (2.0 * l + 3.0) / x * fc - fp;
    fp = fc;
    fc = fm;
    if (l <= l_max) raw[static_cast<std::size_t>(l)] = fc;
    if (std::abs(fc) > 1e250) {
      fp /= 1e250;
      fc /= 1e250;
      for (auto& v : raw) v /= 1e250;
    }
  }
  double j0 = std::sin(x) / x;
  double j1 = std::sin(x) / (x * x) - std::cos(x) / x;
  double scale;
  if (std::abs(j0) >= std::abs(j1) || l_max == 0)
    scale = j0 / fc;
  else
    scale = j1 / fp;
  for (std::size_t l = 0; l < n; ++l) b.j[l] = raw[l] * scale;

  b.y[0] = -std::cos(x) / x;
  if (l_max >= 1) b.y[1] = -std::cos(x) / (x * x) - std::sin(x) / x;
  for (int l = 1; l < l_max; ++l)
    b.y[static_cast<std::size_t>(l) + 1] =
        (2.0 * l + 1.0) / x * b.y[static_cast<std::size_t>(l)] - b.y[static_cast<std::size_t>(l) - 1];

  b.jp[0] = -((l_max >= 1) ? b.j[1] : j1);
  b.yp[0] = -((l_max >= 1) ? b.y[1] : (-std::cos(x) / (x * x) - std::sin(x) / x));
  for (int l = 1; l <= l_max; ++l) {
    std::size_t u = static_cast<std::size_t>(l);
    b.jp[u] = b.j[u - 1] - (l + 1.0) / x * b.j[u];
    b.yp[u] = b.y[u - 1] - (l + 1.0) / x * b.y[u];
  }
  return b;
}

int default_l_max(double kR) {
  return static_cast<int>(std::ceil(kR + 4.0 * std::cbrt(kR) + 8.0));
}

ModalCoefficients rigid_sphere_coeffs(double ka) {
  if (!(ka > 0.0)) throw std::invalid_argument("rigid_sphere_coeffs: ka must be positive");
  int l_max = default_l_max(ka);
  SphBessel b = sph_bessel(l_max, ka);
  ModalCoefficients c;
  c.k = ka;  // radius-1 normalization
  c.s.resize(static_cast<std::size_t>(l_max) + 1);
  for (int l = 0; l <= l_max; ++l) {
    std::size_t u = static_cast<std::size_t>(l);
    c.s[u] = -b.jp[u] / cdouble(b.jp[u], b.yp[u]);
  }
  return c;
}

double sigma_sc(const ModalCoefficients& c) {
  double s = 0.0;
  for (std::size_t l = 0; l < c.s.size(); ++l) s += (2.0 * l + 1.0) * std::norm(c.s[l]);
  return 4.0 * M_PI / (c.k * c.k) * s;
}

double sigma_ext(const ModalCoefficients& c) {
  double s = 0.0;
  for (std::size_t l = 0; l < c.s.size(); ++l) s += (2.0 * l + 1.0) * c.s[l].real();
  return -4.0 * M_PI / (c.k * c.k) * s;
}

ScatteringResult layered_scatter(const LayerStack& stack, double k0, int l_max_override) {
  if (!(k0 > 0.0)) throw std::invalid_argument("layered_scatter: k0 must be positive");
  stack.validate();
  double r_core = stack.inner_radius();
  double r_outer = stack.outer_radius();
  int l_max = (l_max_override > 0) ? l_max_override : default_l_max(k0 * r_outer);

  ScatteringResult res;
  res.coefficients.k = k0;
  res.coefficients.s.resize(static_cast<std::size_t>(l_max) + 1);

  for (int l = 0; l <= l_max; ++l) {
    // State vector [p, rho^-1 dp/dr] at the current radius.
    double p, v;
    bool growth_hit = false;
    switch (stack.core_bc) {
      case CoreBC::Rigid:
        p = 1.0;
        v = 0.0;
        break;
      case CoreBC::PressureRelease:
        p = 0.0;
        v = 1.0;
        break;
      case CoreBC::Fluid: {
        double kc = k0 * std::sqrt(stack.core_rho / stack.core_kappa);
        SphBessel bc = sph_bessel(l, kc * r_core);
        std::size_t u = static_cast<std::size_t>(l);
        p = bc.j[u];
        v = kc / stack.core_rho * bc.jp[u];
        break;
      }
      default:
        throw std::logic_error("layered_scatter: unknown core condition");
    }

    for (const auto& layer : stack.layers) {
      double kl = k0 * std::sqrt(layer.rho / layer.kappa);
      std::size_t u = static_cast<std::size_t>(l);
      SphBessel bi = sph_bessel(l, kl * layer.r_in);
      SphBessel bo = sph_bessel(l, kl * layer.r_out);
      double c = kl / layer.rho;
      // Solve [p; v] = [[j, y], [c j', c y']] [A; B] at r_in.
      double dt = c * (bi.j[u] * bi.yp[u] - bi.jp[u] * bi.y[u]);
      double A = (p * c * bi.yp[u] - v * bi.y[u]) / dt;
      double B = (v * bi.j[u] - p * c * bi.jp[u]) / dt;
      p = A * bo.j[u] + B * bo.y[u];
      v = c * (A * bo.jp[u] + B * bo.yp[u]);
      // Catastrophic cancellation check: summands large against the result.
      double contrib = std::abs(A) * (std::abs(bo.j[u]) + c * std::abs(bo.jp[u])) +
                       std::abs(B) * (std::abs(bo.y[u]) + c * std::abs(bo.yp[u]));
      if (contrib > 1e12 * (std::abs(p) + std::abs(v))) growth_hit = true;
      double scale = std::max(std::abs(p), std::abs(v));
      if (scale > 0.0) {
        p /= scale;
        v /= scale;
      }
    }

    // Match to j + s h at the outer rim (background medium).
    SphBessel bb = sph_bessel(l, k0 * r_outer);
    std::size_t u = static_cast<std::size_t>(l);
    cdouble h(bb.j[u], bb.y[u]), hp(bb.jp[u], bb.yp[u]);
    res.coefficients.s[u] = (v * bb.j[u] - p * k0 * bb.jp[u]) / (p * k0 * hp - v * h);
    // Large intermediate growth only matters when the mode actually radiates;
    // evanescent high-l states always blow up through the stack but carry no power.
    if (growth_hit && std::abs(res.coefficients.s[u]) > 1e-10) res.ill_conditioned = true;
  }

  res.sigma_sc = sigma_sc(res.coefficients);
  res.sigma_ext = sigma_ext(res.coefficients);
  res.theta_grid.resize(181);
  for (std::size_t i = 0; i < res.theta_grid.size(); ++i) res.theta_grid[i] = M_PI * i / 180.0;
  auto f = far_field(res.coefficients, res.theta_grid);
  res.far_field.resize(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) res.far_field[i] = std::abs(f[i]);
  return res;
}

std::vector<cdouble> far_field(const ModalCoefficients& coeffs, const std::vector<double>& theta_grid) {
  std::vector<cdouble> out(theta_grid.size());
  for (std::size_t t = 0; t < theta_grid.size(); ++t) {
    double mu = std::cos(theta_grid[t]);
    double pm1 = 0.0, pl = 1.0;  // P_{l-1}, P_l
    cdouble acc = 0.0;
    for (std::size_t l = 0; l < coeffs.s.size(); ++l) {
      acc += (2.0 * l + 1.0) * coeffs.s[l] * pl;
      double pn = ((2.0 * l + 1.0) * mu * pl - l * pm1) / (l + 1.0);
      pm1 = pl;
      pl = pn;
    }
    out[t] = cdouble(0.0, -1.0) / coeffs.k * acc;
  }
  return out;
}

void export_coeffs_csv(const ModalCoefficients& coeffs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_coeffs_csv: cannot open " + path);
  out.precision(9);
  out << "l,re_s,im_s\n";
  for (std::size_t l = 0; l < coeffs.s.size(); ++l)
    out << l << ',' << coeffs.s[l].real() << ',' << coeffs.s[l].imag() << '\n';
}

}  // namespace cloak
