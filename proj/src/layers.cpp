#include "cloak/layers.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace cloak {

void RadialProfile::check_domain(double r) const {
  if (r < r_inner - 1e-12 || r > r_outer + 1e-12)
    throw std::domain_error("RadialProfile: radius " + std::to_string(r) + " outside [" +
                            std::to_string(r_inner) + ", " + std::to_string(r_outer) + "]");
}

double LayerStack::inner_radius() const {
  if (layers.empty()) {
    if (!(core_radius > 0.0)) throw std::logic_error("LayerStack: empty stack with no core radius");
    return core_radius;
  }
  return layers.front().r_in;
}

double LayerStack::outer_radius() const {
  return layers.empty() ? inner_radius() : layers.back().r_out;
}

void LayerStack::validate() const {
  double prev = 0.0;
  for (const auto& l : layers) {
    if (!(l.r_out > l.r_in)) throw std::invalid_argument("LayerStack: radii not increasing");
    if (prev > 0.0 && std::abs(l.r_in - prev) > 1e-12 * l.r_out)
      throw std::invalid_argument("LayerStack: layers not contiguous");
    if (!(l.rho > 0.0) || !(l.kappa > 0.0) || !std::isfinite(l.rho) || !std::isfinite(l.kappa))
      throw std::invalid_argument("LayerStack: non-positive or non-finite material");
    prev = l.r_out;
  }
}

namespace {

void check_design_radii(double r0, double R1, double R2) {
  if (!(0.0 <= r0 && r0 <= R1 && R1 < R2))
    throw std::invalid_argument("shell profile: need 0 <= r0 <= R1 < R2");
}

void check_range(double r, double lo, double hi) {
  if (r < lo - 1e-12 || r > hi + 1e-12)
    throw std::domain_error("shell profile: radius " + std::to_string(r) + " outside shell");
}

}  // namespace

RadialProfile exact_shell_profile(double r0, double R1, double R2) {
  check_design_radii(r0, R1, R2);
  double alpha = (R2 - R1) / (R2 - r0);
  double beta = R2 * (R1 - r0) / (R2 - r0);
  RadialProfile p;
  p.r_inner = R1;
  p.r_outer = R2;
  p.rho_r = [=](double r) {
    check_range(r, R1, R2);
    double t = r / (r - beta);
    return alpha * t * t;
  };
  p.rho_t = [=](double r) {
    check_range(r, R1, R2);
    return alpha;
  };
  p.kappa = [=](double r) {
    check_range(r, R1, R2);
    double t = r / (r - beta);
    return alpha * alpha * alpha * t * t;
  };
  return p;
}

RadialProfile reduced_shell_profile(double r0, double R1, double R2) {
  check_design_radii(r0, R1, R2);
  if (!(r0 > 0.0)) throw std::invalid_argument("reduced_shell_profile: needs r0 > 0");
  double alpha = (R2 - R1) / (R2 - r0);
  double beta = R2 * (R1 - r0) / (R2 - r0);
  RadialProfile p;
  p.r_inner = R1;
  p.r_outer = R2;
  p.rho_r = [=](double r) {
    check_range(r, R1, R2);
    return 1.0 / alpha;
  };
  p.rho_t = [=](double r) {
    check_range(r, R1, R2);
    double s = (r - beta) / r;
    return s * s / alpha;
  };
  p.kappa = [=](double r) {
    check_range(r, R1, R2);
    return alpha;
  };
  return p;
}

EffectiveTriple effective_from_pair(double rhoA, double rhoB, double kappaA, double kappaB, double eta) {
  if (!(rhoA > 0.0 && rhoB > 0.0 && kappaA > 0.0 && kappaB > 0.0 && eta > 0.0))
    throw std::invalid_argument("effective_from_pair: inputs must be positive");
  EffectiveTriple e;
  e.rho_r = (rhoA + eta * rhoB) / (1.0 + eta);
  e.rho_t = (1.0 + eta) / (1.0 / rhoA + eta / rhoB);
  e.kappa = (kappaA + eta * kappaB) / (1.0 + eta);
  return e;
}

std::pair<double, double> pair_from_effective(double rho_r, double rho_t, double eta) {
  if (!(rho_t > 0.0)) throw std::invalid_argument("pair_from_effective: rho_t must be positive");
  if (rho_t > rho_r)
    throw std::domain_error("pair_from_effective: unrealizable, rho_t > rho_r");
  if (eta != 1.0) throw std::invalid_argument("pair_from_effective: only eta = 1 supported");
  double disc = rho_r * rho_r - rho_r * rho_t;
  double s = std::sqrt(std::max(disc, 0.0));
  return {rho_r - s, rho_r + s};
}

LayerStack build_stack(const DesignSpec& design) {
  check_design_radii(design.r0, design.R1, design.R2);
  if (design.M < 1) throw std::invalid_argument("build_stack: M >= 1 required");
  if (design.N != 2) throw std::invalid_argument("build_stack: two-phase designs need N = 2");
  RadialProfile profile = (design.gauge == Gauge::Reduced)
                              ? reduced_shell_profile(design.r0, design.R1, design.R2)
                              : exact_shell_profile(design.r0, design.R1, design.R2);
  LayerStack stack;
  double dr = (design.R2 - design.R1) / design.M / 2.0;
  for (int i = 0; i < 2 * design.M; ++i) {
    Layer l;
    l.r_in = design.R1 + i * dr;
    l.r_out = design.R1 + (i + 1) * dr;
    double mid = 0.5 * (l.r_in + l.r_out);
    double rr = profile.rho_r(mid);
    double rt = profile.rho_t(mid);
    if (rt > rr)
      throw std::domain_error("build_stack: unrealizable profile (rho_t > rho_r) at r = " + std::to_string(mid));
    auto [a, b] = pair_from_effective(rr, rt);
    l.rho = (i % 2 == 0) ? a : b;  // inner sublayer A, outer sublayer B
    l.kappa = profile.kappa(mid);
    stack.layers.push_back(l);
  }
  stack.validate();
  return stack;
}

std::pair<double, double> core_equivalent(double r0, double R1, Gauge gauge) {
  if (!(0.0 < r0 && r0 <= R1)) throw std::invalid_argument("core_equivalent: need 0 < r0 <= R1");
  double s = R1 / r0;
  if (gauge == Gauge::Exact) return {s, s * s * s};
  return {1.0 / s, s};  // same index n = 1/s, unit impedance
}

void export_stack_csv(const LayerStack& stack, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_stack_csv: cannot open " + path);
  out.precision(9);
  out << "r_in,r_out,rho,kappa\n";
  for (const auto& l : stack.layers)
    out << l.r_in << ',' << l.r_out << ',' << l.rho << ',' << l.kappa << '\n';
}

}  // namespace cloak
