#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace cloak {

/// Radially symmetric anisotropic shell material as functions of r on [R1, R2].
struct RadialProfile {
  std::function<double(double)> rho_r;
  std::function<double(double)> rho_t;
  std::function<double(double)> kappa;
  double r_inner = 0.0;
  double r_outer = 0.0;

  void check_domain(double r) const;
};

enum class CoreBC { Rigid, PressureRelease, Fluid };

struct Layer {
  double r_in = 0.0;
  double r_out = 0.0;
  double rho = 1.0;
  double kappa = 1.0;
};

/// Ordered outward list of concentric isotropic shells plus the core condition.
struct LayerStack {
  std::vector<Layer> layers;
  CoreBC core_bc = CoreBC::Rigid;
  double core_rho = 1.0;     // fluid core only
  double core_kappa = 1.0;   // fluid core only
  double core_radius = 0.0;  // only consulted when layers is empty

  double inner_radius() const;
  double outer_radius() const;
  void validate() const;
};

enum class Gauge { Exact, Reduced };

struct DesignSpec {
  double r0 = 0.0;
  double R1 = 0.0;
  double R2 = 0.0;
  int M = 10;      // anisotropic sub-shells
  int N = 2;       // isotropic sublayers per sub-shell
  double eta = 1.0;
  Gauge gauge = Gauge::Reduced;
};

/// Ideal shell profile of the r0-ball blowup; r0 = 0 gives the singular cloak.
RadialProfile exact_shell_profile(double r0, double R1, double R2);

/// Index-preserving rescaling with constant rho_r = 1/alpha and kappa = alpha.
RadialProfile reduced_shell_profile(double r0, double R1, double R2);

/// Effective (rho_r, rho_t, kappa) of an A/B bilayer with thickness ratio eta:
/// arithmetic mean across layers, harmonic mean along them.
struct EffectiveTriple {
  double rho_r, rho_t, kappa;
};
EffectiveTriple effective_from_pair(double rhoA, double rhoB, double kappaA, double kappaB, double eta);

/// Two-phase densities realizing (rho_r, rho_t) at eta = 1; rhoA <= rhoB.
/// Throws when rho_t > rho_r (negative discriminant).
std::pair<double, double> pair_from_effective(double rho_r, double rho_t, double eta = 1.0);

/// Splits [R1, R2] into M sub-shells of N=2 isotropic sublayers each, sampling
/// the profile at every sublayer's own midpoint radius.
LayerStack build_stack(const DesignSpec& design);

/// Isotropic core parameters equivalent to the blown-up r0-ball.
std::pair<double, double> core_equivalent(double r0, double R1, Gauge gauge);

/// CSV export (r_in, r_out, rho, kappa), 9 significant digits.
void export_stack_csv(const LayerStack& stack, const std::string& path);

}  // namespace cloak
