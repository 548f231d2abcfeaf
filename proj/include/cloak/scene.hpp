#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "cloak/fdfd.hpp"
#include "cloak/layers.hpp"

namespace cloak {

enum class TransformKind { None, Singular, Kohn, Carpet, Icosahedron, Star };
enum class ObstacleKind { None, RigidSphere, Bump };
enum class SolverKind { Mie, Fdfd };

/// Full description of one scenario: geometry, source, solver, outputs.
struct SceneSpec {
  std::string name = "custom";

  TransformKind transform = TransformKind::None;
  double r0 = 0.0;  // virtual ball radius; 0 = singular
  double R1 = 0.0;
  double R2 = 0.0;
  double edge1 = 0.0;  // faceted inner surface edge
  double edge2 = 0.0;  // faceted outer surface edge
  double edge0 = 0.0;  // faceted rigid obstacle edge
  double spike_ratio = 2.0;
  int layers = 0;  // isotropic sublayers across the shell; 0 = continuous
  Gauge gauge = Gauge::Exact;

  ObstacleKind obstacle = ObstacleKind::None;
  double obstacle_radius = 0.0;

  SourceSpec source;

  SolverKind solver = SolverKind::Mie;
  double tol = 1e-6;
  int max_iter = 20000;
  double cells_per_wavelength = 12.0;
  double domain_halfwidth = 0.8;
  int dim = 3;
  int pml_cells = 10;

  bool write_stack = true;
  bool write_coeffs = true;
  bool write_slices = true;
  bool write_vtk = false;

  bool operator==(const SceneSpec&) const = default;
};

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SolverFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Parses the key-value scene format. Unknown sections or keys, malformed
/// values, and inconsistent scenes raise ValidationError with line numbers.
SceneSpec parse_scene(const std::string& text);
SceneSpec parse_scene_file(const std::string& path);

/// Canonical writer; parse_scene(print_scene(s)) == s.
std::string print_scene(const SceneSpec& scene);

/// Consistency checks shared by parse_scene and the presets.
void validate_scene(const SceneSpec& scene);

std::vector<std::string> preset_names();
SceneSpec preset(const std::string& name);

/// Executes the configured pipeline and writes report files into out_dir.
/// Throws ValidationError for bad scenes and SolverFailure when an iterative
/// solve does not converge.
void run(const SceneSpec& scene, const std::string& out_dir);

}  // namespace cloak
