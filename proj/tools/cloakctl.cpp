#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include <CLI11.hpp>

#include "cloak/facet.hpp"
#include "cloak/mie.hpp"
#include "cloak/scene.hpp"
#include "cloak/transforms.hpp"

namespace {

using namespace cloak;

SceneSpec load_scene(const std::string& scene_file, const std::string& preset_name) {
  if (!scene_file.empty() && !preset_name.empty())
    throw ValidationError("use either --scene or --preset, not both");
  if (!scene_file.empty()) return parse_scene_file(scene_file);
  if (!preset_name.empty()) return preset(preset_name);
  throw ValidationError("one of --scene or --preset is required");
}

std::string default_out(const SceneSpec& s) { return "out/" + s.name; }

TransformSpec scene_transform(const SceneSpec& s) {
  switch (s.transform) {
    case TransformKind::Singular:
      return spherical_cloak_transform({s.R1, s.R2});
    case TransformKind::Kohn:
      return kohn_ball_transform({s.r0, s.R1, s.R2});
    case TransformKind::Carpet:
      return carpet_transform(CarpetSpec::reference_bump());
    case TransformKind::Icosahedron: {
      FacetedCloakSpec f{make_icosahedron(s.edge0), make_icosahedron(s.edge1), make_icosahedron(s.edge2)};
      return faceted_transform(f);
    }
    case TransformKind::Star: {
      FacetedCloakSpec f{make_six_point_star(s.edge0, s.spike_ratio), make_six_point_star(s.edge1, s.spike_ratio),
                         make_six_point_star(s.edge2, s.spike_ratio)};
      return faceted_transform(f);
    }
    case TransformKind::None:
      break;
  }
  throw ValidationError("scene has no transform to inspect");
}

MaterialPoint scene_material_at(const SceneSpec& s, const Vec3& x) {
  switch (s.transform) {
    case TransformKind::Singular:
      return pendry_sphere_material({s.R1, s.R2}, x);
    case TransformKind::Kohn:
      return kohn_ball_material({s.r0, s.R1, s.R2}, x);
    case TransformKind::Carpet:
      return carpet_material(CarpetSpec::reference_bump(), x);
    case TransformKind::Icosahedron: {
      FacetedCloakSpec f{make_icosahedron(s.edge0), make_icosahedron(s.edge1), make_icosahedron(s.edge2)};
      return faceted_material(f, x);
    }
    case TransformKind::Star: {
      FacetedCloakSpec f{make_six_point_star(s.edge0, s.spike_ratio), make_six_point_star(s.edge1, s.spike_ratio),
                         make_six_point_star(s.edge2, s.spike_ratio)};
      return faceted_material(f, x);
    }
    case TransformKind::None:
      break;
  }
  return MaterialPoint::background();
}

int cmd_presets() {
  for (const auto& n : preset_names()) std::cout << n << '\n';
  return 0;
}

int cmd_materials(const SceneSpec& s, const std::string& out_dir, int samples) {
  std::filesystem::create_directories(out_dir);
  std::string path = out_dir + "/materials.csv";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out.precision(9);
  out << "x,y,z,k00,k01,k02,k11,k12,k22,kappa\n";
  // Sample along a tilted ray through the shell (avoids symmetry axes).
  Vec3 dir = normalized({0.6, 0.5, 0.625});
  double r_lo, r_hi;
  if (s.transform == TransformKind::Carpet) {
    r_lo = 0.01;
    r_hi = 0.45;
    dir = {0.0, 0.0, 1.0};
  } else if (s.transform == TransformKind::Icosahedron || s.transform == TransformKind::Star) {
    r_lo = 0.5 * s.edge1;
    r_hi = 1.2 * s.edge2;
  } else {
    r_lo = s.R1 * 1.001;
    r_hi = s.R2 * 0.999;
  }
  for (int i = 0; i < samples; ++i) {
    double r = r_lo + (r_hi - r_lo) * i / (samples - 1.0);
    Vec3 x = r * dir;
    if (s.transform == TransformKind::Carpet) x[0] = 0.3;
    MaterialPoint m = scene_material_at(s, x);
    const Mat3& k = m.inv_density;
    out << x[0] << ',' << x[1] << ',' << x[2] << ',' << k(0, 0) << ',' << k(0, 1) << ',' << k(0, 2) << ','
        << k(1, 1) << ',' << k(1, 2) << ',' << k(2, 2) << ',' << m.bulk_modulus << '\n';
  }
  std::cout << "wrote " << path << '\n';
  return 0;
}

int cmd_layers(const SceneSpec& s, const std::string& out_dir) {
  if (s.layers < 2) throw ValidationError("scene has no layered design (layers < 2)");
  DesignSpec d;
  d.r0 = s.r0;
  d.R1 = s.R1;
  d.R2 = s.R2;
  d.M = s.layers / 2;
  d.gauge = s.gauge;
  LayerStack stack = build_stack(d);
  std::filesystem::create_directories(out_dir);
  export_stack_csv(stack, out_dir + "/stack.csv");
  double rmin = stack.layers.front().rho, rmax = rmin;
  for (const auto& l : stack.layers) {
    rmin = std::min(rmin, l.rho);
    rmax = std::max(rmax, l.rho);
  }
  std::cout.precision(9);
  std::cout << "sublayers: " << stack.layers.size() << '\n';
  std::cout << "rho range: [" << rmin << ", " << rmax << "]\n";
  std::cout << "kappa range: [" << stack.layers.front().kappa << ", " << stack.layers.back().kappa << "]\n";
  if (s.r0 > 0.0) {
    auto [crho, ckappa] = core_equivalent(s.r0, s.R1, s.gauge);
    std::cout << "core equivalent: rho = " << crho << ", kappa = " << ckappa << '\n';
  }
  std::cout << "wrote " << out_dir << "/stack.csv\n";
  return 0;
}

int cmd_validate(const SceneSpec& s) {
  validate_scene(s);
  SceneSpec round = parse_scene(print_scene(s));
  if (!(round == s)) throw std::runtime_error("configuration round-trip mismatch");

  if (s.transform != TransformKind::None) {
    TransformSpec t = scene_transform(s);
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    int checked = 0;
    double worst = 0.0;
    while (checked < 50) {
      Vec3 x{u(rng), u(rng), u(rng)};
      if (s.transform == TransformKind::Carpet) x[2] = 0.5 * (x[2] + 1.0);
      if (!t.domain(x)) continue;
      Mat3 ja;
      try {
        ja = t.jacobian(x);
      } catch (const std::domain_error&) {
        continue;
      }
      Mat3 jn = numeric_jacobian(t.map, x, 1e-6);
      Mat3 jinv = inverse(ja);
      // jacobian is d(physical)/d(virtual); the map differentiates the inverse.
      worst = std::max(worst, frobenius_norm(jn - jinv) / frobenius_norm(jinv));
      MaterialPoint m = push_forward(ja, MaterialPoint::background());
      if (std::abs(det(m.inv_density) * m.bulk_modulus - 1.0) > 1e-8)
        throw std::runtime_error("determinant identity violated by pushed-forward material");
      if (!is_spd(m.inv_density)) throw std::runtime_error("pushed-forward tensor not positive definite");
      ++checked;
    }
    std::cout << "jacobian finite-difference agreement: " << worst << " over " << checked << " points\n";
  }
  std::cout << "scene '" << s.name << "' is valid\n";
  return 0;
}

int cmd_run(SceneSpec s, SolverKind solver, const std::string& out_dir, double tol) {
  s.solver = solver;
  if (tol > 0.0) s.tol = tol;
  validate_scene(s);
  std::string dir = out_dir.empty() ? default_out(s) : out_dir;
  run(s, dir);
  std::cout << "report written to " << dir << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"transformation-acoustics toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string scene_file, preset_name, out_dir;
  int threads = 1, samples = 200;
  double tol = 0.0;
  app.add_option("--scene", scene_file, "scene configuration file");
  app.add_option("--preset", preset_name, "named preset scene");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--threads", threads, "worker threads (reserved)");
  app.add_option("--tol", tol, "iterative solver tolerance override");

  auto* sub_materials = app.add_subcommand("materials", "sample the material tensor field");
  sub_materials->add_option("--samples", samples, "number of sample points");
  auto* sub_layers = app.add_subcommand("layers", "design the layered approximation");
  auto* sub_mie = app.add_subcommand("mie", "partial-wave scattering solve");
  auto* sub_fdfd = app.add_subcommand("fdfd", "finite-difference frequency-domain solve");
  auto* sub_validate = app.add_subcommand("validate", "check a scene and its invariants");
  app.add_subcommand("presets", "list named preset scenes");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("presets")) return cmd_presets();
    cloak::SceneSpec s = load_scene(scene_file, preset_name);
    std::string dir = out_dir.empty() ? default_out(s) : out_dir;
    if (app.got_subcommand(sub_materials)) return cmd_materials(s, dir, samples);
    if (app.got_subcommand(sub_layers)) return cmd_layers(s, dir);
    if (app.got_subcommand(sub_validate)) return cmd_validate(s);
    if (app.got_subcommand(sub_mie)) return cmd_run(s, cloak::SolverKind::Mie, out_dir, tol);
    if (app.got_subcommand(sub_fdfd)) return cmd_run(s, cloak::SolverKind::Fdfd, out_dir, tol);
  } catch (const cloak::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return 2;
  } catch (const cloak::SolverFailure& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
