#include "cloak/scene.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "cloak/facet.hpp"
#include "cloak/mie.hpp"
#include "cloak/transforms.hpp"

namespace cloak {

namespace {

[[noreturn]] void fail(int line, const std::string& msg) {
  throw ValidationError("line " + std::to_string(line) + ": " + msg);
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& v, int line) {
  std::size_t pos = 0;
  double x;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    fail(line, "expected a number, got '" + v + "'");
  }
  if (pos != v.size()) fail(line, "trailing characters after number '" + v + "'");
  return x;
}

int parse_int(const std::string& v, int line) {
  double x = parse_double(v, line);
  if (x != std::floor(x)) fail(line, "expected an integer, got '" + v + "'");
  return static_cast<int>(x);
}

bool parse_bool(const std::string& v, int line) {
  if (v == "true") return true;
  if (v == "false") return false;
  fail(line, "expected true or false, got '" + v + "'");
}

Vec3 parse_vec3(const std::string& v, int line) {
  std::istringstream in(v);
  Vec3 out{};
  if (!(in >> out[0] >> out[1] >> out[2])) fail(line, "expected three numbers, got '" + v + "'");
  std::string rest;
  if (in >> rest) fail(line, "trailing characters after vector '" + v + "'");
  return out;
}

std::string fmt(double x) {
  std::ostringstream out;
  out.precision(17);
  out << x;
  return out.str();
}

std::string fmt(const Vec3& v) { return fmt(v[0]) + " " + fmt(v[1]) + " " + fmt(v[2]); }

const char* to_string(TransformKind k) {
  switch (k) {
    case TransformKind::None: return "none";
    case TransformKind::Singular: return "singular";
    case TransformKind::Kohn: return "kohn";
    case TransformKind::Carpet: return "carpet";
    case TransformKind::Icosahedron: return "icosahedron";
    case TransformKind::Star: return "star";
  }
  return "?";
}

const char* to_string(ObstacleKind k) {
  switch (k) {
    case ObstacleKind::None: return "none";
    case ObstacleKind::RigidSphere: return "rigid-sphere";
    case ObstacleKind::Bump: return "bump";
  }
  return "?";
}

const char* to_string(SolverKind k) { return k == SolverKind::Mie ? "mie" : "fdfd"; }
const char* to_string(Gauge g) { return g == Gauge::Exact ? "exact" : "reduced"; }
const char* to_string(SourceSpec::Kind k) { return k == SourceSpec::Kind::PlaneWave ? "plane" : "point"; }

}  // namespace

SceneSpec parse_scene(const std::string& text) {
  SceneSpec s;
  std::istringstream in(text);
  std::string raw, section;
  int line = 0;
  bool saw_transform_kind = false, saw_solver_kind = false, saw_wavelength = false;
  int transform_section_line = 0;

  while (std::getline(in, raw)) {
    ++line;
    std::string l = raw;
    auto hash = l.find('#');
    if (hash != std::string::npos) l = l.substr(0, hash);
    l = trim(l);
    if (l.empty()) continue;
    if (l.front() == '[') {
      if (l.back() != ']') fail(line, "unterminated section header");
      section = l.substr(1, l.size() - 2);
      if (section != "transform" && section != "obstacle" && section != "source" && section != "solver" &&
          section != "output")
        fail(line, "unknown section [" + section + "]");
      if (section == "transform") transform_section_line = line;
      continue;
    }
    auto eq = l.find('=');
    if (eq == std::string::npos) fail(line, "expected key = value");
    std::string key = trim(l.substr(0, eq));
    std::string val = trim(l.substr(eq + 1));
    if (val.empty()) fail(line, "empty value for key '" + key + "'");

    if (section.empty()) {
      if (key == "name")
        s.name = val;
      else
        fail(line, "unknown top-level key '" + key + "'");
    } else if (section == "transform") {
      if (key == "kind") {
        saw_transform_kind = true;
        if (val == "none") s.transform = TransformKind::None;
        else if (val == "singular") s.transform = TransformKind::Singular;
        else if (val == "kohn") s.transform = TransformKind::Kohn;
        else if (val == "carpet") s.transform = TransformKind::Carpet;
        else if (val == "icosahedron") s.transform = TransformKind::Icosahedron;
        else if (val == "star") s.transform = TransformKind::Star;
        else fail(line, "unknown transform kind '" + val + "'");
      } else if (key == "r0_m") s.r0 = parse_double(val, line);
      else if (key == "r1_m") s.R1 = parse_double(val, line);
      else if (key == "r2_m") s.R2 = parse_double(val, line);
      else if (key == "edge0_m") s.edge0 = parse_double(val, line);
      else if (key == "edge1_m") s.edge1 = parse_double(val, line);
      else if (key == "edge2_m") s.edge2 = parse_double(val, line);
      else if (key == "spike_ratio") s.spike_ratio = parse_double(val, line);
      else if (key == "layers") s.layers = parse_int(val, line);
      else if (key == "gauge") {
        if (val == "exact") s.gauge = Gauge::Exact;
        else if (val == "reduced") s.gauge = Gauge::Reduced;
        else fail(line, "unknown gauge '" + val + "'");
      } else fail(line, "unknown key '" + key + "' in [transform]");
    } else if (section == "obstacle") {
      if (key == "kind") {
        if (val == "none") s.obstacle = ObstacleKind::None;
        else if (val == "rigid-sphere") s.obstacle = ObstacleKind::RigidSphere;
        else if (val == "bump") s.obstacle = ObstacleKind::Bump;
        else fail(line, "unknown obstacle kind '" + val + "'");
      } else if (key == "radius_m") s.obstacle_radius = parse_double(val, line);
      else fail(line, "unknown key '" + key + "' in [obstacle]");
    } else if (section == "source") {
      if (key == "kind") {
        if (val == "plane") s.source.kind = SourceSpec::Kind::PlaneWave;
        else if (val == "point") s.source.kind = SourceSpec::Kind::Point;
        else fail(line, "unknown source kind '" + val + "'");
      } else if (key == "wavelength_m") {
        s.source.wavelength = parse_double(val, line);
        saw_wavelength = true;
      } else if (key == "direction") s.source.direction = parse_vec3(val, line);
      else if (key == "position_m") s.source.position = parse_vec3(val, line);
      else if (key == "amplitude") {
        std::istringstream av(val);
        double re, im;
        if (!(av >> re >> im)) fail(line, "amplitude needs 're im', got '" + val + "'");
        s.source.amplitude = cdouble(re, im);
      } else if (key == "mirror_ground") s.source.mirror_ground = parse_bool(val, line);
      else if (key == "ground_z_m") s.source.ground_z = parse_double(val, line);
      else fail(line, "unknown key '" + key + "' in [source]");
    } else if (section == "solver") {
      if (key == "kind") {
        saw_solver_kind = true;
        if (val == "mie") s.solver = SolverKind::Mie;
        else if (val == "fdfd") s.solver = SolverKind::Fdfd;
        else fail(line, "unknown solver kind '" + val + "'");
      } else if (key == "tol") s.tol = parse_double(val, line);
      else if (key == "max_iter") s.max_iter = parse_int(val, line);
      else if (key == "cells_per_wavelength") s.cells_per_wavelength = parse_double(val, line);
      else if (key == "domain_halfwidth_m") s.domain_halfwidth = parse_double(val, line);
      else if (key == "dim") s.dim = parse_int(val, line);
      else if (key == "pml_cells") s.pml_cells = parse_int(val, line);
      else fail(line, "unknown key '" + key + "' in [solver]");
    } else {  // output
      if (key == "stack") s.write_stack = parse_bool(val, line);
      else if (key == "coeffs") s.write_coeffs = parse_bool(val, line);
      else if (key == "slices") s.write_slices = parse_bool(val, line);
      else if (key == "vtk") s.write_vtk = parse_bool(val, line);
      else fail(line, "unknown key '" + key + "' in [output]");
    }
  }

  if (!saw_transform_kind)
    fail(transform_section_line, "[transform] requires 'kind' (and the shape keys r0_m/r1_m/r2_m or edge*_m)");
  if (!saw_wavelength) fail(line, "[source] requires 'wavelength_m'");
  if (!saw_solver_kind) fail(line, "[solver] requires 'kind'");
  validate_scene(s);
  return s;
}

SceneSpec parse_scene_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open scene file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scene(buf.str());
}

std::string print_scene(const SceneSpec& s) {
  std::ostringstream o;
  o << "name = " << s.name << "\n\n";
  o << "[transform]\n";
  o << "kind = " << to_string(s.transform) << '\n';
  o << "r0_m = " << fmt(s.r0) << '\n';
  o << "r1_m = " << fmt(s.R1) << '\n';
  o << "r2_m = " << fmt(s.R2) << '\n';
  o << "edge0_m = " << fmt(s.edge0) << '\n';
  o << "edge1_m = " << fmt(s.edge1) << '\n';
  o << "edge2_m = " << fmt(s.edge2) << '\n';
  o << "spike_ratio = " << fmt(s.spike_ratio) << '\n';
  o << "layers = " << s.layers << '\n';
  o << "gauge = " << to_string(s.gauge) << "\n\n";
  o << "[obstacle]\n";
  o << "kind = " << to_string(s.obstacle) << '\n';
  o << "radius_m = " << fmt(s.obstacle_radius) << "\n\n";
  o << "[source]\n";
  o << "kind = " << to_string(s.source.kind) << '\n';
  o << "wavelength_m = " << fmt(s.source.wavelength) << '\n';
  o << "direction = " << fmt(s.source.direction) << '\n';
  o << "position_m = " << fmt(s.source.position) << '\n';
  o << "amplitude = " << fmt(s.source.amplitude.real()) << ' ' << fmt(s.source.amplitude.imag()) << '\n';
  o << "mirror_ground = " << (s.source.mirror_ground ? "true" : "false") << '\n';
  o << "ground_z_m = " << fmt(s.source.ground_z) << "\n\n";
  o << "[solver]\n";
  o << "kind = " << to_string(s.solver) << '\n';
  o << "tol = " << fmt(s.tol) << '\n';
  o << "max_iter = " << s.max_iter << '\n';
  o << "cells_per_wavelength = " << fmt(s.cells_per_wavelength) << '\n';
  o << "domain_halfwidth_m = " << fmt(s.domain_halfwidth) << '\n';
  o << "dim = " << s.dim << '\n';
  o << "pml_cells = " << s.pml_cells << "\n\n";
  o << "[output]\n";
  o << "stack = " << (s.write_stack ? "true" : "false") << '\n';
  o << "coeffs = " << (s.write_coeffs ? "true" : "false") << '\n';
  o << "slices = " << (s.write_slices ? "true" : "false") << '\n';
  o << "vtk = " << (s.write_vtk ? "true" : "false") << '\n';
  return o.str();
}

void validate_scene(const SceneSpec& s) {
  auto require = [](bool cond, const std::string& msg) {
    if (!cond) throw ValidationError(msg);
  };
  require(s.source.wavelength > 0.0, "wavelength_m must be positive");
  require(s.dim == 2 || s.dim == 3, "dim must be 2 or 3");
  require(s.tol > 0.0, "tol must be positive");
  require(s.cells_per_wavelength >= 4.0, "cells_per_wavelength must be >= 4");
  require(s.domain_halfwidth > 0.0, "domain_halfwidth_m must be positive");
  require(s.layers >= 0 && s.layers % 2 == 0, "layers must be even (two sublayers per shell)");

  switch (s.transform) {
    case TransformKind::None:
      break;
    case TransformKind::Singular:
      require(0.0 < s.R1 && s.R1 < s.R2, "singular cloak needs 0 < r1_m < r2_m");
      require(s.r0 == 0.0, "singular cloak has r0_m = 0 (use kind = kohn otherwise)");
      break;
    case TransformKind::Kohn:
      require(0.0 < s.r0 && s.r0 <= s.R1 && s.R1 < s.R2, "kohn cloak needs 0 < r0_m <= r1_m < r2_m");
      break;
    case TransformKind::Carpet:
      require(s.solver == SolverKind::Fdfd, "solver mie requires a radially symmetric scene (carpet is not)");
      require(s.dim == 2, "carpet scenes run on a 2D grid");
      break;
    case TransformKind::Icosahedron:
    case TransformKind::Star:
      require(s.solver == SolverKind::Fdfd, "solver mie requires a radially symmetric scene (faceted is not)");
      require(0.0 < s.edge0 && s.edge0 < s.edge1 && s.edge1 < s.edge2,
              "faceted cloak needs 0 < edge0_m < edge1_m < edge2_m");
      require(s.dim == 3, "faceted scenes run on a 3D grid");
      break;
  }

  if (s.obstacle == ObstacleKind::RigidSphere) {
    require(s.obstacle_radius > 0.0, "rigid-sphere obstacle needs radius_m > 0");
    if (s.transform == TransformKind::Singular || s.transform == TransformKind::Kohn)
      require(s.obstacle_radius <= s.R1 + 1e-12, "obstacle must fit inside the cloak (radius_m <= r1_m)");
  }
  if (s.obstacle == ObstacleKind::Bump)
    require(s.solver == SolverKind::Fdfd && s.dim == 2,
            "bump obstacles are ground-plane scenes and need the 2D fdfd solver");

  if (s.solver == SolverKind::Mie) {
    require(s.transform == TransformKind::None || s.transform == TransformKind::Singular ||
                s.transform == TransformKind::Kohn,
            "solver mie requires a radially symmetric scene");
    require(s.obstacle != ObstacleKind::Bump, "solver mie requires a radially symmetric scene");
    require(s.source.kind == SourceSpec::Kind::PlaneWave && !s.source.mirror_ground,
            "solver mie supports plane-wave sources only");
    if (s.transform == TransformKind::None)
      require(s.obstacle == ObstacleKind::RigidSphere, "mie with no transform needs a rigid-sphere obstacle");
    else
      require(s.layers >= 2, "mie needs a layered shell (layers >= 2)");
  }
}

std::vector<std::string> preset_names() {
  return {"fig1-singular",    "fig2-kohn-005",    "fig2-kohn-020", "fig2-kohn-045", "fig3-carpet",
          "fig4-mimetic-005", "fig4-mimetic-015", "fig6-kohn-core", "fig7-icosahedron", "fig7-star"};
}

SceneSpec preset(const std::string& name) {
  SceneSpec s;
  s.name = name;
  if (name == "fig1-singular") {
    s.transform = TransformKind::Singular;
    s.R1 = 0.5;
    s.R2 = 1.0;
    s.layers = 400;
    s.gauge = Gauge::Exact;
    s.obstacle = ObstacleKind::RigidSphere;
    s.obstacle_radius = 0.5;
    s.source.wavelength = 0.3;
    s.source.direction = {1.0, 0.0, 0.0};
    s.solver = SolverKind::Mie;
  } else if (name == "fig2-kohn-005" || name == "fig2-kohn-020" || name == "fig2-kohn-045") {
    s.transform = TransformKind::Kohn;
    s.r0 = (name == "fig2-kohn-005") ? 0.05 : (name == "fig2-kohn-020") ? 0.2 : 0.45;
    s.R1 = 0.5;
    s.R2 = 1.0;
    s.layers = 400;
    s.gauge = Gauge::Exact;
    s.source.wavelength = 0.45;
    s.solver = SolverKind::Mie;
  } else if (name == "fig3-carpet") {
    s.transform = TransformKind::Carpet;
    s.obstacle = ObstacleKind::Bump;
    s.source.wavelength = 0.3;
    s.source.direction = {0.0, 0.0, -1.0};
    s.source.mirror_ground = true;
    s.solver = SolverKind::Fdfd;
    s.dim = 2;
    s.domain_halfwidth = 0.9;
    s.cells_per_wavelength = 12.0;
  } else if (name == "fig4-mimetic-005" || name == "fig4-mimetic-015") {
    s.transform = TransformKind::Kohn;
    s.r0 = (name == "fig4-mimetic-005") ? 0.05 : 0.15;
    s.R1 = 0.2;
    s.R2 = 0.4;
    s.layers = 20;
    s.gauge = Gauge::Reduced;
    s.obstacle = ObstacleKind::RigidSphere;
    s.obstacle_radius = 0.2;
    s.source.wavelength = 0.25;
    s.source.direction = {1.0, 0.0, 0.0};
    s.solver = SolverKind::Mie;
  } else if (name == "fig6-kohn-core") {
    s.transform = TransformKind::Kohn;
    s.r0 = 0.15;
    s.R1 = 0.2;
    s.R2 = 0.4;
    s.layers = 20;
    s.gauge = Gauge::Reduced;
    s.source.wavelength = 0.25;
    s.source.direction = {1.0, 0.0, 0.0};
    s.solver = SolverKind::Mie;
  } else if (name == "fig7-icosahedron" || name == "fig7-star") {
    s.transform = (name == "fig7-icosahedron") ? TransformKind::Icosahedron : TransformKind::Star;
    if (s.transform == TransformKind::Icosahedron) {
      s.edge0 = 0.1;
      s.edge1 = 0.2;
      s.edge2 = 0.4;
    } else {
      s.edge0 = 0.06;
      s.edge1 = 0.12;
      s.edge2 = 0.45;
    }
    s.source.kind = SourceSpec::Kind::Point;
    s.source.wavelength = 0.3;
    s.source.position = {0.55, 0.0, 0.0};
    s.solver = SolverKind::Fdfd;
    s.dim = 3;
    s.domain_halfwidth = 0.85;
    s.cells_per_wavelength = 12.0;
  } else {
    throw ValidationError("unknown preset '" + name + "'");
  }
  validate_scene(s);
  return s;
}

namespace {

namespace fs = std::filesystem;


int pml_cell_count(const SceneSpec& s, double h) {
  // Keep the absorber about half a wavelength thick regardless of resolution.
  return std::max(s.pml_cells, static_cast<int>(std::lround(0.5 * s.source.wavelength / h)));
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot open " + p.string());
  out.precision(9);
  return out;
}

LayerStack scene_stack(const SceneSpec& s) {
  LayerStack stack;
  if (s.transform == TransformKind::None) {
    stack.core_radius = s.obstacle_radius;
    stack.core_bc = CoreBC::Rigid;
    return stack;
  }
  DesignSpec d;
  d.r0 = s.r0;
  d.R1 = s.R1;
  d.R2 = s.R2;
  d.M = s.layers / 2;
  d.gauge = s.gauge;
  stack = build_stack(d);
  if (s.obstacle == ObstacleKind::RigidSphere || s.r0 == 0.0) {
    stack.core_bc = CoreBC::Rigid;
  } else {
    auto [rho, kappa] = core_equivalent(s.r0, s.R1, s.gauge);
    stack.core_bc = CoreBC::Fluid;
    stack.core_rho = rho;
    stack.core_kappa = kappa;
  }
  return stack;
}

void run_mie(const SceneSpec& s, const fs::path& dir) {
  double k0 = s.source.k0();
  LayerStack stack = scene_stack(s);
  ScatteringResult res = layered_scatter(stack, k0);

  auto out = open_out(dir / "summary.txt");
  out << "scene = " << s.name << '\n';
  out << "solver = mie\n";
  out << "sigma_sc_m2 = " << res.sigma_sc << '\n';
  out << "sigma_ext_m2 = " << res.sigma_ext << '\n';
  out << "ill_conditioned = " << (res.ill_conditioned ? "true" : "false") << '\n';
  if (!stack.layers.empty()) {
    double rmin = stack.layers.front().rho, rmax = rmin;
    double kmin = stack.layers.front().kappa, kmax = kmin;
    for (const auto& l : stack.layers) {
      rmin = std::min(rmin, l.rho);
      rmax = std::max(rmax, l.rho);
      kmin = std::min(kmin, l.kappa);
      kmax = std::max(kmax, l.kappa);
    }
    out << "rho_min = " << rmin << '\n';
    out << "rho_max = " << rmax << '\n';
    out << "kappa_min = " << kmin << '\n';
    out << "kappa_max = " << kmax << '\n';
  }
  if (stack.core_bc == CoreBC::Fluid) {
    out << "core_rho = " << stack.core_rho << '\n';
    out << "core_kappa = " << stack.core_kappa << '\n';
  }
  if (s.r0 > 0.0) {
    ModalCoefficients bare = rigid_sphere_coeffs(k0 * s.r0);
    double sigma_bare = sigma_sc(bare) * s.r0 * s.r0;  // radius-1 normalization
    out << "sigma_sc_rigid_r0_m2 = " << sigma_bare << '\n';
    out << "mimetism_ratio = " << res.sigma_sc / sigma_bare << '\n';
  }
  if (s.write_stack && !stack.layers.empty()) export_stack_csv(stack, (dir / "stack.csv").string());
  if (s.write_coeffs) export_coeffs_csv(res.coefficients, (dir / "coeffs.csv").string());
}

MaterialField radial_field(const SceneSpec& s) {
  switch (s.transform) {
    case TransformKind::Singular: {
      SphericalCloakSpec c{s.R1, s.R2};
      return [c](const Vec3& x) { return pendry_sphere_material(c, x); };
    }
    case TransformKind::Kohn: {
      KohnCloakSpec c{s.r0, s.R1, s.R2};
      return [c](const Vec3& x) { return kohn_ball_material(c, x); };
    }
    default:
      return [](const Vec3&) { return MaterialPoint::background(); };
  }
}

void write_field_outputs(const SceneSpec& s, const FieldSolution& sol, const fs::path& dir,
                         const std::string& tag) {
  if (s.write_slices) {
    if (sol.grid.dim == 2) {
      export_slice_csv(sol, 1, 0, (dir / (tag + "_xz.csv")).string());
    } else {
      export_slice_csv(sol, 1, sol.grid.n[1] / 2, (dir / (tag + "_xz.csv")).string());
      export_slice_csv(sol, 2, sol.grid.n[2] / 2, (dir / (tag + "_xy.csv")).string());
    }
  }
  if (s.write_vtk) export_vtk(sol, (dir / (tag + ".vtk")).string());
}

void check_converged(const FieldSolution& sol) {
  if (!sol.converged)
    throw SolverFailure("fdfd solve stalled at relative residual " + std::to_string(sol.residual) + " after " +
                        std::to_string(sol.iterations) + " iterations");
}

void run_ground(const SceneSpec& s, const fs::path& dir) {
  double k0 = s.source.k0();
  double h = s.source.wavelength / s.cells_per_wavelength;
  double hw = s.domain_halfwidth;
  GridSpec grid = GridSpec::make2d(-hw, hw, 0.0, 2.0 * hw, h);
  PmlSpec pml;
  pml.cells = pml_cell_count(s, h);
  pml.side = {{{true, true}, {false, false}, {false, true}}};

  CarpetSpec carpet = CarpetSpec::reference_bump();
  ObstacleGeometry bump{[carpet](const Vec3& x) { return x[2] < carpet.z1(x[0], 0.0); }};

  MaterialField mat;
  if (s.transform == TransformKind::Carpet)
    mat = [carpet](const Vec3& x) { return carpet_material(carpet, x); };
  else
    mat = [](const Vec3&) { return MaterialPoint::background(); };
  MaterialField bg = [](const Vec3&) { return MaterialPoint::background(); };

  HelmholtzOperator op(grid, mat, pml, k0, RigidMask::none(), bump);
  HelmholtzOperator op_bg(grid, bg, pml, k0);
  SolveOptions opts{s.tol, s.max_iter, 60};
  FieldSolution sol = scattered_field_solve(op, op_bg, s.source, opts);
  check_converged(sol);
  FieldSolution total = sol;
  add_incident(total, s.source, op.mask());

  // Mismatch against the flat-ground field over the far zone above the carpet.
  FieldSolution flat = total;
  for (int k = 0; k < grid.n[2]; ++k)
    for (int j = 0; j < grid.n[1]; ++j)
      for (int i = 0; i < grid.n[0]; ++i)
        flat.p[grid.index(i, j, k)] = incident_field(s.source, grid.center(i, j, k), grid.dim);
  double margin = (pml_cell_count(s, h) + 2) * h;
  double gamma = mismatch_metric(total, flat, [&](const Vec3& x) {
    return x[2] > 0.6 && x[2] < 2.0 * hw - margin && std::abs(x[0]) < hw - margin;
  });

  auto out = open_out(dir / "summary.txt");
  out << "scene = " << s.name << '\n';
  out << "solver = fdfd\n";
  out << "gamma_flat_mismatch = " << gamma << '\n';
  out << "residual = " << sol.residual << '\n';
  out << "iterations = " << sol.iterations << '\n';
  write_field_outputs(s, total, dir, "field");
}

void run_faceted(const SceneSpec& s, const fs::path& dir) {
  double k0 = s.source.k0();
  double h = s.source.wavelength / s.cells_per_wavelength;
  double hw = s.domain_halfwidth;
  GridSpec grid = GridSpec::make3d(-hw, hw, -hw, hw, -hw, hw, h);
  PmlSpec pml;
  pml.cells = pml_cell_count(s, h);

  FacetedCloakSpec spec;
  if (s.transform == TransformKind::Icosahedron) {
    spec.s0 = make_icosahedron(s.edge0);
    spec.s1 = make_icosahedron(s.edge1);
    spec.s2 = make_icosahedron(s.edge2);
  } else {
    spec.s0 = make_six_point_star(s.edge0, s.spike_ratio);
    spec.s1 = make_six_point_star(s.edge1, s.spike_ratio);
    spec.s2 = make_six_point_star(s.edge2, s.spike_ratio);
  }
  MaterialField mat = [spec](const Vec3& x) {
    Vec3 q = x;
    // The spherical frame is undefined on the polar axis; nudge off it.
    if (q[0] * q[0] + q[1] * q[1] < 1e-18) q[0] += 1e-7;
    return faceted_material(spec, q);
  };

  HelmholtzOperator op(grid, mat, pml, k0, RigidMask::none());
  SolveOptions opts{s.tol, s.max_iter, 60};
  FieldSolution sol = point_source_solve(op, s.source.position, s.source.amplitude, opts);
  check_converged(sol);

  auto out = open_out(dir / "summary.txt");
  out << "scene = " << s.name << '\n';
  out << "solver = fdfd\n";
  out << "residual = " << sol.residual << '\n';
  out << "iterations = " << sol.iterations << '\n';
  write_field_outputs(s, sol, dir, "field");
}

void run_scatter(const SceneSpec& s, const fs::path& dir) {
  double k0 = s.source.k0();
  double h = s.source.wavelength / s.cells_per_wavelength;
  double hw = s.domain_halfwidth;
  GridSpec grid = (s.dim == 2) ? GridSpec::make2d(-hw, hw, -hw, hw, h)
                               : GridSpec::make3d(-hw, hw, -hw, hw, -hw, hw, h);
  PmlSpec pml;
  pml.cells = pml_cell_count(s, h);

  ObstacleGeometry geom;
  if (s.obstacle == ObstacleKind::RigidSphere) {
    double a = s.obstacle_radius;
    geom.inside = [a](const Vec3& x) { return dot(x, x) < a * a; };
  }
  MaterialField mat = radial_field(s);
  MaterialField bg = [](const Vec3&) { return MaterialPoint::background(); };

  HelmholtzOperator op(grid, mat, pml, k0, RigidMask::none(), geom);
  HelmholtzOperator op_bg(grid, bg, pml, k0);
  SolveOptions opts{s.tol, s.max_iter, 60};
  FieldSolution sol = scattered_field_solve(op, op_bg, s.source, opts);
  check_converged(sol);

  double margin = (pml_cell_count(s, h) + 2) * h;
  Vec3 blo{-(hw - margin), -(hw - margin), -(hw - margin)};
  Vec3 bhi{hw - margin, hw - margin, hw - margin};
  double sigma = cross_section_from_flux(sol, k0, blo, bhi);

  auto out = open_out(dir / "summary.txt");
  out << "scene = " << s.name << '\n';
  out << "solver = fdfd\n";
  out << "sigma_sc_flux = " << sigma << '\n';
  out << "residual = " << sol.residual << '\n';
  out << "iterations = " << sol.iterations << '\n';
  FieldSolution total = sol;
  add_incident(total, s.source, op.mask());
  write_field_outputs(s, total, dir, "field");
}

}  // namespace

void run(const SceneSpec& s, const std::string& out_dir) {
  validate_scene(s);
  fs::path dir(out_dir);
  fs::create_directories(dir);
  {
    auto out = open_out(dir / "scene.ini");
    out << print_scene(s);
  }
  if (s.solver == SolverKind::Mie) {
    run_mie(s, dir);
  } else if (s.transform == TransformKind::Carpet ||
             (s.transform == TransformKind::None && s.obstacle == ObstacleKind::Bump)) {
    run_ground(s, dir);
  } else if (s.transform == TransformKind::Icosahedron || s.transform == TransformKind::Star) {
    run_faceted(s, dir);
  } else {
    run_scatter(s, dir);
  }
}

}  // namespace cloak
