#include "cloak/facet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cloak {

void TriMesh::rebuild_planes() {
  planes.clear();
  planes.reserve(faces.size());
  for (const auto& f : faces) {
    const Vec3& v1 = vertices[static_cast<std::size_t>(f[0])];
    const Vec3& v2 = vertices[static_cast<std::size_t>(f[1])];
    const Vec3& v3 = vertices[static_cast<std::size_t>(f[2])];
    Vec3 n = cross(v2 - v1, v3 - v1);
    double d = dot(n, v1);
    if (norm(n) == 0.0) throw std::runtime_error("TriMesh: degenerate face");
    if (std::abs(d) < 1e-14 * norm(n))
      throw std::runtime_error("TriMesh: face plane passes through the origin");
    if (d < 0.0) {
      n = -1.0 * n;
      d = -d;
    }
    planes.push_back({n[0], n[1], n[2], d});
  }
}

namespace {

// Barycentric slack of the ray hit on face `fi`: >= 0 means inside.
double hit_slack(const TriMesh& mesh, int fi, const Vec3& dir, double* radius) {
  const auto& f = mesh.faces[static_cast<std::size_t>(fi)];
  const auto& pl = mesh.planes[static_cast<std::size_t>(fi)];
  double den = pl[0] * dir[0] + pl[1] * dir[1] + pl[2] * dir[2];
  if (den <= 0.0) return -1e30;
  double r = pl[3] / den;
  Vec3 p = r * dir;
  const Vec3& a = mesh.vertices[static_cast<std::size_t>(f[0])];
  const Vec3& b = mesh.vertices[static_cast<std::size_t>(f[1])];
  const Vec3& c = mesh.vertices[static_cast<std::size_t>(f[2])];
  Vec3 ab = b - a, ac = c - a, ap = p - a;
  double d00 = dot(ab, ab), d01 = dot(ab, ac), d11 = dot(ac, ac);
  double d20 = dot(ap, ab), d21 = dot(ap, ac);
  double den2 = d00 * d11 - d01 * d01;
  double v = (d11 * d20 - d01 * d21) / den2;
  double w = (d00 * d21 - d01 * d20) / den2;
  double u = 1.0 - v - w;
  if (radius) *radius = r;
  return std::min({u, v, w});
}

}  // namespace

int TriMesh::face_along(const Vec3& dir) const {
  int best = -1;
  double best_slack = -1e30;
  for (int i = 0; i < static_cast<int>(faces.size()); ++i) {
    double s = hit_slack(*this, i, dir, nullptr);
    if (s >= -1e-12) return i;  // first (lowest-index) containing face wins
    if (s > best_slack) {
      best_slack = s;
      best = i;
    }
  }
  if (best < 0) throw std::runtime_error("TriMesh: ray misses surface (not star-shaped?)");
  return best;
}

double TriMesh::radius_along(const Vec3& dir) const {
  int fi = face_along(dir);
  const auto& pl = planes[static_cast<std::size_t>(fi)];
  double den = pl[0] * dir[0] + pl[1] * dir[1] + pl[2] * dir[2];
  return pl[3] / den * norm(dir);
}

TriMesh TriMesh::scaled(double factor) const {
  TriMesh out = *this;
  for (auto& v : out.vertices) v = factor * v;
  out.rebuild_planes();
  return out;
}

TriMesh make_icosahedron(double edge) {
  const double g = (1.0 + std::sqrt(5.0)) / 2.0;
  TriMesh m;
  m.vertices = {{-1, g, 0}, {1, g, 0},  {-1, -g, 0}, {1, -g, 0}, {0, -1, g},  {0, 1, g},
                {0, -1, -g}, {0, 1, -g}, {g, 0, -1},  {g, 0, 1},  {-g, 0, -1}, {-g, 0, 1}};
  m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9},  {5, 11, 4},
             {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6},  {3, 6, 8},
             {3, 8, 9},   {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  // Canonical vertex set above has edge length 2.
  double s = edge / 2.0;
  for (auto& v : m.vertices) v = s * v;
  m.rebuild_planes();
  return m;
}

TriMesh make_six_point_star(double edge, double spike_ratio) {
  double b = edge / 2.0;
  double L = spike_ratio * b;
  TriMesh m;
  for (int sx : {-1, 1})
    for (int sy : {-1, 1})
      for (int sz : {-1, 1}) m.vertices.push_back({sx * b, sy * b, sz * b});
  auto corner = [](int sx, int sy, int sz) { return ((sx + 1) / 2) * 4 + ((sy + 1) / 2) * 2 + (sz + 1) / 2; };
  struct Axis {
    Vec3 apex;
    std::array<int, 4> ring;  // face corners, counter-clockwise seen from outside
  };
  std::vector<Axis> axes = {
      {{+1, 0, 0}, {corner(1, -1, -1), corner(1, 1, -1), corner(1, 1, 1), corner(1, -1, 1)}},
      {{-1, 0, 0}, {corner(-1, -1, -1), corner(-1, -1, 1), corner(-1, 1, 1), corner(-1, 1, -1)}},
      {{0, +1, 0}, {corner(-1, 1, -1), corner(-1, 1, 1), corner(1, 1, 1), corner(1, 1, -1)}},
      {{0, -1, 0}, {corner(-1, -1, -1), corner(1, -1, -1), corner(1, -1, 1), corner(-1, -1, 1)}},
      {{0, 0, +1}, {corner(-1, -1, 1), corner(1, -1, 1), corner(1, 1, 1), corner(-1, 1, 1)}},
      {{0, 0, -1}, {corner(-1, -1, -1), corner(-1, 1, -1), corner(1, 1, -1), corner(1, -1, -1)}}};
  for (const auto& ax : axes) {
    int apex = static_cast<int>(m.vertices.size());
    m.vertices.push_back(L * ax.apex);
    for (int k = 0; k < 4; ++k)
      m.faces.push_back({ax.ring[static_cast<std::size_t>(k)], ax.ring[static_cast<std::size_t>((k + 1) % 4)], apex});
  }
  m.rebuild_planes();
  return m;
}

TriMesh load_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_mesh: cannot open " + path);
  TriMesh m;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      Vec3 v;
      if (!(ls >> v[0] >> v[1] >> v[2]))
        throw std::runtime_error("load_mesh: bad vertex at line " + std::to_string(lineno));
      m.vertices.push_back(v);
    } else if (tag == "f") {
      std::array<int, 3> f{};
      if (!(ls >> f[0] >> f[1] >> f[2]))
        throw std::runtime_error("load_mesh: bad face at line " + std::to_string(lineno));
      for (int& idx : f) {
        if (idx < 1 || idx > static_cast<int>(m.vertices.size()))
          throw std::runtime_error("load_mesh: face index out of range at line " + std::to_string(lineno));
        --idx;
      }
      m.faces.push_back(f);
    } else {
      throw std::runtime_error("load_mesh: unknown record '" + tag + "' at line " + std::to_string(lineno));
    }
  }
  m.rebuild_planes();
  return m;
}

void save_mesh(const TriMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_mesh: cannot open " + path);
  out.precision(12);
  for (const auto& v : mesh.vertices) out << "v " << v[0] << ' ' << v[1] << ' ' << v[2] << '\n';
  for (const auto& f : mesh.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

namespace {

struct RadialSupport {
  double value, dtheta, dphi;
};

RadialSupport support(const TriMesh& mesh, const Vec3& dir, double theta, double phi) {
  int fi = mesh.face_along(dir);
  const auto& pl = mesh.planes[static_cast<std::size_t>(fi)];
  double a = pl[0], b = pl[1], c = pl[2], d = pl[3];
  double ct = std::cos(theta), st = std::sin(theta);
  double cp = std::cos(phi), sp = std::sin(phi);
  double den = a * ct * sp + b * st * sp + c * cp;
  RadialSupport r;
  r.value = d / den;
  r.dtheta = d * (a * st * sp - b * ct * sp) / (den * den);
  r.dphi = -d * (a * ct * cp + b * st * cp - c * sp) / (den * den);
  return r;
}

struct FacetJacobian {
  Mat3 j;
  bool out_of_domain = false;
};

FacetJacobian faceted_jacobian(const FacetedCloakSpec& spec, const Vec3& x) {
  double rp = norm(x);
  FrameRotation frame = FrameRotation::at_point(x);
  double sp = std::sin(frame.phi);
  if (rp == 0.0 || std::abs(sp) < 1e-12)
    throw std::domain_error("faceted cloak: degenerate spherical frame (origin or polar axis)");
  Vec3 u = {x[0] / rp, x[1] / rp, x[2] / rp};

  RadialSupport r0 = support(spec.s0, u, frame.theta, frame.phi);
  RadialSupport r1 = support(spec.s1, u, frame.theta, frame.phi);
  RadialSupport r2 = support(spec.s2, u, frame.theta, frame.phi);

  FacetJacobian out;
  if (rp > r2.value) {
    out.j = Mat3::identity();
    out.out_of_domain = true;
    return out;
  }

  double stretch, rv, rpt, rpf;
  if (rp > r1.value) {
    // Shell: rho' = R1 + alpha (rho - R0), alpha = (R2 - R1)/(R2 - R0).
    double w = r2.value - r0.value;
    double alpha = (r2.value - r1.value) / w;
    double at = ((r2.dtheta - r1.dtheta) * w - (r2.value - r1.value) * (r2.dtheta - r0.dtheta)) / (w * w);
    double af = ((r2.dphi - r1.dphi) * w - (r2.value - r1.value) * (r2.dphi - r0.dphi)) / (w * w);
    rv = r0.value + (rp - r1.value) / alpha;
    stretch = alpha;
    rpt = r1.dtheta + at * (rv - r0.value) - alpha * r0.dtheta;
    rpf = r1.dphi + af * (rv - r0.value) - alpha * r0.dphi;
  } else {
    // Core: rho' = s(theta, phi) rho with s = R1/R0.
    double s = r1.value / r0.value;
    double st_ = (r1.dtheta * r0.value - r1.value * r0.dtheta) / (r0.value * r0.value);
    double sf = (r1.dphi * r0.value - r1.value * r0.dphi) / (r0.value * r0.value);
    rv = rp / s;
    stretch = s;
    rpt = st_ * rv;
    rpf = sf * rv;
  }

  Mat3 jpr{};  // J_{rho' rho}
  jpr(0, 0) = stretch;
  jpr(0, 1) = rpt;
  jpr(0, 2) = rpf;
  jpr(1, 1) = 1.0;
  jpr(2, 2) = 1.0;

  Mat3 jf = frame.coordinate_matrix();
  Mat3 jf_inv = Mat3::diagonal(1.0, 1.0 / (sp * sp), 1.0) * transpose(jf);
  out.j = jf * Mat3::diagonal(1.0, rp, rp) * jpr * Mat3::diagonal(1.0, 1.0 / rv, 1.0 / rv) * jf_inv;
  return out;
}

}  // namespace

MaterialPoint faceted_material(const FacetedCloakSpec& spec, const Vec3& x) {
  FacetJacobian fj = faceted_jacobian(spec, x);
  if (fj.out_of_domain) {
    MaterialPoint m;
    m.out_of_domain = true;
    return m;
  }
  return push_forward(fj.j, MaterialPoint::background());
}

TransformSpec faceted_transform(const FacetedCloakSpec& spec) {
  TransformSpec t;
  t.domain = [spec](const Vec3& x) {
    double r = norm(x);
    if (r == 0.0) return false;
    return r <= spec.s2.radius_along(normalized(x));
  };
  t.map = [spec](const Vec3& x) -> Vec3 {
    double rp = norm(x);
    if (rp == 0.0) return x;
    Vec3 u = normalized(x);
    double R0 = spec.s0.radius_along(u);
    double R1 = spec.s1.radius_along(u);
    double R2 = spec.s2.radius_along(u);
    if (rp > R2) return x;
    double rv = (rp > R1) ? R0 + (rp - R1) * (R2 - R0) / (R2 - R1) : rp * R0 / R1;
    return (rv / rp) * x;
  };
  t.jacobian = [spec](const Vec3& x) -> Mat3 { return faceted_jacobian(spec, x).j; };
  return t;
}

}  // namespace cloak
