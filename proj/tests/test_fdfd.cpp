#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <random>

#include "cloak/fdfd.hpp"

using namespace cloak;

namespace {

double bessel_jp(int m, double x) {
  if (m == 0) return -std::cyl_bessel_j(1, x);
  return 0.5 * (std::cyl_bessel_j(m - 1, x) - std::cyl_bessel_j(m + 1, x));
}
double bessel_yp(int m, double x) {
  if (m == 0) return -std::cyl_neumann(1, x);
  return 0.5 * (std::cyl_neumann(m - 1, x) - std::cyl_neumann(m + 1, x));
}

// Total field of a plane wave e^{ikx} on a rigid cylinder of radius a.
cdouble cylinder_total_field(double k, double a, double x, double z) {
  double r = std::hypot(x, z), th = std::atan2(z, x);
  int m_max = static_cast<int>(std::ceil(k * a + 8.0 * std::cbrt(k * a) + 12.0));
  cdouble acc = 0.0;
  for (int m = 0; m <= m_max; ++m) {
    double eps = (m == 0) ? 1.0 : 2.0;
    cdouble im = std::pow(cdouble(0.0, 1.0), m);
    cdouble hp(bessel_jp(m, k * a), bessel_yp(m, k * a));
    cdouble sm = -bessel_jp(m, k * a) / hp;
    cdouble h(std::cyl_bessel_j(m, k * r), std::cyl_neumann(m, k * r));
    acc += eps * im * (std::cyl_bessel_j(m, k * r) + sm * h) * std::cos(m * th);
  }
  return acc;
}

// Scattering width of the rigid cylinder, W = (4/k) sum eps_m |s_m|^2.
double cylinder_width(double k, double a) {
  int m_max = static_cast<int>(std::ceil(k * a + 8.0 * std::cbrt(k * a) + 12.0));
  double w = 0.0;
  for (int m = 0; m <= m_max; ++m) {
    double eps = (m == 0) ? 1.0 : 2.0;
    cdouble hp(bessel_jp(m, k * a), bessel_yp(m, k * a));
    w += eps * std::norm(-bessel_jp(m, k * a) / hp);
  }
  return 4.0 / k * w;
}

MaterialField background_field() {
  return [](const Vec3&) { return MaterialPoint::background(); };
}

}  // namespace

TEST_CASE("grid construction") {
  GridSpec g = GridSpec::make2d(-1.0, 1.0, 0.0, 0.5, 0.1);
  CHECK(g.dim == 2);
  CHECK(g.n[0] == 20);
  CHECK(g.n[1] == 1);
  CHECK(g.n[2] == 5);
  Vec3 c = g.center(0, 0, 0);
  CHECK(c[0] == doctest::Approx(-0.95));
  CHECK(c[1] == doctest::Approx(0.0));
  CHECK(c[2] == doctest::Approx(0.05));
  CHECK(g.cells() == 100);
  CHECK_FALSE(g.active(1));
}

TEST_CASE("incident plane wave and its gradient") {
  SourceSpec src;
  src.direction = normalized(Vec3{1.0, 0.0, 2.0});
  src.wavelength = 0.4;
  Vec3 x{0.21, 0.0, -0.13};
  double k = src.k0();
  cdouble expect = std::exp(cdouble(0.0, k * dot(src.direction, x)));
  CHECK(std::abs(incident_field(src, x, 2) - expect) < 1e-14);

  auto g = incident_gradient(src, x, 2);
  double h = 1e-6;
  for (int a : {0, 2}) {
    Vec3 xp = x, xm = x;
    xp[static_cast<std::size_t>(a)] += h;
    xm[static_cast<std::size_t>(a)] -= h;
    cdouble fd = (incident_field(src, xp, 2) - incident_field(src, xm, 2)) / (2.0 * h);
    CHECK(std::abs(g[static_cast<std::size_t>(a)] - fd) < 1e-6);
  }
}

TEST_CASE("mirrored plane wave satisfies the rigid-ground condition") {
  SourceSpec src;
  src.direction = normalized(Vec3{0.3, 0.0, -1.0});
  src.wavelength = 0.3;
  src.mirror_ground = true;
  src.ground_z = 0.0;
  for (double x : {-0.4, 0.0, 0.7}) {
    auto g = incident_gradient(src, Vec3{x, 0.0, 0.0}, 2);
    CHECK(std::abs(g[2]) < 1e-10);
    // Pressure doubles at the wall relative to one wave.
    cdouble p = incident_field(src, Vec3{x, 0.0, 0.0}, 2);
    CHECK(std::abs(p) == doctest::Approx(2.0).epsilon(1e-12));
  }
}

TEST_CASE("operator is complex symmetric for smooth anisotropic media") {
  GridSpec g = GridSpec::make2d(-0.5, 0.5, -0.5, 0.5, 0.05);
  MaterialField mat = [](const Vec3& x) {
    MaterialPoint m;
    m.inv_density(0, 0) = 1.5 + 0.3 * std::sin(3.0 * x[0]);
    m.inv_density(2, 2) = 0.8 + 0.2 * x[2] * x[2];
    m.inv_density(0, 2) = m.inv_density(2, 0) = 0.25 * std::cos(2.0 * x[0] * x[2]);
    m.bulk_modulus = 1.1;
    return m;
  };
  PmlSpec pml;
  pml.cells = 4;
  HelmholtzOperator op(g, mat, pml, 2.0 * M_PI / 0.3);

  std::mt19937 rng(13);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<cdouble> x(g.cells()), y(g.cells()), ax, ay;
  for (auto& v : x) v = cdouble(d(rng), d(rng));
  for (auto& v : y) v = cdouble(d(rng), d(rng));
  op.apply(x, ax);
  op.apply(y, ay);
  cdouble xay = 0.0, yax = 0.0;  // bilinear (unconjugated) pairings
  for (std::size_t i = 0; i < g.cells(); ++i) {
    xay += x[i] * ay[i];
    yax += y[i] * ax[i];
  }
  CHECK(std::abs(xay - yax) < 1e-10 * std::abs(xay));
}

TEST_CASE("matrix_entries reproduces apply, including cut cells") {
  GridSpec g = GridSpec::make2d(-0.4, 0.4, -0.4, 0.4, 0.05);
  PmlSpec pml;
  pml.cells = 3;
  ObstacleGeometry obs{[](const Vec3& x) { return x[0] * x[0] + x[2] * x[2] < 0.04; }};
  HelmholtzOperator op(g, background_field(), pml, 2.0 * M_PI / 0.25, RigidMask::none(), obs);

  std::mt19937 rng(19);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<cdouble> x(g.cells()), y_apply;
  for (auto& v : x) v = cdouble(d(rng), d(rng));
  op.apply(x, y_apply);

  std::vector<cdouble> y_mat(g.cells(), 0.0);
  for (const auto& [r, c, v] : op.matrix_entries()) y_mat[static_cast<std::size_t>(r)] += v * x[static_cast<std::size_t>(c)];
  double err = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < g.cells(); ++i) {
    err += std::norm(y_mat[i] - y_apply[i]);
    ref += std::norm(y_apply[i]);
  }
  CHECK(std::sqrt(err / ref) < 1e-13);
}

TEST_CASE("direct and iterative solvers agree in 2D") {
  GridSpec g = GridSpec::make2d(-0.45, 0.45, -0.45, 0.45, 0.03);
  PmlSpec pml;
  pml.cells = 6;
  HelmholtzOperator op(g, background_field(), pml, 2.0 * M_PI / 0.3);
  FieldSolution a = point_source_solve(op, Vec3{0.0, 0.0, 0.0}, 1.0, {});
  SolveOptions it;
  it.force_iterative = true;
  it.tol = 1e-10;
  FieldSolution b = point_source_solve(op, Vec3{0.0, 0.0, 0.0}, 1.0, it);
  REQUIRE(a.converged);
  REQUIRE(b.converged);
  double err = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < g.cells(); ++i) {
    err += std::norm(a.p[i] - b.p[i]);
    ref += std::norm(a.p[i]);
  }
  CHECK(std::sqrt(err / ref) < 1e-7);
}

TEST_CASE("no obstacle and no contrast means zero scattered field") {
  GridSpec g = GridSpec::make2d(-0.4, 0.4, -0.4, 0.4, 0.04);
  PmlSpec pml;
  pml.cells = 5;
  SourceSpec src;
  src.wavelength = 0.3;
  HelmholtzOperator op(g, background_field(), pml, src.k0());
  HelmholtzOperator op_bg(g, background_field(), pml, src.k0());
  FieldSolution sol = scattered_field_solve(op, op_bg, src);
  double peak = 0.0;
  for (const auto& v : sol.p) peak = std::max(peak, std::abs(v));
  CHECK(peak < 1e-12);
}

TEST_CASE("2D point source reproduces the outgoing line-source solution") {
  double lam = 0.3, k = 2.0 * M_PI / lam, h = lam / 24.0;
  double ext = 12 * h;
  GridSpec g = GridSpec::make2d(-0.6 - ext, 0.6 + ext, -0.6 - ext, 0.6 + ext, h);
  PmlSpec pml;
  pml.cells = 12;
  HelmholtzOperator op(g, background_field(), pml, k);
  FieldSolution sol = point_source_solve(op, Vec3{0.0, 0.0, 0.0}, 1.0, {});
  REQUIRE(sol.converged);
  // Source cell centre (the grid has an even cell count, so the delta sits
  // half a cell off the origin).
  int ic = g.n[0] / 2, kc = g.n[2] / 2;
  Vec3 c0 = g.center(ic, kc > 0 ? 0 : 0, kc);
  c0 = g.center(ic, 0, kc);
  for (double r : {0.3, 0.45}) {
    Vec3 x{c0[0] + r, 0.0, c0[2]};
    cdouble got = sample_field(sol, x);
    cdouble h1(std::cyl_bessel_j(0, k * r), std::cyl_neumann(0, k * r));
    cdouble expect = cdouble(0.0, -0.25) * h1;  // (Delta + k^2) G = delta
    CHECK(std::abs(got - expect) < 0.05 * std::abs(expect));
  }
}

TEST_CASE("rigid cylinder benchmark: probe error and scattering width") {
  double a = 0.5, lam = 0.3, k = 2.0 * M_PI / lam, L = 1.3;
  double h = lam / 20.0;
  int pml = 10;
  double ext = pml * h;
  GridSpec g = GridSpec::make2d(-L - ext, L + ext, -L - ext, L + ext, h);
  PmlSpec ps;
  ps.cells = pml;
  SourceSpec src;
  src.direction = {1.0, 0.0, 0.0};
  src.wavelength = lam;
  ObstacleGeometry obs{[a](const Vec3& x) { return x[0] * x[0] + x[2] * x[2] < a * a; }};
  HelmholtzOperator op(g, background_field(), ps, k, RigidMask::none(), obs);
  HelmholtzOperator op_bg(g, background_field(), ps, k);
  FieldSolution sol = scattered_field_solve(op, op_bg, src);
  REQUIRE(sol.converged);

  double num = 0.0, den = 0.0;
  for (int i = 0; i < 256; ++i) {
    double th = 2.0 * M_PI * i / 256;
    Vec3 x{0.8 * std::cos(th), 0.0, 0.8 * std::sin(th)};
    cdouble total = sample_field(sol, x) + incident_field(src, x, 2);
    cdouble ref = cylinder_total_field(k, a, x[0], x[2]);
    num += std::norm(total - ref);
    den += std::norm(ref);
  }
  CHECK(std::sqrt(num / den) < 0.05);

  double w_ref = cylinder_width(k, a);
  CHECK(w_ref == doctest::Approx(1.8033112567).epsilon(1e-9));
  double w1 = cross_section_from_flux(sol, k, Vec3{-1.1, 0.0, -1.1}, Vec3{1.1, 0.0, 1.1});
  double w2 = cross_section_from_flux(sol, k, Vec3{-0.9, 0.0, -0.9}, Vec3{0.9, 0.0, 0.9});
  CHECK(w1 == doctest::Approx(w_ref).epsilon(0.05));
  CHECK(w2 == doctest::Approx(w1).epsilon(0.02));  // box independence
}

TEST_CASE("mismatch_metric basics") {
  GridSpec g = GridSpec::make2d(0.0, 1.0, 0.0, 1.0, 0.25);
  FieldSolution a, b;
  a.grid = b.grid = g;
  a.p.assign(g.cells(), cdouble(1.0, 0.0));
  b.p = a.p;
  auto everywhere = [](const Vec3&) { return true; };
  CHECK(mismatch_metric(a, b, everywhere) == doctest::Approx(0.0));
  b.p[5] = cdouble(2.0, 0.0);
  CHECK(mismatch_metric(a, b, everywhere) > 0.0);
  CHECK_THROWS(mismatch_metric(a, b, [](const Vec3&) { return false; }));
  FieldSolution c;
  c.grid = GridSpec::make2d(0.0, 1.0, 0.0, 1.0, 0.5);
  c.p.assign(c.grid.cells(), 0.0);
  CHECK_THROWS(mismatch_metric(a, c, everywhere));
}

TEST_CASE("sample_field reproduces a linear function") {
  GridSpec g = GridSpec::make2d(0.0, 1.0, 0.0, 1.0, 0.1);
  FieldSolution s;
  s.grid = g;
  s.p.resize(g.cells());
  for (int k = 0; k < g.n[2]; ++k)
    for (int i = 0; i < g.n[0]; ++i) {
      Vec3 c = g.center(i, 0, k);
      s.p[g.index(i, 0, k)] = cdouble(2.0 * c[0] - c[2], 0.5 * c[2]);
    }
  for (const Vec3& x : {Vec3{0.33, 0.0, 0.47}, Vec3{0.5, 0.0, 0.5}, Vec3{0.81, 0.0, 0.19}}) {
    cdouble expect(2.0 * x[0] - x[2], 0.5 * x[2]);
    CHECK(std::abs(sample_field(s, x) - expect) < 1e-12);
  }
}

TEST_CASE("slice and VTK exports") {
  GridSpec g = GridSpec::make2d(0.0, 0.4, 0.0, 0.4, 0.1);
  FieldSolution s;
  s.grid = g;
  s.p.assign(g.cells(), cdouble(1.0, -2.0));
  export_slice_csv(s, 1, 0, "test_slice.csv");
  std::ifstream in("test_slice.csv");
  REQUIRE(in.good());
  std::string header;
  std::getline(in, header);
  CHECK(header.find("re_p") != std::string::npos);
  int rows = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 16);
  std::remove("test_slice.csv");

  export_vtk(s, "test_field.vtk");
  std::ifstream vtk("test_field.vtk");
  REQUIRE(vtk.good());
  std::getline(vtk, line);
  CHECK(line.find("# vtk DataFile") == 0);
  std::remove("test_field.vtk");
}

TEST_CASE("point_source_solve rejects positions outside the grid") {
  GridSpec g = GridSpec::make2d(-0.2, 0.2, -0.2, 0.2, 0.05);
  PmlSpec pml;
  pml.cells = 2;
  HelmholtzOperator op(g, background_field(), pml, 10.0);
  CHECK_THROWS(point_source_solve(op, Vec3{0.5, 0.0, 0.0}, 1.0, {}));
}
