#include "cloak/fdfd.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <tuple>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

namespace cloak {

namespace {

constexpr cdouble kI{0.0, 1.0};

std::size_t idx3(const std::array<int, 3>& d, int i, int j, int k) {
  return static_cast<std::size_t>(i) + static_cast<std::size_t>(d[0]) * (static_cast<std::size_t>(j) + static_cast<std::size_t>(d[1]) * k);
}

int pair_index(int a, int b) {
  // {0,1} -> 0, {0,2} -> 1, {1,2} -> 2
  return a + b - 1;
}

}  // namespace

GridSpec GridSpec::make2d(double x0, double x1, double z0, double z1, double spacing) {
  GridSpec g;
  g.dim = 2;
  g.h = spacing;
  g.lo = {x0, 0.0, z0};
  g.hi = {x1, 0.0, z1};
  g.n = {static_cast<int>(std::lround((x1 - x0) / spacing)), 1, static_cast<int>(std::lround((z1 - z0) / spacing))};
  return g;
}

GridSpec GridSpec::make3d(double x0, double x1, double y0, double y1, double z0, double z1, double spacing) {
  GridSpec g;
  g.dim = 3;
  g.h = spacing;
  g.lo = {x0, y0, z0};
  g.hi = {x1, y1, z1};
  g.n = {static_cast<int>(std::lround((x1 - x0) / spacing)), static_cast<int>(std::lround((y1 - y0) / spacing)),
         static_cast<int>(std::lround((z1 - z0) / spacing))};
  return g;
}

Vec3 GridSpec::center(int i, int j, int k) const {
  Vec3 c;
  c[0] = lo[0] + (i + 0.5) * h;
  c[1] = active(1) ? lo[1] + (j + 0.5) * h : 0.0;
  c[2] = lo[2] + (k + 0.5) * h;
  return c;
}

RigidMask RigidMask::from_predicate(const GridSpec& grid, const std::function<bool(const Vec3&)>& pred) {
  RigidMask m;
  m.cells.assign(grid.cells(), 0);
  for (int k = 0; k < grid.n[2]; ++k)
    for (int j = 0; j < grid.n[1]; ++j)
      for (int i = 0; i < grid.n[0]; ++i)
        if (pred(grid.center(i, j, k))) m.cells[grid.index(i, j, k)] = 1;
  return m;
}

cdouble incident_field(const SourceSpec& src, const Vec3& x, int dim) {
  double k = src.k0();
  switch (src.kind) {
    case SourceSpec::Kind::PlaneWave: {
      cdouble p = src.amplitude * std::exp(kI * (k * dot(src.direction, x)));
      if (src.mirror_ground) {
        Vec3 d{src.direction[0], src.direction[1], -src.direction[2]};
        cdouble amp = src.amplitude * std::exp(2.0 * kI * k * src.direction[2] * src.ground_z);
        p += amp * std::exp(kI * (k * dot(d, x)));
      }
      return p;
    }
    case SourceSpec::Kind::Point: {
      Vec3 rv = x - src.position;
      double r = norm(rv);
      if (dim == 3) return src.amplitude * std::exp(kI * (k * r)) / (4.0 * M_PI * r);
      return src.amplitude * 0.25 * kI * cdouble(std::cyl_bessel_j(0, k * r), std::cyl_neumann(0, k * r));
    }
  }
  throw std::logic_error("incident_field: unknown source kind");
}

std::array<cdouble, 3> incident_gradient(const SourceSpec& src, const Vec3& x, int dim) {
  double k = src.k0();
  switch (src.kind) {
    case SourceSpec::Kind::PlaneWave: {
      std::array<cdouble, 3> g{};
      cdouble p = src.amplitude * std::exp(kI * (k * dot(src.direction, x)));
      for (int a = 0; a < 3; ++a) g[static_cast<std::size_t>(a)] = kI * k * src.direction[static_cast<std::size_t>(a)] * p;
      if (src.mirror_ground) {
        Vec3 d{src.direction[0], src.direction[1], -src.direction[2]};
        cdouble q = src.amplitude * std::exp(2.0 * kI * k * src.direction[2] * src.ground_z) * std::exp(kI * (k * dot(d, x)));
        for (int a = 0; a < 3; ++a) g[static_cast<std::size_t>(a)] += kI * k * d[static_cast<std::size_t>(a)] * q;
      }
      return g;
    }
    case SourceSpec::Kind::Point: {
      Vec3 rv = x - src.position;
      double r = norm(rv);
      std::array<cdouble, 3> g{};
      cdouble dpdr;
      if (dim == 3) {
        cdouble p = src.amplitude * std::exp(kI * (k * r)) / (4.0 * M_PI * r);
        dpdr = p * (kI * k - 1.0 / r);
      } else {
        dpdr = -src.amplitude * 0.25 * kI * k * cdouble(std::cyl_bessel_j(1, k * r), std::cyl_neumann(1, k * r));
      }
      for (int a = 0; a < 3; ++a) g[static_cast<std::size_t>(a)] = dpdr * rv[static_cast<std::size_t>(a)] / r;
      return g;
    }
  }
  throw std::logic_error("incident_gradient: unknown source kind");
}

cdouble HelmholtzOperator::stretch(int axis, double coord) const {
  if (!grid_.active(axis) || pml_.cells <= 0) return 1.0;
  double width = pml_.cells * grid_.h;
  double depth = 0.0;
  if (pml_.side[static_cast<std::size_t>(axis)][0]) depth = std::max(depth, grid_.lo[static_cast<std::size_t>(axis)] + width - coord);
  if (pml_.side[static_cast<std::size_t>(axis)][1]) depth = std::max(depth, coord - (grid_.hi[static_cast<std::size_t>(axis)] - width));
  if (depth <= 0.0) return 1.0;
  double frac = std::min(depth / width, 1.0);
  return cdouble(1.0, pml_.strength * std::pow(frac, pml_.order));
}

HelmholtzOperator::HelmholtzOperator(const GridSpec& grid, const MaterialField& material, const PmlSpec& pml,
                                     double k0, RigidMask mask, ObstacleGeometry geometry)
    : grid_(grid), material_(material), pml_(pml), k0_(k0), mask_(std::move(mask)), geom_(std::move(geometry)) {
  if (!mask_.cells.empty() && mask_.cells.size() != grid_.cells())
    throw std::invalid_argument("HelmholtzOperator: mask size mismatch");
  if (geom_.active()) {
    // Cut cells: fluid volume fractions by subsampling; cells mostly inside
    // the obstacle become rigid unknowns.
    vol_frac_.assign(grid_.cells(), 1.0);
    mask_.cells.assign(grid_.cells(), 0);
    for (int k = 0; k < grid_.n[2]; ++k)
      for (int j = 0; j < grid_.n[1]; ++j)
        for (int i = 0; i < grid_.n[0]; ++i) {
          Vec3 c = grid_.center(i, j, k);
          // Corner/centre probe first: uniform cells skip the fine pass.
          bool first = geom_.inside(c);
          bool mixed = false;
          for (int s = 0; s < (grid_.dim == 3 ? 8 : 4) && !mixed; ++s) {
            Vec3 p = c;
            p[0] += ((s & 1) ? 0.5 : -0.5) * grid_.h;
            p[2] += ((s & 2) ? 0.5 : -0.5) * grid_.h;
            if (grid_.dim == 3) p[1] += ((s & 4) ? 0.5 : -0.5) * grid_.h;
            if (geom_.inside(p) != first) mixed = true;
          }
          double fluid;
          if (!mixed) {
            fluid = first ? 0.0 : 1.0;
          } else {
            const int q = (grid_.dim == 3) ? 8 : 24;
            int solid = 0, total = 0;
            for (int a = 0; a < q; ++a)
              for (int b = 0; b < q; ++b)
                for (int d = 0; d < (grid_.dim == 3 ? q : 1); ++d) {
                  Vec3 p = c;
                  p[0] += ((a + 0.5) / q - 0.5) * grid_.h;
                  p[2] += ((b + 0.5) / q - 0.5) * grid_.h;
                  if (grid_.dim == 3) p[1] += ((d + 0.5) / q - 0.5) * grid_.h;
                  ++total;
                  if (geom_.inside(p)) ++solid;
                }
            fluid = 1.0 - static_cast<double>(solid) / total;
          }
          std::size_t idx = grid_.index(i, j, k);
          // Keep every cell with a fluid part as an unknown; the sliver-cell
          // rows are well scaled because fluxes and mass shrink together.
          if (fluid <= 0.0) {
            mask_.cells[idx] = 1;
            vol_frac_[idx] = 0.0;
          } else {
            vol_frac_[idx] = fluid;
          }
        }
  }
  assemble();
}

double HelmholtzOperator::face_fraction_open(int axis, const Vec3& fc) const {
  if (!geom_.active()) return 1.0;
  int t0 = -1, t1 = -1;
  for (int a = 0; a < 3; ++a)
    if (a != axis && grid_.active(a)) (t0 < 0 ? t0 : t1) = a;
  // Corner probe; only mixed faces pay for the fine sampling.
  bool first = false, mixed = false;
  for (int s = 0; s < (t1 >= 0 ? 4 : 2); ++s) {
    Vec3 p = fc;
    p[static_cast<std::size_t>(t0)] += ((s & 1) ? 0.5 : -0.5) * grid_.h;
    if (t1 >= 0) p[static_cast<std::size_t>(t1)] += ((s & 2) ? 0.5 : -0.5) * grid_.h;
    bool in = geom_.inside(p);
    if (s == 0)
      first = in;
    else if (in != first)
      mixed = true;
  }
  if (!mixed && geom_.inside(fc) == first) return first ? 0.0 : 1.0;
  const int q = (t1 >= 0) ? 12 : 64;
  int open = 0, total = 0;
  for (int a = 0; a < q; ++a)
    for (int b = 0; b < (t1 >= 0 ? q : 1); ++b) {
      Vec3 p = fc;
      p[static_cast<std::size_t>(t0)] += ((a + 0.5) / q - 0.5) * grid_.h;
      if (t1 >= 0) p[static_cast<std::size_t>(t1)] += ((b + 0.5) / q - 0.5) * grid_.h;
      ++total;
      if (!geom_.inside(p)) ++open;
    }
  return static_cast<double>(open) / total;
}

double HelmholtzOperator::face_open_centroid(int axis, const Vec3& fc, std::array<double, 2>& centroid) const {
  centroid = {0.0, 0.0};
  if (!geom_.active()) return 1.0;
  int t0 = -1, t1 = -1;
  for (int a = 0; a < 3; ++a)
    if (a != axis && grid_.active(a)) (t0 < 0 ? t0 : t1) = a;
  const int q = (t1 >= 0) ? 12 : 64;
  int open = 0, total = 0;
  double c0 = 0.0, c1 = 0.0;
  for (int a = 0; a < q; ++a)
    for (int b = 0; b < (t1 >= 0 ? q : 1); ++b) {
      double u0 = (a + 0.5) / q - 0.5;
      double u1 = (b + 0.5) / q - 0.5;
      Vec3 p = fc;
      p[static_cast<std::size_t>(t0)] += u0 * grid_.h;
      if (t1 >= 0) p[static_cast<std::size_t>(t1)] += u1 * grid_.h;
      ++total;
      if (!geom_.inside(p)) {
        ++open;
        c0 += u0;
        c1 += u1;
      }
    }
  if (open > 0) {
    centroid[0] = c0 / open;
    if (t1 >= 0) centroid[1] = c1 / open;
  }
  return static_cast<double>(open) / total;
}

void HelmholtzOperator::assemble() {
  const auto& n = grid_.n;
  double h = grid_.h;
  mass_.assign(grid_.cells(), 0.0);
  diag_.assign(grid_.cells(), 0.0);
  for (auto& fb : face_blend_) fb.clear();

  auto sample = [&](const Vec3& pos) {
    MaterialPoint m = material_(pos);
    if (m.out_of_domain) m = MaterialPoint::background();
    if (m.singular_clamped) ++clamped_;
    for (double v : m.inv_density.m)
      if (!std::isfinite(v)) throw std::runtime_error("HelmholtzOperator: non-finite material entry");
    if (!std::isfinite(m.bulk_modulus) || m.bulk_modulus == 0.0)
      throw std::runtime_error("HelmholtzOperator: invalid bulk modulus");
    return m;
  };
  auto stretches = [&](const Vec3& pos, std::array<cdouble, 3>& s) {
    cdouble prod = 1.0;
    for (int a = 0; a < 3; ++a) {
      s[static_cast<std::size_t>(a)] = grid_.active(a) ? stretch(a, pos[static_cast<std::size_t>(a)]) : 1.0;
      if (grid_.active(a)) prod *= s[static_cast<std::size_t>(a)];
    }
    return prod;
  };

  for (int k = 0; k < n[2]; ++k)
    for (int j = 0; j < n[1]; ++j)
      for (int i = 0; i < n[0]; ++i) {
        std::size_t c = grid_.index(i, j, k);
        if (mask_.rigid(c)) continue;
        Vec3 pos = grid_.center(i, j, k);
        MaterialPoint m = sample(pos);
        std::array<cdouble, 3> s;
        cdouble prod = stretches(pos, s);
        mass_[c] = k0_ * k0_ * prod / m.bulk_modulus;
        if (!vol_frac_.empty()) mass_[c] *= vol_frac_[c];
      }

  // Diagonal tensor entries on faces.
  for (int a = 0; a < 3; ++a) {
    if (!grid_.active(a)) continue;
    std::array<int, 3> fd = n;
    fd[static_cast<std::size_t>(a)] += 1;
    face_diag_[static_cast<std::size_t>(a)].assign(static_cast<std::size_t>(fd[0]) * fd[1] * fd[2], 0.0);
    std::array<int, 3> it{};
    for (it[2] = 0; it[2] < fd[2]; ++it[2])
      for (it[1] = 0; it[1] < fd[1]; ++it[1])
        for (it[0] = 0; it[0] < fd[0]; ++it[0]) {
          int fa = it[static_cast<std::size_t>(a)];
          if (fa == 0 || fa == n[static_cast<std::size_t>(a)]) continue;  // boundary: zero flux
          std::array<int, 3> cm = it;
          cm[static_cast<std::size_t>(a)] -= 1;
          std::size_t cl = grid_.index(cm[0], cm[1], cm[2]);
          std::size_t cr = grid_.index(it[0], it[1], it[2]);
          if (mask_.rigid(cl) || mask_.rigid(cr)) continue;
          Vec3 pos = grid_.center(it[0], it[1], it[2]);
          pos[static_cast<std::size_t>(a)] -= 0.5 * h;
          MaterialPoint m = sample(pos);
          std::array<cdouble, 3> s;
          cdouble prod = stretches(pos, s);
          cdouble kv = m.inv_density(a, a) * prod / (s[static_cast<std::size_t>(a)] * s[static_cast<std::size_t>(a)]);
          if (geom_.active()) {
            std::array<double, 2> cen{};
            double frac = face_open_centroid(a, pos, cen);
            kv *= frac;
            if (kv != 0.0 && frac < 1.0) {
              // Partially open face: shift the gradient stencil towards the
              // centroid of the open part.
              FaceBlend fb;
              int t0 = -1, t1 = -1;
              for (int t = 0; t < 3; ++t)
                if (t != a && grid_.active(t)) (t0 < 0 ? t0 : t1) = t;
              std::array<int, 2> taxes{t0, t1};
              bool any = false;
              for (int u = 0; u < 2; ++u) {
                int t = taxes[static_cast<std::size_t>(u)];
                if (t < 0 || std::abs(cen[static_cast<std::size_t>(u)]) < 1e-12) continue;
                int sgn = cen[static_cast<std::size_t>(u)] > 0 ? 1 : -1;
                std::array<int, 3> lm = it, lp = it;
                lm[static_cast<std::size_t>(a)] -= 1;
                lm[static_cast<std::size_t>(t)] += sgn;
                lp[static_cast<std::size_t>(t)] += sgn;
                if (lm[static_cast<std::size_t>(t)] < 0 || lm[static_cast<std::size_t>(t)] >= n[static_cast<std::size_t>(t)]) continue;
                if (mask_.rigid(grid_.index(lm[0], lm[1], lm[2])) || mask_.rigid(grid_.index(lp[0], lp[1], lp[2])))
                  continue;
                fb.t[static_cast<std::size_t>(u)] = t;
                fb.shift[static_cast<std::size_t>(u)] = sgn;
                fb.eta[static_cast<std::size_t>(u)] = std::min(std::abs(cen[static_cast<std::size_t>(u)]), 0.5);
                any = true;
              }
              if (any) face_blend_[static_cast<std::size_t>(a)][idx3(fd, it[0], it[1], it[2])] = fb;
            }
          }
          if (kv == 0.0) continue;
          face_diag_[static_cast<std::size_t>(a)][idx3(fd, it[0], it[1], it[2])] = kv;
          diag_[cl] -= kv / (h * h);
          diag_[cr] -= kv / (h * h);
        }
  }

  // Off-diagonal entries on vertex (2D) / edge (3D) positions.
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b) {
      if (!grid_.active(a) || !grid_.active(b)) continue;
      std::array<int, 3> ed = n;
      ed[static_cast<std::size_t>(a)] += 1;
      ed[static_cast<std::size_t>(b)] += 1;
      auto& arr = edge_cross_[static_cast<std::size_t>(pair_index(a, b))];
      arr.assign(static_cast<std::size_t>(ed[0]) * ed[1] * ed[2], 0.0);
      std::array<int, 3> it{};
      for (it[2] = 0; it[2] < ed[2]; ++it[2])
        for (it[1] = 0; it[1] < ed[1]; ++it[1])
          for (it[0] = 0; it[0] < ed[0]; ++it[0]) {
            int ea = it[static_cast<std::size_t>(a)], eb = it[static_cast<std::size_t>(b)];
            if (ea == 0 || ea == n[static_cast<std::size_t>(a)] || eb == 0 || eb == n[static_cast<std::size_t>(b)]) continue;
            // Four surrounding cells must all be fluid.
            bool ok = true;
            std::array<std::size_t, 4> cells{};
            for (int q = 0; q < 4; ++q) {
              std::array<int, 3> ci = it;
              ci[static_cast<std::size_t>(a)] -= (q & 1) ? 0 : 1;
              ci[static_cast<std::size_t>(b)] -= (q & 2) ? 0 : 1;
              cells[static_cast<std::size_t>(q)] = grid_.index(ci[0], ci[1], ci[2]);
              if (mask_.rigid(cells[static_cast<std::size_t>(q)])) ok = false;
            }
            if (!ok) continue;
            Vec3 pos = grid_.center(it[0], it[1], it[2]);
            pos[static_cast<std::size_t>(a)] -= 0.5 * h;
            pos[static_cast<std::size_t>(b)] -= 0.5 * h;
            MaterialPoint m = sample(pos);
            if (m.inv_density(a, b) == 0.0) continue;
            std::array<cdouble, 3> s;
            cdouble prod = stretches(pos, s);
            cdouble kv = m.inv_density(a, b) * prod / (s[static_cast<std::size_t>(a)] * s[static_cast<std::size_t>(b)]);
            arr[idx3(ed, it[0], it[1], it[2])] = kv;
            // sigma_a sigma_b = +1 for cells q = 0 (--) and 3 (++), -1 otherwise.
            for (int q = 0; q < 4; ++q) {
              double sgn = (q == 0 || q == 3) ? 1.0 : -1.0;
              diag_[cells[static_cast<std::size_t>(q)]] -= sgn * kv / (2.0 * h * h);
            }
          }
    }

  for (int k = 0; k < n[2]; ++k)
    for (int j = 0; j < n[1]; ++j)
      for (int i = 0; i < n[0]; ++i) {
        std::size_t c = grid_.index(i, j, k);
        if (mask_.rigid(c))
          diag_[c] = 1.0;
        else
          diag_[c] += mass_[c];
      }
}

void HelmholtzOperator::apply(const std::vector<cdouble>& x, std::vector<cdouble>& y) const {
  const auto& n = grid_.n;
  double h = grid_.h;
  double inv_h2 = 1.0 / (h * h);
  y.assign(grid_.cells(), 0.0);
  for (std::size_t c = 0; c < grid_.cells(); ++c) y[c] = mask_.rigid(c) ? x[c] : mass_[c] * x[c];

  for (int a = 0; a < 3; ++a) {
    if (!grid_.active(a)) continue;
    std::array<int, 3> fd = n;
    fd[static_cast<std::size_t>(a)] += 1;
    const auto& arr = face_diag_[static_cast<std::size_t>(a)];
    std::array<int, 3> it{};
    for (it[2] = 0; it[2] < fd[2]; ++it[2])
      for (it[1] = 0; it[1] < fd[1]; ++it[1])
        for (it[0] = 0; it[0] < fd[0]; ++it[0]) {
          cdouble kv = arr[idx3(fd, it[0], it[1], it[2])];
          if (kv == 0.0) continue;
          std::array<int, 3> cm = it;
          cm[static_cast<std::size_t>(a)] -= 1;
          std::size_t cl = grid_.index(cm[0], cm[1], cm[2]);
          std::size_t cr = grid_.index(it[0], it[1], it[2]);
          cdouble diff = x[cr] - x[cl];
          const auto& blends = face_blend_[static_cast<std::size_t>(a)];
          if (!blends.empty()) {
            auto fb_it = blends.find(idx3(fd, it[0], it[1], it[2]));
            if (fb_it != blends.end()) {
              const FaceBlend& fb = fb_it->second;
              diff = 0.0;
              for (int q = 0; q < 4; ++q) {
                double w = ((q & 1) ? fb.eta[0] : 1.0 - fb.eta[0]) * ((q & 2) ? fb.eta[1] : 1.0 - fb.eta[1]);
                if (w == 0.0) continue;
                std::array<int, 3> sm = cm, sp = it;
                if (q & 1) {
                  sm[static_cast<std::size_t>(fb.t[0])] += fb.shift[0];
                  sp[static_cast<std::size_t>(fb.t[0])] += fb.shift[0];
                }
                if (q & 2) {
                  sm[static_cast<std::size_t>(fb.t[1])] += fb.shift[1];
                  sp[static_cast<std::size_t>(fb.t[1])] += fb.shift[1];
                }
                diff += w * (x[grid_.index(sp[0], sp[1], sp[2])] - x[grid_.index(sm[0], sm[1], sm[2])]);
              }
            }
          }
          cdouble t = kv * diff * inv_h2;
          y[cl] += t;
          y[cr] -= t;
        }
  }

  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b) {
      if (!grid_.active(a) || !grid_.active(b)) continue;
      const auto& arr = edge_cross_[static_cast<std::size_t>(pair_index(a, b))];
      if (arr.empty()) continue;
      std::array<int, 3> ed = n;
      ed[static_cast<std::size_t>(a)] += 1;
      ed[static_cast<std::size_t>(b)] += 1;
      std::array<int, 3> it{};
      for (it[2] = 0; it[2] < ed[2]; ++it[2])
        for (it[1] = 0; it[1] < ed[1]; ++it[1])
          for (it[0] = 0; it[0] < ed[0]; ++it[0]) {
            cdouble kv = arr[idx3(ed, it[0], it[1], it[2])];
            if (kv == 0.0) continue;
            std::array<std::size_t, 4> cells{};  // order: (-,-), (+,-), (-,+), (+,+) in (a,b)
            for (int q = 0; q < 4; ++q) {
              std::array<int, 3> ci = it;
              ci[static_cast<std::size_t>(a)] -= (q & 1) ? 0 : 1;
              ci[static_cast<std::size_t>(b)] -= (q & 2) ? 0 : 1;
              cells[static_cast<std::size_t>(q)] = grid_.index(ci[0], ci[1], ci[2]);
            }
            cdouble da = (x[cells[1]] + x[cells[3]] - x[cells[0]] - x[cells[2]]) / (2.0 * h);
            cdouble db = (x[cells[2]] + x[cells[3]] - x[cells[0]] - x[cells[1]]) / (2.0 * h);
            for (int q = 0; q < 4; ++q) {
              double sa = (q & 1) ? 1.0 : -1.0;
              double sb = (q & 2) ? 1.0 : -1.0;
              y[cells[static_cast<std::size_t>(q)]] -= kv * (sa * db + sb * da) / (2.0 * h);
            }
          }
    }
}

std::vector<std::tuple<int, int, cdouble>> HelmholtzOperator::matrix_entries() const {
  const auto& n = grid_.n;
  double h = grid_.h;
  double inv_h2 = 1.0 / (h * h);
  std::vector<std::tuple<int, int, cdouble>> out;
  out.reserve(grid_.cells() * (grid_.dim == 2 ? 9 : 15));

  for (std::size_t c = 0; c < grid_.cells(); ++c)
    out.emplace_back(static_cast<int>(c), static_cast<int>(c), mask_.rigid(c) ? cdouble(1.0) : mass_[c]);

  for (int a = 0; a < 3; ++a) {
    if (!grid_.active(a)) continue;
    std::array<int, 3> fd = n;
    fd[static_cast<std::size_t>(a)] += 1;
    const auto& arr = face_diag_[static_cast<std::size_t>(a)];
    std::array<int, 3> it{};
    for (it[2] = 0; it[2] < fd[2]; ++it[2])
      for (it[1] = 0; it[1] < fd[1]; ++it[1])
        for (it[0] = 0; it[0] < fd[0]; ++it[0]) {
          cdouble kv = arr[idx3(fd, it[0], it[1], it[2])];
          if (kv == 0.0) continue;
          std::array<int, 3> cm = it;
          cm[static_cast<std::size_t>(a)] -= 1;
          int cl = static_cast<int>(grid_.index(cm[0], cm[1], cm[2]));
          int cr = static_cast<int>(grid_.index(it[0], it[1], it[2]));
          const FaceBlend* fb = nullptr;
          const auto& blends = face_blend_[static_cast<std::size_t>(a)];
          if (!blends.empty()) {
            auto fb_it = blends.find(idx3(fd, it[0], it[1], it[2]));
            if (fb_it != blends.end()) fb = &fb_it->second;
          }
          if (!fb) {
            out.emplace_back(cl, cr, kv * inv_h2);
            out.emplace_back(cr, cl, kv * inv_h2);
            out.emplace_back(cl, cl, -kv * inv_h2);
            out.emplace_back(cr, cr, -kv * inv_h2);
            continue;
          }
          for (int q = 0; q < 4; ++q) {
            double w = ((q & 1) ? fb->eta[0] : 1.0 - fb->eta[0]) * ((q & 2) ? fb->eta[1] : 1.0 - fb->eta[1]);
            if (w == 0.0) continue;
            std::array<int, 3> sm = cm, sp = it;
            if (q & 1) {
              sm[static_cast<std::size_t>(fb->t[0])] += fb->shift[0];
              sp[static_cast<std::size_t>(fb->t[0])] += fb->shift[0];
            }
            if (q & 2) {
              sm[static_cast<std::size_t>(fb->t[1])] += fb->shift[1];
              sp[static_cast<std::size_t>(fb->t[1])] += fb->shift[1];
            }
            int csm = static_cast<int>(grid_.index(sm[0], sm[1], sm[2]));
            int csp = static_cast<int>(grid_.index(sp[0], sp[1], sp[2]));
            out.emplace_back(cl, csp, w * kv * inv_h2);
            out.emplace_back(cl, csm, -w * kv * inv_h2);
            out.emplace_back(cr, csp, -w * kv * inv_h2);
            out.emplace_back(cr, csm, w * kv * inv_h2);
          }
        }
  }

  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b) {
      if (!grid_.active(a) || !grid_.active(b)) continue;
      const auto& arr = edge_cross_[static_cast<std::size_t>(pair_index(a, b))];
      if (arr.empty()) continue;
      std::array<int, 3> ed = n;
      ed[static_cast<std::size_t>(a)] += 1;
      ed[static_cast<std::size_t>(b)] += 1;
      std::array<int, 3> it{};
      for (it[2] = 0; it[2] < ed[2]; ++it[2])
        for (it[1] = 0; it[1] < ed[1]; ++it[1])
          for (it[0] = 0; it[0] < ed[0]; ++it[0]) {
            cdouble kv = arr[idx3(ed, it[0], it[1], it[2])];
            if (kv == 0.0) continue;
            std::array<int, 4> cells{};
            std::array<double, 4> sa{}, sb{};
            for (int q = 0; q < 4; ++q) {
              std::array<int, 3> ci = it;
              ci[static_cast<std::size_t>(a)] -= (q & 1) ? 0 : 1;
              ci[static_cast<std::size_t>(b)] -= (q & 2) ? 0 : 1;
              cells[static_cast<std::size_t>(q)] = static_cast<int>(grid_.index(ci[0], ci[1], ci[2]));
              sa[static_cast<std::size_t>(q)] = (q & 1) ? 1.0 : -1.0;
              sb[static_cast<std::size_t>(q)] = (q & 2) ? 1.0 : -1.0;
            }
            for (int q = 0; q < 4; ++q)
              for (int r = 0; r < 4; ++r) {
                cdouble v = -kv / (4.0 * h * h) *
                            (sa[static_cast<std::size_t>(q)] * sb[static_cast<std::size_t>(r)] +
                             sb[static_cast<std::size_t>(q)] * sa[static_cast<std::size_t>(r)]);
                if (v != 0.0) out.emplace_back(cells[static_cast<std::size_t>(q)], cells[static_cast<std::size_t>(r)], v);
              }
          }
    }
  return out;
}

namespace {

double vnorm(const std::vector<cdouble>& v) {
  double s = 0.0;
  for (const auto& z : v) s += std::norm(z);
  return std::sqrt(s);
}

/// Restarted GMRES with Jacobi right preconditioning.
FieldSolution gmres_solve(const HelmholtzOperator& op, const std::vector<cdouble>& b, const SolveOptions& opts) {
  FieldSolution sol;
  sol.grid = op.grid();
  std::size_t nc = op.grid().cells();
  sol.p.assign(nc, 0.0);

  double bnorm = vnorm(b);
  if (bnorm == 0.0) {
    sol.converged = true;
    return sol;
  }

  std::vector<cdouble> minv(nc);
  for (std::size_t i = 0; i < nc; ++i) {
    cdouble d = op.diagonal()[i];
    minv[i] = (std::abs(d) > 0.0) ? 1.0 / d : 1.0;
  }

  int m = opts.restart;
  std::vector<std::vector<cdouble>> v(static_cast<std::size_t>(m) + 1);
  std::vector<cdouble> hess(static_cast<std::size_t>((m + 1) * m), 0.0);
  std::vector<cdouble> cs(static_cast<std::size_t>(m)), sn(static_cast<std::size_t>(m)), g(static_cast<std::size_t>(m) + 1);
  std::vector<cdouble> w(nc), z(nc);
  auto H = [&](int i, int j) -> cdouble& { return hess[static_cast<std::size_t>(i) * m + j]; };

  int total = 0;
  double rel = 1.0;
  while (total < opts.max_iter) {
    op.apply(sol.p, w);
    for (std::size_t i = 0; i < nc; ++i) w[i] = b[i] - w[i];
    double beta = vnorm(w);
    rel = beta / bnorm;
    if (rel <= opts.tol) break;
    v[0].resize(nc);
    for (std::size_t i = 0; i < nc; ++i) v[0][i] = w[i] / beta;
    std::fill(g.begin(), g.end(), cdouble(0.0));
    g[0] = beta;

    int j = 0;
    for (; j < m && total < opts.max_iter; ++j, ++total) {
      for (std::size_t i = 0; i < nc; ++i) z[i] = minv[i] * v[static_cast<std::size_t>(j)][i];
      op.apply(z, w);
      for (int i = 0; i <= j; ++i) {
        cdouble hij = 0.0;
        const auto& vi = v[static_cast<std::size_t>(i)];
        for (std::size_t q = 0; q < nc; ++q) hij += std::conj(vi[q]) * w[q];
        H(i, j) = hij;
        for (std::size_t q = 0; q < nc; ++q) w[q] -= hij * vi[q];
      }
      double hn = vnorm(w);
      H(j + 1, j) = hn;
      if (hn > 0.0) {
        v[static_cast<std::size_t>(j) + 1].resize(nc);
        for (std::size_t q = 0; q < nc; ++q) v[static_cast<std::size_t>(j) + 1][q] = w[q] / hn;
      }
      for (int i = 0; i < j; ++i) {
        cdouble t = cs[static_cast<std::size_t>(i)] * H(i, j) + sn[static_cast<std::size_t>(i)] * H(i + 1, j);
        H(i + 1, j) = -std::conj(sn[static_cast<std::size_t>(i)]) * H(i, j) + std::conj(cs[static_cast<std::size_t>(i)]) * H(i + 1, j);
        H(i, j) = t;
      }
      double denom = std::sqrt(std::norm(H(j, j)) + std::norm(H(j + 1, j)));
      if (denom == 0.0) {
        cs[static_cast<std::size_t>(j)] = 1.0;
        sn[static_cast<std::size_t>(j)] = 0.0;
      } else {
        cs[static_cast<std::size_t>(j)] = std::conj(H(j, j)) / denom;
        sn[static_cast<std::size_t>(j)] = std::conj(H(j + 1, j)) / denom;
      }
      H(j, j) = cs[static_cast<std::size_t>(j)] * H(j, j) + sn[static_cast<std::size_t>(j)] * H(j + 1, j);
      H(j + 1, j) = 0.0;
      g[static_cast<std::size_t>(j) + 1] = -std::conj(sn[static_cast<std::size_t>(j)]) * g[static_cast<std::size_t>(j)];
      g[static_cast<std::size_t>(j)] = cs[static_cast<std::size_t>(j)] * g[static_cast<std::size_t>(j)];
      rel = std::abs(g[static_cast<std::size_t>(j) + 1]) / bnorm;
      sol.residual_history.push_back(rel);
      if (rel <= opts.tol) {
        ++j;
        ++total;
        break;
      }
      if (hn == 0.0) {
        ++j;
        break;
      }
    }

    // Back substitution and update x += M^-1 (V y).
    std::vector<cdouble> yv(static_cast<std::size_t>(j));
    for (int i = j - 1; i >= 0; --i) {
      cdouble s = g[static_cast<std::size_t>(i)];
      for (int q = i + 1; q < j; ++q) s -= H(i, q) * yv[static_cast<std::size_t>(q)];
      yv[static_cast<std::size_t>(i)] = s / H(i, i);
    }
    for (int i = 0; i < j; ++i)
      for (std::size_t q = 0; q < nc; ++q)
        sol.p[q] += minv[q] * yv[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(i)][q];
    if (rel <= opts.tol) break;
  }

  sol.iterations = total;
  sol.residual = rel;
  sol.converged = rel <= opts.tol;
  return sol;
}

FieldSolution direct_solve(const HelmholtzOperator& op, const std::vector<cdouble>& b) {
  FieldSolution sol;
  sol.grid = op.grid();
  int nc = static_cast<int>(op.grid().cells());

  std::vector<Eigen::Triplet<cdouble>> trips;
  for (const auto& [r, c, v] : op.matrix_entries()) trips.emplace_back(r, c, v);
  Eigen::SparseMatrix<cdouble> A(nc, nc);
  A.setFromTriplets(trips.begin(), trips.end());

  Eigen::VectorXcd rhs(nc);
  for (int i = 0; i < nc; ++i) rhs[i] = b[static_cast<std::size_t>(i)];
  Eigen::SparseLU<Eigen::SparseMatrix<cdouble>> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success) throw std::runtime_error("direct_solve: factorization failed");
  Eigen::VectorXcd x = lu.solve(rhs);

  sol.p.assign(static_cast<std::size_t>(nc), 0.0);
  for (int i = 0; i < nc; ++i) sol.p[static_cast<std::size_t>(i)] = x[i];
  std::vector<cdouble> r(static_cast<std::size_t>(nc));
  op.apply(sol.p, r);
  double num = 0.0, den = 0.0;
  for (int i = 0; i < nc; ++i) {
    num += std::norm(r[static_cast<std::size_t>(i)] - b[static_cast<std::size_t>(i)]);
    den += std::norm(b[static_cast<std::size_t>(i)]);
  }
  sol.residual = (den > 0.0) ? std::sqrt(num / den) : 0.0;
  sol.iterations = 1;
  sol.converged = true;
  return sol;
}

FieldSolution solve_system(const HelmholtzOperator& op, const std::vector<cdouble>& b, const SolveOptions& opts) {
  if (op.grid().dim == 2 && !opts.force_iterative) return direct_solve(op, b);
  return gmres_solve(op, b, opts);
}

}  // namespace

FieldSolution scattered_field_solve(const HelmholtzOperator& op, const HelmholtzOperator& op_bg,
                                    const SourceSpec& incident, const SolveOptions& opts) {
  const GridSpec& grid = op.grid();
  if (grid.cells() != op_bg.grid().cells())
    throw std::invalid_argument("scattered_field_solve: operator grids differ");
  std::size_t nc = grid.cells();
  const RigidMask& mask = op.mask();

  std::vector<cdouble> pinc(nc);
  for (int k = 0; k < grid.n[2]; ++k)
    for (int j = 0; j < grid.n[1]; ++j)
      for (int i = 0; i < grid.n[0]; ++i)
        pinc[grid.index(i, j, k)] = incident_field(incident, grid.center(i, j, k), grid.dim);

  // Contrast source b = (A_bg - A) p_inc. The background operator carries no
  // mask or cut cells, so b vanishes wherever the two media agree (PML
  // included) and the flux dropped at the rigid boundary enters as the ghost
  // Neumann data automatically.
  std::vector<cdouble> b(nc), tmp(nc);
  op.apply(pinc, b);
  op_bg.apply(pinc, tmp);
  for (std::size_t c = 0; c < nc; ++c) b[c] = tmp[c] - b[c];
  for (std::size_t c = 0; c < nc; ++c)
    if (mask.rigid(c)) b[c] = 0.0;

  return solve_system(op, b, opts);
}

FieldSolution point_source_solve(const HelmholtzOperator& op, const Vec3& position, cdouble amplitude,
                                 const SolveOptions& opts) {
  const GridSpec& grid = op.grid();
  std::vector<cdouble> b(grid.cells(), 0.0);
  int i = static_cast<int>(std::floor((position[0] - grid.lo[0]) / grid.h));
  int j = grid.active(1) ? static_cast<int>(std::floor((position[1] - grid.lo[1]) / grid.h)) : 0;
  int k = static_cast<int>(std::floor((position[2] - grid.lo[2]) / grid.h));
  if (i < 0 || i >= grid.n[0] || j < 0 || j >= grid.n[1] || k < 0 || k >= grid.n[2])
    throw std::invalid_argument("point_source_solve: source outside grid");
  double cell_volume = std::pow(grid.h, grid.dim);
  b[grid.index(i, j, k)] = amplitude / cell_volume;
  return solve_system(op, b, opts);
}

void add_incident(FieldSolution& sol, const SourceSpec& src, const RigidMask& mask) {
  const GridSpec& grid = sol.grid;
  for (int k = 0; k < grid.n[2]; ++k)
    for (int j = 0; j < grid.n[1]; ++j)
      for (int i = 0; i < grid.n[0]; ++i) {
        std::size_t c = grid.index(i, j, k);
        if (mask.rigid(c)) continue;
        sol.p[c] += incident_field(src, grid.center(i, j, k), grid.dim);
      }
}

double mismatch_metric(const FieldSolution& field, const FieldSolution& reference,
                       const std::function<bool(const Vec3&)>& region) {
  const GridSpec& grid = field.grid;
  if (grid.cells() != reference.grid.cells())
    throw std::invalid_argument("mismatch_metric: grids differ");
  double num = 0.0, den = 0.0;
  std::size_t count = 0;
  for (int k = 0; k < grid.n[2]; ++k)
    for (int j = 0; j < grid.n[1]; ++j)
      for (int i = 0; i < grid.n[0]; ++i) {
        Vec3 x = grid.center(i, j, k);
        if (!region(x)) continue;
        std::size_t c = grid.index(i, j, k);
        num += std::norm(field.p[c] - reference.p[c]);
        den += std::norm(reference.p[c]);
        ++count;
      }
  if (count == 0) throw std::invalid_argument("mismatch_metric: empty region");
  if (den == 0.0) throw std::invalid_argument("mismatch_metric: reference vanishes on region");
  return std::sqrt(num / den);
}

double cross_section_from_flux(const FieldSolution& scattered, double k0, const Vec3& blo, const Vec3& bhi) {
  const GridSpec& grid = scattered.grid;
  double h = grid.h;
  double da = std::pow(h, grid.dim - 1);
  double total = 0.0;
  for (int a = 0; a < 3; ++a) {
    if (!grid.active(a)) continue;
    for (int side = 0; side < 2; ++side) {
      double coord = (side == 0) ? blo[static_cast<std::size_t>(a)] : bhi[static_cast<std::size_t>(a)];
      int fa = static_cast<int>(std::lround((coord - grid.lo[static_cast<std::size_t>(a)]) / h));
      fa = std::clamp(fa, 1, grid.n[static_cast<std::size_t>(a)] - 1);
      std::array<int, 3> it{};
      const std::array<int, 3>& n = grid.n;
      for (it[2] = 0; it[2] < (a == 2 ? 1 : n[2]); ++it[2])
        for (it[1] = 0; it[1] < (a == 1 ? 1 : n[1]); ++it[1])
          for (it[0] = 0; it[0] < (a == 0 ? 1 : n[0]); ++it[0]) {
            std::array<int, 3> cin = it, cout = it;
            cin[static_cast<std::size_t>(a)] = (side == 0) ? fa : fa - 1;
            cout[static_cast<std::size_t>(a)] = (side == 0) ? fa - 1 : fa;
            // Skip faces outside the box cross-section.
            bool in_box = true;
            for (int bax = 0; bax < 3; ++bax) {
              if (bax == a || !grid.active(bax)) continue;
              Vec3 cc = grid.center(cin[0], cin[1], cin[2]);
              if (cc[static_cast<std::size_t>(bax)] < blo[static_cast<std::size_t>(bax)] ||
                  cc[static_cast<std::size_t>(bax)] > bhi[static_cast<std::size_t>(bax)])
                in_box = false;
            }
            if (!in_box) continue;
            cdouble pi_ = scattered.p[grid.index(cin[0], cin[1], cin[2])];
            cdouble po = scattered.p[grid.index(cout[0], cout[1], cout[2])];
            cdouble pbar = 0.5 * (pi_ + po);
            cdouble dpdn = (po - pi_) / h;
            total += std::imag(std::conj(pbar) * dpdn) * da;
          }
    }
  }
  return total / k0;
}

cdouble sample_field(const FieldSolution& sol, const Vec3& x) {
  const GridSpec& grid = sol.grid;
  std::array<int, 3> i0{};
  std::array<double, 3> w{};
  for (int a = 0; a < 3; ++a) {
    if (!grid.active(a)) {
      i0[static_cast<std::size_t>(a)] = 0;
      w[static_cast<std::size_t>(a)] = 0.0;
      continue;
    }
    double t = (x[static_cast<std::size_t>(a)] - grid.lo[static_cast<std::size_t>(a)]) / grid.h - 0.5;
    int i = static_cast<int>(std::floor(t));
    i = std::clamp(i, 0, grid.n[static_cast<std::size_t>(a)] - 2);
    i0[static_cast<std::size_t>(a)] = i;
    w[static_cast<std::size_t>(a)] = std::clamp(t - i, 0.0, 1.0);
  }
  cdouble acc = 0.0;
  for (int dz = 0; dz < (grid.active(2) ? 2 : 1); ++dz)
    for (int dy = 0; dy < (grid.active(1) ? 2 : 1); ++dy)
      for (int dx = 0; dx < (grid.active(0) ? 2 : 1); ++dx) {
        double wt = (dx ? w[0] : (grid.active(0) ? 1.0 - w[0] : 1.0)) *
                    (dy ? w[1] : (grid.active(1) ? 1.0 - w[1] : 1.0)) *
                    (dz ? w[2] : (grid.active(2) ? 1.0 - w[2] : 1.0));
        acc += wt * sol.p[grid.index(i0[0] + dx, i0[1] + dy, i0[2] + dz)];
      }
  return acc;
}

void export_slice_csv(const FieldSolution& sol, int axis, int index, const std::string& path) {
  const GridSpec& grid = sol.grid;
  if (axis < 0 || axis > 2 || index < 0 || index >= grid.n[static_cast<std::size_t>(axis)])
    throw std::invalid_argument("export_slice_csv: slice outside grid");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_slice_csv: cannot open " + path);
  out.precision(9);
  out << "x,y,z,re_p,im_p\n";
  std::array<int, 3> it{};
  const std::array<int, 3>& n = grid.n;
  for (it[2] = 0; it[2] < n[2]; ++it[2])
    for (it[1] = 0; it[1] < n[1]; ++it[1])
      for (it[0] = 0; it[0] < n[0]; ++it[0]) {
        if (it[static_cast<std::size_t>(axis)] != index) continue;
        Vec3 c = grid.center(it[0], it[1], it[2]);
        cdouble p = sol.p[grid.index(it[0], it[1], it[2])];
        out << c[0] << ',' << c[1] << ',' << c[2] << ',' << p.real() << ',' << p.imag() << '\n';
      }
}

void export_vtk(const FieldSolution& sol, const std::string& path, const std::string& name) {
  const GridSpec& grid = sol.grid;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_vtk: cannot open " + path);
  out << "# vtk DataFile Version 3.0\n";
  out << "pressure field\n";
  out << "ASCII\n";
  out << "DATASET STRUCTURED_POINTS\n";
  out << "DIMENSIONS " << grid.n[0] << ' ' << grid.n[1] << ' ' << grid.n[2] << '\n';
  Vec3 origin = grid.center(0, 0, 0);
  out << "ORIGIN " << origin[0] << ' ' << origin[1] << ' ' << origin[2] << '\n';
  out << "SPACING " << grid.h << ' ' << grid.h << ' ' << grid.h << '\n';
  out << "POINT_DATA " << grid.cells() << '\n';
  out << "SCALARS " << name << " double 1\n";
  out << "LOOKUP_TABLE default\n";
  out.precision(9);
  for (std::size_t c = 0; c < grid.cells(); ++c) out << sol.p[c].real() << '\n';
}

}  // namespace cloak
