#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cloak/material.hpp"

namespace cloak {

using cdouble = std::complex<double>;

/// Uniform cell-centred grid. 2D grids live in the (x, z) plane: axis 1 is
/// inactive (n[1] = 1) and cell centres have y = 0.
struct GridSpec {
  int dim = 2;
  std::array<double, 3> lo{};
  std::array<double, 3> hi{};
  std::array<int, 3> n{1, 1, 1};
  double h = 0.0;

  static GridSpec make2d(double x0, double x1, double z0, double z1, double spacing);
  static GridSpec make3d(double x0, double x1, double y0, double y1, double z0, double z1, double spacing);

  std::size_t cells() const { return static_cast<std::size_t>(n[0]) * n[1] * n[2]; }
  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) + static_cast<std::size_t>(n[0]) * (static_cast<std::size_t>(j) + static_cast<std::size_t>(n[1]) * k);
  }
  Vec3 center(int i, int j, int k) const;
  bool active(int axis) const { return n[axis] > 1; }
};

struct PmlSpec {
  int cells = 10;
  double strength = 5.0;  // peak of sigma/k0
  int order = 3;          // polynomial grading
  // Per-axis lo/hi activation; inactive sides get a plain Neumann wall.
  std::array<std::array<bool, 2>, 3> side{{{true, true}, {true, true}, {true, true}}};
};

struct SourceSpec {
  enum class Kind { PlaneWave, Point };
  Kind kind = Kind::PlaneWave;
  Vec3 direction{0.0, 0.0, 1.0};  // plane wave; must be unit length
  Vec3 position{};                // point source
  double wavelength = 0.3;
  cdouble amplitude{1.0, 0.0};
  // Adds the specular reflection from a rigid ground at z = ground_z
  // (plane-wave sources only), so the pair satisfies the Neumann condition.
  bool mirror_ground = false;
  double ground_z = 0.0;

  double k0() const { return 2.0 * M_PI / wavelength; }

  bool operator==(const SourceSpec&) const = default;
};

cdouble incident_field(const SourceSpec& src, const Vec3& x, int dim);
std::array<cdouble, 3> incident_gradient(const SourceSpec& src, const Vec3& x, int dim);

/// Per-cell rigid marker; empty mask means no rigid cells.
struct RigidMask {
  std::vector<std::uint8_t> cells;

  bool rigid(std::size_t idx) const { return !cells.empty() && cells[idx] != 0; }
  static RigidMask none() { return {}; }
  static RigidMask from_predicate(const GridSpec& grid, const std::function<bool(const Vec3&)>& pred);
};

using MaterialField = std::function<MaterialPoint(const Vec3&)>;

/// Rigid obstacle described by an inside predicate. When present, the
/// operator builds a cut-cell approximation: cells mostly inside become
/// rigid unknowns, boundary cells get partial face apertures and fluid
/// volume fractions instead of a plain staircase.
struct ObstacleGeometry {
  std::function<bool(const Vec3&)> inside;

  bool active() const { return static_cast<bool>(inside); }
};

/// Second-order finite-volume flux operator for
///   div(K grad p) + k0^2 / kappa p,  K = inv_density,
/// with PML complex coordinate stretching folded into K and kappa.
/// Diagonal K entries live on faces; off-diagonal entries on the vertex
/// (2D) / edge (3D) positions of the staggered grid, which keeps the
/// assembled operator complex symmetric.
class HelmholtzOperator {
 public:
  HelmholtzOperator(const GridSpec& grid, const MaterialField& material, const PmlSpec& pml, double k0,
                    RigidMask mask = RigidMask::none(), ObstacleGeometry geometry = {});

  void apply(const std::vector<cdouble>& x, std::vector<cdouble>& y) const;
  const std::vector<cdouble>& diagonal() const { return diag_; }
  const GridSpec& grid() const { return grid_; }
  const RigidMask& mask() const { return mask_; }
  double k0() const { return k0_; }
  int singular_clamped_cells() const { return clamped_; }

  /// Sparse (row, col, value) entries of the assembled operator.
  std::vector<std::tuple<int, int, cdouble>> matrix_entries() const;

 private:
  GridSpec grid_;
  MaterialField material_;
  PmlSpec pml_;
  double k0_;
  RigidMask mask_;
  ObstacleGeometry geom_;
  int clamped_ = 0;

  // Gradient blending for partially open faces: the two-point difference is
  // interpolated towards the centroid of the open part, using the parallel
  // face one cell over in (up to two) transverse directions.
  struct FaceBlend {
    std::array<int, 2> t{-1, -1};     // transverse axes
    std::array<int, 2> shift{0, 0};   // +-1 towards the open centroid
    std::array<double, 2> eta{0, 0};  // interpolation weights in [0, 1/2]
  };

  std::array<std::vector<cdouble>, 3> face_diag_;   // K~aa per face, per axis
  std::array<std::vector<cdouble>, 3> edge_cross_;  // K~ab per pair index {01, 02, 12}
  std::array<std::unordered_map<std::size_t, FaceBlend>, 3> face_blend_;
  std::vector<double> vol_frac_;  // cut-cell fluid fractions
  std::vector<cdouble> mass_;
  std::vector<cdouble> diag_;

  double face_fraction_open(int axis, const Vec3& face_center) const;
  double face_open_centroid(int axis, const Vec3& face_center, std::array<double, 2>& centroid) const;

  cdouble stretch(int axis, double coord) const;
  void assemble();
};

struct FieldSolution {
  GridSpec grid;
  std::vector<cdouble> p;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> residual_history;
};

struct SolveOptions {
  double tol = 1e-6;
  int max_iter = 20000;
  int restart = 60;
  // 2D systems go to a sparse direct factorization; 3D systems use
  // restarted GMRES with Jacobi preconditioning.
  bool force_iterative = false;
};

/// Scattered-field solve with contrast source b = (op_bg - op) p_inc.
/// `op_bg` must be the plain background operator on the same grid, with no
/// mask or obstacle, so that b vanishes wherever the media agree and the
/// rigid-boundary ghost data falls out of the dropped fluxes.
/// Non-convergence returns the partial result with converged = false.
FieldSolution scattered_field_solve(const HelmholtzOperator& op, const HelmholtzOperator& op_bg,
                                    const SourceSpec& incident, const SolveOptions& opts = {});

/// Direct solve of op p = delta(x - position); used for point-source runs
/// and reciprocity checks.
FieldSolution point_source_solve(const HelmholtzOperator& op, const Vec3& position, cdouble amplitude,
                                 const SolveOptions& opts = {});

/// Adds incident-field samples to a scattered-field solution (fluid cells).
void add_incident(FieldSolution& sol, const SourceSpec& src, const RigidMask& mask);

/// gamma = ||p - p_ref||_2 / ||p_ref||_2 over the region. Throws when the
/// region is empty or the grids differ.
double mismatch_metric(const FieldSolution& field, const FieldSolution& reference,
                       const std::function<bool(const Vec3&)>& region);

/// Scattering cross section from the radial intensity flux of the scattered
/// field through the boundary of the axis-aligned box [blo, bhi].
double cross_section_from_flux(const FieldSolution& scattered, double k0, const Vec3& blo, const Vec3& bhi);

/// Bilinear (2D) / trilinear (3D) sample at an arbitrary point.
cdouble sample_field(const FieldSolution& sol, const Vec3& x);

/// CSV export of Re(p), Im(p) on a grid plane: axis = normal, index = slab.
void export_slice_csv(const FieldSolution& sol, int axis, int index, const std::string& path);

/// Legacy VTK structured-points export of Re(p).
void export_vtk(const FieldSolution& sol, const std::string& path, const std::string& name = "re_p");

}  // namespace cloak
