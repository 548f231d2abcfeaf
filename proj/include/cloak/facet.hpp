#pragma once

#include <array>
#include <string>
#include <vector>

#include "cloak/material.hpp"

namespace cloak {

/// Indexed triangle mesh of a star-shaped surface. Every face stores the
/// plane coefficients (a, b, c, d) with a*x + b*y + c*z = d and d > 0.
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  std::vector<std::array<double, 4>> planes;

  /// Recomputes plane coefficients from the vertex data. Throws if a face is
  /// degenerate or its plane passes through the origin (not star-shaped).
  void rebuild_planes();

  /// Index of the face crossed by the ray from the origin along `dir`.
  /// Edge and vertex hits resolve to the lowest face index.
  int face_along(const Vec3& dir) const;

  /// Radial support R(theta, phi) along `dir` (unit length not required).
  double radius_along(const Vec3& dir) const;

  TriMesh scaled(double factor) const;
};

/// Regular icosahedron with the given edge length, centred at the origin.
TriMesh make_icosahedron(double edge);

/// Six-point star: cube core with a pyramidal spike on each face, spikes
/// along +-x, +-y, +-z. `edge` is the core cube edge; the spike apex sits at
/// spike_ratio * edge/2 from the centre.
TriMesh make_six_point_star(double edge, double spike_ratio = 2.0);

/// Text format: lines "v x y z" and "f i j k" (1-based indices), '#' comments.
TriMesh load_mesh(const std::string& path);
void save_mesh(const TriMesh& mesh, const std::string& path);

/// Faceted cloak defined by three nested star-shaped surfaces.
struct FacetedCloakSpec {
  TriMesh s0, s1, s2;
};

MaterialPoint faceted_material(const FacetedCloakSpec& spec, const Vec3& x);
TransformSpec faceted_transform(const FacetedCloakSpec& spec);

}  // namespace cloak
