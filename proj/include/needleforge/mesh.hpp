#pragma once

#include "needleforge/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace needleforge {

/// Rectangular foam block: edge lengths in metres, cells per axis.
struct FoamSpec {
    Vec3 size{0.100, 0.100, 0.130};
    Eigen::Vector3i resolution{8, 8, 10};
};

/// Tetrahedral mesh in rest configuration. Row i of `nodes` is node i.
struct TetMesh {
    Eigen::Matrix<double, Eigen::Dynamic, 3> nodes;
    Eigen::Matrix<int, Eigen::Dynamic, 4> tets;
    std::vector<int> fixed_nodes;                      // clamped to rest
    Eigen::Matrix<int, Eigen::Dynamic, 3> surface_faces;  // outward oriented

    int node_count() const { return static_cast<int>(nodes.rows()); }
    int tet_count() const { return static_cast<int>(tets.rows()); }
};

struct PointLocation {
    int tet = -1;
    Vec4 barycentric = Vec4::Zero();
};

/// Signed volume of tet (a, b, c, d); positive for right-handed ordering.
inline double signed_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
    return (b - a).cross(c - a).dot(d - a) / 6.0;
}

double tet_volume(const TetMesh& mesh, int tet);

/// Regular grid of resolution cells, each cube split into 6 positively
/// oriented tets sharing the cube diagonal. Nodes on the z = size.z face
/// (opposite the z = 0 insertion face) are marked fixed.
TetMesh build_foam_mesh(const FoamSpec& spec);

/// Barycentric coordinates of p in the given tet of the rest mesh.
Vec4 barycentric_coordinates(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d,
                             const Vec3& p);

/// Containing tet and barycentric weights, or nullopt when p lies outside
/// the mesh. `hint` (a tet index) is checked first. Ties on shared faces
/// resolve to the lowest tet index.
std::optional<PointLocation> locate_point(const TetMesh& mesh, const Vec3& p, int hint = -1);

/// Same query against deformed node positions.
std::optional<PointLocation> locate_point_deformed(
    const TetMesh& mesh, const Eigen::Matrix<double, Eigen::Dynamic, 3>& positions,
    const Vec3& p, int hint = -1);

std::uint64_t mesh_hash(const TetMesh& mesh);

std::string mesh_to_json(const TetMesh& mesh, const FoamSpec& spec);
TetMesh mesh_from_json(const std::string& text);

}  // namespace needleforge
