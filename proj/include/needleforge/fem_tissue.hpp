#pragma once

#include "needleforge/materials.hpp"
#include "needleforge/mesh.hpp"
#include "needleforge/types.hpp"

#include <array>
#include <vector>

namespace needleforge {

/// Precomputed co-rotational tet model. Immutable after build.
struct TissueModel {
    TetMesh mesh;
    MaterialParams material;
    std::vector<Mat12> element_stiffness;  // rest-frame K_e
    std::vector<Mat3> rest_shape_inv;      // inverse rest edge matrix per tet
    VecX node_mass;                        // lumped, kg
    std::vector<char> node_fixed;          // 1 when clamped
    std::vector<int> free_index;           // node -> free slot, -1 when fixed
    int free_node_count = 0;

    int node_count() const { return mesh.node_count(); }
    int dof_count() const { return 3 * mesh.node_count(); }
};

struct TissueState {
    Eigen::Matrix<double, Eigen::Dynamic, 3> positions;
    Eigen::Matrix<double, Eigen::Dynamic, 3> velocities;
};

struct CorotationalForces {
    VecX force;   // 3n, fixed rows zeroed
    SpMat tangent;  // 3n x 3n, fixed rows/cols cleared to identity diagonal
};

TissueModel build_tissue_model(TetMesh mesh, const MaterialParams& material);

TissueState rest_state(const TissueModel& model);

/// K = V B^T D B of the linear (constant-strain) tetrahedron.
Mat12 tet_rest_stiffness(const std::array<Vec3, 4>& vertices, const MaterialParams& m);

/// Rotation factor of F by iterative refinement; identity when F is
/// near-singular.
Mat3 polar_rotation(const Mat3& f);

/// Per-element rotations from the current deformation. `inverted` reports
/// whether any element has non-positive current volume.
std::vector<Mat3> element_rotations(const TissueModel& model, const TissueState& state,
                                    bool* inverted = nullptr);

/// Accumulates f_e = -R K_e (R^T x - x0) over all elements into a fresh 3n
/// vector; rows of fixed nodes are zeroed.
VecX corotational_force_vector(const TissueModel& model, const TissueState& state,
                               const std::vector<Mat3>& rotations);

/// Assembles the frozen-rotation tangent sum of R K_e R^T. Fixed-node rows
/// and columns are cleared with a unit diagonal.
SpMat corotational_tangent(const TissueModel& model, const std::vector<Mat3>& rotations);

/// Convenience wrapper computing rotations, force, and tangent together.
/// Throws SimulationError on element inversion.
CorotationalForces corotational_forces(const TissueModel& model, const TissueState& state);

}  // namespace needleforge
