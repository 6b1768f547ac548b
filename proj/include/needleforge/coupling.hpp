#pragma once

#include "needleforge/errors.hpp"
#include "needleforge/fem_tissue.hpp"
#include "needleforge/needle_beam.hpp"
#include "needleforge/types.hpp"

#include <Eigen/Dense>

#include <vector>

namespace needleforge {

/// Bilateral sliding constraint: the needle point at `arc` stays laterally
/// coincident with a tissue material point; axial motion is free. The tissue
/// anchor is fixed at creation (cut-path memory); `arc` is re-projected every
/// step as the needle slides through.
struct InsertionConstraint {
    double arc = 0.0;
    int tet = -1;
    Vec4 bary = Vec4::Zero();
    Vec3 rest_point = Vec3::Zero();  // anchor position in the rest mesh
    Vec3 lateral0 = Vec3::UnitX();
    Vec3 lateral1 = Vec3::UnitY();
};

struct InsertionConstraintSet {
    std::vector<InsertionConstraint> constraints;
    bool active = false;
    Vec3 last_tip = Vec3::Zero();
    bool has_last_tip = false;

    int count() const { return static_cast<int>(constraints.size()); }
    const InsertionConstraint& entry() const { return constraints.front(); }
};

struct AdvanceEvents {
    bool entry_created = false;
    int interior_created = 0;
    bool punch_through = false;
    bool backed_out = false;
};

/// Creates the entry constraint on first surface crossing (the insertion face
/// is the z = 0 plane of the foam), appends an interior constraint whenever
/// the tip slides more than `spacing` past the deepest one, re-projects all
/// arc coordinates, and transports lateral frames by minimal rotation.
///
/// A tip that leaves the mesh close to the entry anchor (within one spacing
/// along the shaft) has slipped back out of the insertion face: the set is
/// cleared and deactivated (`backed_out`) and a later crossing re-creates the
/// entry. Leaving the mesh anywhere deeper is a punch-through.
AdvanceEvents advance_insertion(const NeedleState& needle, const TissueModel& tissue,
                                const TissueState& tissue_state, InsertionConstraintSet& set,
                                double spacing);

/// Current world position of a constraint's tissue anchor.
Vec3 anchor_position(const InsertionConstraint& c, const TissueModel& tissue,
                     const TissueState& state);

/// Lateral violation components, 2 per constraint: d_a . (needle point - anchor).
VecX constraint_violations(const InsertionConstraintSet& set, const NeedleState& needle,
                           const TissueModel& tissue, const TissueState& tissue_state);

/// Constraint-rate Jacobians over full DOF vectors: row pairs measure the
/// lateral relative velocity j_n . w + j_t . v. The needle block interpolates
/// the two nodes bracketing `arc` (translations only); the tissue block
/// carries negated barycentric weights.
struct ConstraintJacobians {
    SpMat needle;  // 2m x 6*n_needle_nodes
    SpMat tissue;  // 2m x 3*n_tissue_nodes
};
ConstraintJacobians constraint_jacobians(const InsertionConstraintSet& set,
                                         const NeedleState& needle, const TissueModel& tissue,
                                         const TissueState& tissue_state);

struct CoupledSolution {
    VecX dv_a;
    VecX dv_b;
    VecX lambda;
};

/// KKT solve via the Schur complement W = Ja A^-1 Ja^T + Jb B^-1 Jb^T for
///   A dv_a = rhs_a + Ja^T lambda,  B dv_b = rhs_b + Jb^T lambda,
///   Ja dv_a + Jb dv_b = target_rate.
/// `solve_a`/`solve_b` apply A^-1 and B^-1 to a dense vector.
template <class SolveA, class SolveB>
CoupledSolution solve_coupled_step(SolveA&& solve_a, SolveB&& solve_b, const SpMat& ja,
                                   const SpMat& jb, const VecX& rhs_a, const VecX& rhs_b,
                                   const VecX& target_rate) {
    const Eigen::Index m = ja.rows();
    CoupledSolution out;
    const VecX free_a = solve_a(rhs_a);
    const VecX free_b = solve_b(rhs_b);
    if (m == 0) {
        out.dv_a = free_a;
        out.dv_b = free_b;
        out.lambda = VecX();
        return out;
    }
    MatX inv_a_jat(ja.cols(), m), inv_b_jbt(jb.cols(), m);
    for (Eigen::Index k = 0; k < m; ++k) {
        inv_a_jat.col(k) = solve_a(VecX(ja.row(k).transpose()));
        inv_b_jbt.col(k) = solve_b(VecX(jb.row(k).transpose()));
    }
    const MatX w = ja * inv_a_jat + jb * inv_b_jbt;
    const VecX residual = target_rate - ja * free_a - jb * free_b;
    const Eigen::LDLT<MatX> wldlt(w);
    if (wldlt.info() != Eigen::Success || !wldlt.isPositive())
        throw SimulationError("singular constraint system in coupled solve");
    out.lambda = wldlt.solve(residual);
    out.dv_a = free_a + inv_a_jat * out.lambda;
    out.dv_b = free_b + inv_b_jbt * out.lambda;
    return out;
}

}  // namespace needleforge
