#include "needleforge/coupling.hpp"

#include <algorithm>
#include <cmath>

namespace needleforge {
namespace {

constexpr double kEntryPlaneEpsilon = 1e-12;  // m past z = 0 counts as inside

/// Any unit vector orthogonal to a given unit axis.
Vec3 orthogonal_unit(const Vec3& axis) {
    Vec3 seed = Vec3::UnitX();
    if (std::abs(axis.x()) > 0.9) seed = Vec3::UnitY();
    return (seed - seed.dot(axis) * axis).normalized();
}

InsertionConstraint make_constraint(const Vec3& point, double arc, const Vec3& axis,
                                    const TissueModel& tissue, const TissueState& state) {
    const auto loc = locate_point_deformed(tissue.mesh, state.positions, point);
    if (!loc) throw SimulationError("constraint anchor lies outside the tissue mesh");
    InsertionConstraint c;
    c.arc = arc;
    c.tet = loc->tet;
    c.bary = loc->barycentric;
    c.rest_point = Vec3::Zero();
    const auto tet = tissue.mesh.tets.row(c.tet);
    for (int a = 0; a < 4; ++a) c.rest_point += c.bary[a] * Vec3(tissue.mesh.nodes.row(tet[a]));
    c.lateral0 = orthogonal_unit(axis);
    c.lateral1 = axis.cross(c.lateral0).normalized();
    return c;
}

}  // namespace

Vec3 anchor_position(const InsertionConstraint& c, const TissueModel& tissue,
                     const TissueState& state) {
    const auto tet = tissue.mesh.tets.row(c.tet);
    Vec3 p = Vec3::Zero();
    for (int a = 0; a < 4; ++a) p += c.bary[a] * Vec3(state.positions.row(tet[a]));
    return p;
}

AdvanceEvents advance_insertion(const NeedleState& needle, const TissueModel& tissue,
                                const TissueState& tissue_state, InsertionConstraintSet& set,
                                double spacing) {
    AdvanceEvents events;
    const Vec3 tip = needle_tip(needle);
    const double total_length = needle_total_length(needle);

    if (!set.active) {
        if (set.has_last_tip && tip.z() > kEntryPlaneEpsilon) {
            // Anchor at the surface crossing; after a back-out the relaxing
            // surface can sit ahead of the z = 0 plane, in which case the tip
            // itself is the first point known to be inside. When neither is
            // locatable yet the attempt repeats on the next advance.
            Vec3 anchor_pt = tip;
            if (set.last_tip.z() <= kEntryPlaneEpsilon) {
                const double t =
                    (kEntryPlaneEpsilon - set.last_tip.z()) / (tip.z() - set.last_tip.z());
                anchor_pt = set.last_tip + t * (tip - set.last_tip);
            }
            if (!locate_point_deformed(tissue.mesh, tissue_state.positions, anchor_pt))
                anchor_pt = tip;
            if (locate_point_deformed(tissue.mesh, tissue_state.positions, anchor_pt)) {
                const double arc = project_onto_needle(needle, anchor_pt);
                set.constraints.push_back(
                    make_constraint(anchor_pt, arc, axis_at(needle, arc), tissue, tissue_state));
                set.active = true;
                events.entry_created = true;
            }
        }
    } else {
        // Re-project anchors onto the current needle and transport frames.
        for (auto& c : set.constraints) {
            const Vec3 anchor = anchor_position(c, tissue, tissue_state);
            c.arc = project_onto_needle(needle, anchor);
            const Vec3 old_axis = c.lateral0.cross(c.lateral1);
            const Vec3 new_axis = axis_at(needle, c.arc);
            const Quat transport = rotation_between(old_axis.normalized(), new_axis);
            c.lateral0 = transport * c.lateral0;
            c.lateral0 = (c.lateral0 - c.lateral0.dot(new_axis) * new_axis).normalized();
            c.lateral1 = new_axis.cross(c.lateral0).normalized();
        }

        if (!locate_point_deformed(tissue.mesh, tissue_state.positions, tip,
                                   set.constraints.back().tet)) {
            if (total_length - set.constraints.front().arc <= spacing) {
                set.constraints.clear();
                set.active = false;
                events.backed_out = true;
                set.last_tip = tip;
                set.has_last_tip = true;
            } else {
                events.punch_through = true;
            }
            return events;
        }

        const double deepest = set.constraints.back().arc;
        if (total_length - deepest > spacing) {
            set.constraints.push_back(make_constraint(tip, total_length,
                                                      axis_at(needle, total_length), tissue,
                                                      tissue_state));
            ++events.interior_created;
        }
    }

    set.last_tip = tip;
    set.has_last_tip = true;
    return events;
}

VecX constraint_violations(const InsertionConstraintSet& set, const NeedleState& needle,
                           const TissueModel& tissue, const TissueState& tissue_state) {
    VecX c(2 * set.count());
    for (int k = 0; k < set.count(); ++k) {
        const auto& con = set.constraints[static_cast<std::size_t>(k)];
        const Vec3 gap =
            interpolate_point(needle, con.arc).position - anchor_position(con, tissue, tissue_state);
        c[2 * k] = con.lateral0.dot(gap);
        c[2 * k + 1] = con.lateral1.dot(gap);
    }
    return c;
}

ConstraintJacobians constraint_jacobians(const InsertionConstraintSet& set,
                                         const NeedleState& needle, const TissueModel& tissue,
                                         const TissueState& tissue_state) {
    (void)tissue_state;
    const int m = set.count();
    ConstraintJacobians j;
    j.needle.resize(2 * m, 6 * static_cast<int>(needle.positions.rows()));
    j.tissue.resize(2 * m, 3 * tissue.node_count());
    std::vector<Triplet> tn, tt;
    tn.reserve(static_cast<std::size_t>(m) * 12);
    tt.reserve(static_cast<std::size_t>(m) * 24);
    for (int k = 0; k < m; ++k) {
        const auto& con = set.constraints[static_cast<std::size_t>(k)];
        const PolylinePoint pt = interpolate_point(needle, con.arc);
        const double wn[2] = {1.0 - pt.xi, pt.xi};
        const Vec3 dirs[2] = {con.lateral0, con.lateral1};
        const auto tet = tissue.mesh.tets.row(con.tet);
        for (int a = 0; a < 2; ++a) {
            const int row = 2 * k + a;
            for (int node = 0; node < 2; ++node)
                for (int i = 0; i < 3; ++i)
                    tn.emplace_back(row, 6 * (pt.element + node) + i, wn[node] * dirs[a][i]);
            for (int v = 0; v < 4; ++v)
                for (int i = 0; i < 3; ++i)
                    tt.emplace_back(row, 3 * tet[v] + i, -con.bary[v] * dirs[a][i]);
        }
    }
    j.needle.setFromTriplets(tn.begin(), tn.end());
    j.tissue.setFromTriplets(tt.begin(), tt.end());
    return j;
}

}  // namespace needleforge
