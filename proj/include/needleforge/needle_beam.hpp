#pragma once

#include "needleforge/materials.hpp"
#include "needleforge/types.hpp"

#include <vector>

namespace needleforge {

/// Serially linked Timoshenko beam. Node DOF order is [translation, rotation]
/// per node; the needle axis is local +x, so the base frame maps +x onto the
/// world insertion direction.
struct NeedleModel {
    BeamParams params;
    int n_nodes = 0;
    double element_length = 0.0;       // rest length, m
    Mat12 element_stiffness_local;     // shared by all elements

    int dof_count() const { return 6 * n_nodes; }
};

struct NeedleState {
    Eigen::Matrix<double, Eigen::Dynamic, 3> positions;
    std::vector<Quat> orientations;
    RigidPose base_pose;  // node 0 rigidly follows this
};

/// Standard two-node 3-D Timoshenko stiffness in the element frame (x axial)
/// with shear parameter phi = 12EI/(kappa G A L^2).
Mat12 beam_element_stiffness(const BeamParams& p, double element_length);

NeedleModel build_needle(const BeamParams& p);

/// Straight needle along the base frame's +x axis, tip at node n-1.
NeedleState init_needle_state(const NeedleModel& model, const RigidPose& base_pose);

inline Vec3 needle_tip(const NeedleState& state) {
    return state.positions.row(state.positions.rows() - 1);
}

/// Current frame of element e: mean of the node orientations, minimally
/// rotated so its x axis matches the chord direction.
Mat3 element_frame(const NeedleState& state, int e);

/// Co-rotational internal forces at the current state (6 per node).
VecX needle_internal_forces(const NeedleModel& model, const NeedleState& state);

/// Frozen-frame tangent stiffness, dense 6n x 6n.
MatX needle_tangent(const NeedleModel& model, const NeedleState& state);

/// Static clamped-base solve under a transverse tip point load; returns the
/// transverse tip displacement magnitude.
double cantilever_tip_deflection(const BeamParams& p, double tip_load);

/// Point on the needle polyline at arc length s from the base (clamped to
/// [0, total length]); also reports the element and local coordinate.
struct PolylinePoint {
    Vec3 position;
    int element;
    double xi;  // in [0, 1] within the element
};
PolylinePoint interpolate_point(const NeedleState& state, double arc);

/// Unit tangent of the polyline at arc length s.
Vec3 axis_at(const NeedleState& state, double arc);

/// Arc coordinate of the polyline point closest to p.
double project_onto_needle(const NeedleState& state, const Vec3& p);

double needle_total_length(const NeedleState& state);

}  // namespace needleforge
