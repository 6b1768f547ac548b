#include "needleforge/needle_beam.hpp"

#include "needleforge/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace needleforge {
namespace {

struct Section {
    double area;
    double inertia;   // I, both bending axes (circular)
    double torsion;   // J
};

Section section_properties(const BeamParams& p) {
    const double r2 = p.radius * p.radius;
    const double inertia = M_PI * r2 * r2 / 4.0;
    return {M_PI * r2, inertia, 2.0 * inertia};
}

/// Applies the block-diagonal frame rotation diag(R, R, R, R) on both sides.
Mat12 rotate_element_matrix(const Mat12& k_local, const Mat3& r) {
    Mat12 k;
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
            k.block<3, 3>(3 * a, 3 * b) = r * k_local.block<3, 3>(3 * a, 3 * b) * r.transpose();
    return k;
}

/// Local 12-vector of element deformation: [u0, psi0, u1, psi1] in the
/// element frame, with the chord convention putting all stretch in u1.x.
Eigen::Matrix<double, 12, 1> local_deformation(const NeedleModel& model,
                                               const NeedleState& state, int e,
                                               const Mat3& frame) {
    const Vec3 p0 = state.positions.row(e);
    const Vec3 p1 = state.positions.row(e + 1);
    Eigen::Matrix<double, 12, 1> d = Eigen::Matrix<double, 12, 1>::Zero();
    d.segment<3>(6) = frame.transpose() * (p1 - p0);
    d[6] -= model.element_length;
    const Mat3 r0 = state.orientations[static_cast<std::size_t>(e)].toRotationMatrix();
    const Mat3 r1 = state.orientations[static_cast<std::size_t>(e) + 1].toRotationMatrix();
    d.segment<3>(3) = rotvec_from_quat(Quat(frame.transpose() * r0));
    d.segment<3>(9) = rotvec_from_quat(Quat(frame.transpose() * r1));
    return d;
}

}  // namespace

Mat12 beam_element_stiffness(const BeamParams& p, double element_length) {
    validate(p);
    if (element_length <= 0.0) throw ConfigError("beam element length must be > 0");

    const auto [area, inertia, torsion] = section_properties(p);
    const double l = element_length;
    const double e = p.young_modulus, g = p.shear_modulus;
    const double phi = 12.0 * e * inertia / (p.shear_correction * g * area * l * l);

    const double ax = e * area / l;
    const double tr = g * torsion / l;
    const double k1 = 12.0 * e * inertia / ((1.0 + phi) * l * l * l);
    const double k2 = 6.0 * e * inertia / ((1.0 + phi) * l * l);
    const double k3 = (4.0 + phi) * e * inertia / ((1.0 + phi) * l);
    const double k4 = (2.0 - phi) * e * inertia / ((1.0 + phi) * l);

    Mat12 k = Mat12::Zero();
    k(0, 0) = ax;
    k(0, 6) = -ax;
    k(6, 6) = ax;
    k(3, 3) = tr;
    k(3, 9) = -tr;
    k(9, 9) = tr;

    // Bending in the x-y plane: displacements y (1, 7), rotations z (5, 11).
    k(1, 1) = k1;
    k(1, 5) = k2;
    k(1, 7) = -k1;
    k(1, 11) = k2;
    k(5, 5) = k3;
    k(5, 7) = -k2;
    k(5, 11) = k4;
    k(7, 7) = k1;
    k(7, 11) = -k2;
    k(11, 11) = k3;

    // Bending in the x-z plane: displacements z (2, 8), rotations y (4, 10);
    // the coupling terms flip sign.
    k(2, 2) = k1;
    k(2, 4) = -k2;
    k(2, 8) = -k1;
    k(2, 10) = -k2;
    k(4, 4) = k3;
    k(4, 8) = k2;
    k(4, 10) = k4;
    k(8, 8) = k1;
    k(8, 10) = k2;
    k(10, 10) = k3;

    return k.selfadjointView<Eigen::Upper>();
}

NeedleModel build_needle(const BeamParams& p) {
    validate(p);
    NeedleModel model;
    model.params = p;
    model.n_nodes = p.n_elements + 1;
    model.element_length = p.length / p.n_elements;
    model.element_stiffness_local = beam_element_stiffness(p, model.element_length);
    return model;
}

NeedleState init_needle_state(const NeedleModel& model, const RigidPose& base_pose) {
    NeedleState state;
    state.base_pose = base_pose;
    state.base_pose.rotation.normalize();
    state.positions.resize(model.n_nodes, 3);
    state.orientations.assign(static_cast<std::size_t>(model.n_nodes), state.base_pose.rotation);
    const Vec3 axis = state.base_pose.rotate(Vec3::UnitX());
    for (int i = 0; i < model.n_nodes; ++i)
        state.positions.row(i) = state.base_pose.translation + i * model.element_length * axis;
    return state;
}

Mat3 element_frame(const NeedleState& state, int e) {
    const Quat mean = state.orientations[static_cast<std::size_t>(e)].slerp(
        0.5, state.orientations[static_cast<std::size_t>(e) + 1]);
    const Vec3 chord =
        Vec3(state.positions.row(e + 1)) - Vec3(state.positions.row(e));
    const Vec3 current_x = mean * Vec3::UnitX();
    const Quat aligned = rotation_between(current_x, chord.normalized()) * mean;
    return aligned.normalized().toRotationMatrix();
}

VecX needle_internal_forces(const NeedleModel& model, const NeedleState& state) {
    VecX force = VecX::Zero(model.dof_count());
    for (int e = 0; e < model.n_nodes - 1; ++e) {
        const Mat3 frame = element_frame(state, e);
        const Eigen::Matrix<double, 12, 1> fl =
            model.element_stiffness_local * local_deformation(model, state, e, frame);
        for (int a = 0; a < 2; ++a) {
            force.segment<3>(6 * (e + a)) -= frame * fl.segment<3>(6 * a);
            force.segment<3>(6 * (e + a) + 3) -= frame * fl.segment<3>(6 * a + 3);
        }
    }
    return force;
}

MatX needle_tangent(const NeedleModel& model, const NeedleState& state) {
    MatX k = MatX::Zero(model.dof_count(), model.dof_count());
    for (int e = 0; e < model.n_nodes - 1; ++e) {
        const Mat12 ke = rotate_element_matrix(model.element_stiffness_local,
                                               element_frame(state, e));
        k.block<12, 12>(6 * e, 6 * e) += ke;
    }
    return k;
}

double cantilever_tip_deflection(const BeamParams& p, double tip_load) {
    const NeedleModel model = build_needle(p);
    const NeedleState state = init_needle_state(model, RigidPose{});
    const MatX k = needle_tangent(model, state);
    const int n_free = model.dof_count() - 6;
    VecX f = VecX::Zero(n_free);
    f[n_free - 5] = tip_load;  // transverse (local y) load at the tip node
    const Eigen::LDLT<MatX> solver(k.bottomRightCorner(n_free, n_free));
    if (solver.info() != Eigen::Success)
        throw ConfigError("cantilever stiffness factorization failed");
    const VecX u = solver.solve(f);
    return std::abs(u[n_free - 5]);
}

PolylinePoint interpolate_point(const NeedleState& state, double arc) {
    const int n = static_cast<int>(state.positions.rows());
    double remaining = std::max(arc, 0.0);
    for (int e = 0; e < n - 1; ++e) {
        const Vec3 p0 = state.positions.row(e);
        const Vec3 p1 = state.positions.row(e + 1);
        const double len = (p1 - p0).norm();
        if (remaining <= len || e == n - 2) {
            const double xi = len > 0.0 ? std::min(remaining / len, 1.0) : 0.0;
            return {p0 + xi * (p1 - p0), e, xi};
        }
        remaining -= len;
    }
    return {state.positions.row(n - 1), n - 2, 1.0};
}

Vec3 axis_at(const NeedleState& state, double arc) {
    const PolylinePoint pt = interpolate_point(state, arc);
    const Vec3 p0 = state.positions.row(pt.element);
    const Vec3 p1 = state.positions.row(pt.element + 1);
    return (p1 - p0).normalized();
}

double project_onto_needle(const NeedleState& state, const Vec3& p) {
    const int n = static_cast<int>(state.positions.rows());
    double best_dist2 = std::numeric_limits<double>::infinity();
    double best_arc = 0.0;
    double arc_base = 0.0;
    for (int e = 0; e < n - 1; ++e) {
        const Vec3 p0 = state.positions.row(e);
        const Vec3 p1 = state.positions.row(e + 1);
        const Vec3 d = p1 - p0;
        const double len2 = d.squaredNorm();
        const double t = len2 > 0.0 ? std::clamp((p - p0).dot(d) / len2, 0.0, 1.0) : 0.0;
        const double dist2 = (p - (p0 + t * d)).squaredNorm();
        if (dist2 < best_dist2) {
            best_dist2 = dist2;
            best_arc = arc_base + t * std::sqrt(len2);
        }
        arc_base += std::sqrt(len2);
    }
    return best_arc;
}

double needle_total_length(const NeedleState& state) {
    double total = 0.0;
    for (int e = 0; e + 1 < state.positions.rows(); ++e)
        total += (Vec3(state.positions.row(e + 1)) - Vec3(state.positions.row(e))).norm();
    return total;
}

}  // namespace needleforge
