#include "needleforge/needle_beam.hpp"

#include <doctest.h>

#include <cmath>

#include "needleforge/rng.hpp"

using namespace needleforge;

namespace {

BeamParams test_beam() {
    BeamParams p;
    p.young_modulus = 200e9;
    p.shear_modulus = 200e9 / 2.6;
    p.radius = 0.5e-3;
    p.length = 0.120;
    p.n_elements = 12;
    p.shear_correction = 0.9;
    return p;
}

double section_area(const BeamParams& p) { return M_PI * p.radius * p.radius; }
double section_inertia(const BeamParams& p) {
    return M_PI * std::pow(p.radius, 4) / 4.0;
}

}  // namespace

TEST_CASE("element stiffness matches the Timoshenko closed forms") {
    const auto p = test_beam();
    const double l = p.length / p.n_elements;
    const Mat12 k = beam_element_stiffness(p, l);

    const double a = section_area(p);
    const double i = section_inertia(p);
    const double j = 2.0 * i;
    const double phi =
        12.0 * p.young_modulus * i / (p.shear_correction * p.shear_modulus * a * l * l);

    CHECK(k(0, 0) == doctest::Approx(p.young_modulus * a / l).epsilon(1e-12));
    CHECK(k(0, 6) == doctest::Approx(-p.young_modulus * a / l).epsilon(1e-12));
    CHECK(k(3, 3) == doctest::Approx(p.shear_modulus * j / l).epsilon(1e-12));
    CHECK(k(3, 9) == doctest::Approx(-p.shear_modulus * j / l).epsilon(1e-12));

    const double ei = p.young_modulus * i;
    CHECK(k(1, 1) == doctest::Approx(12.0 * ei / (l * l * l * (1.0 + phi))).epsilon(1e-12));
    CHECK(k(1, 5) == doctest::Approx(6.0 * ei / (l * l * (1.0 + phi))).epsilon(1e-12));
    CHECK(k(5, 5) == doctest::Approx((4.0 + phi) * ei / (l * (1.0 + phi))).epsilon(1e-12));
    CHECK(k(5, 11) == doctest::Approx((2.0 - phi) * ei / (l * (1.0 + phi))).epsilon(1e-12));
    CHECK(k(2, 2) == doctest::Approx(12.0 * ei / (l * l * l * (1.0 + phi))).epsilon(1e-12));
    CHECK(k(2, 4) == doctest::Approx(-6.0 * ei / (l * l * (1.0 + phi))).epsilon(1e-12));

    CHECK((k - k.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * k.cwiseAbs().maxCoeff());
}

TEST_CASE("element stiffness kills all six rigid modes") {
    const auto p = test_beam();
    const double l = p.length / p.n_elements;
    const Mat12 k = beam_element_stiffness(p, l);
    const double scale = k.cwiseAbs().maxCoeff();

    const Vec3 x0 = Vec3::Zero(), x1 = Vec3(l, 0, 0);
    for (int axis = 0; axis < 3; ++axis) {
        VecX t = VecX::Zero(12);
        t[axis] = t[6 + axis] = 1.0;
        CHECK((k * t).cwiseAbs().maxCoeff() <= 1e-14 * scale);

        const Vec3 omega = Vec3::Unit(axis);
        VecX r = VecX::Zero(12);
        r.segment<3>(0) = omega.cross(x0);
        r.segment<3>(3) = omega;
        r.segment<3>(6) = omega.cross(x1);
        r.segment<3>(9) = omega;
        CHECK((k * r).cwiseAbs().maxCoeff() <= 1e-12 * scale);
    }
}

TEST_CASE("cantilever tip deflection matches the Timoshenko formula") {
    const auto p = test_beam();
    const double load = 0.02;  // N, keeps deflection in the linear range
    const double a = section_area(p);
    const double i = section_inertia(p);
    const double expected =
        load * std::pow(p.length, 3) / (3.0 * p.young_modulus * i) +
        load * p.length / (p.shear_correction * p.shear_modulus * a);
    const double solved = cantilever_tip_deflection(p, load);
    // Nodally exact element; the 1% bound is the documented accuracy contract.
    CHECK(std::abs(solved - expected) <= 0.01 * expected);
    CHECK(solved == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("prescribed base translation propagates rigidly through the tangent") {
    const auto p = test_beam();
    const NeedleModel model = build_needle(p);
    RigidPose base;
    base.rotation = rotation_between(Vec3::UnitX(), Vec3::UnitZ());
    base.translation = Vec3(0.02, -0.01, -p.length);
    const NeedleState state = init_needle_state(model, base);

    const MatX k = needle_tangent(model, state);
    const int nf = model.dof_count() - 6;
    const Eigen::LLT<MatX> llt(MatX(k.bottomRightCorner(nf, nf)));

    Vec6 u0 = Vec6::Zero();
    u0.head<3>() = Vec3(1.0, -2.0, 0.5) * 1e-4;
    const VecX uf = llt.solve(VecX(-k.block(6, 0, nf, 6) * u0));
    for (int n = 0; n < model.n_nodes - 1; ++n) {
        CHECK((uf.segment<3>(6 * n) - u0.head<3>()).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(uf.segment<3>(6 * n + 3).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("prescribed base rotation propagates as a rigid lever") {
    const auto p = test_beam();
    const NeedleModel model = build_needle(p);
    const NeedleState state = init_needle_state(model, RigidPose{});

    const MatX k = needle_tangent(model, state);
    const int nf = model.dof_count() - 6;
    const Eigen::LLT<MatX> llt(MatX(k.bottomRightCorner(nf, nf)));

    const Vec3 theta = Vec3(0.3, -0.2, 0.4) * 1e-4;
    Vec6 u0 = Vec6::Zero();
    u0.tail<3>() = theta;
    const VecX uf = llt.solve(VecX(-k.block(6, 0, nf, 6) * u0));
    for (int n = 1; n < model.n_nodes; ++n) {
        const Vec3 lever = state.positions.row(n) - state.positions.row(0);
        const Vec3 expected = theta.cross(lever);
        CHECK((uf.segment<3>(6 * (n - 1)) - expected).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((uf.segment<3>(6 * (n - 1) + 3) - theta).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("internal forces vanish at rest and under a rigid transform") {
    const auto p = test_beam();
    const NeedleModel model = build_needle(p);
    NeedleState state = init_needle_state(model, RigidPose{});
    CHECK(needle_internal_forces(model, state).cwiseAbs().maxCoeff() <= 1e-9);

    RigidPose moved;
    moved.translation = Vec3(0.04, 0.02, -0.03);
    moved.rotation = quat_from_rotvec(Vec3(0.3, 0.5, -0.2));
    for (int n = 0; n < model.n_nodes; ++n) {
        state.positions.row(n) = moved.apply(state.positions.row(n));
        state.orientations[static_cast<std::size_t>(n)] =
            (moved.rotation * state.orientations[static_cast<std::size_t>(n)]).normalized();
    }
    state.base_pose = compose(moved, state.base_pose);
    const VecX f = needle_internal_forces(model, state);
    // Scale: bending stiffness entries reach ~1e7; 1e-6 force is ~1e-13 strain.
    CHECK(f.cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("tangent matches central-difference forces at the straight state") {
    const auto p = test_beam();
    const NeedleModel model = build_needle(p);
    const NeedleState state = init_needle_state(model, RigidPose{});
    const MatX k = needle_tangent(model, state);

    Rng rng(77);
    VecX delta(model.dof_count());
    for (int i = 0; i < delta.size(); ++i) delta[i] = rng.uniform(-1.0, 1.0);
    delta *= 1e-8;

    auto displaced = [&](double sign) {
        NeedleState s = state;
        for (int n = 0; n < model.n_nodes; ++n) {
            s.positions.row(n) += sign * delta.segment<3>(6 * n).transpose();
            s.orientations[static_cast<std::size_t>(n)] =
                (quat_from_rotvec(sign * delta.segment<3>(6 * n + 3)) *
                 s.orientations[static_cast<std::size_t>(n)])
                    .normalized();
        }
        return needle_internal_forces(model, s);
    };

    const VecX fd = (displaced(1.0) - displaced(-1.0)) / 2.0;
    const VecX lin = -k * delta;
    CHECK((fd - lin).cwiseAbs().maxCoeff() <= 1e-4 * lin.cwiseAbs().maxCoeff());
}

TEST_CASE("polyline interpolation, tangent, and projection are consistent") {
    const auto p = test_beam();
    const NeedleModel model = build_needle(p);
    RigidPose base;
    base.rotation = rotation_between(Vec3::UnitX(), Vec3(0, 0, 1));
    base.translation = Vec3(0.05, 0.05, -p.length);
    const NeedleState state = init_needle_state(model, base);

    CHECK(needle_total_length(state) == doctest::Approx(p.length).epsilon(1e-12));
    CHECK(needle_tip(state).isApprox(Vec3(0.05, 0.05, 0.0), 1e-12));

    for (const double s : {0.0, 0.013, 0.0601, p.length}) {
        const auto pt = interpolate_point(state, s);
        CHECK(pt.position.isApprox(base.translation + s * Vec3::UnitZ(), 1e-12));
        CHECK(pt.xi >= 0.0);
        CHECK(pt.xi <= 1.0);
        CHECK(axis_at(state, s).isApprox(Vec3::UnitZ(), 1e-12));
        CHECK(project_onto_needle(state, pt.position) == doctest::Approx(s).epsilon(1e-9));
    }

    // Clamping beyond the ends.
    CHECK(interpolate_point(state, -0.01).position.isApprox(base.translation, 1e-12));
    CHECK(interpolate_point(state, 1.0).position.isApprox(Vec3(0.05, 0.05, 0.0), 1e-12));

    // Projection of an off-axis point lands at the foot of the perpendicular.
    const Vec3 off = base.translation + 0.03 * Vec3::UnitZ() + Vec3(0.002, -0.001, 0.0);
    CHECK(project_onto_needle(state, off) == doctest::Approx(0.03).epsilon(1e-9));
}

TEST_CASE("element frames follow the base pose at rest") {
    const auto p = test_beam();
    const NeedleModel model = build_needle(p);
    RigidPose base;
    base.rotation = quat_from_rotvec(Vec3(0.2, -0.1, 0.5));
    const NeedleState state = init_needle_state(model, base);
    for (int e = 0; e < p.n_elements; ++e)
        CHECK(element_frame(state, e).isApprox(base.rotation.toRotationMatrix(), 1e-10));
}
