#include "doctest.h"

#include "needleforge/coupling.hpp"
#include "needleforge/mesh.hpp"
#include "needleforge/rng.hpp"

#include <cmath>

using namespace needleforge;

namespace {

struct InsertionRig {
    TissueModel tissue;
    TissueState tissue_state;
    NeedleModel needle_model;
    NeedleState needle;
    InsertionConstraintSet set;
    double spacing = 0.002;

    InsertionRig() {
        FoamSpec foam;
        foam.size = Vec3(0.040, 0.040, 0.060);
        foam.resolution = Eigen::Vector3i(4, 4, 6);
        tissue = build_tissue_model(build_foam_mesh(foam), MaterialParams{});
        tissue_state = rest_state(tissue);

        BeamParams beam;
        beam.length = 0.080;
        beam.n_elements = 16;
        needle_model = build_needle(beam);
        RigidPose base;
        base.rotation = rotation_between(Vec3::UnitX(), Vec3::UnitZ());
        base.translation = Vec3(0.020, 0.020, -beam.length - 0.0005);
        needle = init_needle_state(needle_model, base);
    }

    // Rigidly advances the whole needle by dz along +z and updates constraints.
    AdvanceEvents push(double dz) {
        needle.base_pose.translation.z() += dz;
        for (Eigen::Index r = 0; r < needle.positions.rows(); ++r)
            needle.positions(r, 2) += dz;
        return advance_insertion(needle, tissue, tissue_state, set, spacing);
    }
};

}  // namespace

TEST_CASE("coupled KKT solve matches the two-block scalar oracle") {
    // A = 2, B = 3, Ja = [1], Jb = [-1], rhs_a = 1, rhs_b = 2, target = 0.5.
    // By hand: free_a = 1/2, free_b = 2/3, W = 1/2 + 1/3, residual = 2/3,
    // lambda = 4/5, dv_a = 9/10, dv_b = 2/5.
    SpMat ja(1, 1), jb(1, 1);
    ja.insert(0, 0) = 1.0;
    jb.insert(0, 0) = -1.0;
    VecX rhs_a = VecX::Constant(1, 1.0);
    VecX rhs_b = VecX::Constant(1, 2.0);
    VecX target = VecX::Constant(1, 0.5);
    const auto sol = solve_coupled_step([](const VecX& v) { return VecX(v / 2.0); },
                                        [](const VecX& v) { return VecX(v / 3.0); }, ja, jb,
                                        rhs_a, rhs_b, target);
    CHECK(sol.lambda(0) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(sol.dv_a(0) == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(sol.dv_b(0) == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("coupled KKT solve satisfies stationarity and the constraint on random systems") {
    Rng rng(2024);
    for (int trial = 0; trial < 5; ++trial) {
        const int na = 8, nb = 6, m = 3;
        MatX la = MatX::Zero(na, na), lb = MatX::Zero(nb, nb);
        for (int i = 0; i < na; ++i)
            for (int j = 0; j < na; ++j) la(i, j) = rng.uniform(-1.0, 1.0);
        for (int i = 0; i < nb; ++i)
            for (int j = 0; j < nb; ++j) lb(i, j) = rng.uniform(-1.0, 1.0);
        const MatX a = la * la.transpose() + MatX::Identity(na, na);
        const MatX b = lb * lb.transpose() + MatX::Identity(nb, nb);
        MatX jad = MatX::Zero(m, na), jbd = MatX::Zero(m, nb);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < na; ++j) jad(i, j) = rng.uniform(-1.0, 1.0);
            for (int j = 0; j < nb; ++j) jbd(i, j) = rng.uniform(-1.0, 1.0);
        }
        VecX rhs_a(na), rhs_b(nb), target(m);
        for (int i = 0; i < na; ++i) rhs_a(i) = rng.uniform(-1.0, 1.0);
        for (int i = 0; i < nb; ++i) rhs_b(i) = rng.uniform(-1.0, 1.0);
        for (int i = 0; i < m; ++i) target(i) = rng.uniform(-1.0, 1.0);

        const Eigen::LDLT<MatX> a_ldlt(a), b_ldlt(b);
        const SpMat ja = jad.sparseView(), jb = jbd.sparseView();
        const auto sol = solve_coupled_step(
            [&](const VecX& v) { return VecX(a_ldlt.solve(v)); },
            [&](const VecX& v) { return VecX(b_ldlt.solve(v)); }, ja, jb, rhs_a, rhs_b,
            target);

        CHECK((a * sol.dv_a - rhs_a - jad.transpose() * sol.lambda).norm() < 1e-9);
        CHECK((b * sol.dv_b - rhs_b - jbd.transpose() * sol.lambda).norm() < 1e-9);
        CHECK((jad * sol.dv_a + jbd * sol.dv_b - target).norm() < 1e-9);
    }
}

TEST_CASE("coupled solve without constraints reduces to the unconstrained solves") {
    SpMat ja(0, 2), jb(0, 3);
    VecX rhs_a(2), rhs_b(3);
    rhs_a << 2.0, -4.0;
    rhs_b << 3.0, 6.0, -9.0;
    const auto sol = solve_coupled_step([](const VecX& v) { return VecX(2.0 * v); },
                                        [](const VecX& v) { return VecX(v / 3.0); }, ja, jb,
                                        rhs_a, rhs_b, VecX());
    CHECK((sol.dv_a - (Eigen::Vector2d() << 4.0, -8.0).finished()).norm() == 0.0);
    CHECK((sol.dv_b - Vec3(1.0, 2.0, -3.0)).norm() == 0.0);
    CHECK(sol.lambda.size() == 0);
}

TEST_CASE("coupled solve rejects a non-positive Schur complement") {
    SpMat ja(1, 1), jb(1, 1);
    ja.insert(0, 0) = 1.0;
    jb.insert(0, 0) = 1.0;
    const VecX one = VecX::Constant(1, 1.0);
    CHECK_THROWS_AS(solve_coupled_step([](const VecX& v) { return VecX(-v); },
                                       [](const VecX& v) { return VecX(-v); }, ja, jb, one,
                                       one, one),
                    SimulationError);
}

TEST_CASE("insertion constraints appear at the surface crossing and every spacing after") {
    InsertionRig rig;

    SUBCASE("no contact leaves the set inactive") {
        const auto events = rig.push(0.0001);
        CHECK_FALSE(events.entry_created);
        CHECK_FALSE(rig.set.active);
        CHECK(rig.set.count() == 0);
    }

    SUBCASE("crossing the insertion face creates the entry constraint") {
        bool created = false;
        for (int i = 0; i < 20 && !created; ++i) created = rig.push(0.0001).entry_created;
        CHECK(created);
        CHECK(rig.set.active);
        CHECK(rig.set.count() == 1);
        const Vec3 anchor = anchor_position(rig.set.entry(), rig.tissue, rig.tissue_state);
        CHECK((anchor - Vec3(0.020, 0.020, 0.0)).norm() < 2e-4);
    }

    SUBCASE("tip 3.2 spacings deep gives one entry plus three interior constraints") {
        // Land the tip exactly at depth 3.2 * spacing.
        const double start_gap = 0.0005;
        int steps = 0;
        while (needle_tip(rig.needle).z() < -1e-12) {
            rig.push(0.0001);
            ++steps;
            REQUIRE(steps < 10);
        }
        const double depth = 3.2 * rig.spacing - needle_tip(rig.needle).z();
        const int n = 64;
        for (int i = 0; i < n; ++i) rig.push(depth / n);
        CHECK(needle_tip(rig.needle).z() == doctest::Approx(3.2 * rig.spacing).epsilon(1e-9));
        CHECK(rig.set.count() == 4);
        (void)start_gap;
    }

    SUBCASE("anchors reconstruct the tip position at creation time") {
        double max_err = 0.0;
        for (int i = 0; i < 260; ++i) {
            const int before = rig.set.count();
            const auto events = rig.push(0.0001);
            if (events.entry_created) continue;  // entry lands at the crossing, not the tip
            if (rig.set.count() > before) {
                const Vec3 anchor = anchor_position(rig.set.constraints.back(), rig.tissue,
                                                    rig.tissue_state);
                max_err = std::max(max_err, (anchor - needle_tip(rig.needle)).norm());
            }
        }
        CHECK(rig.set.count() > 5);
        CHECK(max_err < 1e-10);
    }

    SUBCASE("arc coordinates increase and spacing stays within the contract band") {
        for (int i = 0; i < 260; ++i) rig.push(0.0001);
        REQUIRE(rig.set.count() >= 5);
        for (int k = 1; k < rig.set.count(); ++k) {
            const double gap = rig.set.constraints[static_cast<std::size_t>(k)].arc -
                               rig.set.constraints[static_cast<std::size_t>(k - 1)].arc;
            CHECK(gap > 0.0);
            CHECK(gap >= 0.5 * rig.spacing);
            CHECK(gap <= 1.5 * rig.spacing);
        }
    }

    SUBCASE("leaving through the far face reports punch-through") {
        AdvanceEvents events;
        for (int i = 0; i < 700; ++i) {
            events = rig.push(0.0001);
            if (events.punch_through) break;
        }
        CHECK(events.punch_through);
    }

    SUBCASE("slipping back out of the entry face clears the set") {
        for (int i = 0; i < 10; ++i) rig.push(0.0001);
        REQUIRE(rig.set.active);

        AdvanceEvents events;
        for (int i = 0; i < 20 && rig.set.active; ++i) events = rig.push(-0.0001);
        CHECK(events.backed_out);
        CHECK_FALSE(events.punch_through);
        CHECK_FALSE(rig.set.active);
        CHECK(rig.set.count() == 0);

        AdvanceEvents re;
        for (int i = 0; i < 20 && !rig.set.active; ++i) re = rig.push(0.0001);
        CHECK(re.entry_created);
        CHECK(rig.set.count() == 1);
        CHECK((rig.set.entry().rest_point - Vec3(0.020, 0.020, 0.0)).norm() <= 2e-4);
    }
}

TEST_CASE("lateral frames stay orthonormal and orthogonal to the needle axis") {
    InsertionRig rig;
    for (int i = 0; i < 220; ++i) rig.push(0.0001);
    REQUIRE(rig.set.count() >= 5);
    for (const InsertionConstraint& c : rig.set.constraints) {
        const Vec3 axis = axis_at(rig.needle, c.arc);
        CHECK(std::abs(c.lateral0.norm() - 1.0) < 1e-9);
        CHECK(std::abs(c.lateral1.norm() - 1.0) < 1e-9);
        CHECK(std::abs(c.lateral0.dot(c.lateral1)) < 1e-9);
        CHECK(std::abs(c.lateral0.dot(axis)) < 1e-9);
        CHECK(std::abs(c.lateral1.dot(axis)) < 1e-9);
        const double bary_sum = c.bary.sum();
        CHECK(bary_sum == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(c.bary.minCoeff() >= -1e-12);
    }
}

TEST_CASE("violations vanish at creation and see only lateral relative motion") {
    InsertionRig rig;
    for (int i = 0; i < 220; ++i) rig.push(0.0001);
    REQUIRE(rig.set.count() >= 5);

    const VecX v0 = constraint_violations(rig.set, rig.needle, rig.tissue, rig.tissue_state);
    CHECK(v0.lpNorm<Eigen::Infinity>() < 1e-10);

    SUBCASE("axial tissue shift is invisible") {
        TissueState shifted = rig.tissue_state;
        shifted.positions.col(2).array() += 0.001;
        const VecX v = constraint_violations(rig.set, rig.needle, rig.tissue, shifted);
        CHECK(v.lpNorm<Eigen::Infinity>() < 1e-9);
    }

    SUBCASE("lateral tissue shift appears in full on every constraint") {
        TissueState shifted = rig.tissue_state;
        shifted.positions.col(0).array() += 0.001;
        const VecX v = constraint_violations(rig.set, rig.needle, rig.tissue, shifted);
        for (int k = 0; k < rig.set.count(); ++k) {
            const double lateral = std::hypot(v(2 * k), v(2 * k + 1));
            CHECK(lateral == doctest::Approx(0.001).epsilon(1e-9));
        }
    }
}

TEST_CASE("constraint jacobians match direct differencing of the violations") {
    InsertionRig rig;
    for (int i = 0; i < 220; ++i) rig.push(0.0001);
    REQUIRE(rig.set.count() >= 5);

    const auto jac = constraint_jacobians(rig.set, rig.needle, rig.tissue, rig.tissue_state);
    CHECK(jac.needle.rows() == 2 * rig.set.count());
    CHECK(jac.tissue.rows() == 2 * rig.set.count());
    CHECK(jac.needle.cols() == 6 * rig.needle_model.n_nodes);
    CHECK(jac.tissue.cols() == 3 * rig.tissue.node_count());

    Rng rng(99);
    const double h = 1e-7;
    VecX dq_needle = VecX::Zero(jac.needle.cols());
    for (int n = 0; n < rig.needle_model.n_nodes; ++n)
        for (int i = 0; i < 3; ++i) dq_needle(6 * n + i) = h * rng.uniform(-1.0, 1.0);
    VecX dq_tissue(jac.tissue.cols());
    for (Eigen::Index i = 0; i < dq_tissue.size(); ++i)
        dq_tissue(i) = h * rng.uniform(-1.0, 1.0);

    NeedleState needle_pert = rig.needle;
    for (int n = 0; n < rig.needle_model.n_nodes; ++n)
        needle_pert.positions.row(n) += dq_needle.segment<3>(6 * n).transpose();
    TissueState tissue_pert = rig.tissue_state;
    for (int n = 0; n < rig.tissue.node_count(); ++n)
        tissue_pert.positions.row(n) += dq_tissue.segment<3>(3 * n).transpose();

    const VecX v0 =
        constraint_violations(rig.set, rig.needle, rig.tissue, rig.tissue_state);
    const VecX v1 = constraint_violations(rig.set, needle_pert, rig.tissue, tissue_pert);
    const VecX predicted = jac.needle * dq_needle + jac.tissue * dq_tissue;
    CHECK(((v1 - v0) - predicted).lpNorm<Eigen::Infinity>() < 1e-11);
}
