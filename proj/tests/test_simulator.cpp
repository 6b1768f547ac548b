#include "doctest.h"

#include "needleforge/errors.hpp"
#include "needleforge/simulator.hpp"

#include <cmath>
#include <vector>

using namespace needleforge;

namespace {

SceneConfig small_scene() {
    SceneConfig cfg;
    cfg.foam.size = Vec3(0.040, 0.040, 0.060);
    cfg.foam.resolution = Eigen::Vector3i(4, 4, 6);
    cfg.needle.length = 0.080;
    cfg.needle.n_elements = 16;
    cfg.entry_point = Vec3(0.020, 0.020, 0.0);
    cfg.sim.speed_headroom = 1.0;
    return cfg;
}

EffectorCommand push_command(const SceneConfig& cfg, double depth) {
    EffectorCommand cmd;
    cmd.target_translation =
        cfg.entry_point + (depth - cfg.needle.length) * cfg.insertion_axis;
    cmd.rcm_point = cfg.entry_point;
    return cmd;
}

double tip_lateral(const SimScene& scene) {
    const Vec3 d = scene.tip_position() - scene.entry_point();
    return std::hypot(d.x(), d.y());
}

}  // namespace

TEST_CASE("effector motion is clamped to speed * dt") {
    RigidPose base;
    base.translation = Vec3(0.02, 0.02, -0.08);
    const Vec3 axis = Vec3::UnitZ();

    EffectorCommand cmd;
    cmd.target_translation = base.translation + Vec3(0.0, 0.0, 0.010);
    cmd.rcm_point = Vec3(0.02, 0.02, 0.0);

    RigidPose moved = apply_effector_motion(base, cmd, 0.005, 0.01, true, axis);
    CHECK((moved.translation - base.translation).norm() == doctest::Approx(5e-5).epsilon(1e-12));
    CHECK((moved.translation - base.translation).normalized().isApprox(Vec3::UnitZ(), 1e-12));

    cmd.target_translation = base.translation + Vec3(0.0, 0.0, 1e-5);
    moved = apply_effector_motion(base, cmd, 0.005, 0.01, true, axis);
    CHECK((moved.translation - cmd.target_translation).norm() <= 1e-15);
}

TEST_CASE("effector motion with zero displacement leaves the base unchanged") {
    RigidPose base;
    base.rotation = rotation_between(Vec3::UnitX(), Vec3::UnitZ());
    base.translation = Vec3(0.02, 0.02, -0.08);

    EffectorCommand cmd;
    cmd.target_translation = base.translation;
    cmd.rcm_point = Vec3(0.02, 0.02, 0.0);

    const RigidPose moved = apply_effector_motion(base, cmd, 0.005, 0.01, true, Vec3::UnitZ());
    CHECK((moved.translation - base.translation).norm() == 0.0);
    CHECK(moved.rotation.angularDistance(base.rotation) <= 1e-12);
}

TEST_CASE("effector motion slaves orientation to the RCM point while inserting") {
    RigidPose base;
    base.translation = Vec3(0.02, 0.02, -0.08);
    const Vec3 rcm(0.02, 0.02, 0.0);

    EffectorCommand cmd;
    cmd.target_translation = base.translation + Vec3(0.004, -0.003, 0.001);
    cmd.rcm_point = rcm;

    RigidPose moved = base;
    for (int i = 0; i < 200; ++i) moved = apply_effector_motion(moved, cmd, 0.005, 0.01, true, Vec3::UnitZ());
    CHECK((moved.translation - cmd.target_translation).norm() <= 1e-12);

    const Vec3 shaft = moved.rotation * Vec3::UnitX();
    const Vec3 to_rcm = (rcm - moved.translation).normalized();
    CHECK(shaft.cross(to_rcm).norm() <= 1e-9);
    CHECK(shaft.dot(to_rcm) > 0.0);
}

TEST_CASE("effector motion holds the insertion axis before entry") {
    RigidPose base;
    base.rotation = rotation_between(Vec3::UnitX(), Vec3::UnitZ());
    base.translation = Vec3(0.02, 0.02, -0.08);

    EffectorCommand cmd;
    cmd.target_translation = base.translation + Vec3(0.002, 0.0, 0.0);
    cmd.rcm_point = Vec3(0.02, 0.02, 0.0);

    RigidPose moved = base;
    for (int i = 0; i < 60; ++i) moved = apply_effector_motion(moved, cmd, 0.005, 0.01, false, Vec3::UnitZ());
    CHECK((moved.rotation * Vec3::UnitX()).isApprox(Vec3::UnitZ(), 1e-12));
}

TEST_CASE("a scene at rest with a holding command stays at rest") {
    const SceneConfig cfg = small_scene();
    SimScene scene = SimScene::build(cfg);

    const Eigen::MatrixXd tissue0 = scene.tissue_state().positions;
    const Eigen::MatrixXd needle0 = scene.needle_state().positions;

    EffectorCommand hold;
    hold.target_translation = scene.effector_position();
    hold.rcm_point = cfg.entry_point;
    for (int i = 0; i < 50; ++i) scene.step(hold);

    CHECK((scene.tissue_state().positions - tissue0).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((scene.needle_state().positions - needle0).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(scene.time() == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("straight push through the centre stays on axis") {
    const SceneConfig cfg = small_scene();
    SimScene scene = SimScene::build(cfg);
    const EffectorCommand cmd = push_command(cfg, 0.030);

    bool entered = false;
    double worst_lateral = 0.0;
    double worst_violation = 0.0;
    for (int i = 0; i < 460; ++i) {
        scene.step(cmd);
        if (scene.status() == SimStatus::Inserting) {
            entered = true;
            worst_lateral = std::max(worst_lateral, tip_lateral(scene));
            worst_violation = std::max(worst_violation, scene.max_lateral_violation());
        }
    }

    CHECK(entered);
    CHECK(scene.status() == SimStatus::Inserting);
    CHECK(scene.tip_position().z() == doctest::Approx(0.030).epsilon(0.02));
    CHECK(worst_lateral <= 1e-6);
    CHECK(worst_violation <= cfg.coupling.position_tol);
    CHECK(scene.constraints().count() >= 10);
    CHECK(scene.entry_displacement().head<2>().norm() <= 1e-6);
}

TEST_CASE("status moves from pre-insertion to inserting when the tip enters") {
    const SceneConfig cfg = small_scene();
    SimScene scene = SimScene::build(cfg);
    CHECK(scene.status() == SimStatus::PreInsertion);
    CHECK(scene.entry_displacement().norm() == 0.0);

    const EffectorCommand cmd = push_command(cfg, 0.010);
    int steps_to_entry = 0;
    while (scene.status() == SimStatus::PreInsertion) {
        scene.step(cmd);
        ++steps_to_entry;
        REQUIRE(steps_to_entry < 100);
    }
    CHECK(scene.status() == SimStatus::Inserting);
    CHECK(scene.constraints().count() >= 1);
    CHECK((scene.constraints().entry().rest_point - cfg.entry_point).norm() <= 2e-4);
    CHECK(scene.tip_position().z() >= 0.0);
}

TEST_CASE("backing out of the entry face returns to pre-insertion, then re-enters") {
    const SceneConfig cfg = small_scene();
    SimScene scene = SimScene::build(cfg);

    const EffectorCommand forward = push_command(cfg, 0.004);
    int guard = 0;
    while (scene.status() != SimStatus::Inserting) {
        scene.step(forward);
        REQUIRE(++guard < 100);
    }
    while ((scene.effector_position() - forward.target_translation).norm() > 1e-9) {
        scene.step(forward);
        REQUIRE(++guard < 200);
    }

    EffectorCommand retreat = forward;
    retreat.target_translation -= 0.008 * cfg.insertion_axis;
    while (scene.status() == SimStatus::Inserting) {
        scene.step(retreat);
        REQUIRE(++guard < 500);
    }
    CHECK(scene.status() == SimStatus::PreInsertion);
    CHECK(scene.constraints().count() == 0);
    CHECK_FALSE(scene.constraints().active);
    CHECK(scene.max_lateral_violation() == 0.0);
    for (int i = 0; i < 30; ++i) scene.step(retreat);
    CHECK(scene.status() == SimStatus::PreInsertion);

    const EffectorCommand deeper = push_command(cfg, 0.015);
    while (scene.status() != SimStatus::Inserting) {
        scene.step(deeper);
        REQUIRE(++guard < 900);
    }
    for (int i = 0; i < 200; ++i) scene.step(deeper);
    CHECK(scene.status() == SimStatus::Inserting);
    CHECK(scene.tip_position().z() > 0.010);
    CHECK(scene.max_lateral_violation() <= cfg.coupling.position_tol);
}

TEST_CASE("pushing past the far face leaves the domain") {
    SceneConfig cfg = small_scene();
    cfg.sim.speed_headroom = 4.0;
    SimScene scene = SimScene::build(cfg);
    const EffectorCommand cmd = push_command(cfg, 0.075);

    int steps = 0;
    while (scene.status() == SimStatus::PreInsertion || scene.status() == SimStatus::Inserting) {
        scene.step(cmd);
        ++steps;
        REQUIRE(steps < 2000);
    }
    CHECK(scene.status() == SimStatus::OutOfDomain);
    CHECK(scene.tip_position().z() >= 0.058);
    CHECK_THROWS_AS(scene.step(cmd), UsageError);
}

TEST_CASE("stepping a finished scene is a usage error") {
    const SceneConfig cfg = small_scene();
    SimScene scene = SimScene::build(cfg);
    scene.mark_done();
    CHECK(scene.status() == SimStatus::Done);
    CHECK_THROWS_AS(scene.step(push_command(cfg, 0.010)), UsageError);
}

TEST_CASE("status names are stable") {
    CHECK(std::string(to_string(SimStatus::PreInsertion)) == "pre-insertion");
    CHECK(std::string(to_string(SimStatus::Inserting)) == "inserting");
    CHECK(std::string(to_string(SimStatus::Done)) == "done");
    CHECK(std::string(to_string(SimStatus::Diverged)) == "diverged");
    CHECK(std::string(to_string(SimStatus::OutOfDomain)) == "out-of-domain");
}

TEST_CASE("identical scenes step identically") {
    const SceneConfig cfg = small_scene();
    SimScene a = SimScene::build(cfg);
    SimScene b = SimScene::build(cfg);
    const EffectorCommand cmd = push_command(cfg, 0.020);

    CHECK(a.state_hash() == b.state_hash());
    for (int i = 0; i < 250; ++i) {
        a.step(cmd);
        b.step(cmd);
    }
    CHECK(a.state_hash() == b.state_hash());
    CHECK(a.tip_position() == b.tip_position());
    CHECK(a.max_lateral_violation() == b.max_lateral_violation());
}

TEST_CASE("a clone steps like the original without touching it") {
    const SceneConfig cfg = small_scene();
    SimScene scene = SimScene::build(cfg);
    const EffectorCommand cmd = push_command(cfg, 0.020);
    for (int i = 0; i < 120; ++i) scene.step(cmd);

    const std::uint64_t hash_before = scene.state_hash();
    SimScene clone = scene.clone();
    CHECK(clone.state_hash() == hash_before);

    for (int i = 0; i < 40; ++i) clone.step(cmd);
    CHECK(scene.state_hash() == hash_before);
    CHECK(clone.state_hash() != hash_before);

    SimScene replay = scene.clone();
    for (int i = 0; i < 40; ++i) replay.step(cmd);
    CHECK(replay.state_hash() == clone.state_hash());
}

TEST_CASE("prepare does not change observable state") {
    const SceneConfig cfg = small_scene();
    SimScene scene = SimScene::build(cfg);
    const EffectorCommand cmd = push_command(cfg, 0.020);
    for (int i = 0; i < 80; ++i) scene.step(cmd);

    SimScene other = scene.clone();
    scene.prepare();
    scene.prepare();
    CHECK(scene.state_hash() == other.state_hash());

    scene.step(cmd);
    other.step(cmd);
    CHECK(scene.state_hash() == other.state_hash());
}

TEST_CASE("base offset probes bypass the speed clamp") {
    const SceneConfig cfg = small_scene();
    SimScene scene = SimScene::build(cfg);
    const EffectorCommand cmd = push_command(cfg, 0.020);
    for (int i = 0; i < 120; ++i) scene.step(cmd);

    const Vec3 before = scene.effector_position();
    const double t_before = scene.time();
    const Vec3 offset(0.002, -0.001, 0.0005);
    scene.step_with_base_offset(offset);
    CHECK((scene.effector_position() - (before + offset)).norm() <= 1e-15);
    CHECK(scene.time() == doctest::Approx(t_before + cfg.sim.dt).epsilon(1e-12));
}

TEST_CASE("halving dt converges at first order on a loaded transient") {
    auto sag_at = [](double dt, double t_end) {
        SceneConfig cfg = small_scene();
        cfg.sim.dt = dt;
        cfg.sim.gravity = Vec3(1.2, 0.0, -1.6);
        SimScene scene = SimScene::build(cfg);
        EffectorCommand hold;
        hold.target_translation = scene.effector_position();
        hold.rcm_point = cfg.entry_point;
        const int steps = static_cast<int>(std::llround(t_end / dt));
        for (int i = 0; i < steps; ++i) scene.step(hold);
        return Eigen::MatrixXd(scene.tissue_state().positions);
    };

    const double t_end = 0.1;
    const Eigen::MatrixXd coarse = sag_at(0.010, t_end);
    const Eigen::MatrixXd half = sag_at(0.005, t_end);
    const Eigen::MatrixXd quarter = sag_at(0.0025, t_end);

    const double e_coarse = (coarse - quarter).cwiseAbs().maxCoeff();
    const double e_half = (half - quarter).cwiseAbs().maxCoeff();
    CHECK(e_coarse > 1e-5);  // the transient is actually live at t_end
    CHECK(e_half < e_coarse);
    CHECK(e_coarse / e_half >= 1.8);
}

TEST_CASE("an on-axis push is insensitive to the step size") {
    auto tip_at = [](double dt, double t_end) {
        SceneConfig cfg = small_scene();
        cfg.sim.dt = dt;
        SimScene scene = SimScene::build(cfg);
        const EffectorCommand cmd = push_command(cfg, 0.030);
        const int steps = static_cast<int>(std::llround(t_end / dt));
        for (int i = 0; i < steps; ++i) scene.step(cmd);
        return scene.tip_position();
    };
    CHECK((tip_at(0.010, 2.0) - tip_at(0.005, 2.0)).norm() <= 1e-12);
}
