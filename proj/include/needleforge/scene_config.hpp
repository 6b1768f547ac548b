#pragma once

#include "needleforge/materials.hpp"
#include "needleforge/mesh.hpp"
#include "needleforge/types.hpp"

#include <cstdint>

namespace needleforge {

struct SimParams {
    double dt = 0.010;               // s
    double insertion_speed = 0.005;  // m/s, nominal target speed along the path
    double speed_headroom = 1.5;     // effector speed cap as a multiple of insertion_speed
    Vec3 gravity = Vec3::Zero();     // m/s^2
    double tangent_refresh_angle = 0.05;  // rad of co-rotational drift triggering refresh
    int settle_steps = 2500;         // settle budget after target saturation
};

struct CouplingParams {
    double spacing = 0.002;       // m between sliding constraints
    double position_tol = 1e-6;   // m, accepted lateral violation
    double baumgarte = 0.1;       // fraction of violation corrected per step
};

struct SceneConfig {
    FoamSpec foam;
    MaterialParams material;
    BeamParams needle;
    Vec3 entry_point{0.050, 0.050, 0.0};  // center of the z = 0 insertion face
    Vec3 insertion_axis{0.0, 0.0, 1.0};
    SimParams sim;
    CouplingParams coupling;
    std::uint64_t seed = 42;
};

inline SceneConfig default_scene_config() {
    SceneConfig cfg;
    cfg.entry_point = Vec3(cfg.foam.size.x() / 2.0, cfg.foam.size.y() / 2.0, 0.0);
    return cfg;
}

inline void validate(const SceneConfig& cfg) {
    if (!(cfg.foam.size.array() > 0.0).all() || !(cfg.foam.resolution.array() >= 1).all())
        throw ConfigError("invalid foam spec");
    validate(cfg.material);
    validate(cfg.needle);
    if (cfg.sim.dt <= 0.0) throw ConfigError("sim dt must be > 0");
    if (cfg.sim.insertion_speed <= 0.0) throw ConfigError("insertion speed must be > 0");
    if (cfg.sim.speed_headroom < 1.0) throw ConfigError("speed headroom must be >= 1");
    if (cfg.sim.settle_steps < 0) throw ConfigError("settle steps must be >= 0");
    if (cfg.coupling.spacing <= 0.0) throw ConfigError("constraint spacing must be > 0");
    if (cfg.coupling.position_tol <= 0.0) throw ConfigError("position tolerance must be > 0");
    if (cfg.coupling.baumgarte < 0.0 || cfg.coupling.baumgarte > 1.0)
        throw ConfigError("baumgarte factor must lie in [0, 1]");
    if (std::abs(cfg.insertion_axis.norm() - 1.0) > 1e-9)
        throw ConfigError("insertion axis must be unit length");
    if (cfg.entry_point.z() != 0.0 || cfg.entry_point.x() < 0.0 ||
        cfg.entry_point.x() > cfg.foam.size.x() || cfg.entry_point.y() < 0.0 ||
        cfg.entry_point.y() > cfg.foam.size.y())
        throw ConfigError("entry point must lie on the z = 0 insertion face");
}

}  // namespace needleforge
