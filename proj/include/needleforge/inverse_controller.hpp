#pragma once

#include "needleforge/simulator.hpp"
#include "needleforge/types.hpp"

namespace needleforge {

struct ObjectiveVector {
    Vec3 tip_error = Vec3::Zero();          // P_target - P
    Vec3 entry_displacement = Vec3::Zero();  // entry anchor drift from rest

    Vec6 stacked() const {
        Vec6 g;
        g << tip_error, entry_displacement;
        return g;
    }
};

struct ControlGains {
    double weight_tip = 1.0;
    double weight_entry = 0.1;
    double alpha = 1e-3;     // damping of the least-squares solve
    double fd_step = 1e-4;   // m, finite-difference probe size
    int jacobian_reuse = 1;  // control steps between re-estimations
};

inline void validate(const ControlGains& g) {
    if (g.weight_tip <= 0.0 || g.weight_entry < 0.0)
        throw ConfigError("controller weights: weight_tip > 0, weight_entry >= 0 required");
    if (g.alpha <= 0.0) throw ConfigError("controller alpha must be > 0");
    if (g.fd_step <= 0.0) throw ConfigError("controller fd_step must be > 0");
    if (g.jacobian_reuse < 1) throw ConfigError("controller jacobian_reuse must be >= 1");
}

/// What the controller can do with the system under control: read the
/// objectives, and run throwaway one-step probes of base displacements.
class ControlPlant {
public:
    virtual ~ControlPlant() = default;
    virtual ObjectiveVector measure(const Vec3& p_target) const = 0;
    /// One trial step on an internal clone with the base displaced by
    /// `base_offset`; the plant itself is untouched. Throws SimulationError
    /// when the trial diverges.
    virtual ObjectiveVector probe(const Vec3& base_offset, const Vec3& p_target) const = 0;
    virtual Vec3 effector_position() const = 0;
};

/// Plant view of a live simulation scene. Probes share the scene's pre-step
/// linearization cache, so the three-plus-one trial steps per control step
/// reuse one assembly.
class ScenePlant final : public ControlPlant {
public:
    explicit ScenePlant(SimScene& scene) : scene_(&scene) {}
    ObjectiveVector measure(const Vec3& p_target) const override;
    ObjectiveVector probe(const Vec3& base_offset, const Vec3& p_target) const override;
    Vec3 effector_position() const override { return scene_->effector_position(); }

private:
    SimScene* scene_;
};

using ObjectiveJacobian = Eigen::Matrix<double, 6, 3>;

struct JacobianEstimate {
    ObjectiveJacobian j = ObjectiveJacobian::Zero();
    bool ok = false;
};

/// Finite-difference Jacobian of the stacked objectives w.r.t. the three base
/// translation DOFs: column j = (g(+delta e_j) - g(0)) / delta, each g from a
/// one-step probe.
JacobianEstimate estimate_jacobian(const ControlPlant& plant, const Vec3& p_target,
                                   double fd_step);

/// Damped weighted least squares: delta = -(J^T W J + alpha I)^-1 J^T W g,
/// returned as the absolute command C = effector + delta.
Vec3 compute_command(const ObjectiveJacobian& j, const ObjectiveVector& g,
                     const ControlGains& gains, const Vec3& effector);

/// Stateful wrapper handling Jacobian reuse and divergence fallback.
class InverseController {
public:
    explicit InverseController(const ControlGains& gains) : gains_(gains) { validate(gains); }

    Vec3 command(const ControlPlant& plant, const Vec3& p_target);

    int fallback_count() const { return fallback_count_; }
    const ControlGains& gains() const { return gains_; }

private:
    ControlGains gains_;
    ObjectiveJacobian j_ = ObjectiveJacobian::Zero();
    bool has_jacobian_ = false;
    int age_ = 0;
    int fallback_count_ = 0;
};

}  // namespace needleforge
