#include "needleforge/inverse_controller.hpp"

#include "needleforge/errors.hpp"

namespace needleforge {

ObjectiveVector ScenePlant::measure(const Vec3& p_target) const {
    ObjectiveVector g;
    g.tip_error = p_target - scene_->tip_position();
    g.entry_displacement = scene_->entry_displacement();
    return g;
}

ObjectiveVector ScenePlant::probe(const Vec3& base_offset, const Vec3& p_target) const {
    scene_->prepare();
    SimScene trial = scene_->clone();
    trial.step_with_base_offset(base_offset);
    if (trial.status() == SimStatus::Diverged)
        throw SimulationError("probe step diverged");
    if (trial.status() == SimStatus::OutOfDomain)
        throw SimulationError("probe step left the tissue domain");
    ObjectiveVector g;
    g.tip_error = p_target - trial.tip_position();
    g.entry_displacement = trial.entry_displacement();
    return g;
}

JacobianEstimate estimate_jacobian(const ControlPlant& plant, const Vec3& p_target,
                                   double fd_step) {
    if (fd_step <= 0.0) throw UsageError("estimate_jacobian: fd_step must be > 0");
    JacobianEstimate est;
    try {
        const Vec6 g0 = plant.probe(Vec3::Zero(), p_target).stacked();
        for (int j = 0; j < 3; ++j) {
            const Vec6 gj = plant.probe(fd_step * Vec3::Unit(j), p_target).stacked();
            est.j.col(j) = (gj - g0) / fd_step;
        }
        est.ok = est.j.allFinite();
    } catch (const SimulationError&) {
        est.ok = false;
    }
    return est;
}

Vec3 compute_command(const ObjectiveJacobian& j, const ObjectiveVector& g,
                     const ControlGains& gains, const Vec3& effector) {
    Vec6 w;
    w << Vec3::Constant(gains.weight_tip), Vec3::Constant(gains.weight_entry);
    const Mat3 normal =
        j.transpose() * w.asDiagonal() * j + gains.alpha * Mat3::Identity();
    const Vec3 rhs = j.transpose() * (w.asDiagonal() * g.stacked());
    const Vec3 delta = -normal.ldlt().solve(rhs);
    return effector + delta;
}

Vec3 InverseController::command(const ControlPlant& plant, const Vec3& p_target) {
    if (!has_jacobian_ || age_ >= gains_.jacobian_reuse) {
        const JacobianEstimate est = estimate_jacobian(plant, p_target, gains_.fd_step);
        if (est.ok) {
            j_ = est.j;
            has_jacobian_ = true;
            age_ = 0;
        } else {
            ++fallback_count_;  // keep the previous Jacobian
        }
    }
    ++age_;
    if (!has_jacobian_) return plant.effector_position();
    return compute_command(j_, plant.measure(p_target), gains_, plant.effector_position());
}

}  // namespace needleforge
