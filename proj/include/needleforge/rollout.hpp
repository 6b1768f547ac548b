#pragma once

#include <memory>
#include <string>
#include <vector>

#include "needleforge/elm.hpp"
#include "needleforge/inverse_controller.hpp"
#include "needleforge/simulator.hpp"
#include "needleforge/trajectory.hpp"

namespace needleforge {

/// One control step per scene step: read the scene, emit the next effector
/// command target.
class StepController {
public:
    virtual ~StepController() = default;
    virtual Vec3 command(SimScene& scene, const Vec3& p_target) = 0;
    virtual std::string name() const = 0;
};

class InverseStepController final : public StepController {
public:
    explicit InverseStepController(const ControlGains& gains) : controller_(gains) {}
    Vec3 command(SimScene& scene, const Vec3& p_target) override {
        ScenePlant plant(scene);
        return controller_.command(plant, p_target);
    }
    std::string name() const override { return "inverse"; }
    int fallback_count() const { return controller_.fallback_count(); }

private:
    InverseController controller_;
};

class ElmStepController final : public StepController {
public:
    explicit ElmStepController(ElmModel model) : model_(std::move(model)) {}
    Vec3 command(SimScene& scene, const Vec3& p_target) override {
        Vec6 x;
        x << scene.effector_position() * kMillimetresPerMetre,
            (p_target - scene.tip_position()) * kMillimetresPerMetre;
        return scene.effector_position() + predict(model_, x) / kMillimetresPerMetre;
    }
    std::string name() const override { return "elm"; }

private:
    ElmModel model_;
};

struct StepRecord {
    double t = 0.0;
    Vec3 effector = Vec3::Zero();
    Vec3 tip = Vec3::Zero();
    Vec3 target = Vec3::Zero();
    Vec3 tip_error = Vec3::Zero();
    Vec3 command = Vec3::Zero();
    double command_ms = 0.0;  // wall time spent computing the command
    SimStatus status = SimStatus::PreInsertion;  // status when the command was computed
};

struct RolloutOptions {
    double target_noise = 0.0;  // m, uniform per component, applied pre-command
    Rng* noise_rng = nullptr;   // required when target_noise > 0
    bool record = true;
    bool time_commands = true;
};

struct RolloutResult {
    std::vector<StepRecord> steps;
    SimStatus final_status = SimStatus::PreInsertion;
    double final_error = 0.0;  // m, |clean endpoint - tip| at the end
    int total_steps = 0;
    double duration = 0.0;  // s of simulated time
};

/// Closed-loop run: schedule the target along the trajectory at the scene's
/// insertion speed, ask the controller for a command each step, integrate,
/// and after the schedule saturates hold the endpoint for the settle window.
RolloutResult run_rollout(const SceneConfig& cfg, const TrajectorySampler& sampler,
                          StepController& controller, const RolloutOptions& options = {});

}  // namespace needleforge
