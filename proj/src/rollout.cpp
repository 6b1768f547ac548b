#include "needleforge/rollout.hpp"

#include <chrono>
#include <cmath>
#include <limits>

namespace needleforge {

namespace {
// Settle phase ends early once the endpoint error is this small (m) or has
// stopped improving by at least the improvement floor for this many steps.
constexpr double kSettleConvergedTol = 2e-5;
constexpr double kSettleImproveFloor = 1e-7;
constexpr int kSettleStalePatience = 25;
}  // namespace

RolloutResult run_rollout(const SceneConfig& cfg, const TrajectorySampler& sampler,
                          StepController& controller, const RolloutOptions& options) {
    if (options.target_noise > 0.0 && options.noise_rng == nullptr)
        throw UsageError("rollout with target noise needs a noise generator");
    if (options.target_noise < 0.0) throw UsageError("rollout target noise must be >= 0");

    // Aim the needle along the initial stretch of the path before inserting,
    // as an operator would; for a straight trajectory this is the chord, for
    // a curved one the entry tangent, which can sit tens of degrees off the
    // chord. The controller then only corrects deviations from the nominal
    // path instead of fighting the starting orientation.
    SceneConfig aligned = cfg;
    const Vec3 lead =
        sampler.point_at_arc(std::min(0.002, sampler.total_length())) - cfg.entry_point;
    if (lead.norm() > 1e-12) aligned.insertion_axis = lead.normalized();

    SimScene scene = SimScene::build(aligned);
    const double speed = cfg.sim.insertion_speed;
    const double total = sampler.total_length();
    const long schedule_steps =
        static_cast<long>(std::ceil(total / (speed * cfg.sim.dt))) + cfg.sim.settle_steps;
    const long step_cap = 2 * schedule_steps + 200;

    RolloutResult result;
    if (options.record) result.steps.reserve(static_cast<std::size_t>(schedule_steps) + 1);
    int settle_remaining = cfg.sim.settle_steps;
    double settle_best = std::numeric_limits<double>::infinity();
    int settle_stale = 0;
    using clock = std::chrono::steady_clock;

    for (long k = 0; k < step_cap; ++k) {
        const double t = scene.time();
        const double arc = speed * t;
        const bool saturated = arc >= total;
        Vec3 target = sampler.point_at_arc(arc);
        if (options.target_noise > 0.0)
            target = perturb_target(target, options.target_noise, *options.noise_rng);

        const auto tic = options.time_commands ? clock::now() : clock::time_point();
        const Vec3 cmd = controller.command(scene, target);
        const double cmd_ms =
            options.time_commands
                ? std::chrono::duration<double, std::milli>(clock::now() - tic).count()
                : 0.0;

        if (options.record) {
            StepRecord rec;
            rec.t = t;
            rec.effector = scene.effector_position();
            rec.tip = scene.tip_position();
            rec.target = target;
            rec.tip_error = target - scene.tip_position();
            rec.command = cmd;
            rec.command_ms = cmd_ms;
            rec.status = scene.status();
            result.steps.push_back(rec);
        }

        scene.step(EffectorCommand{cmd, scene.entry_point()});
        ++result.total_steps;
        if (scene.status() == SimStatus::Diverged || scene.status() == SimStatus::OutOfDomain)
            break;
        if (saturated) {
            const double err = (sampler.endpoint() - scene.tip_position()).norm();
            if (err < settle_best - kSettleImproveFloor) {
                settle_best = err;
                settle_stale = 0;
            } else {
                ++settle_stale;
            }
            if (err < kSettleConvergedTol || settle_stale > kSettleStalePatience ||
                --settle_remaining < 0) {
                scene.mark_done();
                break;
            }
        }
    }

    result.final_status = scene.status();
    result.final_error = (sampler.endpoint() - scene.tip_position()).norm();
    result.duration = scene.time();
    return result;
}

}  // namespace needleforge
