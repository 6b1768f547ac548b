#pragma once

#include "needleforge/coupling.hpp"
#include "needleforge/fem_tissue.hpp"
#include "needleforge/needle_beam.hpp"
#include "needleforge/scene_config.hpp"

#include <Eigen/SparseCholesky>

#include <cstdint>
#include <memory>

namespace needleforge {

enum class SimStatus { PreInsertion, Inserting, Done, Diverged, OutOfDomain };

const char* to_string(SimStatus status);

struct EffectorCommand {
    Vec3 target_translation = Vec3::Zero();
    Vec3 rcm_point = Vec3::Zero();
};

/// Constant-speed base kinematics with RCM-slaved orientation: the base moves
/// toward the commanded translation by at most speed*dt, and its needle axis
/// is re-aligned to pass through the RCM point (the insertion axis while the
/// needle is still outside the tissue).
RigidPose apply_effector_motion(const RigidPose& base, const EffectorCommand& cmd,
                                double speed, double dt, bool inserting,
                                const Vec3& insertion_axis);

/// Coupled needle-tissue scene stepped with implicit Euler. The needle is
/// quasi-static (no inertia); the tissue carries lumped mass and Rayleigh
/// damping. The tissue tangent is frozen between refreshes triggered by
/// co-rotational drift; the needle tangent, being banded and highly
/// anisotropic, is reassembled exactly every step. Forces and constraint data
/// stay current every step, so the per-step KKT solve is exact for the
/// operators in use.
///
/// Cloning is cheap: factorization and linearization caches are immutable and
/// shared. A cloned scene stepped with the same command reproduces the
/// original bitwise.
class SimScene {
public:
    static SimScene build(const SceneConfig& cfg);

    /// Builds (or reuses) the pre-step linearization cache for the current
    /// state. Called implicitly by step(); exposed so that controller trial
    /// steps cloned from this scene share one cache.
    void prepare();

    /// One implicit-Euler step under the command. Throws UsageError when the
    /// scene can no longer be stepped (diverged / out of domain).
    void step(const EffectorCommand& cmd);

    /// Trial probe for Jacobian estimation: displaces the base directly by
    /// `offset` (bypassing the speed clamp) and advances one step.
    void step_with_base_offset(const Vec3& offset);

    SimScene clone() const { return *this; }

    SimStatus status() const { return status_; }
    double time() const { return time_; }
    double dt() const { return config_->sim.dt; }
    const SceneConfig& config() const { return *config_; }

    Vec3 effector_position() const { return needle_.base_pose.translation; }
    Vec3 tip_position() const { return needle_tip(needle_); }
    Vec3 entry_point() const { return config_->entry_point; }

    /// Displacement of the entry-anchor material point from rest; zero before
    /// the entry constraint exists.
    Vec3 entry_displacement() const;

    const InsertionConstraintSet& constraints() const { return set_; }
    const TissueModel& tissue_model() const { return *tissue_model_; }
    const TissueState& tissue_state() const { return tissue_; }
    const NeedleModel& needle_model() const { return *needle_model_; }
    const NeedleState& needle_state() const { return needle_; }

    /// Largest lateral constraint violation at the current state, in metres.
    double max_lateral_violation() const;

    int tangent_refresh_count() const { return refresh_count_; }

    void mark_done();

    std::uint64_t state_hash() const;

private:
    struct Linearization;
    struct StepCache;

    SimScene() = default;
    void refresh_linearization(const std::vector<Mat3>& rotations);
    void run_step(const RigidPose& new_base);

    std::shared_ptr<const SceneConfig> config_;
    std::shared_ptr<const TissueModel> tissue_model_;
    std::shared_ptr<const NeedleModel> needle_model_;
    std::shared_ptr<const Linearization> lin_;
    std::shared_ptr<const StepCache> cache_;
    TissueState tissue_;
    NeedleState needle_;
    InsertionConstraintSet set_;
    SimStatus status_ = SimStatus::PreInsertion;
    double time_ = 0.0;
    std::uint64_t version_ = 0;
    int refresh_count_ = 0;
};

}  // namespace needleforge
