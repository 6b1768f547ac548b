#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "needleforge/rng.hpp"
#include "needleforge/scene_config.hpp"
#include "needleforge/types.hpp"

namespace needleforge {

enum class TrajectoryKind { Straight, Curved };

/// A reference path from the entry point to an endpoint on the far plane.
/// Straight paths are the chord; curved paths add a sinusoidal lateral
/// overlay that vanishes at both ends:
///   offset_k(u) = amplitude * (sin(2*pi*u + phase_k) - sin(phase_k)),
/// with u the depth fraction along the chord and k in {x, y}.
struct Trajectory {
    int id = 0;
    TrajectoryKind kind = TrajectoryKind::Straight;
    Vec3 entry = Vec3::Zero();
    Vec3 endpoint = Vec3::Zero();
    double amplitude = 0.0;
    double phase_x = 0.0;
    double phase_y = 0.0;
};

Vec3 trajectory_point(const Trajectory& t, double u);

struct TrajectoryGridParams {
    int grid_x = 15;
    int grid_y = 7;
    double extent_x = 0.042;  // m, full span of endpoint offsets in x
    double extent_y = 0.018;  // m
    double depth = 0.110;     // m, endpoint plane depth below the entry face
};

/// Straight trajectories fanning from the entry point to a regular grid of
/// endpoints centred under it. Ordered x-fastest, id = iy * grid_x + ix.
std::vector<Trajectory> straight_grid(const TrajectoryGridParams& grid,
                                      const SceneConfig& scene);

struct CurvedSetParams {
    int count = 200;
    double amplitude = 0.010;  // m
};

/// Curved trajectories built on straight bases picked with the seeded
/// generator; candidates whose path leaves the foam are rejected and
/// redrawn. `rejected` (optional) receives the rejection count.
std::vector<Trajectory> curved_set(const CurvedSetParams& params,
                                   const TrajectoryGridParams& grid,
                                   const SceneConfig& scene, std::uint64_t seed,
                                   int* rejected = nullptr);

/// Arc-length parametrization of a trajectory over a dense chordal table, so
/// equal arc increments give equal spatial speed along curved paths too.
class TrajectorySampler {
public:
    explicit TrajectorySampler(const Trajectory& t, int table_size = 2048);

    /// Point at arc length s from the entry, clamped to [0, total_length].
    Vec3 point_at_arc(double s) const;
    double total_length() const { return cumulative_.back(); }
    const Trajectory& trajectory() const { return trajectory_; }
    Vec3 endpoint() const { return trajectory_.endpoint; }

private:
    Trajectory trajectory_;
    std::vector<Vec3> points_;
    std::vector<double> cumulative_;
};

/// Target position at time t under constant insertion speed; holds the
/// endpoint after the arc saturates.
Vec3 target_schedule(const TrajectorySampler& sampler, double t, double speed);

/// Adds independent uniform noise on [-amplitude, amplitude] per component
/// (x, y, z draw order).
Vec3 perturb_target(const Vec3& p, double amplitude, Rng& rng);

std::string to_string(TrajectoryKind kind);

}  // namespace needleforge
