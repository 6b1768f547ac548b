#include "needleforge/trajectory.hpp"

#include <algorithm>
#include <cmath>

#include "needleforge/errors.hpp"

namespace needleforge {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr int kInsideScanSamples = 512;

void validate_grid(const TrajectoryGridParams& g) {
    if (g.grid_x < 1 || g.grid_y < 1) throw ConfigError("trajectory grid must be >= 1x1");
    if (g.grid_x > 1 && g.extent_x <= 0.0)
        throw ConfigError("trajectory grid extent_x must be > 0");
    if (g.grid_y > 1 && g.extent_y <= 0.0)
        throw ConfigError("trajectory grid extent_y must be > 0");
    if (g.depth <= 0.0) throw ConfigError("trajectory depth must be > 0");
}

bool inside_foam(const Vec3& p, const Vec3& size) {
    constexpr double tol = 1e-9;
    return p.x() >= -tol && p.x() <= size.x() + tol && p.y() >= -tol &&
           p.y() <= size.y() + tol && p.z() >= -tol && p.z() <= size.z() + tol;
}

bool path_inside_foam(const Trajectory& t, const Vec3& size) {
    for (int k = 0; k <= kInsideScanSamples; ++k) {
        const double u = static_cast<double>(k) / kInsideScanSamples;
        if (!inside_foam(trajectory_point(t, u), size)) return false;
    }
    return true;
}

}  // namespace

Vec3 trajectory_point(const Trajectory& t, double u) {
    Vec3 p = t.entry + u * (t.endpoint - t.entry);
    if (t.kind == TrajectoryKind::Curved) {
        p.x() += t.amplitude * (std::sin(kTwoPi * u + t.phase_x) - std::sin(t.phase_x));
        p.y() += t.amplitude * (std::sin(kTwoPi * u + t.phase_y) - std::sin(t.phase_y));
    }
    return p;
}

std::vector<Trajectory> straight_grid(const TrajectoryGridParams& grid,
                                      const SceneConfig& scene) {
    validate_grid(grid);
    if (grid.depth > scene.foam.size.z())
        throw ConfigError("trajectory depth exceeds the foam depth");
    std::vector<Trajectory> out;
    out.reserve(static_cast<std::size_t>(grid.grid_x) * grid.grid_y);
    const double step_x = grid.grid_x > 1 ? grid.extent_x / (grid.grid_x - 1) : 0.0;
    const double step_y = grid.grid_y > 1 ? grid.extent_y / (grid.grid_y - 1) : 0.0;
    for (int iy = 0; iy < grid.grid_y; ++iy) {
        for (int ix = 0; ix < grid.grid_x; ++ix) {
            Trajectory t;
            t.id = iy * grid.grid_x + ix;
            t.kind = TrajectoryKind::Straight;
            t.entry = scene.entry_point;
            t.endpoint = scene.entry_point;
            t.endpoint.x() += -0.5 * grid.extent_x + ix * step_x;
            t.endpoint.y() += -0.5 * grid.extent_y + iy * step_y;
            t.endpoint.z() = grid.depth;
            if (!inside_foam(t.endpoint, scene.foam.size))
                throw ConfigError("trajectory grid endpoint lies outside the foam");
            out.push_back(t);
        }
    }
    return out;
}

std::vector<Trajectory> curved_set(const CurvedSetParams& params,
                                   const TrajectoryGridParams& grid,
                                   const SceneConfig& scene, std::uint64_t seed,
                                   int* rejected) {
    if (params.count < 0) throw ConfigError("curved trajectory count must be >= 0");
    if (params.amplitude < 0.0) throw ConfigError("curved amplitude must be >= 0");
    const std::vector<Trajectory> bases = straight_grid(grid, scene);
    Rng rng(derive_seed(seed, 0xC1A5ULL));
    std::vector<Trajectory> out;
    out.reserve(static_cast<std::size_t>(params.count));
    int rejections = 0;
    const long attempt_cap = 200L * std::max(params.count, 1);
    long attempts = 0;
    for (int c = 0; c < params.count; ++c) {
        for (;;) {
            if (++attempts > attempt_cap)
                throw ConfigError(
                    "curved trajectory rejection rate too high; amplitude does not fit the foam");
            const std::uint64_t pick = rng.below(bases.size());
            Trajectory t = bases[static_cast<std::size_t>(pick)];
            t.id = c;
            t.kind = TrajectoryKind::Curved;
            t.amplitude = params.amplitude;
            t.phase_x = rng.uniform(0.0, kTwoPi);
            t.phase_y = rng.uniform(0.0, kTwoPi);
            if (path_inside_foam(t, scene.foam.size)) {
                out.push_back(t);
                break;
            }
            ++rejections;
        }
    }
    if (rejected) *rejected = rejections;
    return out;
}

TrajectorySampler::TrajectorySampler(const Trajectory& t, int table_size) : trajectory_(t) {
    if (table_size < 1) throw UsageError("trajectory table size must be >= 1");
    points_.resize(static_cast<std::size_t>(table_size) + 1);
    cumulative_.resize(points_.size());
    for (int k = 0; k <= table_size; ++k)
        points_[static_cast<std::size_t>(k)] =
            trajectory_point(t, static_cast<double>(k) / table_size);
    cumulative_[0] = 0.0;
    for (std::size_t k = 1; k < points_.size(); ++k)
        cumulative_[k] = cumulative_[k - 1] + (points_[k] - points_[k - 1]).norm();
}

Vec3 TrajectorySampler::point_at_arc(double s) const {
    if (!(s > 0.0)) return points_.front();
    const double total = cumulative_.back();
    if (s >= total) return points_.back();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
    const std::size_t hi = static_cast<std::size_t>(it - cumulative_.begin());
    const std::size_t lo = hi - 1;
    const double seg = cumulative_[hi] - cumulative_[lo];
    const double w = seg > 0.0 ? (s - cumulative_[lo]) / seg : 0.0;
    return points_[lo] + w * (points_[hi] - points_[lo]);
}

Vec3 target_schedule(const TrajectorySampler& sampler, double t, double speed) {
    if (speed <= 0.0) throw UsageError("target schedule needs speed > 0");
    return sampler.point_at_arc(speed * t);
}

Vec3 perturb_target(const Vec3& p, double amplitude, Rng& rng) {
    if (amplitude == 0.0) return p;
    Vec3 out = p;
    for (int k = 0; k < 3; ++k) out(k) += rng.uniform(-amplitude, amplitude);
    return out;
}

std::string to_string(TrajectoryKind kind) {
    return kind == TrajectoryKind::Straight ? "straight" : "curved";
}

}  // namespace needleforge
