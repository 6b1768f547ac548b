#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "needleforge/inverse_controller.hpp"
#include "needleforge/scene_config.hpp"
#include "needleforge/trajectory.hpp"
#include "needleforge/types.hpp"

namespace needleforge {

/// One supervised sample: effector position and tip error in, commanded
/// effector displacement out (the controller's command relative to the
/// effector position it was issued from). All in mm.
struct Sample {
    Vec3 effector_mm = Vec3::Zero();
    Vec3 error_mm = Vec3::Zero();
    Vec3 command_mm = Vec3::Zero();
};

struct Dataset {
    std::vector<Sample> samples;
    std::uint64_t seed = 0;
    double noise_mm = 0.0;
    std::string config_hash;
    std::string set_name;
    int trajectory_count = 0;
    long raw_count = 0;  // samples recorded before subsampling
    int divergences = 0;
};

struct DataGenParams {
    TrajectoryGridParams grid;
    CurvedSetParams curved;
    double target_noise = 0.00025;  // m
    long budget = 100000;
    double split_ratio = 0.9;
};

void validate(const DataGenParams& p);

using GenProgress = std::function<void(int done, int total)>;

/// Runs the inverse-simulation controller over every trajectory with noisy
/// targets, records [effector, tip error] -> command pairs while the needle
/// is inserting, then subsamples to the budget (order-preserving seeded
/// selection). Trajectory runs use seeds derived from `seed` and their id,
/// so results are identical for any `jobs`. Diverged runs keep their partial
/// samples and are counted.
Dataset generate_dataset(const SceneConfig& scene, const ControlGains& gains,
                         const std::vector<Trajectory>& trajectories, double target_noise,
                         long budget, std::uint64_t seed, int jobs,
                         const GenProgress& progress = {});

/// Seeded uniform shuffle, first floor(ratio * N) rows to train.
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double ratio,
                                          std::uint64_t seed);

MatX inputs_matrix(const Dataset& ds);   // N x 6: [effector_mm, error_mm]
MatX outputs_matrix(const Dataset& ds);  // N x 3: command_mm

std::uint64_t dataset_hash(const Dataset& ds);

/// CSV with the fixed header and full-precision rows; a `<path>.meta.json`
/// sidecar records seed, noise, config hash, and counts.
void save_dataset_csv(const Dataset& ds, const std::string& path);
Dataset load_dataset_csv(const std::string& path);

extern const char* const kDatasetCsvHeader;

}  // namespace needleforge
