#pragma once

#include <cstdint>
#include <string>

#include "needleforge/errors.hpp"
#include "needleforge/types.hpp"

namespace needleforge {

/// Single-hidden-layer extreme learning machine mapping the six-component
/// feature vector [effector_mm, tip_error_mm] to a three-component effector
/// command in mm. Hidden weights are random and frozen; only the linear
/// output layer is trained, in closed form.
struct ElmModel {
    std::uint64_t seed = 0;
    int hidden_count = 0;
    MatX w_in;   // hidden_count x 6
    VecX bias;   // hidden_count
    MatX beta;   // 3 x hidden_count, output layer
    Vec6 input_mean = Vec6::Zero();
    Vec6 input_scale = Vec6::Ones();
    Vec3 output_mean = Vec3::Zero();
    Vec3 output_scale = Vec3::Ones();
    double lambda = 0.0;
    std::string trained_on;  // hash of the training dataset, informational
    bool trained = false;
};

struct ElmTrainConfig {
    int hidden_count = 25;
    double lambda = 1e-6;
    std::uint64_t seed = 42;
};

struct ElmTrainReport {
    double train_rmse_mm = 0.0;
    int rows = 0;
};

/// Draws w_in and bias i.i.d. uniform on [-1, 1] from the seeded generator
/// (w_in row by row, then bias).
ElmModel init_model(const ElmTrainConfig& cfg);

/// Sigmoid hidden layer on the normalized input.
VecX hidden_features(const ElmModel& model, const Vec6& x_mm);

/// Fits normalization stats and solves the ridge-regularized output layer
/// beta^T = (H^T H + lambda I)^-1 H^T Y on normalized targets.
/// x: N x 6 (mm), y: N x 3 (mm). Throws DataError on empty or non-finite data.
ElmTrainReport train(ElmModel& model, const MatX& x_mm, const MatX& y_mm);

Vec3 predict(const ElmModel& model, const Vec6& x_mm);

/// Root mean squared error over all 3N output components, in mm.
double rmse_mm(const ElmModel& model, const MatX& x_mm, const MatX& y_mm);

std::string model_to_json(const ElmModel& model);
ElmModel model_from_json(const std::string& text);

void save_model(const ElmModel& model, const std::string& path);
ElmModel load_model(const std::string& path);

}  // namespace needleforge
