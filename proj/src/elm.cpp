#include "needleforge/elm.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "needleforge/io_util.hpp"
#include "needleforge/rng.hpp"

namespace needleforge {

namespace {

constexpr double kScaleFloor = 1e-12;
constexpr int kInputDim = 6;
constexpr int kOutputDim = 3;

void check_training_data(const MatX& x, const MatX& y) {
    if (x.rows() == 0) throw DataError("training set is empty");
    if (x.cols() != kInputDim)
        throw DataError("training inputs must have 6 columns, got " +
                        std::to_string(x.cols()));
    if (y.cols() != kOutputDim)
        throw DataError("training outputs must have 3 columns, got " +
                        std::to_string(y.cols()));
    if (y.rows() != x.rows())
        throw DataError("input/output row counts differ: " + std::to_string(x.rows()) +
                        " vs " + std::to_string(y.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        if (!x.row(i).allFinite() || !y.row(i).allFinite())
            throw DataError("non-finite value in training row " + std::to_string(i));
    }
}

nlohmann::ordered_json matrix_to_json(const MatX& m) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::ordered_json row = nlohmann::ordered_json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

MatX matrix_from_json(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols,
                      const char* name) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
        throw DataError(std::string("model field '") + name + "' has wrong shape");
    MatX m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
            throw DataError(std::string("model field '") + name + "' has wrong shape");
        for (Eigen::Index c = 0; c < cols; ++c)
            m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

VecX vector_from_json(const nlohmann::json& j, Eigen::Index n, const char* name) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n)
        throw DataError(std::string("model field '") + name + "' has wrong shape");
    VecX v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = j[static_cast<std::size_t>(i)].get<double>();
    return v;
}

}  // namespace

ElmModel init_model(const ElmTrainConfig& cfg) {
    if (cfg.hidden_count < 1) throw ConfigError("hidden_count must be >= 1");
    if (cfg.lambda < 0.0) throw ConfigError("lambda must be >= 0");
    ElmModel m;
    m.seed = cfg.seed;
    m.hidden_count = cfg.hidden_count;
    m.lambda = cfg.lambda;
    m.w_in.resize(cfg.hidden_count, kInputDim);
    m.bias.resize(cfg.hidden_count);
    Rng rng(cfg.seed);
    for (int i = 0; i < cfg.hidden_count; ++i)
        for (int j = 0; j < kInputDim; ++j) m.w_in(i, j) = rng.uniform(-1.0, 1.0);
    for (int i = 0; i < cfg.hidden_count; ++i) m.bias(i) = rng.uniform(-1.0, 1.0);
    m.beta = MatX::Zero(kOutputDim, cfg.hidden_count);
    return m;
}

VecX hidden_features(const ElmModel& model, const Vec6& x_mm) {
    const Vec6 z = (x_mm - model.input_mean).cwiseQuotient(model.input_scale);
    VecX a = model.w_in * z + model.bias;
    return a.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

ElmTrainReport train(ElmModel& model, const MatX& x_mm, const MatX& y_mm) {
    check_training_data(x_mm, y_mm);
    if (model.hidden_count < 1 || model.w_in.rows() != model.hidden_count)
        throw UsageError("train: model has no initialized hidden layer");

    const Eigen::Index n = x_mm.rows();
    model.input_mean = x_mm.colwise().mean();
    model.output_mean = y_mm.colwise().mean();
    for (int j = 0; j < kInputDim; ++j) {
        const double var = (x_mm.col(j).array() - model.input_mean(j)).square().mean();
        model.input_scale(j) = std::max(std::sqrt(var), kScaleFloor);
    }
    for (int j = 0; j < kOutputDim; ++j) {
        const double var = (y_mm.col(j).array() - model.output_mean(j)).square().mean();
        model.output_scale(j) = std::max(std::sqrt(var), kScaleFloor);
    }

    const int h = model.hidden_count;
    MatX hmat(n, h);
    for (Eigen::Index i = 0; i < n; ++i)
        hmat.row(i) = hidden_features(model, x_mm.row(i).transpose()).transpose();

    MatX ynorm(n, kOutputDim);
    for (int j = 0; j < kOutputDim; ++j)
        ynorm.col(j) = (y_mm.col(j).array() - model.output_mean(j)) / model.output_scale(j);

    MatX gram = hmat.transpose() * hmat;
    gram.diagonal().array() += model.lambda;
    const MatX beta_t = gram.ldlt().solve(hmat.transpose() * ynorm);  // h x 3
    if (!beta_t.allFinite()) throw SimulationError("output layer solve produced non-finite weights");
    model.beta = beta_t.transpose();
    model.trained = true;

    ElmTrainReport report;
    report.rows = static_cast<int>(n);
    double sq = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vec3 p = predict(model, x_mm.row(i).transpose());
        sq += (p - Vec3(y_mm.row(i).transpose())).squaredNorm();
    }
    report.train_rmse_mm = std::sqrt(sq / static_cast<double>(kOutputDim * n));
    return report;
}

Vec3 predict(const ElmModel& model, const Vec6& x_mm) {
    if (!model.trained) throw UsageError("predict: model has not been trained");
    const VecX hfeat = hidden_features(model, x_mm);
    const Vec3 ynorm = model.beta * hfeat;
    return model.output_mean + ynorm.cwiseProduct(model.output_scale);
}

double rmse_mm(const ElmModel& model, const MatX& x_mm, const MatX& y_mm) {
    check_training_data(x_mm, y_mm);
    if (!model.trained) throw UsageError("rmse: model has not been trained");
    double sq = 0.0;
    for (Eigen::Index i = 0; i < x_mm.rows(); ++i) {
        const Vec3 p = predict(model, x_mm.row(i).transpose());
        sq += (p - Vec3(y_mm.row(i).transpose())).squaredNorm();
    }
    return std::sqrt(sq / static_cast<double>(kOutputDim * x_mm.rows()));
}

std::string model_to_json(const ElmModel& model) {
    nlohmann::ordered_json j;
    j["format"] = "needleforge-elm-1";
    j["seed"] = model.seed;
    j["hidden_count"] = model.hidden_count;
    j["lambda"] = model.lambda;
    j["trained"] = model.trained;
    j["trained_on"] = model.trained_on;
    j["input_mean"] = std::vector<double>(model.input_mean.data(), model.input_mean.data() + 6);
    j["input_scale"] = std::vector<double>(model.input_scale.data(), model.input_scale.data() + 6);
    j["output_mean"] =
        std::vector<double>(model.output_mean.data(), model.output_mean.data() + 3);
    j["output_scale"] =
        std::vector<double>(model.output_scale.data(), model.output_scale.data() + 3);
    j["w_in"] = matrix_to_json(model.w_in);
    j["bias"] = std::vector<double>(model.bias.data(), model.bias.data() + model.bias.size());
    j["beta"] = matrix_to_json(model.beta);
    return j.dump(2);
}

ElmModel model_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("model file is not valid JSON: ") + e.what());
    }
    try {
        if (j.value("format", std::string()) != "needleforge-elm-1")
            throw DataError("unrecognized model format tag");
        ElmModel m;
        m.seed = j.at("seed").get<std::uint64_t>();
        m.hidden_count = j.at("hidden_count").get<int>();
        if (m.hidden_count < 1) throw DataError("model hidden_count must be >= 1");
        m.lambda = j.at("lambda").get<double>();
        m.trained = j.at("trained").get<bool>();
        m.trained_on = j.value("trained_on", std::string());
        m.input_mean = vector_from_json(j.at("input_mean"), 6, "input_mean");
        m.input_scale = vector_from_json(j.at("input_scale"), 6, "input_scale");
        m.output_mean = vector_from_json(j.at("output_mean"), 3, "output_mean");
        m.output_scale = vector_from_json(j.at("output_scale"), 3, "output_scale");
        m.w_in = matrix_from_json(j.at("w_in"), m.hidden_count, 6, "w_in");
        m.bias = vector_from_json(j.at("bias"), m.hidden_count, "bias");
        m.beta = matrix_from_json(j.at("beta"), 3, m.hidden_count, "beta");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("model file is missing fields: ") + e.what());
    }
}

void save_model(const ElmModel& model, const std::string& path) {
    write_file_atomic(path, model_to_json(model) + "\n");
}

ElmModel load_model(const std::string& path) {
    return model_from_json(read_file(path));
}

}  // namespace needleforge
