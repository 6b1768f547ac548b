#include "needleforge/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "needleforge/io_util.hpp"
#include "needleforge/rollout.hpp"

namespace needleforge {

const char* const kDatasetCsvHeader =
    "effx_mm,effy_mm,effz_mm,ex_mm,ey_mm,ez_mm,cx_mm,cy_mm,cz_mm";

void validate(const DataGenParams& p) {
    if (p.target_noise < 0.0) throw ConfigError("data target noise must be >= 0");
    if (p.budget < 1) throw ConfigError("data budget must be >= 1");
    if (!(p.split_ratio > 0.0 && p.split_ratio < 1.0))
        throw ConfigError("data split ratio must lie in (0, 1)");
}

namespace {

struct TrajectoryRun {
    std::vector<Sample> samples;
    bool diverged = false;
};

TrajectoryRun run_trajectory(const SceneConfig& scene, const ControlGains& gains,
                             const Trajectory& traj, double target_noise,
                             std::uint64_t run_seed) {
    TrajectorySampler sampler(traj);
    InverseStepController controller(gains);
    Rng noise_rng(run_seed);
    RolloutOptions options;
    options.target_noise = target_noise;
    options.noise_rng = target_noise > 0.0 ? &noise_rng : nullptr;
    options.time_commands = false;
    const RolloutResult result = run_rollout(scene, sampler, controller, options);

    TrajectoryRun run;
    run.diverged = result.final_status != SimStatus::Done;
    run.samples.reserve(result.steps.size());
    for (const StepRecord& rec : result.steps) {
        if (rec.status != SimStatus::Inserting) continue;
        Sample s;
        s.effector_mm = rec.effector * kMillimetresPerMetre;
        s.error_mm = rec.tip_error * kMillimetresPerMetre;
        s.command_mm = (rec.command - rec.effector) * kMillimetresPerMetre;
        run.samples.push_back(s);
    }
    return run;
}

std::vector<Sample> subsample(const std::vector<Sample>& all, long budget, Rng& rng) {
    const long n = static_cast<long>(all.size());
    if (n <= budget) return all;
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(budget));
    long needed = budget;
    long remaining = n;
    for (const Sample& s : all) {
        if (static_cast<long>(rng.below(static_cast<std::uint64_t>(remaining))) < needed) {
            out.push_back(s);
            if (--needed == 0) break;
        }
        --remaining;
    }
    return out;
}

}  // namespace

Dataset generate_dataset(const SceneConfig& scene, const ControlGains& gains,
                         const std::vector<Trajectory>& trajectories, double target_noise,
                         long budget, std::uint64_t seed, int jobs,
                         const GenProgress& progress) {
    if (trajectories.empty()) throw UsageError("dataset generation needs trajectories");
    if (budget < 1) throw ConfigError("data budget must be >= 1");
    if (jobs < 1) jobs = 1;

    const int total = static_cast<int>(trajectories.size());
    std::vector<TrajectoryRun> runs(static_cast<std::size_t>(total));
    std::atomic<int> next{0};
    std::atomic<int> done{0};
    std::mutex progress_mutex;
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto worker = [&]() {
        for (;;) {
            const int idx = next.fetch_add(1);
            if (idx >= total) return;
            try {
                const Trajectory& traj = trajectories[static_cast<std::size_t>(idx)];
                const std::uint64_t run_seed =
                    derive_seed(seed, static_cast<std::uint64_t>(traj.id) + 1);
                runs[static_cast<std::size_t>(idx)] =
                    run_trajectory(scene, gains, traj, target_noise, run_seed);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                return;
            }
            const int finished = done.fetch_add(1) + 1;
            if (progress) {
                std::lock_guard<std::mutex> lock(progress_mutex);
                progress(finished, total);
            }
        }
    };

    const int thread_count = std::min(jobs, total);
    if (thread_count <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(thread_count));
        for (int k = 0; k < thread_count; ++k) pool.emplace_back(worker);
        for (std::thread& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);

    Dataset ds;
    ds.seed = seed;
    ds.noise_mm = target_noise * kMillimetresPerMetre;
    ds.trajectory_count = total;
    std::vector<Sample> all;
    for (const TrajectoryRun& run : runs) {
        ds.divergences += run.diverged ? 1 : 0;
        all.insert(all.end(), run.samples.begin(), run.samples.end());
    }
    ds.raw_count = static_cast<long>(all.size());
    Rng pick_rng(derive_seed(seed, 0x5E1EC7ULL));
    ds.samples = subsample(all, budget, pick_rng);
    return ds;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double ratio,
                                          std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split ratio must lie in (0, 1)");
    const long n = static_cast<long>(ds.samples.size());
    std::vector<long> order(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng rng(derive_seed(seed, 0x59117ULL));
    for (long i = n - 1; i > 0; --i) {
        const long j = static_cast<long>(rng.below(static_cast<std::uint64_t>(i) + 1));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    const long n_train = static_cast<long>(ratio * static_cast<double>(n));

    Dataset train = ds;
    Dataset test = ds;
    train.samples.clear();
    test.samples.clear();
    train.samples.reserve(static_cast<std::size_t>(n_train));
    test.samples.reserve(static_cast<std::size_t>(n - n_train));
    for (long i = 0; i < n; ++i) {
        const Sample& s = ds.samples[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
        if (i < n_train)
            train.samples.push_back(s);
        else
            test.samples.push_back(s);
    }
    train.set_name = ds.set_name.empty() ? "train" : ds.set_name + ".train";
    test.set_name = ds.set_name.empty() ? "test" : ds.set_name + ".test";
    return {std::move(train), std::move(test)};
}

MatX inputs_matrix(const Dataset& ds) {
    MatX x(static_cast<Eigen::Index>(ds.samples.size()), 6);
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        x.row(static_cast<Eigen::Index>(i)).head<3>() = ds.samples[i].effector_mm;
        x.row(static_cast<Eigen::Index>(i)).tail<3>() = ds.samples[i].error_mm;
    }
    return x;
}

MatX outputs_matrix(const Dataset& ds) {
    MatX y(static_cast<Eigen::Index>(ds.samples.size()), 3);
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
        y.row(static_cast<Eigen::Index>(i)) = ds.samples[i].command_mm;
    return y;
}

std::uint64_t dataset_hash(const Dataset& ds) {
    std::uint64_t h = fnv1a("needleforge-dataset");
    for (const Sample& s : ds.samples) {
        h = fnv1a(s.effector_mm.data(), 3 * sizeof(double), h);
        h = fnv1a(s.error_mm.data(), 3 * sizeof(double), h);
        h = fnv1a(s.command_mm.data(), 3 * sizeof(double), h);
    }
    return h;
}

void save_dataset_csv(const Dataset& ds, const std::string& path) {
    std::string out;
    out.reserve(ds.samples.size() * 120 + 64);
    out += kDatasetCsvHeader;
    out += '\n';
    for (const Sample& s : ds.samples) {
        const double v[9] = {s.effector_mm.x(), s.effector_mm.y(), s.effector_mm.z(),
                             s.error_mm.x(),    s.error_mm.y(),    s.error_mm.z(),
                             s.command_mm.x(),  s.command_mm.y(),  s.command_mm.z()};
        for (int k = 0; k < 9; ++k) {
            if (k) out += ',';
            out += format_double(v[k]);
        }
        out += '\n';
    }
    write_file_atomic(path, out);

    nlohmann::ordered_json meta;
    meta["format"] = "needleforge-dataset-1";
    meta["rows"] = ds.samples.size();
    meta["seed"] = ds.seed;
    meta["noise_mm"] = ds.noise_mm;
    meta["config_hash"] = ds.config_hash;
    meta["set"] = ds.set_name;
    meta["trajectories"] = ds.trajectory_count;
    meta["raw_count"] = ds.raw_count;
    meta["divergences"] = ds.divergences;
    char hash_hex[17];
    std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                  static_cast<unsigned long long>(dataset_hash(ds)));
    meta["hash"] = hash_hex;
    write_file_atomic(path + ".meta.json", meta.dump(2) + "\n");
}

Dataset load_dataset_csv(const std::string& path) {
    const std::string text = read_file(path);
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw DataError("dataset file is empty: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kDatasetCsvHeader)
        throw DataError("dataset header mismatch in " + path + ": expected '" +
                        kDatasetCsvHeader + "', found '" + line + "'");
    Dataset ds;
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        double v[9];
        const char* p = line.c_str();
        for (int k = 0; k < 9; ++k) {
            char* end = nullptr;
            v[k] = std::strtod(p, &end);
            if (end == p)
                throw DataError("malformed dataset row at " + path + ":" +
                                std::to_string(line_no));
            p = end;
            if (k < 8) {
                if (*p != ',')
                    throw DataError("malformed dataset row at " + path + ":" +
                                    std::to_string(line_no));
                ++p;
            }
        }
        if (*p != '\0')
            throw DataError("trailing characters in dataset row at " + path + ":" +
                            std::to_string(line_no));
        Sample s;
        s.effector_mm = Vec3(v[0], v[1], v[2]);
        s.error_mm = Vec3(v[3], v[4], v[5]);
        s.command_mm = Vec3(v[6], v[7], v[8]);
        ds.samples.push_back(s);
    }

    const std::string meta_path = path + ".meta.json";
    std::ifstream meta_in(meta_path);
    if (meta_in) {
        try {
            nlohmann::json meta = nlohmann::json::parse(meta_in);
            ds.seed = meta.value("seed", std::uint64_t{0});
            ds.noise_mm = meta.value("noise_mm", 0.0);
            ds.config_hash = meta.value("config_hash", std::string());
            ds.set_name = meta.value("set", std::string());
            ds.trajectory_count = meta.value("trajectories", 0);
            ds.raw_count = meta.value("raw_count", long{0});
            ds.divergences = meta.value("divergences", 0);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("malformed dataset sidecar " + meta_path + ": " + e.what());
        }
    }
    return ds;
}

}  // namespace needleforge
