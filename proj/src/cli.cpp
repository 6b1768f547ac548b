#include "needleforge/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "needleforge/config_file.hpp"
#include "needleforge/evaluation.hpp"
#include "needleforge/io_util.hpp"
#include "needleforge/mesh.hpp"

namespace needleforge {

namespace {

struct CommonOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    bool json = false;
};

void add_common_options(CLI::App* cmd, CommonOptions& opts, bool with_seed = true) {
    cmd->add_option("--config", opts.config_path, "Config file (defaults used when absent)");
    if (with_seed) cmd->add_option("--seed", opts.seed, "Override the master seed");
    cmd->add_flag("--json", opts.json, "Emit a single JSON summary on stdout");
}

CliConfig resolve_config(const CommonOptions& opts) {
    CliConfig cfg =
        opts.config_path.empty() ? default_cli_config() : parse_config_file(opts.config_path);
    if (const char* env = std::getenv("NEEDLEFORGE_SEED")) {
        const std::string text(env);
        char* end = nullptr;
        const unsigned long long v = std::strtoull(text.c_str(), &end, 10);
        if (text.empty() || end != text.c_str() + text.size())
            throw ConfigError("NEEDLEFORGE_SEED must be a non-negative integer, got '" +
                              text + "'");
        cfg.scene.seed = v;
        cfg.train.seed = v;
    }
    if (opts.seed) {
        cfg.scene.seed = *opts.seed;
        cfg.train.seed = *opts.seed;
    }
    return cfg;
}

void print_banner(const CliConfig& cfg, bool json) {
    if (json) return;  // JSON output carries the same fields
    std::cout << "config_hash=" << config_hash_hex(cfg) << " seed=" << cfg.scene.seed
              << "\n";
}

nlohmann::ordered_json json_header(const std::string& command, const CliConfig& cfg) {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["config_hash"] = config_hash_hex(cfg);
    j["seed"] = cfg.scene.seed;
    return j;
}

void emit_json(const nlohmann::ordered_json& j) { std::cout << j.dump(2) << "\n"; }

std::string with_suffix(const std::string& path, const std::string& suffix) {
    const std::size_t slash = path.find_last_of('/');
    const std::size_t dot = path.find_last_of('.');
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
        return path + suffix;
    return path.substr(0, dot) + suffix + path.substr(dot);
}

int default_jobs() {
    const unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : static_cast<int>(n);
}

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void stderr_progress(const char* label, int done, int total) {
    std::fprintf(stderr, "%s %d/%d\n", label, done, total);
}

// ---- gen-mesh ----

struct GenMeshOptions {
    CommonOptions common;
    std::string out;
};

int cmd_gen_mesh(const GenMeshOptions& opts) {
    const CliConfig cfg = resolve_config(opts.common);
    print_banner(cfg, opts.common.json);
    const TetMesh mesh = build_foam_mesh(cfg.scene.foam);
    write_file_atomic(opts.out, mesh_to_json(mesh, cfg.scene.foam) + "\n");
    if (opts.common.json) {
        nlohmann::ordered_json j = json_header("gen-mesh", cfg);
        j["nodes"] = mesh.node_count();
        j["tets"] = mesh.tet_count();
        j["fixed_nodes"] = mesh.fixed_nodes.size();
        j["out"] = opts.out;
        emit_json(j);
    } else {
        std::cout << "mesh: " << mesh.node_count() << " nodes, " << mesh.tet_count()
                  << " tets, " << mesh.fixed_nodes.size() << " fixed -> " << opts.out
                  << "\n";
    }
    return 0;
}

// ---- gen-data ----

struct GenDataOptions {
    CommonOptions common;
    std::string trajectories = "straight";
    std::optional<long> budget;
    std::string out;
    int jobs = default_jobs();
};

int cmd_gen_data(const GenDataOptions& opts) {
    const CliConfig cfg = resolve_config(opts.common);
    print_banner(cfg, opts.common.json);
    if (opts.trajectories != "straight" && opts.trajectories != "curved")
        throw UsageError("--trajectories must be 'straight' or 'curved'");

    std::vector<Trajectory> trajectories;
    if (opts.trajectories == "straight") {
        trajectories = straight_grid(cfg.data.grid, cfg.scene);
    } else {
        trajectories = curved_set(cfg.data.curved, cfg.data.grid, cfg.scene, cfg.scene.seed);
    }
    const long budget = opts.budget.value_or(cfg.data.budget);

    Dataset ds = generate_dataset(
        cfg.scene, cfg.gains, trajectories, cfg.data.target_noise, budget, cfg.scene.seed,
        opts.jobs, [](int done, int total) { stderr_progress("trajectory", done, total); });
    ds.config_hash = config_hash_hex(cfg);
    ds.set_name = opts.trajectories;

    const auto [train_ds, test_ds] = split_dataset(ds, cfg.data.split_ratio, cfg.scene.seed);
    const std::string train_path = with_suffix(opts.out, ".train");
    const std::string test_path = with_suffix(opts.out, ".test");
    save_dataset_csv(ds, opts.out);
    save_dataset_csv(train_ds, train_path);
    save_dataset_csv(test_ds, test_path);

    if (opts.common.json) {
        nlohmann::ordered_json j = json_header("gen-data", cfg);
        j["set"] = ds.set_name;
        j["trajectories"] = ds.trajectory_count;
        j["divergences"] = ds.divergences;
        j["raw_count"] = ds.raw_count;
        j["rows"] = ds.samples.size();
        j["train_rows"] = train_ds.samples.size();
        j["test_rows"] = test_ds.samples.size();
        j["hash"] = hash_hex(dataset_hash(ds));
        j["out"] = opts.out;
        j["train_out"] = train_path;
        j["test_out"] = test_path;
        emit_json(j);
    } else {
        std::cout << "dataset: " << ds.samples.size() << " rows (raw " << ds.raw_count
                  << ") from " << ds.trajectory_count << " " << ds.set_name
                  << " trajectories, " << ds.divergences << " diverged\n";
        std::cout << "split: " << train_ds.samples.size() << " train -> " << train_path
                  << ", " << test_ds.samples.size() << " test -> " << test_path << "\n";
        std::cout << "wrote " << opts.out << "\n";
    }
    return 0;
}

// ---- train ----

struct TrainOptions {
    CommonOptions common;
    std::string data;
    std::string out;
    std::optional<double> lambda;
};

int cmd_train(const TrainOptions& opts) {
    CliConfig cfg = resolve_config(opts.common);
    print_banner(cfg, opts.common.json);
    if (opts.lambda) cfg.train.lambda = *opts.lambda;
    if (cfg.train.lambda < 0.0) throw ConfigError("lambda must be >= 0");

    const Dataset ds = load_dataset_csv(opts.data);
    ElmModel model = init_model(cfg.train);
    model.trained_on = hash_hex(dataset_hash(ds));
    const ElmTrainReport report = train(model, inputs_matrix(ds), outputs_matrix(ds));
    save_model(model, opts.out);

    if (opts.common.json) {
        nlohmann::ordered_json j = json_header("train", cfg);
        j["rows"] = report.rows;
        j["hidden"] = model.hidden_count;
        j["lambda"] = model.lambda;
        j["train_rmse_mm"] = report.train_rmse_mm;
        j["trained_on"] = model.trained_on;
        j["out"] = opts.out;
        emit_json(j);
    } else {
        std::cout << "trained on " << report.rows << " rows (hidden " << model.hidden_count
                  << ", lambda " << model.lambda << "): train rmse "
                  << format_double(report.train_rmse_mm) << " mm -> " << opts.out << "\n";
    }
    return 0;
}

// ---- eval-model ----

struct EvalModelOptions {
    CommonOptions common;
    std::string data;
    std::string model;
};

int cmd_eval_model(const EvalModelOptions& opts) {
    const CliConfig cfg = resolve_config(opts.common);
    print_banner(cfg, opts.common.json);
    const Dataset ds = load_dataset_csv(opts.data);
    const ElmModel model = load_model(opts.model);
    const double rmse = rmse_mm(model, inputs_matrix(ds), outputs_matrix(ds));
    if (opts.common.json) {
        nlohmann::ordered_json j = json_header("eval-model", cfg);
        j["rows"] = ds.samples.size();
        j["rmse_mm"] = rmse;
        emit_json(j);
    } else {
        std::cout << "rmse over " << ds.samples.size() << " rows: " << format_double(rmse)
                  << " mm\n";
    }
    return 0;
}

// ---- run ----

struct RunOptions {
    CommonOptions common;
    std::string trajectory = "52";
    std::string controller = "inverse";
    std::string model;
    std::string trace;
    bool no_timing = false;
};

Trajectory trajectory_from_file(const std::string& path, const CliConfig& cfg) {
    Trajectory t;
    t.entry = cfg.scene.entry_point;
    t.endpoint = t.entry;
    t.endpoint.z() = cfg.data.grid.depth;
    bool has_endpoint = false;
    const std::string text = read_file(path);
    std::istringstream in(text);
    std::string raw;
    long line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::size_t hash_pos = raw.find('#');
        std::string line = hash_pos == std::string::npos ? raw : raw.substr(0, hash_pos);
        std::istringstream ls(line);
        std::string key, eq;
        if (!(ls >> key)) continue;
        if (!(ls >> eq) || eq != "=")
            throw ConfigError(path + ":" + std::to_string(line_no) +
                              ": expected 'key = value'");
        if (key == "kind") {
            std::string kind;
            ls >> kind;
            if (kind == "straight")
                t.kind = TrajectoryKind::Straight;
            else if (kind == "curved")
                t.kind = TrajectoryKind::Curved;
            else
                throw ConfigError(path + ":" + std::to_string(line_no) +
                                  ": kind must be straight or curved");
        } else if (key == "endpoint_mm") {
            double x, y, z;
            if (!(ls >> x >> y >> z))
                throw ConfigError(path + ":" + std::to_string(line_no) +
                                  ": endpoint_mm needs three values");
            t.endpoint = Vec3(x, y, z) / kMillimetresPerMetre;
            has_endpoint = true;
        } else if (key == "amplitude_mm") {
            double a;
            if (!(ls >> a))
                throw ConfigError(path + ":" + std::to_string(line_no) + ": bad amplitude");
            t.amplitude = a / kMillimetresPerMetre;
        } else if (key == "phase_x_rad") {
            if (!(ls >> t.phase_x))
                throw ConfigError(path + ":" + std::to_string(line_no) + ": bad phase");
        } else if (key == "phase_y_rad") {
            if (!(ls >> t.phase_y))
                throw ConfigError(path + ":" + std::to_string(line_no) + ": bad phase");
        } else {
            throw ConfigError(path + ":" + std::to_string(line_no) +
                              ": unknown trajectory key '" + key + "'");
        }
    }
    if (!has_endpoint)
        throw ConfigError(path + ": trajectory file needs an endpoint_mm line");
    return t;
}

Trajectory resolve_trajectory(const std::string& spec, const CliConfig& cfg) {
    const auto pick = [&](const std::vector<Trajectory>& list, long idx,
                          const char* what) {
        if (idx < 0 || idx >= static_cast<long>(list.size()))
            throw UsageError(std::string(what) + " trajectory id " + std::to_string(idx) +
                             " out of range [0, " + std::to_string(list.size()) + ")");
        return list[static_cast<std::size_t>(idx)];
    };
    char* end = nullptr;
    const long idx = std::strtol(spec.c_str(), &end, 10);
    if (!spec.empty() && end == spec.c_str() + spec.size())
        return pick(straight_grid(cfg.data.grid, cfg.scene), idx, "straight");
    if (spec.rfind("curved:", 0) == 0) {
        const std::string num = spec.substr(7);
        const long cidx = std::strtol(num.c_str(), &end, 10);
        if (num.empty() || end != num.c_str() + num.size())
            throw UsageError("bad curved trajectory spec '" + spec + "'");
        return pick(curved_set(cfg.data.curved, cfg.data.grid, cfg.scene, cfg.scene.seed),
                    cidx, "curved");
    }
    return trajectory_from_file(spec, cfg);
}

int cmd_run(const RunOptions& opts) {
    const CliConfig cfg = resolve_config(opts.common);
    print_banner(cfg, opts.common.json);
    if (opts.controller != "inverse" && opts.controller != "elm")
        throw UsageError("--controller must be 'inverse' or 'elm'");
    if (opts.controller == "elm" && opts.model.empty())
        throw UsageError("--controller elm needs --model");

    const Trajectory traj = resolve_trajectory(opts.trajectory, cfg);
    TrajectorySampler sampler(traj);
    RolloutOptions options;
    options.time_commands = !opts.no_timing;

    RolloutResult result;
    if (opts.controller == "inverse") {
        InverseStepController controller(cfg.gains);
        result = run_rollout(cfg.scene, sampler, controller, options);
    } else {
        ElmStepController controller(load_model(opts.model));
        result = run_rollout(cfg.scene, sampler, controller, options);
    }
    if (!opts.trace.empty()) write_trace_csv(result, opts.trace);

    double mean_latency = 0.0;
    if (!result.steps.empty()) {
        for (const StepRecord& rec : result.steps) mean_latency += rec.command_ms;
        mean_latency /= static_cast<double>(result.steps.size());
    }
    if (opts.common.json) {
        nlohmann::ordered_json j = json_header("run", cfg);
        j["trajectory"] = opts.trajectory;
        j["controller"] = opts.controller;
        j["status"] = to_string(result.final_status);
        j["steps"] = result.total_steps;
        j["final_error_mm"] = final_error_mm(result);
        j["mean_latency_ms"] = mean_latency;
        if (!opts.trace.empty()) j["trace"] = opts.trace;
        emit_json(j);
    } else {
        std::cout << "run " << opts.controller << " on " << to_string(traj.kind)
                  << " trajectory " << opts.trajectory << ": "
                  << to_string(result.final_status) << " after " << result.total_steps
                  << " steps, final error " << format_double(final_error_mm(result))
                  << " mm\n";
        if (!opts.trace.empty()) std::cout << "trace -> " << opts.trace << "\n";
    }
    return result.final_status == SimStatus::Done ? 0 : 3;
}

// ---- compare ----

struct CompareOptions {
    CommonOptions common;
    std::string model;
    std::string sets = "straight,curved";
    std::string out;
    bool no_timing = false;
    int jobs = default_jobs();
};

int cmd_compare(const CompareOptions& opts) {
    const CliConfig cfg = resolve_config(opts.common);
    print_banner(cfg, opts.common.json);
    CompareParams params;
    params.straight_set = opts.sets.find("straight") != std::string::npos;
    params.curved_set = opts.sets.find("curved") != std::string::npos;
    if (!params.straight_set && !params.curved_set)
        throw UsageError("--sets must name straight, curved, or both");
    params.with_timing = !opts.no_timing;
    params.jobs = opts.jobs;

    const ElmModel model = load_model(opts.model);
    CompareReport report = compare_controllers(
        cfg.scene, cfg.gains, model, cfg.data, params,
        [](int done, int total) { stderr_progress("run", done, total); });
    report.config_hash = config_hash_hex(cfg);
    write_compare_outputs(report, opts.out);

    if (opts.common.json) {
        nlohmann::ordered_json j = json_header("compare", cfg);
        j["runs"] = report.runs.size();
        for (const char* set : {"straight", "curved"}) {
            bool present = false;
            for (const RunSummary& r : report.runs)
                if (r.set_name == set) present = true;
            if (!present) continue;
            for (const char* ctl : {"inverse", "elm"}) {
                const ErrorAggregate agg = aggregate_errors(report.runs, set, ctl);
                nlohmann::ordered_json cell;
                cell["mean_mm"] = agg.mean_mm;
                cell["std_mm"] = agg.std_mm;
                cell["completed"] = agg.completed;
                cell["failed"] = agg.failed;
                j["final_error"][set][ctl] = cell;
            }
        }
        j["out"] = opts.out;
        emit_json(j);
    } else {
        std::cout << compare_summary_text(report);
        std::cout << "outputs -> " << opts.out << "\n";
    }
    return 0;
}

// ---- bench ----

struct BenchOptions {
    CommonOptions common;
    std::string model;
    int steps = 500;
    int warmup = 50;
};

int cmd_bench(const BenchOptions& opts) {
    const CliConfig cfg = resolve_config(opts.common);
    print_banner(cfg, opts.common.json);
    const ElmModel model = load_model(opts.model);

    const std::vector<Trajectory> grid = straight_grid(cfg.data.grid, cfg.scene);
    const int center = (cfg.data.grid.grid_y / 2) * cfg.data.grid.grid_x +
                       cfg.data.grid.grid_x / 2;
    TrajectorySampler sampler(grid[static_cast<std::size_t>(center)]);

    InverseStepController inverse(cfg.gains);
    const LatencyStats inv =
        bench_latency(cfg.scene, sampler, inverse, opts.steps, opts.warmup);
    ElmStepController elm(model);
    const LatencyStats ml = bench_latency(cfg.scene, sampler, elm, opts.steps, opts.warmup);
    const double ratio = inv.mean_ms > 0.0 ? ml.mean_ms / inv.mean_ms : 0.0;

    if (opts.common.json) {
        nlohmann::ordered_json j = json_header("bench", cfg);
        j["steps"] = opts.steps;
        j["warmup"] = opts.warmup;
        j["inverse"]["mean_ms"] = inv.mean_ms;
        j["inverse"]["std_ms"] = inv.std_ms;
        j["elm"]["mean_ms"] = ml.mean_ms;
        j["elm"]["std_ms"] = ml.std_ms;
        j["elm_over_inverse"] = ratio;
        emit_json(j);
    } else {
        char line[200];
        std::snprintf(line, sizeof(line),
                      "command latency over %d steps (warmup %d):\n"
                      "  inverse  %.4f +/- %.4f ms\n"
                      "  elm      %.4f +/- %.4f ms\n"
                      "  elm/inverse = %.4f\n",
                      opts.steps, opts.warmup, inv.mean_ms, inv.std_ms, ml.mean_ms,
                      ml.std_ms, ratio);
        std::cout << line;
    }
    return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"Needle insertion simulation, data generation, and controller comparison"};
    app.require_subcommand(1);

    GenMeshOptions gen_mesh;
    CLI::App* c_mesh = app.add_subcommand("gen-mesh", "Build the foam mesh and write it as JSON");
    add_common_options(c_mesh, gen_mesh.common, false);
    c_mesh->add_option("--out", gen_mesh.out, "Output mesh JSON path")->required();

    GenDataOptions gen_data;
    CLI::App* c_data = app.add_subcommand(
        "gen-data", "Generate supervised control data with the inverse controller");
    add_common_options(c_data, gen_data.common);
    c_data->add_option("--trajectories", gen_data.trajectories,
                       "Trajectory set: straight or curved");
    c_data->add_option("--budget", gen_data.budget, "Sample budget after subsampling");
    c_data->add_option("--out", gen_data.out, "Output CSV path")->required();
    c_data->add_option("--jobs", gen_data.jobs, "Worker threads");

    TrainOptions train_opts;
    CLI::App* c_train = app.add_subcommand("train", "Train the command model on a dataset");
    add_common_options(c_train, train_opts.common);
    c_train->add_option("--data", train_opts.data, "Training CSV")->required();
    c_train->add_option("--out", train_opts.out, "Output model JSON path")->required();
    c_train->add_option("--lambda", train_opts.lambda, "Ridge regularization override");

    EvalModelOptions eval_opts;
    CLI::App* c_eval = app.add_subcommand("eval-model", "Report model RMSE on a dataset");
    add_common_options(c_eval, eval_opts.common, false);
    c_eval->add_option("--data", eval_opts.data, "Evaluation CSV")->required();
    c_eval->add_option("--model", eval_opts.model, "Model JSON path")->required();

    RunOptions run_opts;
    CLI::App* c_run = app.add_subcommand("run", "Run one closed-loop insertion");
    add_common_options(c_run, run_opts.common);
    c_run->add_option("--trajectory", run_opts.trajectory,
                      "Straight grid id, curved:<k>, or a trajectory file");
    c_run->add_option("--controller", run_opts.controller, "inverse or elm");
    c_run->add_option("--model", run_opts.model, "Model JSON (needed for elm)");
    c_run->add_option("--trace", run_opts.trace, "Write a per-step trace CSV here");
    c_run->add_flag("--no-timing", run_opts.no_timing, "Zero the cmd_ms column");

    CompareOptions cmp_opts;
    CLI::App* c_cmp = app.add_subcommand("compare", "Compare both controllers over trajectory sets");
    add_common_options(c_cmp, cmp_opts.common);
    c_cmp->add_option("--model", cmp_opts.model, "Model JSON path")->required();
    c_cmp->add_option("--sets", cmp_opts.sets, "Comma list of straight,curved");
    c_cmp->add_option("--out", cmp_opts.out, "Output directory")->required();
    c_cmp->add_flag("--no-timing", cmp_opts.no_timing,
                    "Zero latency fields for reproducible outputs");
    c_cmp->add_option("--jobs", cmp_opts.jobs, "Worker threads");

    BenchOptions bench_opts;
    CLI::App* c_bench =
        app.add_subcommand("bench", "Measure per-step command latency (single-threaded)");
    add_common_options(c_bench, bench_opts.common);
    c_bench->add_option("--model", bench_opts.model, "Model JSON path")->required();
    c_bench->add_option("--steps", bench_opts.steps, "Measured steps");
    c_bench->add_option("--warmup", bench_opts.warmup, "Discarded leading steps");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            app.exit(e);
            return 0;
        }
        std::cerr << "error: " << e.what() << "\n";
        std::cerr << app.help() << "\n";
        return 1;
    }

    try {
        if (c_mesh->parsed()) return cmd_gen_mesh(gen_mesh);
        if (c_data->parsed()) return cmd_gen_data(gen_data);
        if (c_train->parsed()) return cmd_train(train_opts);
        if (c_eval->parsed()) return cmd_eval_model(eval_opts);
        if (c_run->parsed()) return cmd_run(run_opts);
        if (c_cmp->parsed()) return cmd_compare(cmp_opts);
        if (c_bench->parsed()) return cmd_bench(bench_opts);
        std::cerr << "error: no command given\n" << app.help() << "\n";
        return 1;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const MeshError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const SimulationError& e) {
        std::cerr << "fatal: " << e.what() << "\n";
        return 3;
    }
}

}  // namespace needleforge
