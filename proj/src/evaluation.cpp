#include "needleforge/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "needleforge/io_util.hpp"

namespace needleforge {

const char* const kTraceCsvHeader =
    "t_ms,effx_mm,effy_mm,effz_mm,tipx_mm,tipy_mm,tipz_mm,tgtx_mm,tgty_mm,tgtz_mm,"
    "ex_mm,ey_mm,ez_mm,cmd_ms";

namespace {

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

MeanStd mean_and_sample_std(const std::vector<double>& v) {
    MeanStd out;
    if (v.empty()) return out;
    double sum = 0.0;
    for (double x : v) sum += x;
    out.mean = sum / static_cast<double>(v.size());
    if (v.size() > 1) {
        double sq = 0.0;
        for (double x : v) sq += (x - out.mean) * (x - out.mean);
        out.std = std::sqrt(sq / static_cast<double>(v.size() - 1));
    }
    return out;
}

bool run_completed(SimStatus s) { return s == SimStatus::Done; }

std::string two_decimals(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string three_decimals(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

constexpr double kPlotBinWidthMm = 1.0;

struct BinnedProfile {
    std::vector<double> sum;
    std::vector<long> count;

    void add(double depth_mm, double err_mm) {
        const std::size_t bin = static_cast<std::size_t>(depth_mm / kPlotBinWidthMm);
        if (bin >= sum.size()) {
            sum.resize(bin + 1, 0.0);
            count.resize(bin + 1, 0);
        }
        sum[bin] += err_mm;
        count[bin] += 1;
    }

    void merge(const BinnedProfile& other) {
        if (other.sum.size() > sum.size()) {
            sum.resize(other.sum.size(), 0.0);
            count.resize(other.count.size(), 0);
        }
        for (std::size_t k = 0; k < other.sum.size(); ++k) {
            sum[k] += other.sum[k];
            count[k] += other.count[k];
        }
    }

    PlotSeries to_series(const std::string& label) const {
        PlotSeries s;
        s.label = label;
        for (std::size_t k = 0; k < sum.size(); ++k) {
            if (count[k] == 0) continue;
            s.x.push_back((static_cast<double>(k) + 0.5) * kPlotBinWidthMm);
            s.y.push_back(sum[k] / static_cast<double>(count[k]));
        }
        return s;
    }
};

struct CompareTask {
    std::string set_name;
    std::string controller;
    Trajectory trajectory;
};

struct CompareTaskResult {
    RunSummary summary;
    BinnedProfile profile;
};

CompareTaskResult run_compare_task(const SceneConfig& scene, const ControlGains& gains,
                                   const ElmModel& model, const CompareTask& task,
                                   bool with_timing) {
    TrajectorySampler sampler(task.trajectory);
    RolloutOptions options;
    options.time_commands = with_timing;

    RolloutResult result;
    if (task.controller == "inverse") {
        InverseStepController controller(gains);
        result = run_rollout(scene, sampler, controller, options);
    } else {
        ElmStepController controller(model);
        result = run_rollout(scene, sampler, controller, options);
    }

    CompareTaskResult out;
    out.summary.set_name = task.set_name;
    out.summary.trajectory_id = task.trajectory.id;
    out.summary.controller = task.controller;
    out.summary.status = result.final_status;
    out.summary.final_error_mm = final_error_mm(result);
    out.summary.steps = result.total_steps;
    if (with_timing && !result.steps.empty()) {
        double sum = 0.0;
        for (const StepRecord& rec : result.steps) sum += rec.command_ms;
        out.summary.mean_latency_ms = sum / static_cast<double>(result.steps.size());
    }
    const double speed = scene.sim.insertion_speed;
    const double total_mm = sampler.total_length() * kMillimetresPerMetre;
    for (const StepRecord& rec : result.steps) {
        const double depth_mm =
            std::min(rec.t * speed * kMillimetresPerMetre, total_mm);
        out.profile.add(depth_mm, rec.tip_error.norm() * kMillimetresPerMetre);
    }
    return out;
}

}  // namespace

ErrorAggregate aggregate_errors(const std::vector<RunSummary>& runs,
                                const std::string& set_name,
                                const std::string& controller) {
    ErrorAggregate agg;
    std::vector<double> errors;
    for (const RunSummary& r : runs) {
        if (r.set_name != set_name || r.controller != controller) continue;
        if (run_completed(r.status)) {
            errors.push_back(r.final_error_mm);
        } else {
            ++agg.failed;
        }
    }
    agg.completed = static_cast<int>(errors.size());
    const MeanStd ms = mean_and_sample_std(errors);
    agg.mean_mm = ms.mean;
    agg.std_mm = ms.std;
    return agg;
}

double final_error_mm(const RolloutResult& result) {
    return result.final_error * kMillimetresPerMetre;
}

LatencyStats bench_latency(const SceneConfig& cfg, const TrajectorySampler& sampler,
                           StepController& controller, int n_steps, int warmup) {
    if (n_steps < 1) throw UsageError("bench needs at least one measured step");
    if (warmup < 0) throw UsageError("bench warmup must be >= 0");
    RolloutOptions options;
    options.time_commands = true;
    const RolloutResult result = run_rollout(cfg, sampler, controller, options);
    const long have = static_cast<long>(result.steps.size());
    if (have < static_cast<long>(warmup) + n_steps)
        throw UsageError("bench run too short: " + std::to_string(have) +
                         " control steps, need " + std::to_string(warmup + n_steps) +
                         "; use a deeper trajectory or fewer steps");
    std::vector<double> lat;
    lat.reserve(static_cast<std::size_t>(n_steps));
    for (long k = warmup; k < warmup + n_steps; ++k)
        lat.push_back(result.steps[static_cast<std::size_t>(k)].command_ms);
    const MeanStd ms = mean_and_sample_std(lat);
    LatencyStats stats;
    stats.mean_ms = ms.mean;
    stats.std_ms = ms.std;
    stats.count = n_steps;
    return stats;
}

std::string svg_line_plot(const std::string& title, const std::string& x_label,
                          const std::string& y_label,
                          const std::vector<PlotSeries>& series) {
    constexpr int width = 720;
    constexpr int height = 440;
    constexpr int ml = 70, mr = 150, mt = 40, mb = 50;
    const double pw = width - ml - mr;
    const double ph = height - mt - mb;
    static const char* const colors[] = {"#34618e", "#b04a32", "#58813f", "#6f4d8f",
                                         "#937431", "#3e7f7a"};
    constexpr int n_colors = 6;

    double xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
    bool any = false;
    for (const PlotSeries& s : series) {
        for (std::size_t k = 0; k < s.x.size(); ++k) {
            if (!any) {
                xmin = xmax = s.x[k];
                ymin = ymax = s.y[k];
                any = true;
            } else {
                xmin = std::min(xmin, s.x[k]);
                xmax = std::max(xmax, s.x[k]);
                ymin = std::min(ymin, s.y[k]);
                ymax = std::max(ymax, s.y[k]);
            }
        }
    }
    if (!any) {
        xmin = ymin = 0.0;
        xmax = ymax = 1.0;
    }
    if (xmax - xmin < 1e-12) xmax = xmin + 1.0;
    ymin = std::min(ymin, 0.0);
    if (ymax - ymin < 1e-12) ymax = ymin + 1.0;
    ymax *= 1.05;

    const auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
    const auto py = [&](double y) { return mt + ph - (y - ymin) / (ymax - ymin) * ph; };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    svg << "<rect width=\"" << width << "\" height=\"" << height
        << "\" fill=\"#ffffff\"/>\n";
    svg << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"15\">" << title << "</text>\n";

    svg << "<g stroke=\"#404040\" stroke-width=\"1\">\n";
    svg << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw
        << "\" y2=\"" << mt + ph << "\"/>\n";
    svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
        << mt + ph << "\"/>\n";
    svg << "</g>\n";

    constexpr int ticks = 5;
    svg << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#303030\">\n";
    for (int k = 0; k <= ticks; ++k) {
        const double xv = xmin + (xmax - xmin) * k / ticks;
        const double yv = ymin + (ymax - ymin) * k / ticks;
        svg << "<line x1=\"" << px(xv) << "\" y1=\"" << mt + ph << "\" x2=\"" << px(xv)
            << "\" y2=\"" << mt + ph + 4 << "\" stroke=\"#404040\"/>\n";
        svg << "<text x=\"" << px(xv) << "\" y=\"" << mt + ph + 18
            << "\" text-anchor=\"middle\">" << two_decimals(xv) << "</text>\n";
        svg << "<line x1=\"" << ml - 4 << "\" y1=\"" << py(yv) << "\" x2=\"" << ml
            << "\" y2=\"" << py(yv) << "\" stroke=\"#404040\"/>\n";
        svg << "<text x=\"" << ml - 8 << "\" y=\"" << py(yv) + 4
            << "\" text-anchor=\"end\">" << three_decimals(yv) << "</text>\n";
    }
    svg << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 12
        << "\" text-anchor=\"middle\">" << x_label << "</text>\n";
    svg << "<text x=\"16\" y=\"" << mt + ph / 2
        << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << mt + ph / 2 << ")\">"
        << y_label << "</text>\n";
    svg << "</g>\n";

    for (std::size_t si = 0; si < series.size(); ++si) {
        const PlotSeries& s = series[si];
        const char* color = colors[si % n_colors];
        if (!s.x.empty()) {
            svg << "<polyline fill=\"none\" stroke=\"" << color
                << "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t k = 0; k < s.x.size(); ++k) {
                if (k) svg << ' ';
                svg << two_decimals(px(s.x[k])) << ',' << two_decimals(py(s.y[k]));
            }
            svg << "\"/>\n";
        }
        const double ly = mt + 14 + 18 * static_cast<double>(si);
        svg << "<line x1=\"" << ml + pw + 12 << "\" y1=\"" << ly << "\" x2=\""
            << ml + pw + 34 << "\" y2=\"" << ly << "\" stroke=\"" << color
            << "\" stroke-width=\"1.5\"/>\n";
        svg << "<text x=\"" << ml + pw + 40 << "\" y=\"" << ly + 4
            << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#303030\">"
            << s.label << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

CompareReport compare_controllers(const SceneConfig& scene, const ControlGains& gains,
                                  const ElmModel& model, const DataGenParams& data,
                                  const CompareParams& params,
                                  const CompareProgress& progress) {
    if (!params.straight_set && !params.curved_set)
        throw UsageError("compare needs at least one trajectory set");
    if (!model.trained) throw UsageError("compare needs a trained model");

    static const char* const controllers[] = {"inverse", "elm"};
    std::vector<CompareTask> tasks;
    if (params.straight_set) {
        for (const Trajectory& t : straight_grid(data.grid, scene))
            for (const char* c : controllers) tasks.push_back({"straight", c, t});
    }
    if (params.curved_set) {
        for (const Trajectory& t : curved_set(data.curved, data.grid, scene, scene.seed))
            for (const char* c : controllers) tasks.push_back({"curved", c, t});
    }

    const int total = static_cast<int>(tasks.size());
    std::vector<CompareTaskResult> results(tasks.size());
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
                results[static_cast<std::size_t>(idx)] =
                    run_compare_task(scene, gains, model,
                                     tasks[static_cast<std::size_t>(idx)],
                                     params.with_timing);
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

    const int thread_count = std::max(1, std::min(params.jobs, total));
    if (thread_count <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(thread_count));
        for (int k = 0; k < thread_count; ++k) pool.emplace_back(worker);
        for (std::thread& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);

    CompareReport report;
    report.seed = scene.seed;
    report.runs.reserve(results.size());
    BinnedProfile profiles[2][2];  // [set][controller]
    for (std::size_t i = 0; i < results.size(); ++i) {
        report.runs.push_back(results[i].summary);
        const int set_idx = tasks[i].set_name == "straight" ? 0 : 1;
        const int ctl_idx = tasks[i].controller == "inverse" ? 0 : 1;
        profiles[set_idx][ctl_idx].merge(results[i].profile);
    }
    if (params.straight_set) {
        report.straight_series.push_back(profiles[0][0].to_series("inverse"));
        report.straight_series.push_back(profiles[0][1].to_series("elm"));
    }
    if (params.curved_set) {
        report.curved_series.push_back(profiles[1][0].to_series("inverse"));
        report.curved_series.push_back(profiles[1][1].to_series("elm"));
    }
    return report;
}

std::string compare_summary_text(const CompareReport& report) {
    std::ostringstream out;
    out << "set       controller  runs  completed  failed  final_error_mm\n";
    static const char* const sets[] = {"straight", "curved"};
    static const char* const controllers[] = {"inverse", "elm"};
    for (const char* set : sets) {
        bool present = false;
        for (const RunSummary& r : report.runs)
            if (r.set_name == set) present = true;
        if (!present) continue;
        for (const char* ctl : controllers) {
            const ErrorAggregate agg = aggregate_errors(report.runs, set, ctl);
            char line[160];
            std::snprintf(line, sizeof(line), "%-9s %-11s %-5d %-10d %-7d %.3f +/- %.3f\n",
                          set, ctl, agg.completed + agg.failed, agg.completed, agg.failed,
                          agg.mean_mm, agg.std_mm);
            out << line;
        }
    }
    std::vector<double> lat_inverse, lat_elm;
    for (const RunSummary& r : report.runs) {
        if (r.controller == "inverse")
            lat_inverse.push_back(r.mean_latency_ms);
        else
            lat_elm.push_back(r.mean_latency_ms);
    }
    const MeanStd li = mean_and_sample_std(lat_inverse);
    const MeanStd le = mean_and_sample_std(lat_elm);
    char line[160];
    std::snprintf(line, sizeof(line),
                  "mean command latency_ms: inverse %.4f +/- %.4f | elm %.4f +/- %.4f\n",
                  li.mean, li.std, le.mean, le.std);
    out << line;
    return out.str();
}

void write_compare_outputs(const CompareReport& report, const std::string& dir) {
    std::string runs_csv =
        "set,trajectory,controller,status,final_error_mm,mean_latency_ms,steps\n";
    for (const RunSummary& r : report.runs) {
        runs_csv += r.set_name;
        runs_csv += ',';
        runs_csv += std::to_string(r.trajectory_id);
        runs_csv += ',';
        runs_csv += r.controller;
        runs_csv += ',';
        runs_csv += to_string(r.status);
        runs_csv += ',';
        runs_csv += format_double(r.final_error_mm);
        runs_csv += ',';
        runs_csv += format_double(r.mean_latency_ms);
        runs_csv += ',';
        runs_csv += std::to_string(r.steps);
        runs_csv += '\n';
    }
    write_file_atomic(dir + "/runs.csv", runs_csv);
    write_file_atomic(dir + "/summary.txt", compare_summary_text(report));

    nlohmann::ordered_json j;
    j["config_hash"] = report.config_hash;
    j["seed"] = report.seed;
    static const char* const sets[] = {"straight", "curved"};
    static const char* const controllers[] = {"inverse", "elm"};
    for (const char* set : sets) {
        bool present = false;
        for (const RunSummary& r : report.runs)
            if (r.set_name == set) present = true;
        if (!present) continue;
        for (const char* ctl : controllers) {
            const ErrorAggregate agg = aggregate_errors(report.runs, set, ctl);
            nlohmann::ordered_json cell;
            cell["mean_mm"] = agg.mean_mm;
            cell["std_mm"] = agg.std_mm;
            cell["completed"] = agg.completed;
            cell["failed"] = agg.failed;
            j["final_error"][set][ctl] = cell;
        }
    }
    j["runs"] = report.runs.size();
    write_file_atomic(dir + "/report.json", j.dump(2) + "\n");

    if (!report.straight_series.empty())
        write_file_atomic(dir + "/straight.svg",
                          svg_line_plot("Tip error along straight insertions", "depth (mm)",
                                        "|tip error| (mm)", report.straight_series));
    if (!report.curved_series.empty())
        write_file_atomic(dir + "/curved.svg",
                          svg_line_plot("Tip error along curved insertions", "depth (mm)",
                                        "|tip error| (mm)", report.curved_series));
}

void write_trace_csv(const RolloutResult& result, const std::string& path) {
    std::string out;
    out.reserve(result.steps.size() * 220 + 128);
    out += kTraceCsvHeader;
    out += '\n';
    for (const StepRecord& rec : result.steps) {
        const double v[14] = {rec.t * 1000.0,
                              rec.effector.x() * kMillimetresPerMetre,
                              rec.effector.y() * kMillimetresPerMetre,
                              rec.effector.z() * kMillimetresPerMetre,
                              rec.tip.x() * kMillimetresPerMetre,
                              rec.tip.y() * kMillimetresPerMetre,
                              rec.tip.z() * kMillimetresPerMetre,
                              rec.target.x() * kMillimetresPerMetre,
                              rec.target.y() * kMillimetresPerMetre,
                              rec.target.z() * kMillimetresPerMetre,
                              rec.tip_error.x() * kMillimetresPerMetre,
                              rec.tip_error.y() * kMillimetresPerMetre,
                              rec.tip_error.z() * kMillimetresPerMetre,
                              rec.command_ms};
        for (int k = 0; k < 14; ++k) {
            if (k) out += ',';
            out += format_double(v[k]);
        }
        out += '\n';
    }
    write_file_atomic(path, out);
}

}  // namespace needleforge
