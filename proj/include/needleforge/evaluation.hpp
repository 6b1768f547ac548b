#pragma once

#include <string>
#include <vector>

#include "needleforge/dataset.hpp"
#include "needleforge/rollout.hpp"

namespace needleforge {

struct RunSummary {
    std::string set_name;    // "straight" or "curved"
    int trajectory_id = 0;
    std::string controller;  // "inverse" or "elm"
    SimStatus status = SimStatus::PreInsertion;
    double final_error_mm = 0.0;
    double mean_latency_ms = 0.0;
    int steps = 0;
};

struct ErrorAggregate {
    double mean_mm = 0.0;
    double std_mm = 0.0;  // sample standard deviation
    int completed = 0;
    int failed = 0;  // diverged or out-of-domain runs, excluded from the stats
};

ErrorAggregate aggregate_errors(const std::vector<RunSummary>& runs,
                                const std::string& set_name,
                                const std::string& controller);

double final_error_mm(const RolloutResult& result);

struct LatencyStats {
    double mean_ms = 0.0;
    double std_ms = 0.0;
    int count = 0;
};

/// Per-step command latency over one long insertion: the first `warmup`
/// command computations are discarded, the next `n_steps` are measured.
/// Throws UsageError when the run is too short to supply them.
LatencyStats bench_latency(const SceneConfig& cfg, const TrajectorySampler& sampler,
                           StepController& controller, int n_steps, int warmup = 50);

struct PlotSeries {
    std::string label;
    std::vector<double> x;  // insertion depth, mm
    std::vector<double> y;  // |tip error|, mm
};

/// Minimal self-contained SVG line plot.
std::string svg_line_plot(const std::string& title, const std::string& x_label,
                          const std::string& y_label,
                          const std::vector<PlotSeries>& series);

struct CompareParams {
    bool straight_set = true;
    bool curved_set = true;
    bool with_timing = true;
    int jobs = 1;
};

struct CompareReport {
    std::vector<RunSummary> runs;
    std::vector<PlotSeries> straight_series;  // one per controller, mean error profile
    std::vector<PlotSeries> curved_series;
    std::string config_hash;
    std::uint64_t seed = 0;
};

using CompareProgress = std::function<void(int done, int total)>;

/// Runs both controllers over the straight grid and/or the seeded curved set
/// on clean targets and collects per-run summaries. Deterministic given the
/// config and seed (latency fields aside; disable timing to pin them to 0).
CompareReport compare_controllers(const SceneConfig& scene, const ControlGains& gains,
                                  const ElmModel& model, const DataGenParams& data,
                                  const CompareParams& params,
                                  const CompareProgress& progress = {});

/// Writes runs.csv, summary.txt, report.json, and one SVG error plot per
/// trajectory set into `dir`.
void write_compare_outputs(const CompareReport& report, const std::string& dir);

std::string compare_summary_text(const CompareReport& report);

/// Trace CSV for a single closed-loop run, one row per control step.
void write_trace_csv(const RolloutResult& result, const std::string& path);

extern const char* const kTraceCsvHeader;

}  // namespace needleforge
