// Copyright (c) 2026, idpref contributors
// SPDX-License-Identifier: Apache-2.0
//
// Diagnostic curves (identity vs. length, dynamics vs. training step),
// ablation runs and CSV/SVG reports. All reported numbers are raw-scale.

#pragma once

#include "pipeline.hpp"

#include <string>
#include <utility>
#include <vector>

namespace idpref {

struct MetricRow {
    std::string name;
    double x = 0.0;
    double value = 0.0;

    bool operator==(const MetricRow&) const = default;
};

/// Sorts by (name, x) and rejects non-finite values.
void canonicalize_rows(std::vector<MetricRow>& rows);

/// Everything needed to sample and score videos for evaluation.
struct EvalContext {
    World world;
    std::vector<Vec> references;
    std::vector<PromptSpec> prompts;
    int frames = 16;
    SamplingSetup sampling;
};

EvalContext make_eval_context(const PipelineConfig& cfg, const Scenario& scenario);

struct Metrics {
    double identity = 0.0;
    double dynamic = 0.0;
    double semantic = 0.0;
};

/// Sample i uses prompt i mod |prompts| and a seed derived from (seed, i).
std::vector<Frames> eval_samples(const DenoiserParams& model, const EvalContext& ctx, int n_samples,
                                 std::uint64_t seed);

Metrics evaluate_model(const DenoiserParams& model, const EvalContext& ctx, int n_samples, std::uint64_t seed);

/// Truncates to `length` frames, or continues the average per-frame step
/// past the last frame when `length` exceeds the sampled length.
Frames extend_video(const Frames& video, int length);

std::vector<MetricRow> eval_identity_vs_length(const DenoiserParams& model, const EvalContext& ctx,
                                               const std::vector<int>& lengths, int n_samples, std::uint64_t seed,
                                               int max_length_factor = 8);

using Checkpoint = std::pair<std::int64_t, DenoiserParams>;

std::vector<MetricRow> eval_dynamic_vs_checkpoints(const std::vector<Checkpoint>& checkpoints,
                                                   const EvalContext& ctx, int n_samples, std::uint64_t seed);
std::vector<MetricRow> eval_dynamic_vs_checkpoints(const std::vector<std::string>& checkpoint_paths,
                                                   const EvalContext& ctx, int n_samples, std::uint64_t seed);

/// Spearman rank correlation with average ranks for ties. 0 when either side is constant.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

struct AblationSpec {
    bool id_pairs = true;
    bool dynamic_pairs = true;
    bool id_reward = true;
    bool dynamic_reward = true;
    bool semantic_reward = true;

    void validate() const;
    PipelineConfig apply(PipelineConfig cfg) const;
    std::string label() const;
    bool operator==(const AblationSpec&) const = default;
};

/// Inverse of AblationSpec::label(), e.g. "Pid+Pdy/Rid+Rsem".
AblationSpec parse_ablation_spec(const std::string& label);

/// Pair-stage rows (all rewards on) followed by reward-channel rows (both pair stages on).
std::vector<AblationSpec> default_ablation_grid();

struct AblationResult {
    AblationSpec spec;
    Metrics untrained; // HPO starting point
    Metrics trained;
    std::size_t pair_count = 0;
};

/// Runs the pipeline with the spec applied. `foundation` may be shared
/// between ablations of the same config and seed.
AblationResult run_ablation(const AblationSpec& spec, const PipelineConfig& cfg, std::uint64_t seed,
                            const Foundation* foundation = nullptr);

/// Runs every spec against one shared foundation.
std::vector<AblationResult> run_ablations(const std::vector<AblationSpec>& specs, const PipelineConfig& cfg,
                                          std::uint64_t seed);

void write_ablation_table(const std::vector<AblationResult>& results, const std::string& path);

enum class ReportFormat { Csv, Svg };

ReportFormat parse_report_format(const std::string& name);

std::string render_csv(std::vector<MetricRow> rows);
std::string render_svg(std::vector<MetricRow> rows, const std::string& x_label = "x");

void emit_report(const std::vector<MetricRow>& rows, const std::string& out_path, const std::string& format,
                 const std::string& x_label = "x");

std::vector<MetricRow> read_metric_rows(const std::string& path);

struct ExperimentSummary {
    std::size_t pair_count = 0;
    double final_loss = 0.0;
    Metrics before;
    Metrics after;
};

/// Full default pipeline writing every artifact into `out_dir`: world.json,
/// base.ckpt, ft.ckpt, repo.jsonl, scores.csv, pairs.jsonl, theta.ckpt,
/// trace.csv, checkpoints/step-NNNNN.ckpt and identity/dynamic reports in
/// CSV and SVG.
ExperimentSummary run_experiment(const PipelineConfig& cfg, std::uint64_t seed, const std::string& out_dir);

} // namespace idpref
