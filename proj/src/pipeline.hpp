// Copyright (c) 2026, idpref contributors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end stages: base pretraining, self-reconstruction fine-tuning,
// repository construction, scoring, pair selection and preference training.

#pragma once

#include "config.hpp"
#include "hpo.hpp"
#include "pareto_select.hpp"
#include "repository.hpp"

namespace idpref {

/// Child seed for one consumer of a run seed.
std::uint64_t child_seed(std::uint64_t seed, std::uint64_t stream);

/// Models that do not depend on reward or selection toggles.
struct Foundation {
    Scenario scenario;
    DenoiserParams base; // generic model, samples the initial set
    DenoiserParams ft;   // fine-tuned on references, samples the fine-tuned set
};

DenoiserParams pretrain_stage(const PipelineConfig& cfg, const Scenario& scenario, std::uint64_t seed);

/// Self-reconstruction on the inflated references. Attaches the adapter when
/// `base` has none and the config asks for one.
DenoiserParams finetune_stage(const PipelineConfig& cfg, const Scenario& scenario, const DenoiserParams& base,
                              std::uint64_t seed, int steps, int checkpoint_every = 0,
                              const CheckpointFn& on_checkpoint = {});

Foundation make_foundation(const PipelineConfig& cfg, std::uint64_t seed);

Repository build_stage(const PipelineConfig& cfg, const Scenario& scenario, const DenoiserParams& ft,
                       const DenoiserParams& base, std::uint64_t seed);

std::vector<ScoreRow> score_stage(const PipelineConfig& cfg, Repository& repo);

struct PairSets {
    std::vector<PreferencePair> id_pairs;
    std::vector<PreferencePair> dynamic_pairs;
    std::vector<PreferencePair> merged;
};

/// Honours select.id_pairs / select.dynamic_pairs and the reward channel mask.
PairSets select_stage(const PipelineConfig& cfg, const Repository& repo);

HpoResult hpo_stage(const PipelineConfig& cfg, const DenoiserParams& theta_init, const PairSets& pairs,
                    const Repository& repo, std::uint64_t seed, const CheckpointFn& on_checkpoint = {});

struct PipelineRun {
    Foundation foundation;
    Repository repo;
    std::vector<ScoreRow> scores;
    PairSets pairs;
    HpoResult hpo;
};

PipelineRun run_pipeline(const PipelineConfig& cfg, std::uint64_t seed);
PipelineRun run_pipeline(const PipelineConfig& cfg, const Foundation& foundation, std::uint64_t seed);

SamplingSetup sampling_setup(const PipelineConfig& cfg);

inline constexpr const char* kWorldFormat = "idpref-world/1";

/// The world section of a config together with what it generates (identity,
/// references, prompts). Loading regenerates the scenario and checks it
/// against the stored copy.
void save_world_file(const ScenarioConfig& config, const std::string& path);
ScenarioConfig load_world_file(const std::string& path);

} // namespace idpref
