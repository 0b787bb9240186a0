// Copyright (c) 2026, idpref contributors
// SPDX-License-Identifier: Apache-2.0
//
// Pipeline configuration. Keys are namespaced per module ("world.frame_dim",
// "hpo.beta_dpo", ...). A config file is a JSON document either nested by
// namespace or using dotted keys directly.

#pragma once

#include "diffusion.hpp"
#include "hpo.hpp"
#include "pareto_select.hpp"
#include "rewards.hpp"
#include "synthworld.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace idpref {

struct DiffusionConfig {
    int steps = 100;
    double beta_min = 1e-3;
    double beta_max = 0.05;
    int hidden = 64;
    int adapter_rank = 4;
    int batch_size = 16;
    double cond_dropout = 0.1;
    int pretrain_steps = 4000;
    double pretrain_lr = 2e-3;
    int init_steps = 1000;
    std::string optimizer = "adamw";
    double lr = 1e-3;
    double weight_decay = 1e-4;
    int sampler_steps = 50;
    double guidance_scale = 1.0;
    double clip_sample = 3.0;
};

struct RepositoryConfig {
    int n_ft = 100;
    int n_init = 20;
};

struct HpoSettings {
    double beta_dpo = 100.0;
    int steps = 5000;
    int pairs_per_step = 1;
    std::string optimizer = "adamw";
    double lr = 1e-3;
    double weight_decay = 1e-4;
    bool curriculum = false;
    bool independent_t = false;
};

struct EvalConfig {
    std::vector<int> lengths{8, 16, 32, 64};
    int n_samples = 16;
    int checkpoint_every = 500;
    int baseline_steps = 5000;
    int max_length_factor = 8;
};

struct PipelineConfig {
    std::uint64_t seed = 7;
    ScenarioConfig world;
    ChannelMask rewards;
    SelectionConfig select;
    bool id_pairs = true;
    bool dynamic_pairs = true;
    DiffusionConfig diffusion;
    RepositoryConfig repository;
    HpoSettings hpo;
    EvalConfig eval;

    /// Merges a JSON document (nested or dotted keys); unknown keys are errors.
    void merge(const nlohmann::json& doc);
    /// Sets one dotted key from its textual value ("0.5", "true", "[8,16]").
    void set(const std::string& key, const std::string& value);
    nlohmann::ordered_json to_json() const;
    std::vector<std::string> keys() const;
    void validate() const;

    NoiseSchedule schedule() const;
    NetworkShape network_shape() const;
    OptimizerConfig finetune_optimizer() const;
    HpoConfig hpo_config(std::uint64_t seed) const;
    SamplerConfig sampler() const;
};

PipelineConfig load_config(const std::string& path);

OptimizerKind parse_optimizer(const std::string& name);

} // namespace idpref
