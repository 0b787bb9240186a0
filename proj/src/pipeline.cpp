// Copyright (c) 2026, idpref contributors
// SPDX-License-Identifier: Apache-2.0

#include "pipeline.hpp"

#include <fmt/format.h>

#include <fstream>
#include <sstream>

namespace idpref {

std::uint64_t child_seed(std::uint64_t seed, std::uint64_t stream) { return derived_rng(seed, stream, 0xC0FFEE)(); }

SamplingSetup sampling_setup(const PipelineConfig& cfg) { return {cfg.schedule(), cfg.sampler()}; }

DenoiserParams pretrain_stage(const PipelineConfig& cfg, const Scenario& scenario, std::uint64_t seed) {
    DenoiserParams init = init_params(cfg.network_shape(), child_seed(seed, stream::init_params));
    set_skip_gains(init, cfg.schedule(), scenario.world.config.noise_sigma);
    RegressionTrainConfig tc;
    tc.steps = cfg.diffusion.pretrain_steps;
    tc.batch_size = cfg.diffusion.batch_size;
    tc.optimizer = cfg.finetune_optimizer();
    tc.optimizer.lr = cfg.diffusion.pretrain_lr;
    tc.cond_dropout = cfg.diffusion.cond_dropout;
    tc.seed = child_seed(seed, stream::pretrain);
    tc.stream = stream::pretrain;
    return pretrain_base(init, cfg.schedule(), scenario, cfg.world.amplitude_min, cfg.world.amplitude_max, tc);
}

DenoiserParams finetune_stage(const PipelineConfig& cfg, const Scenario& scenario, const DenoiserParams& base,
                              std::uint64_t seed, int steps, int checkpoint_every, const CheckpointFn& on_checkpoint) {
    DenoiserParams start = base;
    if (!start.has_adapter() && cfg.diffusion.adapter_rank > 0)
        start = attach_adapter(start, cfg.diffusion.adapter_rank, child_seed(seed, stream::init_params));
    std::vector<Frames> statics;
    for (const Vec& r : scenario.references) statics.push_back(inflate_reference(r, scenario.frames));
    RegressionTrainConfig tc;
    tc.steps = steps;
    tc.batch_size = cfg.diffusion.batch_size;
    tc.optimizer = cfg.finetune_optimizer();
    tc.cond_dropout = cfg.diffusion.cond_dropout;
    tc.seed = child_seed(seed, stream::finetune);
    tc.stream = stream::finetune;
    tc.checkpoint_every = checkpoint_every;
    return train_initial(start, cfg.schedule(), statics, scenario.prompts, tc, on_checkpoint);
}

Foundation make_foundation(const PipelineConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Foundation f;
    f.scenario = make_scenario(cfg.world);
    f.base = pretrain_stage(cfg, f.scenario, seed);
    f.ft = finetune_stage(cfg, f.scenario, f.base, seed, cfg.diffusion.init_steps);
    return f;
}

Repository build_stage(const PipelineConfig& cfg, const Scenario& scenario, const DenoiserParams& ft,
                       const DenoiserParams& base, std::uint64_t seed) {
    return build_repository(ft, base, scenario.references, scenario.prompts,
                            {cfg.repository.n_ft, cfg.repository.n_init}, scenario.frames,
                            child_seed(seed, stream::sample_ft), scenario.world.config, sampling_setup(cfg));
}

std::vector<ScoreRow> score_stage(const PipelineConfig& cfg, Repository& repo) {
    const World world = make_world(repo.manifest.world_config);
    return score_repository(repo, default_scorers(), world, cfg.rewards);
}

PairSets select_stage(const PipelineConfig& cfg, const Repository& repo) {
    PairSets p;
    if (cfg.id_pairs) p.id_pairs = select_id_pairs(repo, cfg.select);
    if (cfg.dynamic_pairs) p.dynamic_pairs = select_dynamic_pairs(repo, cfg.select, cfg.rewards);
    p.merged = merge_pairs(p.id_pairs, p.dynamic_pairs);
    return p;
}

HpoResult hpo_stage(const PipelineConfig& cfg, const DenoiserParams& theta_init, const PairSets& pairs,
                    const Repository& repo, std::uint64_t seed, const CheckpointFn& on_checkpoint) {
    HpoConfig hc = cfg.hpo_config(child_seed(seed, stream::hpo));
    if (on_checkpoint) hc.checkpoint_every = cfg.eval.checkpoint_every;
    return train_hpo(theta_init, pairs.merged, repo, hc, cfg.schedule(), on_checkpoint);
}

PipelineRun run_pipeline(const PipelineConfig& cfg, std::uint64_t seed) {
    return run_pipeline(cfg, make_foundation(cfg, seed), seed);
}

PipelineRun run_pipeline(const PipelineConfig& cfg, const Foundation& foundation, std::uint64_t seed) {
    cfg.validate();
    PipelineRun run;
    run.foundation = foundation;
    run.repo = build_stage(cfg, foundation.scenario, foundation.ft, foundation.base, seed);
    run.scores = score_stage(cfg, run.repo);
    run.pairs = select_stage(cfg, run.repo);
    run.hpo = hpo_stage(cfg, foundation.ft, run.pairs, run.repo, seed);
    return run;
}

namespace {

nlohmann::ordered_json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

nlohmann::ordered_json world_document(const ScenarioConfig& config) {
    const Scenario sc = make_scenario(config);
    nlohmann::ordered_json doc;
    doc["format"] = kWorldFormat;
    doc["world"] = world_config_to_json(config.world);
    doc["frames"] = config.frames;
    doc["reference_count"] = config.reference_count;
    doc["prompt_count"] = config.prompt_count;
    doc["amplitude_min"] = config.amplitude_min;
    doc["amplitude_max"] = config.amplitude_max;
    doc["identity"] = vec_json(sc.identity.embedding);
    doc["references"] = nlohmann::ordered_json::array();
    for (const Vec& r : sc.references) doc["references"].push_back(vec_json(r));
    doc["prompts"] = nlohmann::ordered_json::array();
    for (const auto& p : sc.prompts) doc["prompts"].push_back(prompt_to_json(p));
    return doc;
}

} // namespace

void save_world_file(const ScenarioConfig& config, const std::string& path) {
    const std::string body = world_document(config).dump(1) + "\n";
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, fmt::format("cannot open '{}' for writing", path));
    out << body;
    if (!out) fail(ErrorKind::Io, fmt::format("failed writing '{}'", path));
}

ScenarioConfig load_world_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, fmt::format("cannot open world file '{}'", path));
    std::stringstream buf;
    buf << in.rdbuf();
    nlohmann::ordered_json doc;
    ScenarioConfig c;
    try {
        doc = nlohmann::ordered_json::parse(buf.str());
        if (doc.value("format", "") != kWorldFormat)
            fail(ErrorKind::Parse, fmt::format("{}: expected format '{}'", path, kWorldFormat));
        c.world = world_config_from_json(doc.at("world"));
        c.frames = doc.at("frames").get<int>();
        c.reference_count = doc.at("reference_count").get<int>();
        c.prompt_count = doc.at("prompt_count").get<int>();
        c.amplitude_min = doc.at("amplitude_min").get<double>();
        c.amplitude_max = doc.at("amplitude_max").get<double>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Parse, fmt::format("{}: malformed world file: {}", path, e.what()));
    }
    if (world_document(c) != doc)
        fail(ErrorKind::Data, fmt::format("{}: stored scenario does not match its generator settings", path));
    return c;
}

} // namespace idpref
