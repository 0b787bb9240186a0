// Copyright (c) 2026, idpref contributors
// SPDX-License-Identifier: Apache-2.0

#include "config.hpp"

#include <fmt/format.h>

#include <fstream>
#include <map>
#include <set>

namespace idpref {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

template <class Config, class F>
void visit_fields(Config& c, F&& f) {
    f("seed", c.seed);
    f("world.frame_dim", c.world.world.frame_dim);
    f("world.identity_dim", c.world.world.identity_dim);
    f("world.motion_dim", c.world.world.motion_dim);
    f("world.noise_sigma", c.world.world.noise_sigma);
    f("world.seed", c.world.world.seed);
    f("world.frames", c.world.frames);
    f("world.reference_count", c.world.reference_count);
    f("world.prompt_count", c.world.prompt_count);
    f("world.amplitude_min", c.world.amplitude_min);
    f("world.amplitude_max", c.world.amplitude_max);
    f("rewards.identity", c.rewards.id);
    f("rewards.dynamic", c.rewards.dynamic);
    f("rewards.semantic", c.rewards.semantic);
    f("select.theta_id", c.select.theta_id);
    f("select.tau_dy", c.select.tau_dy);
    f("select.top_k", c.select.top_k);
    f("select.id_pairs", c.id_pairs);
    f("select.dynamic_pairs", c.dynamic_pairs);
    f("diffusion.steps", c.diffusion.steps);
    f("diffusion.beta_min", c.diffusion.beta_min);
    f("diffusion.beta_max", c.diffusion.beta_max);
    f("diffusion.hidden", c.diffusion.hidden);
    f("diffusion.adapter_rank", c.diffusion.adapter_rank);
    f("diffusion.batch_size", c.diffusion.batch_size);
    f("diffusion.cond_dropout", c.diffusion.cond_dropout);
    f("diffusion.pretrain_steps", c.diffusion.pretrain_steps);
    f("diffusion.pretrain_lr", c.diffusion.pretrain_lr);
    f("diffusion.init_steps", c.diffusion.init_steps);
    f("diffusion.optimizer", c.diffusion.optimizer);
    f("diffusion.lr", c.diffusion.lr);
    f("diffusion.weight_decay", c.diffusion.weight_decay);
    f("diffusion.sampler_steps", c.diffusion.sampler_steps);
    f("diffusion.guidance_scale", c.diffusion.guidance_scale);
    f("diffusion.clip_sample", c.diffusion.clip_sample);
    f("repository.n_ft", c.repository.n_ft);
    f("repository.n_init", c.repository.n_init);
    f("hpo.beta_dpo", c.hpo.beta_dpo);
    f("hpo.steps", c.hpo.steps);
    f("hpo.pairs_per_step", c.hpo.pairs_per_step);
    f("hpo.optimizer", c.hpo.optimizer);
    f("hpo.lr", c.hpo.lr);
    f("hpo.weight_decay", c.hpo.weight_decay);
    f("hpo.curriculum", c.hpo.curriculum);
    f("hpo.independent_t", c.hpo.independent_t);
    f("eval.lengths", c.eval.lengths);
    f("eval.n_samples", c.eval.n_samples);
    f("eval.checkpoint_every", c.eval.checkpoint_every);
    f("eval.baseline_steps", c.eval.baseline_steps);
    f("eval.max_length_factor", c.eval.max_length_factor);
}

void flatten_into(const json& j, const std::string& prefix, std::map<std::string, json>& out) {
    if (j.is_object()) {
        for (auto it = j.begin(); it != j.end(); ++it)
            flatten_into(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
    } else {
        out[prefix] = j;
    }
}

template <class T>
void assign(T& field, const json& v, const std::string& key) {
    try {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw std::invalid_argument("expected boolean");
            field = v.get<bool>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw std::invalid_argument("expected string");
            field = v.get<std::string>();
        } else if constexpr (std::is_same_v<T, std::vector<int>>) {
            if (!v.is_array()) throw std::invalid_argument("expected array");
            field = v.get<std::vector<int>>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw std::invalid_argument("expected integer");
            field = v.get<T>();
        } else {
            if (!v.is_number()) throw std::invalid_argument("expected number");
            field = v.get<T>();
        }
    } catch (const std::exception& e) {
        fail(ErrorKind::Configuration, fmt::format("config key '{}': {} (got {})", key, e.what(), v.dump()));
    }
}

} // namespace

void PipelineConfig::merge(const json& doc) {
    if (!doc.is_object()) fail(ErrorKind::Configuration, "config document must be a JSON object");
    std::map<std::string, json> flat;
    flatten_into(doc, "", flat);
    std::set<std::string> known;
    visit_fields(*this, [&](const char* key, auto& field) {
        known.insert(key);
        if (auto it = flat.find(key); it != flat.end()) assign(field, it->second, key);
    });
    for (const auto& [key, _] : flat)
        if (!known.count(key)) fail(ErrorKind::Configuration, fmt::format("unknown config key '{}'", key));
}

void PipelineConfig::set(const std::string& key, const std::string& value) {
    json v;
    try {
        v = json::parse(value);
    } catch (const json::exception&) {
        v = value; // bare strings such as "sgd"
    }
    json doc = json::object();
    doc[key] = v;
    merge(doc);
}

ordered_json PipelineConfig::to_json() const {
    ordered_json out = ordered_json::object();
    visit_fields(*this, [&](const char* key, const auto& field) {
        const std::string k = key;
        const auto dot = k.find('.');
        if (dot == std::string::npos) {
            out[k] = field;
        } else {
            out[k.substr(0, dot)][k.substr(dot + 1)] = field;
        }
    });
    return out;
}

std::vector<std::string> PipelineConfig::keys() const {
    std::vector<std::string> out;
    visit_fields(*this, [&](const char* key, const auto&) { out.emplace_back(key); });
    return out;
}

OptimizerKind parse_optimizer(const std::string& name) {
    if (name == "adamw") return OptimizerKind::AdamW;
    if (name == "sgd") return OptimizerKind::Sgd;
    fail(ErrorKind::Configuration, fmt::format("unknown optimizer '{}' (expected adamw or sgd)", name));
}

void PipelineConfig::validate() const {
    world.world.validate();
    if (world.frames < 1) fail(ErrorKind::Configuration, "world.frames must be >= 1");
    if (world.reference_count < 1) fail(ErrorKind::Configuration, "world.reference_count must be >= 1");
    if (world.prompt_count < 1) fail(ErrorKind::Configuration, "world.prompt_count must be >= 1");
    if (!(world.amplitude_min >= 0.0) || world.amplitude_max < world.amplitude_min)
        fail(ErrorKind::Configuration, "world.amplitude_min/max must satisfy 0 <= min <= max");
    select.validate();
    if (!rewards.any()) fail(ErrorKind::Configuration, "at least one reward channel must be enabled");
    if (diffusion.hidden < 1 || diffusion.adapter_rank < 0 || diffusion.batch_size < 1)
        fail(ErrorKind::Configuration, "diffusion.hidden/batch_size must be >= 1, adapter_rank >= 0");
    if (diffusion.pretrain_steps < 0 || diffusion.init_steps < 0)
        fail(ErrorKind::Configuration, "diffusion training steps must be >= 0");
    if (!(diffusion.cond_dropout >= 0.0 && diffusion.cond_dropout <= 1.0))
        fail(ErrorKind::Configuration, "diffusion.cond_dropout must lie in [0, 1]");
    if (diffusion.lr < 0.0 || diffusion.weight_decay < 0.0 || diffusion.pretrain_lr < 0.0)
        fail(ErrorKind::Configuration, "learning rates and weight decay must be >= 0");
    if (!(diffusion.clip_sample >= 0.0)) fail(ErrorKind::Configuration, "diffusion.clip_sample must be >= 0 (0 disables)");
    parse_optimizer(diffusion.optimizer);
    parse_optimizer(hpo.optimizer);
    schedule();
    sampler_timesteps(diffusion.steps, diffusion.sampler_steps);
    if (repository.n_ft < 0 || repository.n_init < 0) fail(ErrorKind::Configuration, "repository counts must be >= 0");
    hpo_config(seed).validate();
    if (hpo.lr < 0.0 || hpo.weight_decay < 0.0) fail(ErrorKind::Configuration, "hpo.lr / hpo.weight_decay must be >= 0");
    if (eval.n_samples < 1) fail(ErrorKind::Configuration, "eval.n_samples must be >= 1");
    if (eval.lengths.empty()) fail(ErrorKind::Configuration, "eval.lengths must be non-empty");
    if (eval.checkpoint_every < 1) fail(ErrorKind::Configuration, "eval.checkpoint_every must be >= 1");
    if (eval.baseline_steps < 0) fail(ErrorKind::Configuration, "eval.baseline_steps must be >= 0");
    if (eval.max_length_factor < 1) fail(ErrorKind::Configuration, "eval.max_length_factor must be >= 1");
}

NoiseSchedule PipelineConfig::schedule() const {
    return make_schedule(diffusion.steps, diffusion.beta_min, diffusion.beta_max);
}

NetworkShape PipelineConfig::network_shape() const {
    NetworkShape s;
    s.video_size = world.frames * world.world.frame_dim;
    s.cond_dim = world.world.motion_dim;
    s.hidden = diffusion.hidden;
    s.adapter_rank = 0;
    s.diffusion_steps = diffusion.steps;
    return s;
}

OptimizerConfig PipelineConfig::finetune_optimizer() const {
    OptimizerConfig o;
    o.kind = parse_optimizer(diffusion.optimizer);
    o.lr = diffusion.lr;
    o.weight_decay = diffusion.weight_decay;
    return o;
}

HpoConfig PipelineConfig::hpo_config(std::uint64_t run_seed) const {
    HpoConfig h;
    h.beta_dpo = hpo.beta_dpo;
    h.steps = hpo.steps;
    h.pairs_per_step = hpo.pairs_per_step;
    h.optimizer.kind = parse_optimizer(hpo.optimizer);
    h.optimizer.lr = hpo.lr;
    h.optimizer.weight_decay = hpo.weight_decay;
    h.curriculum = hpo.curriculum;
    h.independent_t = hpo.independent_t;
    h.seed = run_seed;
    return h;
}

SamplerConfig PipelineConfig::sampler() const {
    return {diffusion.sampler_steps, diffusion.guidance_scale, diffusion.clip_sample};
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, fmt::format("cannot open config '{}'", path));
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        fail(ErrorKind::Parse, fmt::format("config '{}': {}", path, e.what()));
    }
    PipelineConfig cfg;
    cfg.merge(doc);
    cfg.validate();
    return cfg;
}

} // namespace idpref
