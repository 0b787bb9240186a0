// Copyright (c) 2026, idpref contributors
// SPDX-License-Identifier: Apache-2.0

#include "idpref/idpref.h"

#include "evalreport.hpp"

#include <fmt/format.h>

#include <exception>
#include <new>
#include <string>

struct idp_config {
    idpref::PipelineConfig value;
};

struct idp_model {
    idpref::DenoiserParams value;
};

struct idp_repo {
    idpref::Repository value;
};

struct idp_pairs {
    std::vector<idpref::PreferencePair> value;
};

struct idp_rows {
    std::vector<idpref::MetricRow> value;
};

namespace {

thread_local std::string g_last_error;

idp_status status_of(idpref::ErrorKind kind) {
    using idpref::ErrorKind;
    switch (kind) {
    case ErrorKind::InvalidArgument: return IDP_ERR_INVALID_ARGUMENT;
    case ErrorKind::Configuration: return IDP_ERR_CONFIGURATION;
    case ErrorKind::Io: return IDP_ERR_IO;
    case ErrorKind::Parse: return IDP_ERR_PARSE;
    case ErrorKind::Data: return IDP_ERR_DATA;
    case ErrorKind::State: return IDP_ERR_STATE;
    case ErrorKind::Numeric: return IDP_ERR_NUMERIC;
    case ErrorKind::Serialization: return IDP_ERR_SERIALIZATION;
    case ErrorKind::Usage: return IDP_ERR_USAGE;
    }
    return IDP_ERR_INTERNAL;
}

template <class F>
idp_status guarded(F&& body) {
    g_last_error.clear();
    try {
        body();
        return IDP_OK;
    } catch (const idpref::Error& e) {
        g_last_error = e.what();
        return status_of(e.kind());
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
    } catch (const std::exception& e) {
        g_last_error = e.what();
    } catch (...) {
        g_last_error = "unknown error";
    }
    return IDP_ERR_INTERNAL;
}

template <class... T>
void require(const char* fn, const T*... ptrs) {
    if (((ptrs == nullptr) || ...)) idpref::fail(idpref::ErrorKind::InvalidArgument, fmt::format("{}: null argument", fn));
}

idpref::CheckpointFn wrap(idp_checkpoint_fn fn, void* user) {
    if (!fn) return {};
    return [fn, user](std::int64_t step, const idpref::DenoiserParams& p) {
        const idp_model snapshot{p};
        fn(step, &snapshot, user);
    };
}

idpref::Scenario scenario_of(const idp_config* cfg) { return idpref::make_scenario(cfg->value.world); }

} // namespace

extern "C" {

const char* idp_version(void) { return IDPREF_VERSION; }

const char* idp_status_name(idp_status status) {
    switch (status) {
    case IDP_OK: return "ok";
    case IDP_ERR_INVALID_ARGUMENT: return "invalid argument";
    case IDP_ERR_CONFIGURATION: return "configuration error";
    case IDP_ERR_IO: return "i/o error";
    case IDP_ERR_PARSE: return "parse error";
    case IDP_ERR_DATA: return "data error";
    case IDP_ERR_STATE: return "state error";
    case IDP_ERR_NUMERIC: return "numeric error";
    case IDP_ERR_SERIALIZATION: return "serialization error";
    case IDP_ERR_USAGE: return "usage error";
    case IDP_ERR_INTERNAL: return "internal error";
    }
    return "unknown status";
}

const char* idp_last_error(void) { return g_last_error.c_str(); }

idp_status idp_config_new(idp_config** out) {
    return guarded([&] {
        require("idp_config_new", out);
        *out = new idp_config{};
    });
}

idp_status idp_config_load(const char* path, idp_config** out) {
    return guarded([&] {
        require("idp_config_load", path, out);
        *out = new idp_config{idpref::load_config(path)};
    });
}

void idp_config_free(idp_config* cfg) { delete cfg; }

idp_status idp_config_set(idp_config* cfg, const char* key, const char* value) {
    return guarded([&] {
        require("idp_config_set", cfg, key, value);
        cfg->value.set(key, value);
    });
}

idp_status idp_config_seed(const idp_config* cfg, uint64_t* out) {
    return guarded([&] {
        require("idp_config_seed", cfg, out);
        *out = cfg->value.seed;
    });
}

idp_status idp_config_save(const idp_config* cfg, const char* path) {
    return guarded([&] {
        require("idp_config_save", cfg, path);
        std::FILE* f = std::fopen(path, "wb");
        if (!f) idpref::fail(idpref::ErrorKind::Io, fmt::format("cannot open '{}' for writing", path));
        const std::string body = cfg->value.to_json().dump(2) + "\n";
        const bool ok = std::fwrite(body.data(), 1, body.size(), f) == body.size();
        if (std::fclose(f) != 0 || !ok) idpref::fail(idpref::ErrorKind::Io, fmt::format("failed writing '{}'", path));
    });
}

idp_status idp_config_use_world(idp_config* cfg, const char* path) {
    return guarded([&] {
        require("idp_config_use_world", cfg, path);
        cfg->value.world = idpref::load_world_file(path);
    });
}

idp_status idp_world_save(const idp_config* cfg, const char* path) {
    return guarded([&] {
        require("idp_world_save", cfg, path);
        cfg->value.validate();
        idpref::save_world_file(cfg->value.world, path);
    });
}

idp_status idp_model_load(const char* path, idp_model** out) {
    return guarded([&] {
        require("idp_model_load", path, out);
        *out = new idp_model{idpref::load_checkpoint(path)};
    });
}

idp_status idp_model_save(const idp_model* model, const char* path) {
    return guarded([&] {
        require("idp_model_save", model, path);
        idpref::save_checkpoint(model->value, path);
    });
}

void idp_model_free(idp_model* model) { delete model; }

idp_status idp_model_info(const idp_model* model, int64_t* step, size_t* trainable, size_t* total) {
    return guarded([&] {
        require("idp_model_info", model);
        const auto& p = model->value;
        if (step) *step = p.step;
        if (trainable) *trainable = static_cast<size_t>(p.trainable_size());
        if (total) *total = static_cast<size_t>(p.base.size() + p.adapter.size());
    });
}

idp_status idp_pretrain(const idp_config* cfg, uint64_t seed, idp_model** out) {
    return guarded([&] {
        require("idp_pretrain", cfg, out);
        cfg->value.validate();
        *out = new idp_model{idpref::pretrain_stage(cfg->value, scenario_of(cfg), seed)};
    });
}

idp_status idp_finetune(const idp_config* cfg, const idp_model* base, uint64_t seed, int steps, int checkpoint_every,
                        idp_checkpoint_fn on_checkpoint, void* user, idp_model** out) {
    return guarded([&] {
        require("idp_finetune", cfg, base, out);
        cfg->value.validate();
        const int n = steps < 0 ? cfg->value.diffusion.init_steps : steps;
        const int every = on_checkpoint && checkpoint_every > 0 ? checkpoint_every : 0;
        *out = new idp_model{idpref::finetune_stage(cfg->value, scenario_of(cfg), base->value, seed, n, every,
                                                    wrap(on_checkpoint, user))};
    });
}

idp_status idp_repo_build(const idp_config* cfg, const idp_model* ft, const idp_model* base, uint64_t seed,
                          idp_repo** out) {
    return guarded([&] {
        require("idp_repo_build", cfg, ft, base, out);
        cfg->value.validate();
        *out = new idp_repo{idpref::build_stage(cfg->value, scenario_of(cfg), ft->value, base->value, seed)};
    });
}

idp_status idp_repo_refresh(const idp_config* cfg, const idp_repo* repo, const idp_model* ft, uint64_t seed,
                            idp_repo** out) {
    return guarded([&] {
        require("idp_repo_refresh", cfg, repo, ft, out);
        cfg->value.validate();
        *out = new idp_repo{idpref::refresh_repository(repo->value, ft->value,
                                                       idpref::child_seed(seed, idpref::stream::sample_ft),
                                                       idpref::sampling_setup(cfg->value))};
    });
}

idp_status idp_repo_load(const char* path, idp_repo** out) {
    return guarded([&] {
        require("idp_repo_load", path, out);
        *out = new idp_repo{idpref::load_repository(path)};
    });
}

idp_status idp_repo_save(const idp_repo* repo, const char* path) {
    return guarded([&] {
        require("idp_repo_save", repo, path);
        idpref::save_repository(repo->value, path);
    });
}

void idp_repo_free(idp_repo* repo) { delete repo; }

idp_status idp_repo_size(const idp_repo* repo, size_t* out) {
    return guarded([&] {
        require("idp_repo_size", repo, out);
        *out = repo->value.records.size();
    });
}

idp_status idp_repo_score(const idp_config* cfg, idp_repo* repo, const char* table_path) {
    return guarded([&] {
        require("idp_repo_score", cfg, repo);
        const auto rows = idpref::score_stage(cfg->value, repo->value);
        if (table_path) idpref::write_score_table(rows, table_path);
    });
}

idp_status idp_repo_load_scores(idp_repo* repo, const char* path) {
    return guarded([&] {
        require("idp_repo_load_scores", repo, path);
        idpref::apply_scores(repo->value, idpref::read_score_table(path));
    });
}

idp_status idp_select_pairs(const idp_config* cfg, const idp_repo* repo, idp_pairs** out) {
    return guarded([&] {
        require("idp_select_pairs", cfg, repo, out);
        cfg->value.validate();
        *out = new idp_pairs{idpref::select_stage(cfg->value, repo->value).merged};
    });
}

idp_status idp_pairs_load(const char* path, idp_pairs** out) {
    return guarded([&] {
        require("idp_pairs_load", path, out);
        *out = new idp_pairs{idpref::load_pairs(path)};
    });
}

idp_status idp_pairs_save(const idp_pairs* pairs, const char* path) {
    return guarded([&] {
        require("idp_pairs_save", pairs, path);
        idpref::save_pairs(pairs->value, path);
    });
}

void idp_pairs_free(idp_pairs* pairs) { delete pairs; }

idp_status idp_pairs_count(const idp_pairs* pairs, size_t* out) {
    return guarded([&] {
        require("idp_pairs_count", pairs, out);
        *out = pairs->value.size();
    });
}

idp_status idp_hpo_train(const idp_config* cfg, const idp_model* init, const idp_pairs* pairs, const idp_repo* repo,
                         uint64_t seed, idp_checkpoint_fn on_checkpoint, void* user, const char* trace_path,
                         idp_model** out) {
    return guarded([&] {
        require("idp_hpo_train", cfg, init, pairs, repo, out);
        cfg->value.validate();
        idpref::PairSets sets;
        sets.merged = pairs->value;
        idpref::HpoResult r =
            idpref::hpo_stage(cfg->value, init->value, sets, repo->value, seed, wrap(on_checkpoint, user));
        if (trace_path) idpref::write_loss_trace(r.trace, trace_path);
        *out = new idp_model{std::move(r.theta)};
    });
}

idp_status idp_eval_identity(const idp_config* cfg, const idp_model* model, uint64_t seed, idp_rows** out) {
    return guarded([&] {
        require("idp_eval_identity", cfg, model, out);
        const auto& c = cfg->value;
        c.validate();
        const auto ctx = idpref::make_eval_context(c, scenario_of(cfg));
        *out = new idp_rows{idpref::eval_identity_vs_length(model->value, ctx, c.eval.lengths, c.eval.n_samples,
                                                            idpref::child_seed(seed, idpref::stream::eval),
                                                            c.eval.max_length_factor)};
    });
}

idp_status idp_eval_dynamic(const idp_config* cfg, const idp_model* const* models, size_t count, uint64_t seed,
                            idp_rows** out) {
    return guarded([&] {
        require("idp_eval_dynamic", cfg, out);
        if (count > 0) require("idp_eval_dynamic", models);
        const auto& c = cfg->value;
        c.validate();
        std::vector<idpref::Checkpoint> checkpoints;
        for (size_t i = 0; i < count; ++i) {
            require("idp_eval_dynamic", models[i]);
            checkpoints.emplace_back(models[i]->value.step, models[i]->value);
        }
        const auto ctx = idpref::make_eval_context(c, scenario_of(cfg));
        *out = new idp_rows{idpref::eval_dynamic_vs_checkpoints(checkpoints, ctx, c.eval.n_samples,
                                                                idpref::child_seed(seed, idpref::stream::eval))};
    });
}

idp_status idp_rows_load(const char* path, idp_rows** out) {
    return guarded([&] {
        require("idp_rows_load", path, out);
        *out = new idp_rows{idpref::read_metric_rows(path)};
    });
}

idp_status idp_rows_emit(const idp_rows* rows, const char* path, const char* format, const char* x_label) {
    return guarded([&] {
        require("idp_rows_emit", rows, path, format);
        idpref::emit_report(rows->value, path, format, x_label ? x_label : "x");
    });
}

void idp_rows_free(idp_rows* rows) { delete rows; }

idp_status idp_rows_count(const idp_rows* rows, size_t* out) {
    return guarded([&] {
        require("idp_rows_count", rows, out);
        *out = rows->value.size();
    });
}

idp_status idp_rows_get(const idp_rows* rows, size_t index, const char** name, double* x, double* value) {
    return guarded([&] {
        require("idp_rows_get", rows);
        if (index >= rows->value.size())
            idpref::fail(idpref::ErrorKind::InvalidArgument,
                         fmt::format("row index {} out of range ({} rows)", index, rows->value.size()));
        const auto& r = rows->value[index];
        if (name) *name = r.name.c_str();
        if (x) *x = r.x;
        if (value) *value = r.value;
    });
}

idp_status idp_ablate(const idp_config* cfg, uint64_t seed, const char* const* labels, size_t count,
                      const char* table_path) {
    return guarded([&] {
        require("idp_ablate", cfg, table_path);
        if (count > 0) require("idp_ablate", labels);
        std::vector<idpref::AblationSpec> specs;
        for (size_t i = 0; i < count; ++i) {
            require("idp_ablate", labels[i]);
            specs.push_back(idpref::parse_ablation_spec(labels[i]));
        }
        if (specs.empty()) specs = idpref::default_ablation_grid();
        idpref::write_ablation_table(idpref::run_ablations(specs, cfg->value, seed), table_path);
    });
}

idp_status idp_pipeline_run(const idp_config* cfg, uint64_t seed, const char* out_dir) {
    return guarded([&] {
        require("idp_pipeline_run", cfg, out_dir);
        idpref::run_experiment(cfg->value, seed, out_dir);
    });
}

} // extern "C"
