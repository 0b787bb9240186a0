// Copyright (c) 2026, idpref contributors
// SPDX-License-Identifier: Apache-2.0
//
// C interface to the idpref preference-optimization toolkit.
//
// Every function returns an idp_status. On failure the message for the
// calling thread is available from idp_last_error() until the next call.
// Objects returned through out-pointers are owned by the caller and released
// with the matching *_free function (which accepts NULL).

#ifndef IDPREF_IDPREF_H
#define IDPREF_IDPREF_H

#include <stddef.h>
#include <stdint.h>

#if defined(IDPREF_BUILDING)
#define IDP_API __attribute__((visibility("default")))
#else
#define IDP_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum idp_status {
    IDP_OK = 0,
    IDP_ERR_INVALID_ARGUMENT = 1,
    IDP_ERR_CONFIGURATION = 2,
    IDP_ERR_IO = 3,
    IDP_ERR_PARSE = 4,
    IDP_ERR_DATA = 5,
    IDP_ERR_STATE = 6,
    IDP_ERR_NUMERIC = 7,
    IDP_ERR_SERIALIZATION = 8,
    IDP_ERR_USAGE = 9,
    IDP_ERR_INTERNAL = 10
} idp_status;

typedef struct idp_config idp_config;
typedef struct idp_model idp_model;
typedef struct idp_repo idp_repo;
typedef struct idp_pairs idp_pairs;
typedef struct idp_rows idp_rows;

/* Called with a model snapshot at step 0, every `checkpoint_every` steps and
 * at the last step. The model is only valid during the call. */
typedef void (*idp_checkpoint_fn)(int64_t step, const idp_model* model, void* user);

IDP_API const char* idp_version(void);
IDP_API const char* idp_status_name(idp_status status);
IDP_API const char* idp_last_error(void);

/* Configuration */
IDP_API idp_status idp_config_new(idp_config** out);
IDP_API idp_status idp_config_load(const char* path, idp_config** out);
IDP_API void idp_config_free(idp_config* cfg);
/* Dotted key, textual value: "hpo.steps" "200", "eval.lengths" "[8,16]". */
IDP_API idp_status idp_config_set(idp_config* cfg, const char* key, const char* value);
IDP_API idp_status idp_config_seed(const idp_config* cfg, uint64_t* out);
IDP_API idp_status idp_config_save(const idp_config* cfg, const char* path);
/* Replaces the world.* section with the settings stored in a world file. */
IDP_API idp_status idp_config_use_world(idp_config* cfg, const char* path);
IDP_API idp_status idp_world_save(const idp_config* cfg, const char* path);

/* Models */
IDP_API idp_status idp_model_load(const char* path, idp_model** out);
IDP_API idp_status idp_model_save(const idp_model* model, const char* path);
IDP_API void idp_model_free(idp_model* model);
IDP_API idp_status idp_model_info(const idp_model* model, int64_t* step, size_t* trainable, size_t* total);

IDP_API idp_status idp_pretrain(const idp_config* cfg, uint64_t seed, idp_model** out);
/* Self-reconstruction on the inflated references. steps < 0 uses
 * diffusion.init_steps; checkpoint_every <= 0 disables the callback. */
IDP_API idp_status idp_finetune(const idp_config* cfg, const idp_model* base, uint64_t seed, int steps,
                                int checkpoint_every, idp_checkpoint_fn on_checkpoint, void* user,
                                idp_model** out);

/* Repositories */
IDP_API idp_status idp_repo_build(const idp_config* cfg, const idp_model* ft, const idp_model* base, uint64_t seed,
                                  idp_repo** out);
/* Replaces the fine-tuned samples with fresh ones from `ft`. */
IDP_API idp_status idp_repo_refresh(const idp_config* cfg, const idp_repo* repo, const idp_model* ft, uint64_t seed,
                                    idp_repo** out);
IDP_API idp_status idp_repo_load(const char* path, idp_repo** out);
IDP_API idp_status idp_repo_save(const idp_repo* repo, const char* path);
IDP_API void idp_repo_free(idp_repo* repo);
IDP_API idp_status idp_repo_size(const idp_repo* repo, size_t* out);
/* Scores and normalizes every record in place; writes the score table when
 * table_path is not NULL. */
IDP_API idp_status idp_repo_score(const idp_config* cfg, idp_repo* repo, const char* table_path);
/* Attaches rewards from a score table written by idp_repo_score. */
IDP_API idp_status idp_repo_load_scores(idp_repo* repo, const char* path);

/* Preference pairs */
IDP_API idp_status idp_select_pairs(const idp_config* cfg, const idp_repo* repo, idp_pairs** out);
IDP_API idp_status idp_pairs_load(const char* path, idp_pairs** out);
IDP_API idp_status idp_pairs_save(const idp_pairs* pairs, const char* path);
IDP_API void idp_pairs_free(idp_pairs* pairs);
IDP_API idp_status idp_pairs_count(const idp_pairs* pairs, size_t* out);

/* Preference training. trace_path may be NULL. */
IDP_API idp_status idp_hpo_train(const idp_config* cfg, const idp_model* init, const idp_pairs* pairs,
                                 const idp_repo* repo, uint64_t seed, idp_checkpoint_fn on_checkpoint, void* user,
                                 const char* trace_path, idp_model** out);

/* Evaluation rows (name, x, value) */
IDP_API idp_status idp_eval_identity(const idp_config* cfg, const idp_model* model, uint64_t seed, idp_rows** out);
/* Each model contributes one row keyed by its training step. */
IDP_API idp_status idp_eval_dynamic(const idp_config* cfg, const idp_model* const* models, size_t count,
                                    uint64_t seed, idp_rows** out);
IDP_API idp_status idp_rows_load(const char* path, idp_rows** out);
/* format is "csv" or "svg"; x_label may be NULL. */
IDP_API idp_status idp_rows_emit(const idp_rows* rows, const char* path, const char* format, const char* x_label);
IDP_API void idp_rows_free(idp_rows* rows);
IDP_API idp_status idp_rows_count(const idp_rows* rows, size_t* out);
IDP_API idp_status idp_rows_get(const idp_rows* rows, size_t index, const char** name, double* x, double* value);

/* Ablations. labels look like "Pid+Pdy/Rid+Rdy+Rsem"; count 0 runs the default grid. */
IDP_API idp_status idp_ablate(const idp_config* cfg, uint64_t seed, const char* const* labels, size_t count,
                              const char* table_path);

/* Full pipeline with every artifact written into out_dir. */
IDP_API idp_status idp_pipeline_run(const idp_config* cfg, uint64_t seed, const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif
