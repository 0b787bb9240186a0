// Copyright (c) 2026, idpref contributors
// SPDX-License-Identifier: Apache-2.0
//
// Pairwise preference optimisation of the denoiser against a frozen copy of
// itself. For a pair (w, l) sharing a timestep,
//
//   x = (d_theta(w) - d_ref(w)) - (d_theta(l) - d_ref(l))
//   L = -log sigmoid(-beta * x)
//
// where d_m(v) is the mean squared noise-prediction error of model m on v
// diffused with its own noise draw. Lowering the winner's error relative to
// the reference lowers the loss.

#pragma once

#include "diffusion.hpp"
#include "pareto_select.hpp"
#include "repository.hpp"

#include <string>
#include <vector>

namespace idpref {

struct HpoConfig {
    double beta_dpo = 100.0;
    int steps = 5000;
    int pairs_per_step = 1;
    OptimizerConfig optimizer;
    bool curriculum = false;    // P_id-only for the first half, then all of P
    bool independent_t = false; // separate timesteps for winner and loser
    std::uint64_t seed = 0;
    int checkpoint_every = 0;

    void validate() const;
};

struct PairBatch {
    Vec winner, loser;               // flattened clean videos
    Vec cond_winner, cond_loser;     // conditioning embeddings (zero = null)
    int t_winner = 1, t_loser = 1;
    Vec noise_winner, noise_loser;
};

struct HpoLossTerms {
    double loss = 0.0;
    double d_theta_winner = 0.0, d_ref_winner = 0.0;
    double d_theta_loser = 0.0, d_ref_loser = 0.0;
    double inner = 0.0; // x above
};

/// Mean loss over `batches`; fills `grad` (w.r.t. theta.trainable()) when given.
/// Terms are those of the last batch.
HpoLossTerms hpo_loss(const DenoiserParams& theta, const DenoiserParams& ref, std::span<const PairBatch> batches,
                      double beta_dpo, const NoiseSchedule& schedule, Vec* grad = nullptr);

HpoLossTerms hpo_pair_loss(const DenoiserParams& theta, const DenoiserParams& ref, const PairBatch& batch,
                           double beta_dpo, const NoiseSchedule& schedule, Vec* grad = nullptr);

/// Resolves the pair in the repository and draws timestep(s) and noises from `rng`.
PairBatch make_pair_batch(const PreferencePair& pair, const Repository& repo, const NoiseSchedule& schedule,
                          std::mt19937_64& rng, bool independent_t);

/// One optimiser update on `theta` from the given pairs; returns the mean loss.
double hpo_gradient_step(DenoiserParams& theta, const DenoiserParams& ref, std::span<const PairBatch> batches,
                         const HpoConfig& config, const NoiseSchedule& schedule, Optimizer& optimizer);

struct TraceRow {
    std::int64_t step = 0;
    double loss = 0.0;
    std::string stage;
};

struct HpoResult {
    DenoiserParams theta;
    std::vector<TraceRow> trace;
};

HpoResult train_hpo(const DenoiserParams& theta_init, const std::vector<PreferencePair>& pairs, const Repository& repo,
                    const HpoConfig& config, const NoiseSchedule& schedule, const CheckpointFn& on_checkpoint = {});

void write_loss_trace(const std::vector<TraceRow>& trace, const std::string& path);

} // namespace idpref
