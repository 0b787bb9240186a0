// Copyright (c) 2026, idpref contributors
// SPDX-License-Identifier: Apache-2.0

#include "hpo.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <unordered_map>

namespace idpref {

void HpoConfig::validate() const {
    if (!(beta_dpo >= 0.0) || !std::isfinite(beta_dpo)) fail(ErrorKind::Configuration, "hpo.beta_dpo must be >= 0");
    if (steps < 0) fail(ErrorKind::Configuration, "hpo.steps must be >= 0");
    if (pairs_per_step < 1) fail(ErrorKind::Configuration, "hpo.pairs_per_step must be >= 1");
}

namespace {

// -log sigmoid(-z) = softplus(z)
double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

void require_finite(double v, const char* term) {
    if (!std::isfinite(v)) fail(ErrorKind::Numeric, fmt::format("hpo loss: non-finite {}", term));
}

} // namespace

HpoLossTerms hpo_loss(const DenoiserParams& theta, const DenoiserParams& ref, std::span<const PairBatch> batches,
                      double beta_dpo, const NoiseSchedule& schedule, Vec* grad) {
    if (batches.empty()) fail(ErrorKind::InvalidArgument, "hpo_loss: no pairs");
    if (!(theta.shape.video_size == ref.shape.video_size && theta.shape.cond_dim == ref.shape.cond_dim))
        fail(ErrorKind::InvalidArgument, "hpo_loss: theta and ref shapes are incompatible");
    const int n = theta.shape.video_size;
    const auto cols = static_cast<Eigen::Index>(2 * batches.size());

    Mat noisy(n, cols), noise(n, cols), cond(theta.shape.cond_dim, cols);
    std::vector<int> steps(static_cast<std::size_t>(cols));
    for (std::size_t i = 0; i < batches.size(); ++i) {
        const PairBatch& b = batches[i];
        const auto w = static_cast<Eigen::Index>(2 * i);
        noisy.col(w) = forward_diffuse(b.winner, b.t_winner, b.noise_winner, schedule);
        noisy.col(w + 1) = forward_diffuse(b.loser, b.t_loser, b.noise_loser, schedule);
        noise.col(w) = b.noise_winner;
        noise.col(w + 1) = b.noise_loser;
        cond.col(w) = b.cond_winner;
        cond.col(w + 1) = b.cond_loser;
        steps[2 * i] = b.t_winner;
        steps[2 * i + 1] = b.t_loser;
    }

    const ForwardCache fc = forward(theta, noisy, steps, cond, schedule);
    const Mat ref_out = forward(ref, noisy, steps, cond, schedule).out;
    const Mat resid_theta = noise - fc.out;
    const Mat resid_ref = noise - ref_out;

    HpoLossTerms terms;
    double total = 0.0;
    Mat d_out = Mat::Zero(n, cols);
    const double inv_n = 1.0 / n;
    const double inv_batch = 1.0 / static_cast<double>(batches.size());
    for (std::size_t i = 0; i < batches.size(); ++i) {
        const auto w = static_cast<Eigen::Index>(2 * i);
        terms.d_theta_winner = resid_theta.col(w).squaredNorm() * inv_n;
        terms.d_ref_winner = resid_ref.col(w).squaredNorm() * inv_n;
        terms.d_theta_loser = resid_theta.col(w + 1).squaredNorm() * inv_n;
        terms.d_ref_loser = resid_ref.col(w + 1).squaredNorm() * inv_n;
        require_finite(terms.d_theta_winner, "theta winner error");
        require_finite(terms.d_ref_winner, "reference winner error");
        require_finite(terms.d_theta_loser, "theta loser error");
        require_finite(terms.d_ref_loser, "reference loser error");
        terms.inner = (terms.d_theta_winner - terms.d_ref_winner) - (terms.d_theta_loser - terms.d_ref_loser);
        const double z = beta_dpo * terms.inner;
        require_finite(z, "scaled preference margin");
        terms.loss = softplus(z);
        total += terms.loss;
        if (grad) {
            // dL/dx = beta * sigmoid(beta x);  dd/d(eps_hat) = -2 (eps - eps_hat) / n
            const double g = beta_dpo * sigmoid(z) * inv_batch;
            d_out.col(w) = (-2.0 * inv_n * g) * resid_theta.col(w);
            d_out.col(w + 1) = (2.0 * inv_n * g) * resid_theta.col(w + 1);
        }
    }
    if (grad) *grad = backward(theta, fc, d_out);
    const double mean = total * inv_batch;
    if (batches.size() > 1) terms.loss = mean;
    return terms;
}

HpoLossTerms hpo_pair_loss(const DenoiserParams& theta, const DenoiserParams& ref, const PairBatch& batch,
                           double beta_dpo, const NoiseSchedule& schedule, Vec* grad) {
    return hpo_loss(theta, ref, std::span<const PairBatch>(&batch, 1), beta_dpo, schedule, grad);
}

PairBatch make_pair_batch(const PreferencePair& pair, const Repository& repo, const NoiseSchedule& schedule,
                          std::mt19937_64& rng, bool independent_t) {
    const VideoRecord* w = repo.find(pair.winner_id);
    const VideoRecord* l = repo.find(pair.loser_id);
    if (!w) fail(ErrorKind::Data, fmt::format("pair references unknown video '{}'", pair.winner_id));
    if (!l) fail(ErrorKind::Data, fmt::format("pair references unknown video '{}'", pair.loser_id));

    const int cond_dim = repo.manifest.world_config.motion_dim;
    auto prompt_of = [&](const VideoRecord* r) -> const PromptSpec* {
        return r->prompt_id ? repo.prompt(*r->prompt_id) : nullptr;
    };
    // An unprompted (static) video shares its partner's prompt.
    const PromptSpec* pw = prompt_of(w);
    const PromptSpec* pl = prompt_of(l);
    if (!pw) pw = pl;
    if (!pl) pl = pw;

    PairBatch b;
    b.winner = flatten(w->frames);
    b.loser = flatten(l->frames);
    b.cond_winner = pw ? pw->direction : Vec::Zero(cond_dim);
    b.cond_loser = pl ? pl->direction : Vec::Zero(cond_dim);
    std::uniform_int_distribution<int> pick_t(1, schedule.steps());
    b.t_winner = pick_t(rng);
    b.t_loser = independent_t ? pick_t(rng) : b.t_winner;
    b.noise_winner = gaussian_vector(rng, b.winner.size());
    b.noise_loser = gaussian_vector(rng, b.loser.size());
    return b;
}

double hpo_gradient_step(DenoiserParams& theta, const DenoiserParams& ref, std::span<const PairBatch> batches,
                         const HpoConfig& config, const NoiseSchedule& schedule, Optimizer& optimizer) {
    Vec grad;
    const HpoLossTerms terms = hpo_loss(theta, ref, batches, config.beta_dpo, schedule, &grad);
    if (!grad.allFinite()) fail(ErrorKind::Numeric, "hpo: non-finite gradient");
    optimizer.step(theta.trainable(), grad);
    return terms.loss;
}

HpoResult train_hpo(const DenoiserParams& theta_init, const std::vector<PreferencePair>& pairs, const Repository& repo,
                    const HpoConfig& config, const NoiseSchedule& schedule, const CheckpointFn& on_checkpoint) {
    config.validate();
    if (pairs.empty())
        fail(ErrorKind::Configuration,
             "no preference pairs to train on; loosen select.theta_id / select.tau_dy or enlarge the repository");
    if (!theta_init.base.allFinite() || !theta_init.adapter.allFinite())
        fail(ErrorKind::Numeric, "train_hpo: initial parameters are not finite");
    for (const auto& p : pairs) {
        if (!repo.find(p.winner_id) || !repo.find(p.loser_id))
            fail(ErrorKind::Data, fmt::format("pair ({}, {}) references a video missing from the repository",
                                              p.winner_id, p.loser_id));
    }

    const DenoiserParams ref = theta_init;
    HpoResult result{theta_init, {}};
    result.theta.step = 0;
    Optimizer optimizer(config.optimizer);
    const bool checkpoints = on_checkpoint && config.checkpoint_every > 0;
    if (checkpoints) on_checkpoint(0, result.theta);

    std::vector<std::size_t> id_stage;
    for (std::size_t i = 0; i < pairs.size(); ++i)
        if (pairs[i].stage == Stage::IdPreferred) id_stage.push_back(i);
    const int curriculum_steps = (config.curriculum && !id_stage.empty()) ? (config.steps + 1) / 2 : 0;

    for (int step = 1; step <= config.steps; ++step) {
        auto rng = derived_rng(config.seed, stream::hpo, static_cast<std::uint64_t>(step));
        std::vector<PairBatch> batches;
        std::string stage;
        for (int k = 0; k < config.pairs_per_step; ++k) {
            std::size_t idx;
            if (step <= curriculum_steps) {
                std::uniform_int_distribution<std::size_t> pick(0, id_stage.size() - 1);
                idx = id_stage[pick(rng)];
            } else {
                std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 1);
                idx = pick(rng);
            }
            const std::string s = to_string(pairs[idx].stage);
            stage = stage.empty() || stage == s ? s : "Mixed";
            batches.push_back(make_pair_batch(pairs[idx], repo, schedule, rng, config.independent_t));
        }
        const double loss = hpo_gradient_step(result.theta, ref, batches, config, schedule, optimizer);
        result.theta.step = step;
        result.trace.push_back({step, loss, stage});
        if (checkpoints && (step % config.checkpoint_every == 0 || step == config.steps))
            on_checkpoint(step, result.theta);
    }
    return result;
}

void write_loss_trace(const std::vector<TraceRow>& trace, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, fmt::format("cannot open '{}' for writing", path));
    out << "step,loss,pair_stage\n";
    for (const auto& r : trace) out << fmt::format("{},{:.9g},{}\n", r.step, r.loss, r.stage);
    if (!out) fail(ErrorKind::Io, fmt::format("failed writing '{}'", path));
}

} // namespace idpref
