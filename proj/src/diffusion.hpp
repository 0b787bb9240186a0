// Copyright (c) 2026, idpref contributors
// SPDX-License-Identifier: Apache-2.0
//
// Toy denoising-diffusion core over flattened videos: noise schedule, a small
// fully connected noise-prediction network with optional low-rank adapters,
// denoising regression training and a deterministic DDIM sampler.

#pragma once

#include "synthworld.hpp"

#include <cstdint>
#include <array>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace idpref {

class NoiseSchedule {
public:
    NoiseSchedule() = default;
    NoiseSchedule(std::vector<double> betas);

    int steps() const { return static_cast<int>(beta_.size()); }
    // All accessors take 1-based step indices.
    double beta(int t) const { return beta_.at(static_cast<std::size_t>(t - 1)); }
    double alpha(int t) const { return alpha_.at(static_cast<std::size_t>(t - 1)); }
    double alpha_bar(int t) const { return alpha_bar_.at(static_cast<std::size_t>(t - 1)); }

private:
    std::vector<double> beta_, alpha_, alpha_bar_;
};

/// Linear beta schedule.
NoiseSchedule make_schedule(int steps, double beta_min, double beta_max);

/// v_t = sqrt(abar_t) v0 + sqrt(1 - abar_t) eps
Vec forward_diffuse(const Vec& v0, int t, const Vec& noise, const NoiseSchedule& schedule);

struct NetworkShape {
    int video_size = 0; // T * D
    int cond_dim = 0;   // D_mo
    int hidden = 64;
    int adapter_rank = 0; // 0: no adapter
    int diffusion_steps = 100; // length of the per-step skip gain table

    static constexpr int time_features = 3;
    int input_size() const { return video_size + time_features + cond_dim; }
    std::size_t base_size() const;
    std::size_t adapter_size() const;
    bool operator==(const NetworkShape&) const = default;
};

/// eps_hat = MLP(v_t, time features, c) + gamma_t * v_t / sqrt(1 - abar_t), with
/// one gain gamma_t per diffusion step stored after the MLP weights. The gains
/// are part of the parameters but are never trained.
///
/// Flat parameters. When the adapter is present it is the only trainable part
/// and every weight matrix W is used as W + B A.
struct DenoiserParams {
    NetworkShape shape;
    Vec base;
    Vec adapter;
    std::int64_t step = 0;

    bool has_adapter() const { return shape.adapter_rank > 0; }
    Eigen::Index trainable_size() const {
        return has_adapter() ? adapter.size() : base.size() - shape.diffusion_steps;
    }
    Eigen::Ref<Vec> trainable() { return has_adapter() ? adapter.head(adapter.size()) : base.head(trainable_size()); }
    Eigen::Ref<const Vec> trainable() const {
        return has_adapter() ? adapter.head(adapter.size()) : base.head(trainable_size());
    }
};

/// Skip gains start at 1.
DenoiserParams init_params(const NetworkShape& shape, std::uint64_t seed);

/// gamma_t = (1 - abar_t) / (abar_t sigma^2 + 1 - abar_t): the linear noise
/// estimate that is optimal for data with per-entry noise sigma around a point.
void set_skip_gains(DenoiserParams& params, const NoiseSchedule& schedule, double data_noise);

/// Attaches a fresh adapter (A random, B zero) so the effective network is unchanged.
DenoiserParams attach_adapter(const DenoiserParams& params, int rank, std::uint64_t seed);

struct Conditioning {
    Vec embedding;
    bool null = false;

    static Conditioning from_prompt(const PromptSpec& prompt);
    static Conditioning none(int dim);
};

/// Column-batched forward pass with everything backward() needs.
struct ForwardCache {
    std::array<Mat, 3> weights; // effective (adapter-merged) weights
    Mat input, z1, h1, z2, h2, out;
};

/// Columns of `noisy` are flattened videos; `steps[i]` and `cond.col(i)` belong to column i.
ForwardCache forward(const DenoiserParams& params, const Mat& noisy, const std::vector<int>& steps,
                     const Mat& cond, const NoiseSchedule& schedule);

/// Gradient of a scalar loss w.r.t. params.trainable(), given dL/d(out).
Vec backward(const DenoiserParams& params, const ForwardCache& cache, const Mat& d_out);

Vec predict_noise(const DenoiserParams& params, const Vec& noisy, int t, const Conditioning& cond,
                  const NoiseSchedule& schedule);

/// Mean over batch and entries of (eps - eps_hat)^2; fills `grad` when given.
double regression_loss(const DenoiserParams& params, const NoiseSchedule& schedule, const Mat& clean,
                       const std::vector<int>& steps, const Mat& noise, const Mat& cond, Vec* grad);

enum class OptimizerKind { Sgd, AdamW };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::AdamW;
    double lr = 1e-3;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Gradient descent with decoupled weight decay; AdamW adds moment scaling.
class Optimizer {
public:
    explicit Optimizer(OptimizerConfig config) : config_(config) {}
    void step(Eigen::Ref<Vec> params, const Vec& grad);

private:
    OptimizerConfig config_;
    Vec m_, v_;
    std::int64_t t_ = 0;
};

struct TrainExample {
    Vec video;
    Conditioning cond;
};

using ExampleSource = std::function<TrainExample(std::mt19937_64&)>;
using CheckpointFn = std::function<void(std::int64_t step, const DenoiserParams&)>;

struct RegressionTrainConfig {
    int steps = 1000;
    int batch_size = 8;
    OptimizerConfig optimizer;
    double cond_dropout = 0.1;
    std::uint64_t seed = 0;
    std::uint64_t stream = stream::finetune;
    int checkpoint_every = 0; // 0: never
};

/// Standard denoising regression. Calls `on_checkpoint` at step 0 and every
/// `checkpoint_every` steps (including the last) when set.
DenoiserParams train_denoiser(DenoiserParams params, const NoiseSchedule& schedule, const ExampleSource& source,
                              const RegressionTrainConfig& config, const CheckpointFn& on_checkpoint = {});

/// Self-reconstruction on static reference videos; each sample is paired with
/// a prompt drawn from `prompts`.
DenoiserParams train_initial(DenoiserParams params, const NoiseSchedule& schedule, std::span<const Frames> static_videos,
                             std::span<const PromptSpec> prompts, const RegressionTrainConfig& config,
                             const CheckpointFn& on_checkpoint = {});

/// Generic text-to-video pretraining: random identities moving along the
/// prompt direction with random amplitude.
DenoiserParams pretrain_base(DenoiserParams params, const NoiseSchedule& schedule, const Scenario& scenario,
                             double amplitude_min, double amplitude_max, const RegressionTrainConfig& config);

struct SamplerConfig {
    int steps = 50;
    double guidance_scale = 1.0;
    double clip_sample = 0.0; // > 0: rescale each predicted clean video so its largest entry is at most this
};

std::vector<int> sampler_timesteps(int total_steps, int sampler_steps);

/// Deterministic DDIM (eta = 0) from seeded Gaussian noise. Columns of the
/// result are flattened videos, one per entry of `conds`/`seeds`.
Mat sample_videos(const DenoiserParams& params, const NoiseSchedule& schedule, const std::vector<Conditioning>& conds,
                  const SamplerConfig& sampler, const std::vector<std::uint64_t>& seeds);

Vec sample_video(const DenoiserParams& params, const NoiseSchedule& schedule, const Conditioning& cond,
                 const SamplerConfig& sampler, std::uint64_t seed);

/// Seeded starting noise used by the sampler for `seed`.
Vec sampler_start_noise(int size, std::uint64_t seed);

Frames unflatten(const Vec& flat, int frames, int frame_dim);
Vec flatten(const Frames& frames);

inline constexpr const char* kCheckpointFormat = "idpref-ckpt/1";

void save_checkpoint(const DenoiserParams& params, const std::string& path);
DenoiserParams load_checkpoint(const std::string& path);

} // namespace idpref
