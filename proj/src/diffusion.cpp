// Copyright (c) 2026, idpref contributors
// SPDX-License-Identifier: Apache-2.0

#include "diffusion.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>

namespace idpref {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// ---------------------------------------------------------------------------
// Schedule and forward process
// ---------------------------------------------------------------------------

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : beta_(std::move(betas)) {
    alpha_.resize(beta_.size());
    alpha_bar_.resize(beta_.size());
    double running = 1.0;
    for (std::size_t i = 0; i < beta_.size(); ++i) {
        alpha_[i] = 1.0 - beta_[i];
        running *= alpha_[i];
        alpha_bar_[i] = running;
    }
}

NoiseSchedule make_schedule(int steps, double beta_min, double beta_max) {
    if (steps < 1) fail(ErrorKind::Configuration, "make_schedule: steps must be >= 1");
    if (!(beta_min > 0.0) || !(beta_min <= beta_max) || !(beta_max < 1.0))
        fail(ErrorKind::Configuration,
             fmt::format("make_schedule: need 0 < beta_min <= beta_max < 1 (got {}, {})", beta_min, beta_max));
    std::vector<double> betas(static_cast<std::size_t>(steps));
    for (int i = 0; i < steps; ++i) {
        const double f = steps > 1 ? static_cast<double>(i) / (steps - 1) : 0.0;
        betas[static_cast<std::size_t>(i)] = beta_min + (beta_max - beta_min) * f;
    }
    return NoiseSchedule(std::move(betas));
}

Vec forward_diffuse(const Vec& v0, int t, const Vec& noise, const NoiseSchedule& schedule) {
    if (t < 1 || t > schedule.steps())
        fail(ErrorKind::InvalidArgument, fmt::format("forward_diffuse: step {} outside 1..{}", t, schedule.steps()));
    if (v0.size() != noise.size()) fail(ErrorKind::InvalidArgument, "forward_diffuse: shape mismatch");
    const double ab = schedule.alpha_bar(t);
    return std::sqrt(ab) * v0 + std::sqrt(1.0 - ab) * noise;
}

// ---------------------------------------------------------------------------
// Network layout
// ---------------------------------------------------------------------------

namespace {

struct LayerDims {
    int out, in;
};

std::array<LayerDims, 3> layer_dims(const NetworkShape& s) {
    return {{{s.hidden, s.input_size()}, {s.hidden, s.hidden}, {s.video_size, s.hidden}}};
}

struct Offsets {
    std::array<std::size_t, 3> weight{}, bias{}, adapter_b{}, adapter_a{};
    std::size_t skip = 0;
};

Offsets offsets(const NetworkShape& s) {
    Offsets o;
    std::size_t base = 0, adapter = 0;
    const auto dims = layer_dims(s);
    const auto r = static_cast<std::size_t>(s.adapter_rank);
    for (std::size_t l = 0; l < 3; ++l) {
        const auto out = static_cast<std::size_t>(dims[l].out);
        const auto in = static_cast<std::size_t>(dims[l].in);
        o.weight[l] = base;
        base += out * in;
        o.bias[l] = base;
        base += out;
        o.adapter_b[l] = adapter;
        adapter += out * r;
        o.adapter_a[l] = adapter;
        adapter += r * in;
    }
    o.skip = base;
    return o;
}

Eigen::Map<const RowMat> view(const Vec& v, std::size_t off, int rows, int cols) {
    return Eigen::Map<const RowMat>(v.data() + off, rows, cols);
}

Eigen::Map<RowMat> view(Vec& v, std::size_t off, int rows, int cols) {
    return Eigen::Map<RowMat>(v.data() + off, rows, cols);
}

Mat silu(const Mat& z) {
    return z.unaryExpr([](double x) { return x / (1.0 + std::exp(-x)); });
}

Mat silu_grad(const Mat& z) {
    return z.unaryExpr([](double x) {
        const double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 + x * (1.0 - s));
    });
}

void check_shape(const NetworkShape& s) {
    if (s.video_size < 1 || s.cond_dim < 0 || s.hidden < 1 || s.adapter_rank < 0 || s.diffusion_steps < 1)
        fail(ErrorKind::Configuration, "invalid network shape");
}

} // namespace

std::size_t NetworkShape::base_size() const {
    std::size_t n = 0;
    for (auto d : layer_dims(*this)) n += static_cast<std::size_t>(d.out) * (static_cast<std::size_t>(d.in) + 1);
    return n + static_cast<std::size_t>(diffusion_steps);
}

std::size_t NetworkShape::adapter_size() const {
    std::size_t n = 0;
    for (auto d : layer_dims(*this))
        n += static_cast<std::size_t>(adapter_rank) * static_cast<std::size_t>(d.out + d.in);
    return n;
}

DenoiserParams init_params(const NetworkShape& shape, std::uint64_t seed) {
    check_shape(shape);
    DenoiserParams p;
    p.shape = shape;
    p.shape.adapter_rank = 0;
    p.base = Vec::Zero(static_cast<Eigen::Index>(p.shape.base_size()));
    auto rng = derived_rng(seed, stream::init_params);
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto off = offsets(p.shape);
    const auto dims = layer_dims(p.shape);
    for (std::size_t l = 0; l < 3; ++l) {
        auto w = view(p.base, off.weight[l], dims[l].out, dims[l].in);
        const double scale = 1.0 / std::sqrt(static_cast<double>(dims[l].in));
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = scale * normal(rng);
    }
    p.base.tail(shape.diffusion_steps).setOnes();
    if (shape.adapter_rank > 0) return attach_adapter(p, shape.adapter_rank, seed);
    return p;
}

void set_skip_gains(DenoiserParams& params, const NoiseSchedule& schedule, double data_noise) {
    const int n = params.shape.diffusion_steps;
    if (schedule.steps() != n) fail(ErrorKind::InvalidArgument, "set_skip_gains: schedule length mismatch");
    if (!(data_noise >= 0.0)) fail(ErrorKind::InvalidArgument, "set_skip_gains: data noise must be >= 0");
    const double var = data_noise * data_noise;
    for (int t = 1; t <= n; ++t) {
        const double ab = schedule.alpha_bar(t);
        params.base[params.base.size() - n + t - 1] = (1.0 - ab) / (ab * var + 1.0 - ab);
    }
}

DenoiserParams attach_adapter(const DenoiserParams& params, int rank, std::uint64_t seed) {
    if (rank < 1) fail(ErrorKind::Configuration, "adapter rank must be >= 1");
    if (params.has_adapter()) fail(ErrorKind::State, "network already carries an adapter");
    DenoiserParams p = params;
    p.shape.adapter_rank = rank;
    p.adapter = Vec::Zero(static_cast<Eigen::Index>(p.shape.adapter_size()));
    auto rng = derived_rng(seed, stream::init_params, 1);
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto off = offsets(p.shape);
    const auto dims = layer_dims(p.shape);
    for (std::size_t l = 0; l < 3; ++l) {
        auto a = view(p.adapter, off.adapter_a[l], rank, dims[l].in);
        const double scale = 1.0 / std::sqrt(static_cast<double>(dims[l].in));
        for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = scale * normal(rng);
    }
    return p;
}

Conditioning Conditioning::from_prompt(const PromptSpec& prompt) { return {prompt.direction, false}; }

Conditioning Conditioning::none(int dim) { return {Vec::Zero(dim), true}; }

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

ForwardCache forward(const DenoiserParams& params, const Mat& noisy, const std::vector<int>& steps,
                     const Mat& cond, const NoiseSchedule& schedule) {
    const int total_steps = schedule.steps();
    const auto& s = params.shape;
    const Eigen::Index batch = noisy.cols();
    if (noisy.rows() != s.video_size || cond.rows() != s.cond_dim || cond.cols() != batch ||
        static_cast<Eigen::Index>(steps.size()) != batch)
        fail(ErrorKind::InvalidArgument,
             fmt::format("predict_noise: input {}x{} / cond {}x{} do not match network (video {}, cond {})",
                         noisy.rows(), noisy.cols(), cond.rows(), cond.cols(), s.video_size, s.cond_dim));
    if (static_cast<Eigen::Index>(params.base.size()) != static_cast<Eigen::Index>(s.base_size()) ||
        (params.has_adapter() && static_cast<std::size_t>(params.adapter.size()) != s.adapter_size()))
        fail(ErrorKind::InvalidArgument, "predict_noise: parameter vector does not match its shape");
    if (total_steps != s.diffusion_steps)
        fail(ErrorKind::InvalidArgument, fmt::format("predict_noise: network was built for {} diffusion steps, schedule has {}",
                                                     s.diffusion_steps, total_steps));
    for (int t : steps)
        if (t < 1 || t > total_steps)
            fail(ErrorKind::InvalidArgument, fmt::format("predict_noise: step {} outside 1..{}", t, total_steps));

    ForwardCache c;
    const auto off = offsets(s);
    const auto dims = layer_dims(s);
    for (std::size_t l = 0; l < 3; ++l) {
        c.weights[l] = view(params.base, off.weight[l], dims[l].out, dims[l].in);
        if (params.has_adapter()) {
            c.weights[l] += view(params.adapter, off.adapter_b[l], dims[l].out, s.adapter_rank) *
                            view(params.adapter, off.adapter_a[l], s.adapter_rank, dims[l].in);
        }
    }

    c.input.resize(s.input_size(), batch);
    c.input.topRows(s.video_size) = noisy;
    const double two_pi = 2.0 * std::numbers::pi;
    for (Eigen::Index b = 0; b < batch; ++b) {
        const double f = static_cast<double>(steps[static_cast<std::size_t>(b)]) / total_steps;
        c.input(s.video_size, b) = f;
        c.input(s.video_size + 1, b) = std::sin(two_pi * f);
        c.input(s.video_size + 2, b) = std::cos(two_pi * f);
    }
    c.input.bottomRows(s.cond_dim) = cond;

    auto bias = [&](std::size_t l) { return Eigen::Map<const Vec>(params.base.data() + off.bias[l], dims[l].out); };
    c.z1 = (c.weights[0] * c.input).colwise() + bias(0);
    c.h1 = silu(c.z1);
    c.z2 = (c.weights[1] * c.h1).colwise() + bias(1);
    c.h2 = silu(c.z2);
    c.out = (c.weights[2] * c.h2).colwise() + bias(2);
    for (Eigen::Index b = 0; b < batch; ++b) {
        const int t = steps[static_cast<std::size_t>(b)];
        const double gain = params.base[static_cast<Eigen::Index>(off.skip) + t - 1];
        c.out.col(b) += (gain / std::sqrt(1.0 - schedule.alpha_bar(t))) * noisy.col(b);
    }
    return c;
}

Vec backward(const DenoiserParams& params, const ForwardCache& c, const Mat& d_out) {
    const auto& s = params.shape;
    const auto off = offsets(s);
    const auto dims = layer_dims(s);

    std::array<Mat, 3> d_w;
    std::array<Vec, 3> d_b;
    d_w[2] = d_out * c.h2.transpose();
    d_b[2] = d_out.rowwise().sum();
    const Mat d_z2 = (c.weights[2].transpose() * d_out).cwiseProduct(silu_grad(c.z2));
    d_w[1] = d_z2 * c.h1.transpose();
    d_b[1] = d_z2.rowwise().sum();
    const Mat d_z1 = (c.weights[1].transpose() * d_z2).cwiseProduct(silu_grad(c.z1));
    d_w[0] = d_z1 * c.input.transpose();
    d_b[0] = d_z1.rowwise().sum();

    if (!params.has_adapter()) {
        Vec grad = Vec::Zero(params.trainable_size());
        for (std::size_t l = 0; l < 3; ++l) {
            view(grad, off.weight[l], dims[l].out, dims[l].in) = d_w[l];
            Eigen::Map<Vec>(grad.data() + off.bias[l], dims[l].out) = d_b[l];
        }
        return grad;
    }

    // W_eff = W + B A  =>  dB = dW A^T, dA = B^T dW
    Vec grad = Vec::Zero(params.adapter.size());
    const int r = s.adapter_rank;
    for (std::size_t l = 0; l < 3; ++l) {
        const auto b_mat = view(params.adapter, off.adapter_b[l], dims[l].out, r);
        const auto a_mat = view(params.adapter, off.adapter_a[l], r, dims[l].in);
        view(grad, off.adapter_b[l], dims[l].out, r) = d_w[l] * a_mat.transpose();
        view(grad, off.adapter_a[l], r, dims[l].in) = b_mat.transpose() * d_w[l];
    }
    return grad;
}

Vec predict_noise(const DenoiserParams& params, const Vec& noisy, int t, const Conditioning& cond,
                  const NoiseSchedule& schedule) {
    if (t < 1 || t > schedule.steps())
        fail(ErrorKind::InvalidArgument, fmt::format("predict_noise: step {} outside 1..{}", t, schedule.steps()));
    const Mat in = noisy;
    const Mat c = cond.null ? Vec::Zero(params.shape.cond_dim) : cond.embedding;
    return forward(params, in, {t}, c, schedule).out.col(0);
}

double regression_loss(const DenoiserParams& params, const NoiseSchedule& schedule, const Mat& clean,
                       const std::vector<int>& steps, const Mat& noise, const Mat& cond, Vec* grad) {
    if (clean.rows() != noise.rows() || clean.cols() != noise.cols())
        fail(ErrorKind::InvalidArgument, "regression_loss: clean/noise shape mismatch");
    Mat noisy(clean.rows(), clean.cols());
    for (Eigen::Index b = 0; b < clean.cols(); ++b)
        noisy.col(b) = forward_diffuse(clean.col(b), steps[static_cast<std::size_t>(b)], noise.col(b), schedule);
    const ForwardCache cache = forward(params, noisy, steps, cond, schedule);
    const Mat resid = noise - cache.out;
    const double denom = static_cast<double>(resid.size());
    const double loss = resid.squaredNorm() / denom;
    if (grad) *grad = backward(params, cache, (-2.0 / denom) * resid);
    return loss;
}

// ---------------------------------------------------------------------------
// Optimiser
// ---------------------------------------------------------------------------

void Optimizer::step(Eigen::Ref<Vec> params, const Vec& grad) {
    if (grad.size() != params.size()) fail(ErrorKind::InvalidArgument, "optimizer: gradient size mismatch");
    const double lr = config_.lr;
    if (config_.weight_decay != 0.0) params *= (1.0 - lr * config_.weight_decay);
    if (config_.kind == OptimizerKind::Sgd) {
        params -= lr * grad;
        return;
    }
    if (m_.size() != params.size()) {
        m_ = Vec::Zero(params.size());
        v_ = Vec::Zero(params.size());
        t_ = 0;
    }
    ++t_;
    m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * grad;
    v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * grad.cwiseAbs2();
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    params.array() -= lr * (m_.array() / bc1) / ((v_.array() / bc2).sqrt() + config_.eps);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

DenoiserParams train_denoiser(DenoiserParams params, const NoiseSchedule& schedule, const ExampleSource& source,
                              const RegressionTrainConfig& config, const CheckpointFn& on_checkpoint) {
    if (config.steps < 0) fail(ErrorKind::Configuration, "training steps must be >= 0");
    if (config.batch_size < 1) fail(ErrorKind::Configuration, "batch size must be >= 1");
    const auto& shape = params.shape;
    Optimizer opt(config.optimizer);
    const bool checkpoints = on_checkpoint && config.checkpoint_every > 0;
    params.step = 0;
    if (checkpoints) on_checkpoint(0, params);

    const auto batch = static_cast<Eigen::Index>(config.batch_size);
    Mat clean(shape.video_size, batch), noise(shape.video_size, batch), cond(shape.cond_dim, batch);
    std::vector<int> steps(static_cast<std::size_t>(batch));
    for (int step = 1; step <= config.steps; ++step) {
        auto rng = derived_rng(config.seed, config.stream, static_cast<std::uint64_t>(step));
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::uniform_int_distribution<int> pick_t(1, schedule.steps());
        for (Eigen::Index b = 0; b < batch; ++b) {
            TrainExample ex = source(rng);
            if (ex.video.size() != shape.video_size) fail(ErrorKind::InvalidArgument, "training video has wrong size");
            clean.col(b) = ex.video;
            const bool drop = unit(rng) < config.cond_dropout;
            cond.col(b) = (drop || ex.cond.null) ? Vec::Zero(shape.cond_dim) : ex.cond.embedding;
            steps[static_cast<std::size_t>(b)] = pick_t(rng);
            noise.col(b) = gaussian_vector(rng, shape.video_size);
        }
        Vec grad;
        regression_loss(params, schedule, clean, steps, noise, cond, &grad);
        if (!grad.allFinite()) fail(ErrorKind::Numeric, fmt::format("non-finite gradient at training step {}", step));
        opt.step(params.trainable(), grad);
        params.step = step;
        if (checkpoints && (step % config.checkpoint_every == 0 || step == config.steps)) on_checkpoint(step, params);
    }
    return params;
}

DenoiserParams train_initial(DenoiserParams params, const NoiseSchedule& schedule, std::span<const Frames> static_videos,
                             std::span<const PromptSpec> prompts, const RegressionTrainConfig& config,
                             const CheckpointFn& on_checkpoint) {
    if (static_videos.empty()) fail(ErrorKind::Configuration, "train_initial: empty static video set");
    std::vector<Vec> flat;
    for (const Frames& f : static_videos) flat.push_back(flatten(f));
    const int cond_dim = params.shape.cond_dim;
    ExampleSource source = [&](std::mt19937_64& rng) {
        std::uniform_int_distribution<std::size_t> pick(0, flat.size() - 1);
        TrainExample ex{flat[pick(rng)], Conditioning::none(cond_dim)};
        if (!prompts.empty()) {
            std::uniform_int_distribution<std::size_t> pick_prompt(0, prompts.size() - 1);
            ex.cond = Conditioning::from_prompt(prompts[pick_prompt(rng)]);
        }
        return ex;
    };
    return train_denoiser(std::move(params), schedule, source, config, on_checkpoint);
}

DenoiserParams pretrain_base(DenoiserParams params, const NoiseSchedule& schedule, const Scenario& scenario,
                             double amplitude_min, double amplitude_max, const RegressionTrainConfig& config) {
    const World& world = scenario.world;
    ExampleSource source = [&](std::mt19937_64& rng) {
        std::uniform_int_distribution<std::size_t> pick_prompt(0, scenario.prompts.size() - 1);
        std::uniform_real_distribution<double> amp(amplitude_min, amplitude_max);
        const PromptSpec& prompt = scenario.prompts[pick_prompt(rng)];
        IdentitySpec identity{random_unit_vector(rng, world.config.identity_dim)};
        MotionSpec motion{prompt.direction, amp(rng)};
        const std::uint64_t render_seed = rng();
        return TrainExample{flatten(render_video(world, identity, motion, scenario.frames, render_seed)),
                            Conditioning::from_prompt(prompt)};
    };
    return train_denoiser(std::move(params), schedule, source, config);
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

std::vector<int> sampler_timesteps(int total_steps, int sampler_steps) {
    if (sampler_steps < 1) fail(ErrorKind::Configuration, "sampler steps must be >= 1");
    if (sampler_steps > total_steps)
        fail(ErrorKind::Configuration,
             fmt::format("sampler steps {} exceed diffusion steps {}", sampler_steps, total_steps));
    std::vector<int> ts(static_cast<std::size_t>(sampler_steps));
    for (int k = 1; k <= sampler_steps; ++k) ts[static_cast<std::size_t>(k - 1)] = (k * total_steps + sampler_steps - 1) / sampler_steps;
    return ts;
}

Vec sampler_start_noise(int size, std::uint64_t seed) {
    auto rng = derived_rng(seed, stream::sampler);
    return gaussian_vector(rng, size);
}

Mat sample_videos(const DenoiserParams& params, const NoiseSchedule& schedule, const std::vector<Conditioning>& conds,
                  const SamplerConfig& sampler, const std::vector<std::uint64_t>& seeds) {
    if (conds.size() != seeds.size()) fail(ErrorKind::InvalidArgument, "sample_videos: conds/seeds size mismatch");
    const auto ts = sampler_timesteps(schedule.steps(), sampler.steps);
    const auto& s = params.shape;
    const auto batch = static_cast<Eigen::Index>(conds.size());

    Mat x(s.video_size, batch), cond(s.cond_dim, batch);
    for (Eigen::Index b = 0; b < batch; ++b) {
        const auto& c = conds[static_cast<std::size_t>(b)];
        x.col(b) = sampler_start_noise(s.video_size, seeds[static_cast<std::size_t>(b)]);
        cond.col(b) = c.null ? Vec::Zero(s.cond_dim) : c.embedding;
    }
    const Mat null_cond = Mat::Zero(s.cond_dim, batch);
    const bool guided = sampler.guidance_scale != 1.0;

    for (std::size_t k = ts.size(); k-- > 0;) {
        const int t = ts[k];
        const double ab = schedule.alpha_bar(t);
        const double ab_prev = k > 0 ? schedule.alpha_bar(ts[k - 1]) : 1.0;
        const std::vector<int> steps(static_cast<std::size_t>(batch), t);
        Mat eps = forward(params, x, steps, cond, schedule).out;
        if (guided) {
            const Mat eps_null = forward(params, x, steps, null_cond, schedule).out;
            eps = eps_null + sampler.guidance_scale * (eps - eps_null);
        }
        Mat x0 = (x - std::sqrt(1.0 - ab) * eps) / std::sqrt(ab);
        if (sampler.clip_sample > 0.0) {
            for (Eigen::Index b = 0; b < x0.cols(); ++b) {
                const double m = x0.col(b).cwiseAbs().maxCoeff();
                if (m > sampler.clip_sample) x0.col(b) *= sampler.clip_sample / m;
            }
            eps = (x - std::sqrt(ab) * x0) / std::sqrt(1.0 - ab);
        }
        x = std::sqrt(ab_prev) * x0 + std::sqrt(1.0 - ab_prev) * eps;
    }
    return x;
}

Vec sample_video(const DenoiserParams& params, const NoiseSchedule& schedule, const Conditioning& cond,
                 const SamplerConfig& sampler, std::uint64_t seed) {
    return sample_videos(params, schedule, {cond}, sampler, {seed}).col(0);
}

Frames unflatten(const Vec& flat, int frames, int frame_dim) {
    if (flat.size() != static_cast<Eigen::Index>(frames) * frame_dim)
        fail(ErrorKind::InvalidArgument, "unflatten: size mismatch");
    return Eigen::Map<const Frames>(flat.data(), frames, frame_dim);
}

Vec flatten(const Frames& frames) { return Eigen::Map<const Vec>(frames.data(), frames.size()); }

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

Vec from_json_array(const nlohmann::json& j, const char* what) {
    if (!j.is_array()) fail(ErrorKind::Parse, fmt::format("checkpoint: '{}' is not an array", what));
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) fail(ErrorKind::Parse, fmt::format("checkpoint: non-numeric entry in '{}'", what));
        v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    }
    return v;
}

} // namespace

void save_checkpoint(const DenoiserParams& params, const std::string& path) {
    if (!params.base.allFinite() || !params.adapter.allFinite())
        fail(ErrorKind::Serialization, "checkpoint contains non-finite parameters");
    nlohmann::ordered_json j;
    j["format"] = kCheckpointFormat;
    j["shape"] = {{"video_size", params.shape.video_size},
                  {"cond_dim", params.shape.cond_dim},
                  {"hidden", params.shape.hidden},
                  {"adapter_rank", params.shape.adapter_rank},
                  {"diffusion_steps", params.shape.diffusion_steps},
                  {"time_features", NetworkShape::time_features},
                  {"activation", "silu"}};
    j["step"] = params.step;
    j["base"] = to_std(params.base);
    j["adapter"] = to_std(params.adapter);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, fmt::format("cannot open '{}' for writing", path));
    out << j.dump() << '\n';
    if (!out) fail(ErrorKind::Io, fmt::format("failed writing '{}'", path));
}

DenoiserParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, fmt::format("cannot open checkpoint '{}'", path));
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Parse, fmt::format("checkpoint '{}': {}", path, e.what()));
    }
    try {
        if (j.value("format", "") != kCheckpointFormat)
            fail(ErrorKind::Parse, fmt::format("checkpoint '{}': unsupported format '{}'", path, j.value("format", "")));
        DenoiserParams p;
        const auto& sh = j.at("shape");
        p.shape.video_size = sh.at("video_size").get<int>();
        p.shape.cond_dim = sh.at("cond_dim").get<int>();
        p.shape.hidden = sh.at("hidden").get<int>();
        p.shape.adapter_rank = sh.at("adapter_rank").get<int>();
        p.shape.diffusion_steps = sh.at("diffusion_steps").get<int>();
        if (p.shape.video_size < 1 || p.shape.cond_dim < 0 || p.shape.hidden < 1 || p.shape.adapter_rank < 0 ||
            p.shape.diffusion_steps < 1)
            fail(ErrorKind::Data, fmt::format("checkpoint '{}': invalid network shape", path));
        p.step = j.at("step").get<std::int64_t>();
        p.base = from_json_array(j.at("base"), "base");
        p.adapter = from_json_array(j.at("adapter"), "adapter");
        if (static_cast<std::size_t>(p.base.size()) != p.shape.base_size() ||
            static_cast<std::size_t>(p.adapter.size()) != p.shape.adapter_size())
            fail(ErrorKind::Data, fmt::format("checkpoint '{}': parameter count does not match shape", path));
        return p;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Parse, fmt::format("checkpoint '{}': {}", path, e.what()));
    }
}

} // namespace idpref
