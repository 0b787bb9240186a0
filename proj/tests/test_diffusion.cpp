// Copyright (c) 2026, idpref contributors
// SPDX-License-Identifier: Apache-2.0

#include "diffusion.hpp"
#include "support.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <numbers>

using namespace idpref;
using namespace idpref::testing;

namespace {

double silu(double x) { return x / (1.0 + std::exp(-x)); }

// Scalar re-implementation of the network from its documented parameter
// layout: [W1 b1 W2 b2 W3 b3 gains] row-major, adapter [B1 A1 B2 A2 B3 A3].
Vec loop_predict(const DenoiserParams& p, const Vec& x, int t, const Vec& c, const NoiseSchedule& s) {
    const auto& sh = p.shape;
    const int in0 = sh.video_size + 3 + sh.cond_dim;
    std::vector<double> input(x.data(), x.data() + x.size());
    const double f = double(t) / s.steps();
    input.push_back(f);
    input.push_back(std::sin(2.0 * std::numbers::pi * f));
    input.push_back(std::cos(2.0 * std::numbers::pi * f));
    for (int i = 0; i < sh.cond_dim; ++i) input.push_back(c[i]);

    const int dims[3][2] = {{sh.hidden, in0}, {sh.hidden, sh.hidden}, {sh.video_size, sh.hidden}};
    std::size_t off = 0, aoff = 0;
    std::vector<double> h = input;
    for (int l = 0; l < 3; ++l) {
        const int out = dims[l][0], in = dims[l][1], r = sh.adapter_rank;
        auto weight = [&](int i, int j) {
            double w = p.base[Eigen::Index(off + std::size_t(i) * in + j)];
            for (int k = 0; k < r; ++k)
                w += p.adapter[Eigen::Index(aoff + std::size_t(i) * r + k)] *
                     p.adapter[Eigen::Index(aoff + std::size_t(out) * r + std::size_t(k) * in + j)];
            return w;
        };
        std::vector<double> next(std::size_t(out), 0.0);
        for (int i = 0; i < out; ++i) {
            double acc = p.base[Eigen::Index(off + std::size_t(out) * in + i)];
            for (int j = 0; j < in; ++j) acc += weight(i, j) * h[std::size_t(j)];
            next[std::size_t(i)] = l < 2 ? silu(acc) : acc;
        }
        off += std::size_t(out) * in + out;
        aoff += std::size_t(r) * (out + in);
        h = std::move(next);
    }
    const double gain = p.base[Eigen::Index(off) + t - 1];
    Vec eps(sh.video_size);
    for (int i = 0; i < sh.video_size; ++i) eps[i] = h[std::size_t(i)] + gain * x[i] / std::sqrt(1.0 - s.alpha_bar(t));
    return eps;
}

NetworkShape default_shape(int rank) {
    NetworkShape s;
    s.video_size = 16 * 24;
    s.cond_dim = 8;
    s.hidden = 64;
    s.adapter_rank = rank;
    s.diffusion_steps = 100;
    return s;
}

ScenarioConfig tiny_scenario() {
    ScenarioConfig c;
    c.world.frame_dim = 6;
    c.world.identity_dim = 2;
    c.world.motion_dim = 2;
    c.frames = 3;
    c.prompt_count = 4;
    return c;
}

struct Probe {
    Mat clean, noise, cond;
    std::vector<int> steps;
};

Probe make_probe(const std::vector<Vec>& videos, const Mat& cond, int draws, std::uint64_t seed, int total) {
    Probe p;
    const auto n = Eigen::Index(videos.size()) * draws;
    p.clean.resize(videos[0].size(), n);
    p.noise.resize(videos[0].size(), n);
    p.cond.resize(cond.rows(), n);
    auto rng = derived_rng(seed, 77);
    std::uniform_int_distribution<int> pick(1, total);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto v = std::size_t(i) % videos.size();
        p.clean.col(i) = videos[v];
        p.noise.col(i) = gaussian_vector(rng, videos[0].size());
        p.cond.col(i) = cond.col(Eigen::Index(v));
        p.steps.push_back(pick(rng));
    }
    return p;
}

double probe_loss(const DenoiserParams& params, const NoiseSchedule& s, const Probe& p) {
    return regression_loss(params, s, p.clean, p.steps, p.noise, p.cond, nullptr);
}

} // namespace

TEST_CASE("linear schedule examples") {
    const NoiseSchedule s = make_schedule(3, 0.1, 0.3);
    REQUIRE(s.steps() == 3);
    CHECK(s.beta(1) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(s.beta(2) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(s.beta(3) == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(s.alpha_bar(1) == doctest::Approx(0.9).epsilon(1e-14));
    CHECK(s.alpha_bar(2) == doctest::Approx(0.72).epsilon(1e-14));
    CHECK(s.alpha_bar(3) == doctest::Approx(0.504).epsilon(1e-14));

    const NoiseSchedule one = make_schedule(1, 0.05, 0.05);
    CHECK(one.alpha_bar(1) == doctest::Approx(0.95).epsilon(1e-15));

    CHECK(error_kind([] { make_schedule(0, 0.1, 0.2); }) == ErrorKind::Configuration);
    CHECK(error_kind([] { make_schedule(5, 0.0, 0.2); }) == ErrorKind::Configuration);
    CHECK(error_kind([] { make_schedule(5, 0.3, 0.2); }) == ErrorKind::Configuration);
    CHECK(error_kind([] { make_schedule(5, 0.1, 1.0); }) == ErrorKind::Configuration);
}

TEST_CASE("cumulative signal decreases strictly inside (0, 1)") {
    for (auto [n, lo, hi] : {std::tuple{100, 1e-3, 0.05}, std::tuple{10, 1e-3, 0.2}, std::tuple{1000, 1e-4, 0.02}}) {
        const NoiseSchedule s = make_schedule(n, lo, hi);
        double prev = 1.0;
        double product = 1.0;
        for (int t = 1; t <= n; ++t) {
            product *= 1.0 - s.beta(t);
            CHECK(s.alpha_bar(t) < prev);
            CHECK(s.alpha_bar(t) > 0.0);
            CHECK(s.alpha_bar(t) == doctest::Approx(product).epsilon(1e-12));
            prev = s.alpha_bar(t);
        }
    }
}

TEST_CASE("forward diffusion examples") {
    const NoiseSchedule s = make_schedule(3, 0.1, 0.3);
    const Vec v0 = (Vec(2) << 1.0, -2.0).finished();
    const Vec zero = Vec::Zero(2);
    CHECK((forward_diffuse(v0, 1, zero, s) - std::sqrt(0.9) * v0).norm() <= 1e-15);
    const Vec e = (Vec(2) << 0.5, 0.25).finished();
    const Vec want = std::sqrt(0.72) * v0 + std::sqrt(0.28) * e;
    CHECK((forward_diffuse(v0, 2, e, s) - want).cwiseAbs().maxCoeff() <= 1e-14);

    CHECK(error_kind([&] { forward_diffuse(v0, 0, e, s); }) == ErrorKind::InvalidArgument);
    CHECK(error_kind([&] { forward_diffuse(v0, 4, e, s); }) == ErrorKind::InvalidArgument);
    CHECK(error_kind([&] { forward_diffuse(v0, 1, Vec::Zero(3), s); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("forward diffusion has the stated mean and variance") {
    const NoiseSchedule s = make_schedule(100, 1e-3, 0.05);
    const int n = 100000;
    const Vec v0 = Vec::Constant(1, 1.7);
    for (int t : {1, 10, 40, 70, 100}) {
        auto rng = derived_rng(t, 5);
        double sum = 0.0, sq = 0.0;
        for (int i = 0; i < n; ++i) {
            const double x = forward_diffuse(v0, t, gaussian_vector(rng, 1), s)[0];
            sum += x;
            sq += x * x;
        }
        const double mean = sum / n;
        const double var = (sq - n * mean * mean) / (n - 1);
        const double ab = s.alpha_bar(t);
        const double want_var = 1.0 - ab;
        CHECK(std::abs(mean - std::sqrt(ab) * 1.7) <= 3.0 * std::sqrt(want_var / n));
        CHECK(std::abs(var - want_var) <= 3.0 * want_var * std::sqrt(2.0 / (n - 1)));
    }
}

TEST_CASE("network matches a scalar re-implementation") {
    const NoiseSchedule s = tiny_schedule();
    for (int rank : {0, 2}) {
        const DenoiserParams p = random_params(tiny_shape(rank), 11 + std::uint64_t(rank));
        auto rng = derived_rng(3, std::uint64_t(rank));
        for (int t : {1, 4, 10}) {
            const Vec x = gaussian_vector(rng, 18);
            const Vec c = gaussian_vector(rng, 2);
            const Vec got = predict_noise(p, x, t, Conditioning{c, false}, s);
            CHECK((got - loop_predict(p, x, t, c, s)).cwiseAbs().maxCoeff() <= 1e-10);
            const Vec null = predict_noise(p, x, t, Conditioning::none(2), s);
            CHECK((null - loop_predict(p, x, t, Vec::Zero(2), s)).cwiseAbs().maxCoeff() <= 1e-10);
        }
    }
}

TEST_CASE("noise prediction basics") {
    const NoiseSchedule s = make_schedule(100, 1e-3, 0.05);
    const NetworkShape shape = default_shape(0);
    auto rng = derived_rng(1, 0);
    const Vec x = gaussian_vector(rng, 384);
    const Conditioning c{gaussian_vector(rng, 8), false};

    const DenoiserParams zero = zero_params(shape);
    CHECK(predict_noise(zero, x, 50, c, s).isZero(0.0));

    DenoiserParams skip_only = zero;
    set_skip_gains(skip_only, s, 0.02);
    const double g = (1.0 - s.alpha_bar(30)) / (s.alpha_bar(30) * 4e-4 + 1.0 - s.alpha_bar(30));
    CHECK((predict_noise(skip_only, x, 30, c, s) - g * x / std::sqrt(1.0 - s.alpha_bar(30))).cwiseAbs().maxCoeff() <=
          1e-12);

    const DenoiserParams p = init_params(shape, 4);
    const Vec a = predict_noise(p, x, 17, c, s);
    CHECK(a.size() == 384);
    CHECK(a == predict_noise(p, x, 17, c, s));
    CHECK(a.allFinite());

    CHECK(error_kind([&] { predict_noise(p, Vec::Zero(383), 17, c, s); }) == ErrorKind::InvalidArgument);
    CHECK(error_kind([&] { predict_noise(p, x, 0, c, s); }) == ErrorKind::InvalidArgument);
    CHECK(error_kind([&] { predict_noise(p, x, 101, c, s); }) == ErrorKind::InvalidArgument);
    CHECK(error_kind([&] { predict_noise(p, x, 17, Conditioning{Vec::Zero(3), false}, s); }) ==
          ErrorKind::InvalidArgument);
    CHECK(error_kind([&] { predict_noise(p, x, 5, c, make_schedule(50, 1e-3, 0.05)); }) ==
          ErrorKind::InvalidArgument);
}

TEST_CASE("default network size") {
    const NetworkShape plain = default_shape(0);
    CHECK(plain.base_size() == 54564);
    CHECK(plain.base_size() <= 60000);
    const DenoiserParams p = init_params(default_shape(4), 1);
    CHECK(p.base.size() == 54564);
    CHECK(p.adapter.size() == 4 * (64 + 395) + 4 * (64 + 64) + 4 * (384 + 64));
    CHECK(p.trainable_size() == p.adapter.size());
    CHECK(init_params(plain, 1).trainable_size() == 54564 - 100);
    CHECK(p.base.tail(100) == Vec::Ones(100));
    CHECK(error_kind([] { init_params(NetworkShape{}, 1); }) == ErrorKind::Configuration);
}

TEST_CASE("regression gradient agrees with central differences") {
    const NoiseSchedule s = tiny_schedule();
    for (int rank : {0, 3}) {
        const DenoiserParams p = random_params(tiny_shape(rank), 21 + std::uint64_t(rank), 0.4);
        auto rng = derived_rng(8, std::uint64_t(rank));
        const int batch = 4;
        Mat clean(18, batch), noise(18, batch), cond(2, batch);
        std::vector<int> steps;
        std::uniform_int_distribution<int> pick(1, 10);
        for (int b = 0; b < batch; ++b) {
            clean.col(b) = gaussian_vector(rng, 18);
            noise.col(b) = gaussian_vector(rng, 18);
            cond.col(b) = gaussian_vector(rng, 2);
            steps.push_back(pick(rng));
        }
        Vec grad;
        regression_loss(p, s, clean, steps, noise, cond, &grad);
        REQUIRE(grad.size() == p.trainable_size());
        const double err = finite_difference_error(
            p, grad, [&](const DenoiserParams& q) { return regression_loss(q, s, clean, steps, noise, cond, nullptr); },
            20, 5 + std::uint64_t(rank));
        CHECK(err <= 1e-4);
    }
}

TEST_CASE("sampler timesteps") {
    std::vector<int> want;
    for (int k = 1; k <= 50; ++k) want.push_back(2 * k);
    CHECK(sampler_timesteps(100, 50) == want);
    CHECK(sampler_timesteps(10, 3) == std::vector<int>{4, 7, 10});
    CHECK(sampler_timesteps(5, 5) == std::vector<int>{1, 2, 3, 4, 5});
    CHECK(sampler_timesteps(7, 1) == std::vector<int>{7});
    CHECK(error_kind([] { sampler_timesteps(10, 0); }) == ErrorKind::Configuration);
    CHECK(error_kind([] { sampler_timesteps(10, 11); }) == ErrorKind::Configuration);
}

TEST_CASE("a network predicting no noise rescales the start noise") {
    const NoiseSchedule s = tiny_schedule();
    const DenoiserParams zero = zero_params(tiny_shape());
    for (int steps : {1, 3, 10}) {
        for (std::uint64_t seed : {1u, 2u, 99u}) {
            const Vec got = sample_video(zero, s, Conditioning::none(2), SamplerConfig{steps, 1.0, 0.0}, seed);
            const Vec want = sampler_start_noise(18, seed) / std::sqrt(s.alpha_bar(10));
            CHECK((got - want).cwiseAbs().maxCoeff() <= 1e-12 * want.cwiseAbs().maxCoeff());
        }
    }
}

TEST_CASE("clipping bounds every sampled entry") {
    const NoiseSchedule s = tiny_schedule();
    const DenoiserParams p = random_params(tiny_shape(), 31);
    std::vector<Conditioning> conds;
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < 12; ++i) {
        conds.push_back(Conditioning{Vec::Constant(2, 0.1 * i), false});
        seeds.push_back(std::uint64_t(i));
    }
    for (double clip : {0.5, 1.0, 3.0}) {
        const Mat x = sample_videos(p, s, conds, SamplerConfig{10, 2.0, clip}, seeds);
        CHECK(x.cwiseAbs().maxCoeff() <= clip * (1.0 + 1e-12));
    }
    const Mat loose = sample_videos(zero_params(tiny_shape()), s, conds, SamplerConfig{10, 1.0, 0.0}, seeds);
    CHECK(loose.cwiseAbs().maxCoeff() > 1.0);
}

TEST_CASE("unguided sampling is a plain DDIM loop over predict_noise") {
    const NoiseSchedule s = tiny_schedule();
    const DenoiserParams p = random_params(tiny_shape(2), 41, 0.3);
    const Conditioning c{(Vec(2) << 0.6, -0.8).finished(), false};
    for (int steps : {10, 4}) {
        const std::vector<int> ts = sampler_timesteps(10, steps);
        Vec x = sampler_start_noise(18, 12);
        for (std::size_t k = ts.size(); k-- > 0;) {
            const double ab = s.alpha_bar(ts[k]);
            const double prev = k > 0 ? s.alpha_bar(ts[k - 1]) : 1.0;
            const Vec eps = predict_noise(p, x, ts[k], c, s);
            const Vec x0 = (x - std::sqrt(1.0 - ab) * eps) / std::sqrt(ab);
            x = std::sqrt(prev) * x0 + std::sqrt(1.0 - prev) * eps;
        }
        CHECK(sample_video(p, s, c, SamplerConfig{steps, 1.0, 0.0}, 12) == x);
    }

    const Vec guided = sample_video(p, s, c, SamplerConfig{10, 3.0, 0.0}, 12);
    CHECK(guided != sample_video(p, s, c, SamplerConfig{10, 1.0, 0.0}, 12));
    // Zero guidance keeps only the unconditional branch.
    CHECK(sample_video(p, s, c, SamplerConfig{10, 0.0, 0.0}, 12) ==
          sample_video(p, s, Conditioning::none(2), SamplerConfig{10, 1.0, 0.0}, 12));
}

TEST_CASE("sampling is deterministic and batch independent") {
    const NoiseSchedule s = tiny_schedule();
    const DenoiserParams p = random_params(tiny_shape(), 51, 0.3);
    const std::vector<Conditioning> conds{Conditioning::none(2), Conditioning{Vec::Ones(2), false},
                                          Conditioning{-Vec::Ones(2), false}};
    const std::vector<std::uint64_t> seeds{5, 6, 7};
    const SamplerConfig cfg{10, 2.0, 3.0};
    const Mat a = sample_videos(p, s, conds, cfg, seeds);
    CHECK(a == sample_videos(p, s, conds, cfg, seeds));
    for (int i = 0; i < 3; ++i) {
        const Vec single = sample_video(p, s, conds[std::size_t(i)], cfg, seeds[std::size_t(i)]);
        CHECK((single - a.col(i)).cwiseAbs().maxCoeff() <= 1e-10);
    }
    CHECK(sample_video(p, s, conds[1], cfg, 5) != sample_video(p, s, conds[1], cfg, 6));
    CHECK(error_kind([&] { sample_videos(p, s, conds, cfg, {1, 2}); }) == ErrorKind::InvalidArgument);
    CHECK(error_kind([&] { sample_video(p, s, conds[0], SamplerConfig{11, 1.0, 0.0}, 1); }) ==
          ErrorKind::Configuration);
}

TEST_CASE("training with no steps or a zero learning rate changes nothing") {
    const NoiseSchedule s = tiny_schedule();
    const Scenario sc = make_scenario(tiny_scenario());
    std::vector<Frames> refs;
    for (const Vec& r : sc.references) refs.push_back(inflate_reference(r, 3));
    const DenoiserParams p = random_params(tiny_shape(), 61, 0.3);

    RegressionTrainConfig cfg;
    cfg.steps = 0;
    const DenoiserParams none = train_initial(p, s, refs, sc.prompts, cfg);
    CHECK(none.base == p.base);
    CHECK(none.step == 0);

    for (auto kind : {OptimizerKind::Sgd, OptimizerKind::AdamW}) {
        cfg.steps = 5;
        cfg.optimizer.kind = kind;
        cfg.optimizer.lr = 0.0;
        cfg.optimizer.weight_decay = 0.1;
        const DenoiserParams still = train_initial(p, s, refs, sc.prompts, cfg);
        CHECK(still.base == p.base);
        CHECK(still.step == 5);
    }
    CHECK(error_kind([&] { train_initial(p, s, std::span<const Frames>{}, sc.prompts, cfg); }) ==
          ErrorKind::Configuration);
    cfg.batch_size = 0;
    CHECK(error_kind([&] { train_initial(p, s, refs, sc.prompts, cfg); }) == ErrorKind::Configuration);
}

TEST_CASE("checkpoint callback schedule") {
    const NoiseSchedule s = tiny_schedule();
    const Scenario sc = make_scenario(tiny_scenario());
    std::vector<Frames> refs{inflate_reference(sc.references[0], 3)};
    RegressionTrainConfig cfg;
    cfg.steps = 7;
    cfg.batch_size = 2;
    cfg.checkpoint_every = 3;
    std::vector<std::int64_t> seen;
    train_initial(init_params(tiny_shape(), 1), s, refs, sc.prompts, cfg,
                  [&](std::int64_t step, const DenoiserParams& p) {
                      CHECK(p.step == step);
                      seen.push_back(step);
                  });
    CHECK(seen == std::vector<std::int64_t>{0, 3, 6, 7});
}

TEST_CASE("adapters leave the base weights alone") {
    const NoiseSchedule s = tiny_schedule();
    const Scenario sc = make_scenario(tiny_scenario());
    std::vector<Frames> refs;
    for (const Vec& r : sc.references) refs.push_back(inflate_reference(r, 3));

    DenoiserParams base = random_params(tiny_shape(), 71, 0.3);
    set_skip_gains(base, s, 0.02);
    const DenoiserParams adapted = attach_adapter(base, 2, 3);
    auto rng = derived_rng(2, 2);
    for (int t : {1, 5, 10}) {
        const Vec x = gaussian_vector(rng, 18);
        CHECK(predict_noise(adapted, x, t, Conditioning::none(2), s) ==
              predict_noise(base, x, t, Conditioning::none(2), s));
    }

    RegressionTrainConfig cfg;
    cfg.steps = 50;
    cfg.batch_size = 4;
    cfg.optimizer.lr = 1e-2;
    const DenoiserParams trained = train_initial(adapted, s, refs, sc.prompts, cfg);
    CHECK(trained.base == base.base);
    CHECK(trained.adapter != adapted.adapter);

    DenoiserParams plain = random_params(tiny_shape(), 72, 0.3);
    set_skip_gains(plain, s, 0.02);
    const Vec gains = plain.base.tail(10);
    const DenoiserParams full = train_initial(plain, s, refs, sc.prompts, cfg);
    CHECK(full.base.tail(10) == gains);
    CHECK(full.base.head(full.trainable_size()) != plain.base.head(plain.trainable_size()));

    CHECK(error_kind([&] { attach_adapter(adapted, 2, 1); }) == ErrorKind::State);
    CHECK(error_kind([&] { attach_adapter(base, 0, 1); }) == ErrorKind::Configuration);
}

TEST_CASE("training lowers held-out denoising loss") {
    const NoiseSchedule s = tiny_schedule();
    const Scenario sc = make_scenario(tiny_scenario());
    DenoiserParams start = init_params(tiny_shape(), 3);
    set_skip_gains(start, s, sc.world.config.noise_sigma);

    SUBCASE("generic ramp videos") {
        std::vector<Vec> videos;
        Mat cond(2, 8);
        for (int i = 0; i < 8; ++i) {
            const PromptSpec& pr = sc.prompts[std::size_t(i) % sc.prompts.size()];
            videos.push_back(flatten(render_video(sc.world, random_identity(sc.world, 900, std::uint64_t(i)),
                                                  {pr.direction, 4.0}, 3, 1000 + std::uint64_t(i))));
            cond.col(i) = pr.direction;
        }
        const Probe probe = make_probe(videos, cond, 16, 1, 10);
        RegressionTrainConfig cfg;
        cfg.steps = 600;
        cfg.batch_size = 8;
        cfg.optimizer.lr = 3e-3;
        cfg.seed = 4;
        const DenoiserParams trained = pretrain_base(start, s, sc, 2.0, 6.0, cfg);
        CHECK(probe_loss(trained, s, probe) < 0.8 * probe_loss(start, s, probe));
    }
    SUBCASE("static references") {
        std::vector<Frames> refs;
        std::vector<Vec> videos;
        for (const Vec& r : sc.references) {
            refs.push_back(inflate_reference(r, 3));
            videos.push_back(flatten(refs.back()));
        }
        const Probe probe = make_probe(videos, Mat::Zero(2, Eigen::Index(videos.size())), 32, 2, 10);
        RegressionTrainConfig cfg;
        cfg.steps = 600;
        cfg.batch_size = 8;
        cfg.optimizer.lr = 3e-3;
        cfg.cond_dropout = 1.0;
        cfg.seed = 5;
        const DenoiserParams trained = train_initial(attach_adapter(start, 2, 9), s, refs, {}, cfg);
        CHECK(probe_loss(trained, s, probe) < 0.8 * probe_loss(start, s, probe));
    }
}

TEST_CASE("skip gains follow the optimal linear estimate") {
    const NoiseSchedule s = make_schedule(100, 1e-3, 0.05);
    DenoiserParams p = init_params(default_shape(0), 1);
    set_skip_gains(p, s, 0.0);
    CHECK(p.base.tail(100) == Vec::Ones(100));
    set_skip_gains(p, s, 0.02);
    for (int t = 1; t <= 100; ++t) {
        const double ab = s.alpha_bar(t);
        CHECK(p.base[p.base.size() - 100 + t - 1] == doctest::Approx((1 - ab) / (ab * 4e-4 + 1 - ab)).epsilon(1e-14));
    }
    CHECK(error_kind([&] { set_skip_gains(p, tiny_schedule(), 0.02); }) == ErrorKind::InvalidArgument);
    CHECK(error_kind([&] { set_skip_gains(p, s, -0.1); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("optimizer steps match hand-computed updates") {
    const Vec p0 = (Vec(3) << 1.0, -2.0, 0.5).finished();
    const Vec g = (Vec(3) << 0.5, -1.0, 0.0).finished();

    Optimizer sgd(OptimizerConfig{OptimizerKind::Sgd, 0.1, 0.01});
    Vec p = p0;
    sgd.step(p, g);
    const Vec want_sgd = p0 * (1.0 - 0.1 * 0.01) - 0.1 * g;
    CHECK((p - want_sgd).cwiseAbs().maxCoeff() <= 1e-15);

    const OptimizerConfig ac{OptimizerKind::AdamW, 0.01, 0.1, 0.9, 0.999, 1e-8};
    Optimizer adam(ac);
    p = p0;
    std::vector<double> m(3, 0.0), v(3, 0.0), q(p0.data(), p0.data() + 3);
    const Vec g2 = (Vec(3) << -0.25, 2.0, 1.0).finished();
    for (int step = 1; step <= 2; ++step) {
        const Vec& gs = step == 1 ? g : g2;
        adam.step(p, gs);
        for (int i = 0; i < 3; ++i) {
            q[std::size_t(i)] *= 1.0 - 0.01 * 0.1;
            m[std::size_t(i)] = 0.9 * m[std::size_t(i)] + 0.1 * gs[i];
            v[std::size_t(i)] = 0.999 * v[std::size_t(i)] + 0.001 * gs[i] * gs[i];
            const double mh = m[std::size_t(i)] / (1.0 - std::pow(0.9, step));
            const double vh = v[std::size_t(i)] / (1.0 - std::pow(0.999, step));
            q[std::size_t(i)] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
        }
        for (int i = 0; i < 3; ++i) CHECK(p[i] == doctest::Approx(q[std::size_t(i)]).epsilon(1e-13));
    }

    Optimizer still(OptimizerConfig{OptimizerKind::AdamW, 0.01, 0.0});
    p = p0;
    still.step(p, Vec::Zero(3));
    CHECK(p == p0);
    CHECK(error_kind([&] { still.step(p, Vec::Zero(2)); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("flatten is row-major and inverts unflatten") {
    Frames f(2, 3);
    f << 1, 2, 3, 4, 5, 6;
    const Vec flat = flatten(f);
    CHECK(flat == (Vec(6) << 1, 2, 3, 4, 5, 6).finished());
    CHECK(unflatten(flat, 2, 3) == f);
    CHECK(error_kind([&] { unflatten(flat, 4, 2); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("checkpoints round-trip exactly") {
    TempDir dir("ckpt");
    DenoiserParams p = random_params(tiny_shape(2), 81);
    p.base[0] = 0.1 + 0.2;
    p.step = 1234;
    save_checkpoint(p, dir.file("a.json"));
    const DenoiserParams back = load_checkpoint(dir.file("a.json"));
    CHECK(back.shape == p.shape);
    CHECK(back.base == p.base);
    CHECK(back.adapter == p.adapter);
    CHECK(back.step == 1234);
    CHECK(nlohmann::json::parse(slurp(dir.file("a.json")))["format"] == "idpref-ckpt/1");

    DenoiserParams bad = p;
    bad.adapter[3] = std::numeric_limits<double>::infinity();
    CHECK(error_kind([&] { save_checkpoint(bad, dir.file("b.json")); }) == ErrorKind::Serialization);

    auto j = nlohmann::json::parse(slurp(dir.file("a.json")));
    j["base"].erase(j["base"].size() - 1);
    write_lines(dir.file("short.json"), {j.dump()});
    CHECK(error_kind([&] { load_checkpoint(dir.file("short.json")); }) == ErrorKind::Data);

    j = nlohmann::json::parse(slurp(dir.file("a.json")));
    j["format"] = "other/1";
    write_lines(dir.file("fmt.json"), {j.dump()});
    CHECK(error_kind([&] { load_checkpoint(dir.file("fmt.json")); }) == ErrorKind::Parse);

    write_lines(dir.file("junk.json"), {"{\"format\": "});
    CHECK(error_kind([&] { load_checkpoint(dir.file("junk.json")); }) == ErrorKind::Parse);
    CHECK(error_kind([&] { load_checkpoint(dir.file("missing.json")); }) == ErrorKind::Io);
}
