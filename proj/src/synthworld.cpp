// Copyright (c) 2026, idpref contributors
// SPDX-License-Identifier: Apache-2.0

#include "synthworld.hpp"

#include <fmt/format.h>

#include <cmath>

namespace idpref {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid argument";
    case ErrorKind::Configuration: return "configuration error";
    case ErrorKind::Io: return "I/O error";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Data: return "data error";
    case ErrorKind::State: return "state error";
    case ErrorKind::Numeric: return "numeric error";
    case ErrorKind::Serialization: return "serialization error";
    case ErrorKind::Usage: return "usage error";
    }
    return "error";
}

Vec random_unit_vector(std::mt19937_64& rng, Eigen::Index n) {
    for (;;) {
        Vec v = gaussian_vector(rng, n);
        double norm = v.norm();
        if (norm > 1e-12) return v / norm;
    }
}

void WorldConfig::validate() const {
    if (frame_dim < 1 || identity_dim < 1 || motion_dim < 1)
        fail(ErrorKind::Configuration, "world dimensions must all be >= 1");
    if (identity_dim + motion_dim > frame_dim)
        fail(ErrorKind::Configuration,
             fmt::format("identity_dim + motion_dim = {} exceeds frame_dim = {}",
                         identity_dim + motion_dim, frame_dim));
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
        fail(ErrorKind::Configuration, "noise_sigma must be finite and >= 0");
}

World make_world(const WorldConfig& config) {
    config.validate();
    const int d = config.frame_dim;
    const int k = config.identity_dim + config.motion_dim;

    auto rng = derived_rng(config.seed, stream::world);
    Mat raw(d, k);
    for (int j = 0; j < k; ++j) raw.col(j) = gaussian_vector(rng, d);

    Eigen::HouseholderQR<Mat> qr(raw);
    Mat q = qr.householderQ() * Mat::Identity(d, k);

    World world;
    world.config = config;
    world.identity_basis = q.leftCols(config.identity_dim);
    world.motion_basis = q.rightCols(config.motion_dim);
    return world;
}

Frames render_video(const World& world, const IdentitySpec& identity, const MotionSpec& motion,
                    int frames, std::uint64_t rng_seed) {
    if (frames < 1) fail(ErrorKind::InvalidArgument, "render_video: frame count must be >= 1");
    const auto& cfg = world.config;
    if (identity.embedding.size() != cfg.identity_dim || motion.direction.size() != cfg.motion_dim)
        fail(ErrorKind::InvalidArgument, "render_video: embedding size does not match world");
    if (motion.amplitude < 0.0) fail(ErrorKind::InvalidArgument, "render_video: amplitude < 0");

    const Vec base = world.identity_basis * identity.embedding;
    const Vec flow = world.motion_basis * motion.direction;
    auto rng = derived_rng(rng_seed, stream::render);

    Frames out(frames, cfg.frame_dim);
    for (int t = 0; t < frames; ++t) {
        const double ramp = frames > 1 ? motion.amplitude * t / (frames - 1) : 0.0;
        Vec frame = base + flow * ramp;
        if (cfg.noise_sigma > 0.0) frame += cfg.noise_sigma * gaussian_vector(rng, cfg.frame_dim);
        out.row(t) = frame.transpose();
    }
    return out;
}

Frames inflate_reference(const Vec& reference_frame, int frames) {
    if (frames < 1) fail(ErrorKind::InvalidArgument, "inflate_reference: frame count must be >= 1");
    return reference_frame.transpose().replicate(frames, 1);
}

namespace {

double safe_cosine(const Vec& a, const Vec& b) {
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    return a.dot(b) / (na * nb);
}

} // namespace

OracleScores oracle_scores(const World& world, const Frames& video, const IdentitySpec& reference,
                           const PromptSpec& prompt) {
    OracleScores s;
    const Eigen::Index t_count = video.rows();
    if (t_count == 0) return s;

    // Coordinates in the two subspaces plus the orthogonal remainder.
    const Mat id_coords = world.identity_basis.transpose() * video.transpose();  // D_id x T
    const Mat mo_coords = world.motion_basis.transpose() * video.transpose();    // D_mo x T
    const Mat rest = video.transpose() - world.identity_basis * id_coords - world.motion_basis * mo_coords;

    double id_sum = 0.0;
    for (Eigen::Index t = 0; t < t_count; ++t) id_sum += safe_cosine(id_coords.col(t), reference.embedding);
    s.identity = id_sum / static_cast<double>(t_count);

    if (t_count < 2) return s;
    double motion_sum = 0.0;
    Vec mean_mo_delta = Vec::Zero(mo_coords.rows());
    Vec mean_id_delta = Vec::Zero(id_coords.rows());
    Vec mean_rest_delta = Vec::Zero(rest.rows());
    for (Eigen::Index t = 0; t + 1 < t_count; ++t) {
        const Vec did = id_coords.col(t + 1) - id_coords.col(t);
        const Vec dmo = mo_coords.col(t + 1) - mo_coords.col(t);
        const Vec drest = rest.col(t + 1) - rest.col(t);
        motion_sum += std::sqrt(did.squaredNorm() + dmo.squaredNorm() + drest.squaredNorm());
        mean_id_delta += did;
        mean_mo_delta += dmo;
        mean_rest_delta += drest;
    }
    const double steps = static_cast<double>(t_count - 1);
    s.motion = motion_sum / steps;

    const double total = std::sqrt(mean_id_delta.squaredNorm() + mean_mo_delta.squaredNorm() +
                                   mean_rest_delta.squaredNorm());
    s.semantic = total == 0.0 ? 0.0 : mean_mo_delta.dot(prompt.direction) / total;
    return s;
}

IdentitySpec random_identity(const World& world, std::uint64_t seed, std::uint64_t index) {
    auto rng = derived_rng(seed, stream::identity, index);
    return IdentitySpec{random_unit_vector(rng, world.config.identity_dim)};
}

std::vector<PromptSpec> make_prompts(const World& world, int count, std::uint64_t seed) {
    std::vector<PromptSpec> prompts;
    prompts.reserve(static_cast<std::size_t>(std::max(count, 0)));
    for (int i = 0; i < count; ++i) {
        auto rng = derived_rng(seed, stream::prompt, static_cast<std::uint64_t>(i));
        PromptSpec p;
        p.id = fmt::format("p{:02d}", i);
        p.direction = random_unit_vector(rng, world.config.motion_dim);
        p.text = fmt::format("a person moving along motion direction {}", i);
        prompts.push_back(std::move(p));
    }
    return prompts;
}

std::vector<Vec> make_references(const World& world, const IdentitySpec& identity, int count,
                                 std::uint64_t seed) {
    std::vector<Vec> refs;
    const MotionSpec still{Vec::Zero(world.config.motion_dim), 0.0};
    for (int i = 0; i < count; ++i) {
        const Frames f = render_video(world, identity, still, 1,
                                      seed * 1000003ULL + stream::reference * 7919ULL + static_cast<std::uint64_t>(i));
        refs.emplace_back(f.row(0).transpose());
    }
    return refs;
}

Scenario make_scenario(const ScenarioConfig& config) {
    if (config.frames < 1) fail(ErrorKind::Configuration, "world.frames must be >= 1");
    if (config.reference_count < 1) fail(ErrorKind::Configuration, "world.reference_count must be >= 1");
    if (config.prompt_count < 1) fail(ErrorKind::Configuration, "world.prompt_count must be >= 1");
    if (!(config.amplitude_min >= 0.0) || config.amplitude_max < config.amplitude_min)
        fail(ErrorKind::Configuration, "world.amplitude_min/max must satisfy 0 <= min <= max");

    Scenario s;
    s.world = make_world(config.world);
    const std::uint64_t seed = config.world.seed;
    // Index 0 of the identity stream is the user; generic identities use 1..
    s.identity = random_identity(s.world, seed, 0);
    s.references = make_references(s.world, s.identity, config.reference_count, seed);
    s.prompts = make_prompts(s.world, config.prompt_count, seed);
    s.frames = config.frames;
    return s;
}

} // namespace idpref
