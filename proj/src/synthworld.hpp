// Copyright (c) 2026, idpref contributors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic video domain. A frame is a D-dim vector; identity content lives in
// span(U_id) and motion in span(U_mo), the two subspaces being orthogonal so
// every reward has an exact closed form.

#pragma once

#include "common.hpp"

#include <string>
#include <vector>

namespace idpref {

struct WorldConfig {
    int frame_dim = 24;
    int identity_dim = 8;
    int motion_dim = 8;
    double noise_sigma = 0.02;
    std::uint64_t seed = 1;

    void validate() const;
    bool operator==(const WorldConfig&) const = default;
};

struct World {
    Mat identity_basis; // D x D_id, orthonormal columns
    Mat motion_basis;   // D x D_mo, orthonormal columns
    WorldConfig config;
};

struct IdentitySpec {
    Vec embedding; // unit, D_id
};

struct MotionSpec {
    Vec direction; // unit, D_mo
    double amplitude = 0.0;
};

struct PromptSpec {
    std::string id;
    Vec direction; // unit, D_mo
    std::string text;

    bool operator==(const PromptSpec&) const = default;
};

World make_world(const WorldConfig& config);

Frames render_video(const World& world, const IdentitySpec& identity, const MotionSpec& motion,
                    int frames, std::uint64_t rng_seed);

Frames inflate_reference(const Vec& reference_frame, int frames);

struct OracleScores {
    double identity = 0.0;
    double motion = 0.0;
    double semantic = 0.0;
};

/// Closed-form ground truth computed from subspace coordinates. Test use only.
OracleScores oracle_scores(const World& world, const Frames& video, const IdentitySpec& reference,
                           const PromptSpec& prompt);

IdentitySpec random_identity(const World& world, std::uint64_t seed, std::uint64_t index);

/// `count` prompts with seeded unit motion directions; ids "p00", "p01", ...
std::vector<PromptSpec> make_prompts(const World& world, int count, std::uint64_t seed);

/// Single reference images of one identity (each a noisy static frame).
std::vector<Vec> make_references(const World& world, const IdentitySpec& identity, int count,
                                 std::uint64_t seed);

/// Everything generated from a world seed: the world itself, the user's
/// identity, its reference images and the prompt set.
struct ScenarioConfig {
    WorldConfig world;
    int frames = 16;
    int reference_count = 3;
    int prompt_count = 20;
    double amplitude_min = 2.0;
    double amplitude_max = 6.0;
};

struct Scenario {
    World world;
    IdentitySpec identity;
    std::vector<Vec> references;
    std::vector<PromptSpec> prompts;
    int frames = 16;
};

Scenario make_scenario(const ScenarioConfig& config);

} // namespace idpref
