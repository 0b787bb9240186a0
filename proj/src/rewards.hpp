// Copyright (c) 2026, idpref contributors
// SPDX-License-Identifier: Apache-2.0
//
// Identity, dynamic and semantic rewards plus repository-level normalisation
// onto the 1..10 scale.

#pragma once

#include "synthworld.hpp"

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>

namespace idpref {

struct RawScores {
    double id_raw = 0.0;
    double dy_raw = 0.0;
    double sem_raw = 0.0;
};

struct RewardVector {
    double r_id = 5.5;
    double r_dy = 5.5;
    double r_sem = 5.5;

    double channel(int c) const { return c == 0 ? r_id : (c == 1 ? r_dy : r_sem); }
    bool operator==(const RewardVector&) const = default;
};

/// Which reward channels take part in normalisation and dominance.
struct ChannelMask {
    bool id = true;
    bool dynamic = true;
    bool semantic = true;

    bool enabled(int c) const { return c == 0 ? id : (c == 1 ? dynamic : semantic); }
    bool any() const { return id || dynamic || semantic; }
};

/// What a scorer may look at besides the frames.
struct ScoreContext {
    const World* world = nullptr;
    std::span<const Vec> references;
    const PromptSpec* prompt = nullptr; // null for unprompted (static) videos
};

using Scorer = std::function<double(const Frames&, const ScoreContext&)>;

struct ScorerSet {
    Scorer identity;
    Scorer dynamic;
    Scorer semantic;

    RawScores score(const Frames& video, const ScoreContext& ctx) const;
};

double score_identity(const Frames& video, std::span<const Vec> references, const World& world);
double score_dynamic(const Frames& video);
double score_semantic(const Frames& video, const PromptSpec& prompt, const World& world);

/// Subspace-projection scorers. Unprompted videos score 0 on the semantic channel.
ScorerSet default_scorers();

std::map<std::string, RewardVector> normalize_repository(const std::map<std::string, RawScores>& raw,
                                                         ChannelMask mask = {});

} // namespace idpref
