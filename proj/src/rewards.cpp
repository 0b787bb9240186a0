// Copyright (c) 2026, idpref contributors
// SPDX-License-Identifier: Apache-2.0

#include "rewards.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace idpref {

namespace {

double cosine_or_zero(const Vec& a, const Vec& b) {
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

Vec mean_delta(const Frames& video) {
    Vec sum = Vec::Zero(video.cols());
    for (Eigen::Index t = 0; t + 1 < video.rows(); ++t) sum += (video.row(t + 1) - video.row(t)).transpose();
    if (video.rows() > 1) sum /= static_cast<double>(video.rows() - 1);
    return sum;
}

} // namespace

double score_identity(const Frames& video, std::span<const Vec> references, const World& world) {
    if (references.empty()) fail(ErrorKind::InvalidArgument, "score_identity: empty reference list");
    if (video.rows() == 0) fail(ErrorKind::InvalidArgument, "score_identity: empty video");

    const Mat& u_id = world.identity_basis;
    Vec ref_proj = Vec::Zero(u_id.cols());
    for (const Vec& r : references) ref_proj += u_id.transpose() * r;
    ref_proj /= static_cast<double>(references.size());

    double sum = 0.0;
    for (Eigen::Index t = 0; t < video.rows(); ++t) {
        const Vec proj = u_id.transpose() * video.row(t).transpose();
        sum += cosine_or_zero(proj, ref_proj);
    }
    return sum / static_cast<double>(video.rows());
}

double score_dynamic(const Frames& video) {
    if (video.rows() < 2) return 0.0;
    double sum = 0.0;
    for (Eigen::Index t = 0; t + 1 < video.rows(); ++t) sum += (video.row(t + 1) - video.row(t)).norm();
    return sum / static_cast<double>(video.rows() - 1);
}

double score_semantic(const Frames& video, const PromptSpec& prompt, const World& world) {
    if (video.rows() == 0) fail(ErrorKind::InvalidArgument, "score_semantic: empty video");
    const Vec target = world.motion_basis * prompt.direction;
    return cosine_or_zero(mean_delta(video), target);
}

RawScores ScorerSet::score(const Frames& video, const ScoreContext& ctx) const {
    RawScores s{identity(video, ctx), dynamic(video, ctx), semantic(video, ctx)};
    if (std::isnan(s.id_raw) || std::isnan(s.dy_raw) || std::isnan(s.sem_raw))
        fail(ErrorKind::Data, "scorer returned NaN");
    return s;
}

ScorerSet default_scorers() {
    ScorerSet set;
    set.identity = [](const Frames& v, const ScoreContext& ctx) {
        return score_identity(v, ctx.references, *ctx.world);
    };
    set.dynamic = [](const Frames& v, const ScoreContext&) { return score_dynamic(v); };
    set.semantic = [](const Frames& v, const ScoreContext& ctx) {
        return ctx.prompt ? score_semantic(v, *ctx.prompt, *ctx.world) : 0.0;
    };
    return set;
}

std::map<std::string, RewardVector> normalize_repository(const std::map<std::string, RawScores>& raw,
                                                         ChannelMask mask) {
    if (raw.empty()) fail(ErrorKind::InvalidArgument, "normalize_repository: empty score map");

    auto channel = [](const RawScores& s, int c) { return c == 0 ? s.id_raw : (c == 1 ? s.dy_raw : s.sem_raw); };
    std::array<double, 3> lo{}, hi{};
    lo.fill(std::numeric_limits<double>::infinity());
    hi.fill(-std::numeric_limits<double>::infinity());
    for (const auto& [id, s] : raw) {
        for (int c = 0; c < 3; ++c) {
            const double x = channel(s, c);
            if (std::isnan(x)) fail(ErrorKind::Data, fmt::format("NaN raw score for video '{}'", id));
            lo[c] = std::min(lo[c], x);
            hi[c] = std::max(hi[c], x);
        }
    }

    std::map<std::string, RewardVector> out;
    for (const auto& [id, s] : raw) {
        std::array<double, 3> r{};
        for (int c = 0; c < 3; ++c) {
            if (!mask.enabled(c) || !(hi[c] > lo[c])) {
                r[c] = 5.5;
            } else {
                r[c] = std::clamp(1.0 + 9.0 * (channel(s, c) - lo[c]) / (hi[c] - lo[c]), 1.0, 10.0);
            }
        }
        out.emplace(id, RewardVector{r[0], r[1], r[2]});
    }
    return out;
}

} // namespace idpref
