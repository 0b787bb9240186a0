// Copyright (c) 2026, idpref contributors
// SPDX-License-Identifier: Apache-2.0
//
// The base video repository: fine-tuned samples, initial-model samples and
// static videos inflated from the reference images.

#pragma once

#include "diffusion.hpp"
#include "rewards.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace idpref {

enum class Source { FineTuned, Initial, StaticRef };

const char* to_string(Source s) noexcept;
Source parse_source(const std::string& s);

struct VideoRecord {
    std::string id;
    Source source = Source::FineTuned;
    std::optional<std::string> prompt_id;
    Frames frames;
    std::optional<RewardVector> rewards;

    bool operator==(const VideoRecord& o) const {
        return id == o.id && source == o.source && prompt_id == o.prompt_id && frames.rows() == o.frames.rows() &&
               frames.cols() == o.frames.cols() && frames == o.frames && rewards == o.rewards;
    }
};

struct SourceCounts {
    int fine_tuned = 0;
    int initial = 0;
    int static_ref = 0;

    int total() const { return fine_tuned + initial + static_ref; }
    bool operator==(const SourceCounts&) const = default;
};

struct RepositoryManifest {
    WorldConfig world_config;
    int frames = 0;
    SourceCounts counts;
    std::vector<PromptSpec> prompts;
    std::uint64_t seed = 0;

    bool operator==(const RepositoryManifest&) const = default;
};

struct Repository {
    RepositoryManifest manifest;
    std::vector<VideoRecord> records;

    const VideoRecord* find(const std::string& id) const;
    const PromptSpec* prompt(const std::string& prompt_id) const;
    /// Row 0 of every StaticRef record, in record order.
    std::vector<Vec> references() const;
    bool operator==(const Repository&) const = default;
};

inline constexpr const char* kRepositoryFormat = "idpref-repo/1";

/// Sampling settings shared by the repository builder and the evaluators.
struct SamplingSetup {
    NoiseSchedule schedule;
    SamplerConfig sampler;
};

struct BuildCounts {
    int fine_tuned = 100;
    int initial = 20;
};

Repository build_repository(const DenoiserParams& ft_model, const DenoiserParams& init_model,
                            std::span<const Vec> references, std::span<const PromptSpec> prompts, BuildCounts counts,
                            int frames, std::uint64_t seed, const WorldConfig& world_config,
                            const SamplingSetup& sampling);

/// Re-samples the FineTuned records from `ft_model`, leaving the others intact.
Repository refresh_repository(const Repository& repo, const DenoiserParams& ft_model, std::uint64_t seed,
                              const SamplingSetup& sampling);

/// Checks ids, source counts, prompt coverage and static frame equality.
void validate_repository(const Repository& repo);

nlohmann::ordered_json world_config_to_json(const WorldConfig& c);
WorldConfig world_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json prompt_to_json(const PromptSpec& p);
PromptSpec prompt_from_json(const nlohmann::json& j);

void save_repository(const Repository& repo, const std::string& path);
Repository load_repository(const std::string& path);

struct ScoreRow {
    std::string id;
    Source source = Source::FineTuned;
    RawScores raw;
    RewardVector rewards;
};

/// Scores every record against the repository's own references and prompts,
/// normalises over the whole repository and stores the rewards in the records.
std::vector<ScoreRow> score_repository(Repository& repo, const ScorerSet& scorers, const World& world,
                                       ChannelMask mask = {});

void write_score_table(const std::vector<ScoreRow>& rows, const std::string& path);
std::vector<ScoreRow> read_score_table(const std::string& path);

/// Attaches rewards from a score table; every record must have a row.
void apply_scores(Repository& repo, const std::vector<ScoreRow>& rows);

} // namespace idpref
