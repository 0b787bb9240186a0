// Copyright (c) 2026, idpref contributors
// SPDX-License-Identifier: Apache-2.0
//
// Hybrid pair selection. Stage one pairs static references and initial-model
// samples by identity gap under a dynamic tolerance; stage two pairs upper-
// front videos with the videos they strictly dominate.

#pragma once

#include "repository.hpp"

#include <span>
#include <string>
#include <vector>

namespace idpref {

struct SelectionConfig {
    double theta_id = 3.0;
    double tau_dy = 2.0;
    int top_k = 100;

    void validate() const;
};

enum class Stage { IdPreferred, DynamicPreferred };

const char* to_string(Stage s) noexcept;
Stage parse_stage(const std::string& s);

struct PreferencePair {
    std::string winner_id;
    std::string loser_id;
    Stage stage = Stage::IdPreferred;
    double delta_id = 0.0;

    bool operator==(const PreferencePair&) const = default;
};

struct ScoredVideo {
    std::string id;
    RewardVector rewards;
};

/// Strictly greater on every enabled channel.
bool dominates(const RewardVector& a, const RewardVector& b, ChannelMask mask = {});

struct FrontPartition {
    std::vector<std::size_t> non_dominated; // indices into the input, ascending
    std::vector<std::size_t> dominated;
};

/// All fronts, best first; indices within a front ascending.
std::vector<std::vector<std::size_t>> non_dominated_sort(std::span<const ScoredVideo> videos, ChannelMask mask = {});

/// Splits the first front from everything else.
FrontPartition partition_fronts(std::span<const ScoredVideo> videos, ChannelMask mask = {});

/// Scored records with one of the given sources; throws a state error on an unscored record.
std::vector<ScoredVideo> scored_subset(const Repository& repo, std::initializer_list<Source> sources);

std::vector<PreferencePair> select_id_pairs(std::span<const ScoredVideo> videos, const SelectionConfig& config);
std::vector<PreferencePair> select_dynamic_pairs(std::span<const ScoredVideo> videos, const SelectionConfig& config,
                                                 ChannelMask mask = {});

/// Repository-level helpers: references against initial samples, then initial
/// against fine-tuned samples.
std::vector<PreferencePair> select_id_pairs(const Repository& repo, const SelectionConfig& config);
std::vector<PreferencePair> select_dynamic_pairs(const Repository& repo, const SelectionConfig& config,
                                                 ChannelMask mask = {});

/// Union keeping the first occurrence of each (winner, loser).
std::vector<PreferencePair> merge_pairs(std::span<const PreferencePair> id_pairs,
                                        std::span<const PreferencePair> dynamic_pairs);

inline constexpr const char* kPairsFormat = "idpref-pairs/1";

void save_pairs(const std::vector<PreferencePair>& pairs, const std::string& path);
std::vector<PreferencePair> load_pairs(const std::string& path);

} // namespace idpref
