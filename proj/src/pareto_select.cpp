// Copyright (c) 2026, idpref contributors
// SPDX-License-Identifier: Apache-2.0

#include "pareto_select.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <utility>

namespace idpref {

void SelectionConfig::validate() const {
    if (!(theta_id > 0.0)) fail(ErrorKind::Configuration, "select.theta_id must be > 0");
    if (!(tau_dy >= 0.0)) fail(ErrorKind::Configuration, "select.tau_dy must be >= 0");
    if (top_k < 1) fail(ErrorKind::Configuration, "select.top_k must be >= 1");
}

const char* to_string(Stage s) noexcept {
    return s == Stage::IdPreferred ? "IdPreferred" : "DynamicPreferred";
}

Stage parse_stage(const std::string& s) {
    if (s == "IdPreferred") return Stage::IdPreferred;
    if (s == "DynamicPreferred") return Stage::DynamicPreferred;
    fail(ErrorKind::Parse, fmt::format("unknown pair stage '{}'", s));
}

bool dominates(const RewardVector& a, const RewardVector& b, ChannelMask mask) {
    bool any = false;
    for (int c = 0; c < 3; ++c) {
        if (!mask.enabled(c)) continue;
        if (!(a.channel(c) > b.channel(c))) return false;
        any = true;
    }
    return any;
}

std::vector<std::vector<std::size_t>> non_dominated_sort(std::span<const ScoredVideo> videos, ChannelMask mask) {
    // Deb et al.: dominated_by[p] counts the videos dominating p, beats[p]
    // lists the videos p dominates. Peeling count-zero sets yields the fronts.
    const std::size_t n = videos.size();
    std::vector<int> dominated_by(n, 0);
    std::vector<std::vector<std::size_t>> beats(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (dominates(videos[i].rewards, videos[j].rewards, mask)) {
                beats[i].push_back(j);
                ++dominated_by[j];
            } else if (dominates(videos[j].rewards, videos[i].rewards, mask)) {
                beats[j].push_back(i);
                ++dominated_by[i];
            }
        }
    }
    std::vector<std::vector<std::size_t>> fronts;
    std::vector<std::size_t> current;
    for (std::size_t i = 0; i < n; ++i)
        if (dominated_by[i] == 0) current.push_back(i);
    while (!current.empty()) {
        std::vector<std::size_t> next;
        for (std::size_t p : current)
            for (std::size_t q : beats[p])
                if (--dominated_by[q] == 0) next.push_back(q);
        std::sort(next.begin(), next.end());
        fronts.push_back(std::move(current));
        current = std::move(next);
    }
    return fronts;
}

FrontPartition partition_fronts(std::span<const ScoredVideo> videos, ChannelMask mask) {
    auto fronts = non_dominated_sort(videos, mask);
    FrontPartition part;
    if (fronts.empty()) return part;
    part.non_dominated = std::move(fronts.front());
    for (std::size_t f = 1; f < fronts.size(); ++f)
        part.dominated.insert(part.dominated.end(), fronts[f].begin(), fronts[f].end());
    std::sort(part.dominated.begin(), part.dominated.end());
    return part;
}

std::vector<ScoredVideo> scored_subset(const Repository& repo, std::initializer_list<Source> sources) {
    std::vector<ScoredVideo> out;
    for (const auto& r : repo.records) {
        if (std::find(sources.begin(), sources.end(), r.source) == sources.end()) continue;
        if (!r.rewards) fail(ErrorKind::State, fmt::format("video '{}' has not been scored", r.id));
        out.push_back({r.id, *r.rewards});
    }
    return out;
}

namespace {

void sort_pairs(std::vector<PreferencePair>& pairs) {
    std::sort(pairs.begin(), pairs.end(), [](const PreferencePair& a, const PreferencePair& b) {
        if (a.delta_id != b.delta_id) return a.delta_id > b.delta_id;
        if (a.winner_id != b.winner_id) return a.winner_id < b.winner_id;
        return a.loser_id < b.loser_id;
    });
}

} // namespace

std::vector<PreferencePair> select_id_pairs(std::span<const ScoredVideo> videos, const SelectionConfig& config) {
    config.validate();
    std::vector<PreferencePair> pairs;
    for (const auto& w : videos) {
        for (const auto& l : videos) {
            if (w.id == l.id) continue;
            const double gap = w.rewards.r_id - l.rewards.r_id;
            const double dynamic_excess = l.rewards.r_dy - w.rewards.r_dy;
            if (gap >= config.theta_id && dynamic_excess <= config.tau_dy)
                pairs.push_back({w.id, l.id, Stage::IdPreferred, gap});
        }
    }
    sort_pairs(pairs);
    return pairs;
}

std::vector<PreferencePair> select_dynamic_pairs(std::span<const ScoredVideo> videos, const SelectionConfig& config,
                                                 ChannelMask mask) {
    config.validate();
    std::vector<PreferencePair> pairs;
    if (videos.empty()) return pairs;
    const FrontPartition part = partition_fronts(videos, mask);
    for (std::size_t wi : part.non_dominated) {
        for (std::size_t li : part.dominated) {
            const auto& w = videos[wi];
            const auto& l = videos[li];
            if (dominates(w.rewards, l.rewards, mask))
                pairs.push_back({w.id, l.id, Stage::DynamicPreferred, w.rewards.r_id - l.rewards.r_id});
        }
    }
    sort_pairs(pairs);
    if (pairs.size() > static_cast<std::size_t>(config.top_k)) pairs.resize(static_cast<std::size_t>(config.top_k));
    return pairs;
}

std::vector<PreferencePair> select_id_pairs(const Repository& repo, const SelectionConfig& config) {
    const auto subset = scored_subset(repo, {Source::StaticRef, Source::Initial});
    return select_id_pairs(std::span<const ScoredVideo>(subset), config);
}

std::vector<PreferencePair> select_dynamic_pairs(const Repository& repo, const SelectionConfig& config,
                                                 ChannelMask mask) {
    const auto subset = scored_subset(repo, {Source::Initial, Source::FineTuned});
    return select_dynamic_pairs(std::span<const ScoredVideo>(subset), config, mask);
}

std::vector<PreferencePair> merge_pairs(std::span<const PreferencePair> id_pairs,
                                        std::span<const PreferencePair> dynamic_pairs) {
    std::vector<PreferencePair> out;
    std::set<std::pair<std::string, std::string>> seen;
    for (auto part : {id_pairs, dynamic_pairs}) {
        for (const auto& p : part)
            if (seen.emplace(p.winner_id, p.loser_id).second) out.push_back(p);
    }
    return out;
}

void save_pairs(const std::vector<PreferencePair>& pairs, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, fmt::format("cannot open '{}' for writing", path));
    nlohmann::ordered_json header{{"format", kPairsFormat}, {"count", pairs.size()}};
    out << header.dump() << '\n';
    for (const auto& p : pairs) {
        nlohmann::ordered_json j{{"winner_id", p.winner_id},
                                 {"loser_id", p.loser_id},
                                 {"stage", to_string(p.stage)},
                                 {"delta_id", p.delta_id}};
        out << j.dump() << '\n';
    }
    if (!out) fail(ErrorKind::Io, fmt::format("failed writing '{}'", path));
}

std::vector<PreferencePair> load_pairs(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, fmt::format("cannot open pairs file '{}'", path));
    std::vector<PreferencePair> pairs;
    std::string line;
    int line_no = 0;
    bool have_header = false;
    std::size_t expected = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            if (!have_header) {
                if (j.value("format", "") != kPairsFormat)
                    fail(ErrorKind::Parse, fmt::format("{}:{}: expected format '{}'", path, line_no, kPairsFormat));
                expected = j.at("count").get<std::size_t>();
                have_header = true;
                continue;
            }
            PreferencePair p{j.at("winner_id").get<std::string>(), j.at("loser_id").get<std::string>(),
                             parse_stage(j.at("stage").get<std::string>()), j.at("delta_id").get<double>()};
            if (p.winner_id == p.loser_id)
                fail(ErrorKind::Data, fmt::format("{}:{}: pair with identical winner and loser", path, line_no));
            pairs.push_back(std::move(p));
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::Parse, fmt::format("{}:{}: malformed pair: {}", path, line_no, e.what()));
        }
    }
    if (!have_header) fail(ErrorKind::Parse, fmt::format("{}: missing header line", path));
    if (pairs.size() != expected)
        fail(ErrorKind::Data, fmt::format("{}: header announces {} pairs, found {}", path, expected, pairs.size()));
    return pairs;
}

} // namespace idpref
