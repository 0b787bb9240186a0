// Copyright (c) 2026, idpref contributors
// SPDX-License-Identifier: Apache-2.0
//
// Helpers and brute-force oracles shared by the unit tests and the
// acceptance runner.

#pragma once

#include "diffusion.hpp"
#include "hpo.hpp"
#include "pareto_select.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <unistd.h>

namespace idpref::testing {

template <class F>
std::optional<ErrorKind> error_kind(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    return std::nullopt;
}

template <class F>
std::string error_message(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("idpref-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string file(const std::string& name) const { return (path_ / name).string(); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline std::vector<std::string> lines_of(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) out.push_back(line);
    return out;
}

inline void write_lines(const std::string& path, const std::vector<std::string>& lines) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    for (const auto& l : lines) out << l << '\n';
}

// 3 frames of 6 dims, 2 motion dims, 12 hidden units, 10 diffusion steps:
// a network of about a thousand parameters.
inline NetworkShape tiny_shape(int adapter_rank = 0) {
    NetworkShape s;
    s.video_size = 18;
    s.cond_dim = 2;
    s.hidden = 12;
    s.adapter_rank = adapter_rank;
    s.diffusion_steps = 10;
    return s;
}

inline NoiseSchedule tiny_schedule() { return make_schedule(10, 1e-3, 0.2); }

/// Every base entry random, skip gains included.
inline DenoiserParams random_params(const NetworkShape& shape, std::uint64_t seed, double scale = 0.5) {
    DenoiserParams p = init_params(shape, seed);
    auto rng = derived_rng(seed, 99);
    std::normal_distribution<double> normal(0.0, scale);
    for (Eigen::Index i = 0; i < p.base.size(); ++i) p.base[i] = normal(rng);
    std::uniform_real_distribution<double> gain(0.2, 1.5);
    p.base.tail(shape.diffusion_steps) = Vec::NullaryExpr(shape.diffusion_steps, [&] { return gain(rng); });
    if (p.has_adapter())
        for (Eigen::Index i = 0; i < p.adapter.size(); ++i) p.adapter[i] = normal(rng);
    return p;
}

inline DenoiserParams zero_params(const NetworkShape& shape) {
    DenoiserParams p = init_params(shape, 0);
    p.base.setZero();
    p.adapter.setZero();
    return p;
}

/// Largest relative error between the analytic gradient and central
/// differences over `probes` randomly chosen trainable coordinates.
inline double finite_difference_error(const DenoiserParams& params, const Vec& analytic,
                                      const std::function<double(const DenoiserParams&)>& loss, int probes,
                                      std::uint64_t seed, double h = 1e-5) {
    auto rng = derived_rng(seed, 1234);
    std::uniform_int_distribution<Eigen::Index> pick(0, params.trainable_size() - 1);
    double worst = 0.0;
    for (int k = 0; k < probes; ++k) {
        const Eigen::Index i = pick(rng);
        DenoiserParams plus = params, minus = params;
        plus.trainable()[i] += h;
        minus.trainable()[i] -= h;
        const double numeric = (loss(plus) - loss(minus)) / (2.0 * h);
        const double scale = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-7});
        worst = std::max(worst, std::abs(analytic[i] - numeric) / scale);
    }
    return worst;
}

inline RewardVector random_rewards(std::mt19937_64& rng, bool integer_grid = false) {
    if (integer_grid) {
        std::uniform_int_distribution<int> u(1, 5);
        return {double(u(rng)), double(u(rng)), double(u(rng))};
    }
    std::uniform_real_distribution<double> u(1.0, 10.0);
    return {u(rng), u(rng), u(rng)};
}

inline std::vector<ScoredVideo> random_scored(std::mt19937_64& rng, std::size_t n, bool integer_grid) {
    std::vector<ScoredVideo> v;
    for (std::size_t i = 0; i < n; ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "v%04zu", i);
        v.push_back({id, random_rewards(rng, integer_grid)});
    }
    return v;
}

inline bool brute_dominates(const RewardVector& a, const RewardVector& b) {
    return a.r_id > b.r_id && a.r_dy > b.r_dy && a.r_sem > b.r_sem;
}

/// O(n^2) enumeration: a video is non-dominated when nothing beats it.
inline FrontPartition brute_partition(const std::vector<ScoredVideo>& v) {
    FrontPartition p;
    for (std::size_t i = 0; i < v.size(); ++i) {
        bool beaten = false;
        for (std::size_t j = 0; j < v.size() && !beaten; ++j)
            if (j != i && brute_dominates(v[j].rewards, v[i].rewards)) beaten = true;
        (beaten ? p.dominated : p.non_dominated).push_back(i);
    }
    return p;
}

inline std::set<std::pair<std::string, std::string>> brute_dynamic_candidates(const std::vector<ScoredVideo>& v) {
    const FrontPartition p = brute_partition(v);
    std::set<std::pair<std::string, std::string>> out;
    for (std::size_t w : p.non_dominated)
        for (std::size_t l : p.dominated)
            if (brute_dominates(v[w].rewards, v[l].rewards)) out.emplace(v[w].id, v[l].id);
    return out;
}

/// Ranked by delta_id descending, then winner id, then loser id.
inline bool ranked(const std::vector<PreferencePair>& pairs) {
    for (std::size_t i = 1; i < pairs.size(); ++i) {
        const auto& a = pairs[i - 1];
        const auto& b = pairs[i];
        if (a.delta_id < b.delta_id) return false;
        if (a.delta_id == b.delta_id && std::tie(a.winner_id, a.loser_id) > std::tie(b.winner_id, b.loser_id))
            return false;
    }
    return true;
}

inline PairBatch random_pair_batch(const NetworkShape& shape, const NoiseSchedule& schedule, std::mt19937_64& rng) {
    PairBatch b;
    b.winner = gaussian_vector(rng, shape.video_size);
    b.loser = gaussian_vector(rng, shape.video_size);
    b.cond_winner = gaussian_vector(rng, shape.cond_dim);
    b.cond_loser = b.cond_winner;
    std::uniform_int_distribution<int> t(1, schedule.steps());
    b.t_winner = b.t_loser = t(rng);
    b.noise_winner = gaussian_vector(rng, shape.video_size);
    b.noise_loser = gaussian_vector(rng, shape.video_size);
    return b;
}

} // namespace idpref::testing
