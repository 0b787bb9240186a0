// Copyright (c) 2026, idpref contributors
// SPDX-License-Identifier: Apache-2.0

#include "rewards.hpp"
#include "support.hpp"

#include <doctest.h>

#include <map>

using namespace idpref;
using namespace idpref::testing;

namespace {

World exact_world(std::uint64_t seed = 1) {
    WorldConfig c;
    c.noise_sigma = 0.0;
    c.seed = seed;
    return make_world(c);
}

// Plain loops over raw arrays, independent of the library's vectorised form.
double loop_identity(const Frames& video, const std::vector<Vec>& refs, const World& w) {
    const int d = static_cast<int>(w.identity_basis.rows());
    const int k = static_cast<int>(w.identity_basis.cols());
    std::vector<double> ref(static_cast<std::size_t>(k), 0.0);
    for (const Vec& r : refs)
        for (int j = 0; j < k; ++j) {
            double acc = 0.0;
            for (int i = 0; i < d; ++i) acc += w.identity_basis(i, j) * r[i];
            ref[static_cast<std::size_t>(j)] += acc / double(refs.size());
        }
    double total = 0.0;
    for (int t = 0; t < video.rows(); ++t) {
        double dot = 0.0, nf = 0.0, nr = 0.0;
        for (int j = 0; j < k; ++j) {
            double p = 0.0;
            for (int i = 0; i < d; ++i) p += w.identity_basis(i, j) * video(t, i);
            dot += p * ref[static_cast<std::size_t>(j)];
            nf += p * p;
            nr += ref[static_cast<std::size_t>(j)] * ref[static_cast<std::size_t>(j)];
        }
        total += (nf == 0.0 || nr == 0.0) ? 0.0 : dot / std::sqrt(nf * nr);
    }
    return total / double(video.rows());
}

std::map<std::string, RawScores> random_raw(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> id(-1.0, 1.0), dy(0.0, 3.0);
    std::map<std::string, RawScores> raw;
    for (int i = 0; i < n; ++i) raw["v" + std::to_string(i)] = {id(rng), dy(rng), id(rng)};
    return raw;
}

} // namespace

TEST_CASE("identity score examples") {
    const World w = exact_world();
    const IdentitySpec e = random_identity(w, 1, 0);
    const Vec ref = (w.identity_basis * e.embedding).eval();

    CHECK(score_identity(inflate_reference(ref, 16), std::vector<Vec>{ref}, w) ==
          doctest::Approx(1.0).epsilon(1e-9));

    // Orthogonal identity via Gram-Schmidt against e.
    auto rng = derived_rng(4, 0);
    Vec other = gaussian_vector(rng, 8);
    other -= other.dot(e.embedding) * e.embedding;
    other.normalize();
    const Frames v = render_video(w, IdentitySpec{other}, {Vec::Unit(8, 0), 2.0}, 8, 3);
    CHECK(std::abs(score_identity(v, std::vector<Vec>{ref}, w)) <= 1e-6);

    CHECK(error_kind([&] { score_identity(v, std::vector<Vec>{}, w); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("identity score matches a per-frame loop on random inputs") {
    const World w = make_world(WorldConfig{});
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto rng = derived_rng(seed, 3);
        Frames video(10, 24);
        for (int t = 0; t < 10; ++t) video.row(t) = gaussian_vector(rng, 24).transpose();
        std::vector<Vec> refs;
        for (int i = 0; i < 3; ++i) refs.push_back(gaussian_vector(rng, 24));
        CHECK(score_identity(video, refs, w) == doctest::Approx(loop_identity(video, refs, w)).epsilon(1e-12));
    }
}

TEST_CASE("dynamic score examples") {
    const World w = exact_world();
    const IdentitySpec e = random_identity(w, 1, 0);
    const Vec m = Vec::Unit(8, 3);
    CHECK(score_dynamic(inflate_reference(w.identity_basis * e.embedding, 16)) == 0.0);
    CHECK(score_dynamic(render_video(w, e, {m, 2.0}, 3, 0)) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(score_dynamic(render_video(w, e, {m, 2.0}, 1, 0)) == 0.0);
}

TEST_CASE("dynamic score is translation invariant") {
    const World w = make_world(WorldConfig{});
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto rng = derived_rng(seed, 8);
        const Frames v = render_video(w, random_identity(w, seed, 1), {random_unit_vector(rng, 8), 3.0}, 16, seed);
        const Eigen::RowVectorXd shift = gaussian_vector(rng, 24).transpose() * 5.0;
        const Frames moved = v.rowwise() + shift;
        CHECK(score_dynamic(moved) == doctest::Approx(score_dynamic(v)).epsilon(1e-12));
    }
}

TEST_CASE("semantic score examples") {
    const World w = exact_world();
    const IdentitySpec e = random_identity(w, 1, 0);
    auto rng = derived_rng(1, 5);
    const PromptSpec p{"p", random_unit_vector(rng, 8), "move"};
    CHECK(score_semantic(render_video(w, e, {p.direction, 2.5}, 8, 0), p, w) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(score_semantic(render_video(w, e, {-p.direction, 2.5}, 8, 0), p, w) ==
          doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(score_semantic(inflate_reference(w.identity_basis * e.embedding, 8), p, w) == 0.0);
}

TEST_CASE("default scorers agree with the closed-form oracle on noiseless videos") {
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        const World w = exact_world(seed);
        const IdentitySpec e = random_identity(w, seed, 0);
        const IdentitySpec other = random_identity(w, seed, 1);
        auto rng = derived_rng(seed, 6);
        const PromptSpec p{"p", random_unit_vector(rng, 8), "move"};
        const MotionSpec mo{random_unit_vector(rng, 8), double(seed % 7)};
        const Frames v = render_video(w, seed % 2 ? e : other, mo, 2 + int(seed % 9), seed);
        const std::vector<Vec> refs{w.identity_basis * e.embedding};
        const ScorerSet s = default_scorers();
        const RawScores got = s.score(v, ScoreContext{&w, refs, &p});
        const OracleScores want = oracle_scores(w, v, e, p);
        CHECK(got.id_raw == doctest::Approx(want.identity).epsilon(1e-9));
        CHECK(got.dy_raw == doctest::Approx(want.motion).epsilon(1e-9));
        CHECK(got.sem_raw == doctest::Approx(want.semantic).epsilon(1e-9));
        CHECK(s.score(v, ScoreContext{&w, refs, nullptr}).sem_raw == 0.0);
    }
}

TEST_CASE("normalization examples") {
    std::map<std::string, RawScores> raw{{"a", {0.0, 0.7, 0.0}}, {"b", {0.5, 0.7, 0.5}}, {"c", {1.0, 0.7, 1.0}}};
    const auto r = normalize_repository(raw);
    CHECK(r.at("a").r_id == 1.0);
    CHECK(r.at("b").r_id == 5.5);
    CHECK(r.at("c").r_id == 10.0);
    for (const auto& k : {"a", "b", "c"}) CHECK(r.at(k).r_dy == 5.5);

    const auto masked = normalize_repository(raw, ChannelMask{true, true, false});
    for (const auto& k : {"a", "b", "c"}) CHECK(masked.at(k).r_sem == 5.5);

    raw["d"] = {std::nan(""), 0.0, 0.0};
    CHECK(error_kind([&] { normalize_repository(raw); }) == ErrorKind::Data);
    CHECK(error_kind([&] { normalize_repository({}); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("normalization stays in range, preserves order and ignores positive affine maps") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto rng = derived_rng(seed, 21);
        const auto raw = random_raw(rng, 2 + int(seed % 40));
        const auto norm = normalize_repository(raw);
        std::uniform_real_distribution<double> k(0.01, 50.0), c(-10.0, 10.0);
        const double scale = k(rng), shift = c(rng);
        auto moved = raw;
        for (auto& [id, s] : moved) s.dy_raw = scale * s.dy_raw + shift;
        const auto norm_moved = normalize_repository(moved);

        for (const auto& [a, sa] : raw) {
            const RewardVector& ra = norm.at(a);
            for (int ch = 0; ch < 3; ++ch) {
                CHECK(ra.channel(ch) >= 1.0);
                CHECK(ra.channel(ch) <= 10.0);
            }
            CHECK(norm_moved.at(a).r_dy == doctest::Approx(ra.r_dy).epsilon(1e-9));
            CHECK(norm_moved.at(a).r_id == ra.r_id);
            for (const auto& [b, sb] : raw) {
                if (sa.id_raw < sb.id_raw) CHECK(ra.r_id < norm.at(b).r_id);
                if (sa.dy_raw < sb.dy_raw) CHECK(ra.r_dy < norm.at(b).r_dy);
                if (sa.sem_raw < sb.sem_raw) CHECK(ra.r_sem < norm.at(b).r_sem);
            }
        }
    }
}

TEST_CASE("an inflated reference holds the identity maximum of its repository") {
    const World w = make_world(WorldConfig{});
    const IdentitySpec e = random_identity(w, 1, 0);
    const std::vector<Vec> refs{(w.identity_basis * e.embedding).eval()};
    std::map<std::string, RawScores> raw;
    raw["ref"] = {score_identity(inflate_reference(refs[0], 16), refs, w), 0.0, 0.0};
    for (int i = 0; i < 30; ++i) {
        auto rng = derived_rng(i, 2);
        const IdentitySpec id = i % 3 ? random_identity(w, 5, i) : e;
        const Frames v = render_video(w, id, {random_unit_vector(rng, 8), 3.0}, 16, i);
        raw["v" + std::to_string(i)] = {score_identity(v, refs, w), score_dynamic(v), 0.0};
    }
    const auto norm = normalize_repository(raw);
    for (const auto& [id, s] : raw) CHECK(s.id_raw <= raw.at("ref").id_raw);
    CHECK(norm.at("ref").r_id == 10.0);
}
