// Copyright (c) 2026, idpref contributors
// SPDX-License-Identifier: Apache-2.0

#include "repository.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace idpref {

using nlohmann::json;
using nlohmann::ordered_json;

const char* to_string(Source s) noexcept {
    switch (s) {
    case Source::FineTuned: return "FineTuned";
    case Source::Initial: return "Initial";
    case Source::StaticRef: return "StaticRef";
    }
    return "?";
}

Source parse_source(const std::string& s) {
    if (s == "FineTuned") return Source::FineTuned;
    if (s == "Initial") return Source::Initial;
    if (s == "StaticRef") return Source::StaticRef;
    fail(ErrorKind::Parse, fmt::format("unknown video source '{}'", s));
}

const VideoRecord* Repository::find(const std::string& id) const {
    for (const auto& r : records)
        if (r.id == id) return &r;
    return nullptr;
}

const PromptSpec* Repository::prompt(const std::string& prompt_id) const {
    for (const auto& p : manifest.prompts)
        if (p.id == prompt_id) return &p;
    return nullptr;
}

std::vector<Vec> Repository::references() const {
    std::vector<Vec> refs;
    for (const auto& r : records)
        if (r.source == Source::StaticRef) refs.emplace_back(r.frames.row(0).transpose());
    return refs;
}

Repository build_repository(const DenoiserParams& ft_model, const DenoiserParams& init_model,
                            std::span<const Vec> references, std::span<const PromptSpec> prompts, BuildCounts counts,
                            int frames, std::uint64_t seed, const WorldConfig& world_config,
                            const SamplingSetup& sampling) {
    if (references.empty()) fail(ErrorKind::Configuration, "build_repository: empty reference list");
    if (counts.fine_tuned < 0 || counts.initial < 0) fail(ErrorKind::Configuration, "build_repository: negative count");
    if ((counts.fine_tuned > 0 || counts.initial > 0) && prompts.empty())
        fail(ErrorKind::Configuration, "build_repository: prompts required to sample videos");
    if (frames < 1) fail(ErrorKind::Configuration, "build_repository: frame count must be >= 1");
    const int frame_dim = world_config.frame_dim;

    Repository repo;
    repo.manifest.world_config = world_config;
    repo.manifest.frames = frames;
    repo.manifest.prompts.assign(prompts.begin(), prompts.end());
    repo.manifest.seed = seed;

    // Record index k (over all sampled records) uses seed + k.
    auto sample_block = [&](const DenoiserParams& model, int count, int first_index, Source source,
                            const char* prefix) {
        if (count == 0) return;
        if (model.shape.video_size != frames * frame_dim)
            fail(ErrorKind::Configuration,
                 fmt::format("model video size {} does not match {} frames x {} dims", model.shape.video_size, frames,
                             frame_dim));
        std::vector<Conditioning> conds;
        std::vector<std::uint64_t> seeds;
        for (int i = 0; i < count; ++i) {
            conds.push_back(Conditioning::from_prompt(prompts[static_cast<std::size_t>(i) % prompts.size()]));
            seeds.push_back(seed + static_cast<std::uint64_t>(first_index + i));
        }
        const Mat videos = sample_videos(model, sampling.schedule, conds, sampling.sampler, seeds);
        for (int i = 0; i < count; ++i) {
            VideoRecord rec;
            rec.id = fmt::format("{}-{:04d}", prefix, i);
            rec.source = source;
            rec.prompt_id = prompts[static_cast<std::size_t>(i) % prompts.size()].id;
            rec.frames = unflatten(videos.col(i), frames, frame_dim);
            repo.records.push_back(std::move(rec));
        }
    };
    sample_block(ft_model, counts.fine_tuned, 0, Source::FineTuned, "ft");
    sample_block(init_model, counts.initial, counts.fine_tuned, Source::Initial, "init");

    for (std::size_t i = 0; i < references.size(); ++i) {
        if (references[i].size() != frame_dim) fail(ErrorKind::Configuration, "reference frame has wrong dimension");
        VideoRecord rec;
        rec.id = fmt::format("ref-{:04d}", i);
        rec.source = Source::StaticRef;
        rec.frames = inflate_reference(references[i], frames);
        repo.records.push_back(std::move(rec));
    }
    repo.manifest.counts = {counts.fine_tuned, counts.initial, static_cast<int>(references.size())};
    return repo;
}

Repository refresh_repository(const Repository& repo, const DenoiserParams& ft_model, std::uint64_t seed,
                              const SamplingSetup& sampling) {
    const auto& m = repo.manifest;
    std::vector<const VideoRecord*> ft;
    for (const auto& r : repo.records)
        if (r.source == Source::FineTuned) ft.push_back(&r);
    if (ft.empty()) return repo;
    if (ft_model.shape.video_size != m.frames * m.world_config.frame_dim)
        fail(ErrorKind::Configuration, "refresh: model video size does not match repository");

    std::vector<Conditioning> conds;
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = 0; i < ft.size(); ++i) {
        const PromptSpec* p = ft[i]->prompt_id ? repo.prompt(*ft[i]->prompt_id) : nullptr;
        if (!p) fail(ErrorKind::Data, fmt::format("record '{}' has no resolvable prompt", ft[i]->id));
        conds.push_back(Conditioning::from_prompt(*p));
        seeds.push_back(seed + i);
    }
    const Mat videos = sample_videos(ft_model, sampling.schedule, conds, sampling.sampler, seeds);

    Repository out = repo;
    std::size_t k = 0;
    for (auto& r : out.records) {
        if (r.source != Source::FineTuned) continue;
        r.frames = unflatten(videos.col(static_cast<Eigen::Index>(k++)), m.frames, m.world_config.frame_dim);
    }
    for (auto& r : out.records) r.rewards.reset(); // normalisation spans the whole repository
    out.manifest.seed = seed;
    return out;
}

void validate_repository(const Repository& repo) {
    std::set<std::string> ids;
    SourceCounts counts;
    for (const auto& r : repo.records) {
        if (!ids.insert(r.id).second) fail(ErrorKind::Data, fmt::format("duplicate video id '{}'", r.id));
        if (r.frames.rows() == 0) fail(ErrorKind::Data, fmt::format("video '{}' has no frames", r.id));
        if (r.frames.cols() != repo.manifest.world_config.frame_dim)
            fail(ErrorKind::Data, fmt::format("video '{}' has frame width {}, expected {}", r.id, r.frames.cols(),
                                              repo.manifest.world_config.frame_dim));
        switch (r.source) {
        case Source::FineTuned: ++counts.fine_tuned; break;
        case Source::Initial: ++counts.initial; break;
        case Source::StaticRef: ++counts.static_ref; break;
        }
        if (r.source == Source::StaticRef) {
            for (Eigen::Index t = 1; t < r.frames.rows(); ++t)
                if (r.frames.row(t) != r.frames.row(0))
                    fail(ErrorKind::Data, fmt::format("StaticRef video '{}' has non-identical frames", r.id));
        } else if (!r.prompt_id || !repo.prompt(*r.prompt_id)) {
            fail(ErrorKind::Data, fmt::format("video '{}' references a prompt missing from the manifest", r.id));
        }
    }
    if (!(counts == repo.manifest.counts))
        fail(ErrorKind::Data, fmt::format("manifest counts ({}, {}, {}) do not match records ({}, {}, {})",
                                          repo.manifest.counts.fine_tuned, repo.manifest.counts.initial,
                                          repo.manifest.counts.static_ref, counts.fine_tuned, counts.initial,
                                          counts.static_ref));
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

namespace {

std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

Vec vec_from(const json& j) {
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j.at(i).get<double>();
    return v;
}

} // namespace

ordered_json world_config_to_json(const WorldConfig& c) {
    return {{"frame_dim", c.frame_dim},
            {"identity_dim", c.identity_dim},
            {"motion_dim", c.motion_dim},
            {"noise_sigma", c.noise_sigma},
            {"seed", c.seed}};
}

WorldConfig world_config_from_json(const json& j) {
    WorldConfig c;
    c.frame_dim = j.at("frame_dim").get<int>();
    c.identity_dim = j.at("identity_dim").get<int>();
    c.motion_dim = j.at("motion_dim").get<int>();
    c.noise_sigma = j.at("noise_sigma").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

ordered_json prompt_to_json(const PromptSpec& p) {
    return {{"id", p.id}, {"text", p.text}, {"direction", to_std(p.direction)}};
}

PromptSpec prompt_from_json(const json& j) {
    return PromptSpec{j.at("id").get<std::string>(), vec_from(j.at("direction")), j.at("text").get<std::string>()};
}

void save_repository(const Repository& repo, const std::string& path) {
    std::ostringstream buf;
    const auto& m = repo.manifest;
    ordered_json header;
    header["format"] = kRepositoryFormat;
    header["world_config"] = world_config_to_json(m.world_config);
    header["frames"] = m.frames;
    header["counts"] = {{"FineTuned", m.counts.fine_tuned},
                        {"Initial", m.counts.initial},
                        {"StaticRef", m.counts.static_ref}};
    header["prompts"] = ordered_json::array();
    for (const auto& p : m.prompts) header["prompts"].push_back(prompt_to_json(p));
    header["seed"] = m.seed;
    buf << header.dump() << '\n';

    for (const auto& r : repo.records) {
        if (!r.frames.allFinite())
            fail(ErrorKind::Serialization, fmt::format("video '{}' contains non-finite frame values", r.id));
        ordered_json rec;
        rec["id"] = r.id;
        rec["source"] = to_string(r.source);
        rec["prompt_id"] = r.prompt_id ? ordered_json(*r.prompt_id) : ordered_json(nullptr);
        rec["frames"] = ordered_json::array();
        for (Eigen::Index t = 0; t < r.frames.rows(); ++t) rec["frames"].push_back(to_std(r.frames.row(t).transpose()));
        if (r.rewards) {
            rec["rewards"] = {{"r_id", r.rewards->r_id}, {"r_dy", r.rewards->r_dy}, {"r_sem", r.rewards->r_sem}};
        } else {
            rec["rewards"] = nullptr;
        }
        buf << rec.dump() << '\n';
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, fmt::format("cannot open '{}' for writing", path));
    out << buf.str();
    if (!out) fail(ErrorKind::Io, fmt::format("failed writing '{}'", path));
}

Repository load_repository(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, fmt::format("cannot open repository '{}'", path));

    Repository repo;
    std::string line;
    int line_no = 0;
    bool have_header = false;
    std::unordered_map<std::string, int> first_seen;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            if (!have_header) {
                if (j.value("format", "") != kRepositoryFormat)
                    fail(ErrorKind::Parse, fmt::format("{}:{}: expected format '{}'", path, line_no, kRepositoryFormat));
                auto& m = repo.manifest;
                m.world_config = world_config_from_json(j.at("world_config"));
                m.frames = j.at("frames").get<int>();
                const auto& c = j.at("counts");
                m.counts = {c.at("FineTuned").get<int>(), c.at("Initial").get<int>(), c.at("StaticRef").get<int>()};
                for (const auto& p : j.at("prompts")) m.prompts.push_back(prompt_from_json(p));
                m.seed = j.at("seed").get<std::uint64_t>();
                have_header = true;
                continue;
            }
            VideoRecord r;
            r.id = j.at("id").get<std::string>();
            r.source = parse_source(j.at("source").get<std::string>());
            if (!j.at("prompt_id").is_null()) r.prompt_id = j.at("prompt_id").get<std::string>();
            const auto& frames = j.at("frames");
            if (!frames.is_array() || frames.empty())
                fail(ErrorKind::Parse, fmt::format("{}:{}: record has no frames", path, line_no));
            const auto width = frames.at(0).size();
            r.frames.resize(static_cast<Eigen::Index>(frames.size()), static_cast<Eigen::Index>(width));
            for (std::size_t t = 0; t < frames.size(); ++t) {
                if (frames[t].size() != width)
                    fail(ErrorKind::Parse, fmt::format("{}:{}: ragged frame array", path, line_no));
                for (std::size_t d = 0; d < width; ++d)
                    r.frames(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(d)) = frames[t][d].get<double>();
            }
            if (j.contains("rewards") && !j.at("rewards").is_null()) {
                const auto& rw = j.at("rewards");
                r.rewards = RewardVector{rw.at("r_id").get<double>(), rw.at("r_dy").get<double>(),
                                         rw.at("r_sem").get<double>()};
            }
            auto [it, fresh] = first_seen.emplace(r.id, line_no);
            if (!fresh)
                fail(ErrorKind::Data, fmt::format("{}: duplicate video id '{}' on lines {} and {}", path, r.id,
                                                  it->second, line_no));
            repo.records.push_back(std::move(r));
        } catch (const json::exception& e) {
            fail(ErrorKind::Parse, fmt::format("{}:{}: malformed record: {}", path, line_no, e.what()));
        }
    }
    if (!have_header) fail(ErrorKind::Parse, fmt::format("{}: missing manifest line", path));
    validate_repository(repo);
    return repo;
}

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

std::vector<ScoreRow> score_repository(Repository& repo, const ScorerSet& scorers, const World& world,
                                       ChannelMask mask) {
    if (repo.records.empty()) fail(ErrorKind::InvalidArgument, "score_repository: empty repository");
    const std::vector<Vec> refs = repo.references();
    if (refs.empty()) fail(ErrorKind::Data, "score_repository: repository has no StaticRef references");

    std::map<std::string, RawScores> raw;
    std::vector<ScoreRow> rows;
    for (const auto& r : repo.records) {
        ScoreContext ctx{&world, refs, r.prompt_id ? repo.prompt(*r.prompt_id) : nullptr};
        RawScores s = scorers.score(r.frames, ctx);
        if (r.source == Source::StaticRef) s.sem_raw = 0.0;
        raw.emplace(r.id, s);
        rows.push_back({r.id, r.source, s, {}});
    }
    const auto norm = normalize_repository(raw, mask);
    for (auto& row : rows) row.rewards = norm.at(row.id);
    for (auto& r : repo.records) r.rewards = norm.at(r.id);
    return rows;
}

void write_score_table(const std::vector<ScoreRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, fmt::format("cannot open '{}' for writing", path));
    out << "video_id,source,id_raw,dy_raw,sem_raw,r_id,r_dy,r_sem\n";
    for (const auto& r : rows) {
        out << fmt::format("{},{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g}\n", r.id, to_string(r.source), r.raw.id_raw,
                           r.raw.dy_raw, r.raw.sem_raw, r.rewards.r_id, r.rewards.r_dy, r.rewards.r_sem);
    }
    if (!out) fail(ErrorKind::Io, fmt::format("failed writing '{}'", path));
}

std::vector<ScoreRow> read_score_table(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, fmt::format("cannot open score table '{}'", path));
    std::string line;
    std::vector<ScoreRow> rows;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 || line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 8) fail(ErrorKind::Parse, fmt::format("{}:{}: expected 8 columns", path, line_no));
        try {
            ScoreRow r;
            r.id = cells[0];
            r.source = parse_source(cells[1]);
            r.raw = {std::stod(cells[2]), std::stod(cells[3]), std::stod(cells[4])};
            r.rewards = {std::stod(cells[5]), std::stod(cells[6]), std::stod(cells[7])};
            rows.push_back(std::move(r));
        } catch (const std::logic_error&) {
            fail(ErrorKind::Parse, fmt::format("{}:{}: non-numeric score", path, line_no));
        }
    }
    return rows;
}

void apply_scores(Repository& repo, const std::vector<ScoreRow>& rows) {
    std::unordered_map<std::string, const ScoreRow*> by_id;
    for (const auto& r : rows) by_id[r.id] = &r;
    for (auto& rec : repo.records) {
        auto it = by_id.find(rec.id);
        if (it == by_id.end()) fail(ErrorKind::Data, fmt::format("score table has no row for video '{}'", rec.id));
        rec.rewards = it->second->rewards;
    }
}

} // namespace idpref
