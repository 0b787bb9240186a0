// Copyright (c) 2026, idpref contributors
// SPDX-License-Identifier: Apache-2.0

#include "evalreport.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace idpref {

void canonicalize_rows(std::vector<MetricRow>& rows) {
    for (const auto& r : rows)
        if (!std::isfinite(r.x) || !std::isfinite(r.value))
            fail(ErrorKind::Numeric, fmt::format("metric '{}' has a non-finite entry at x={}", r.name, r.x));
    std::stable_sort(rows.begin(), rows.end(), [](const MetricRow& a, const MetricRow& b) {
        return a.name != b.name ? a.name < b.name : a.x < b.x;
    });
}

EvalContext make_eval_context(const PipelineConfig& cfg, const Scenario& scenario) {
    return {scenario.world, scenario.references, scenario.prompts, scenario.frames, sampling_setup(cfg)};
}

std::vector<Frames> eval_samples(const DenoiserParams& model, const EvalContext& ctx, int n_samples,
                                 std::uint64_t seed) {
    if (n_samples < 1) fail(ErrorKind::InvalidArgument, "n_samples must be >= 1");
    const int cond_dim = ctx.world.config.motion_dim;
    std::vector<Conditioning> conds;
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < n_samples; ++i) {
        conds.push_back(ctx.prompts.empty()
                            ? Conditioning::none(cond_dim)
                            : Conditioning::from_prompt(ctx.prompts[static_cast<std::size_t>(i) % ctx.prompts.size()]));
        seeds.push_back(derived_rng(seed, stream::eval, static_cast<std::uint64_t>(i))());
    }
    const Mat flat = sample_videos(model, ctx.sampling.schedule, conds, ctx.sampling.sampler, seeds);
    std::vector<Frames> out;
    for (Eigen::Index c = 0; c < flat.cols(); ++c)
        out.push_back(unflatten(flat.col(c), ctx.frames, ctx.world.config.frame_dim));
    return out;
}

Metrics evaluate_model(const DenoiserParams& model, const EvalContext& ctx, int n_samples, std::uint64_t seed) {
    const auto videos = eval_samples(model, ctx, n_samples, seed);
    Metrics m;
    for (std::size_t i = 0; i < videos.size(); ++i) {
        m.identity += score_identity(videos[i], ctx.references, ctx.world);
        m.dynamic += score_dynamic(videos[i]);
        if (!ctx.prompts.empty())
            m.semantic += score_semantic(videos[i], ctx.prompts[i % ctx.prompts.size()], ctx.world);
    }
    const double n = static_cast<double>(videos.size());
    m.identity /= n;
    m.dynamic /= n;
    m.semantic /= n;
    return m;
}

Frames extend_video(const Frames& video, int length) {
    if (length < 1) fail(ErrorKind::InvalidArgument, "video length must be >= 1");
    const auto t = static_cast<int>(video.rows());
    if (t == 0) fail(ErrorKind::InvalidArgument, "cannot extend an empty video");
    if (length <= t) return video.topRows(length);
    Frames out(length, video.cols());
    out.topRows(t) = video;
    Eigen::RowVectorXd step = Eigen::RowVectorXd::Zero(video.cols());
    if (t > 1) step = (video.row(t - 1) - video.row(0)) / static_cast<double>(t - 1);
    for (int r = t; r < length; ++r) out.row(r) = out.row(r - 1) + step;
    return out;
}

std::vector<MetricRow> eval_identity_vs_length(const DenoiserParams& model, const EvalContext& ctx,
                                               const std::vector<int>& lengths, int n_samples, std::uint64_t seed,
                                               int max_length_factor) {
    if (lengths.empty()) fail(ErrorKind::InvalidArgument, "lengths must be non-empty");
    if (n_samples < 1) fail(ErrorKind::InvalidArgument, "n_samples must be >= 1");
    const int max_len = max_length_factor * ctx.frames;
    for (int len : lengths)
        if (len < 1 || len > max_len)
            fail(ErrorKind::Configuration,
                 fmt::format("length {} is outside [1, {}] supported for a {}-frame model", len, max_len, ctx.frames));
    const auto videos = eval_samples(model, ctx, n_samples, seed);
    std::vector<MetricRow> rows;
    for (int len : lengths) {
        double sum = 0.0;
        for (const auto& v : videos) sum += score_identity(extend_video(v, len), ctx.references, ctx.world);
        rows.push_back({"identity", static_cast<double>(len), sum / static_cast<double>(videos.size())});
    }
    canonicalize_rows(rows);
    return rows;
}

std::vector<MetricRow> eval_dynamic_vs_checkpoints(const std::vector<Checkpoint>& checkpoints,
                                                   const EvalContext& ctx, int n_samples, std::uint64_t seed) {
    if (checkpoints.size() < 2) fail(ErrorKind::InvalidArgument, "need at least 2 checkpoints");
    std::vector<MetricRow> rows;
    for (const auto& [step, params] : checkpoints) {
        const auto videos = eval_samples(params, ctx, n_samples, seed);
        double sum = 0.0;
        for (const auto& v : videos) sum += score_dynamic(v);
        rows.push_back({"dynamic", static_cast<double>(step), sum / static_cast<double>(videos.size())});
    }
    canonicalize_rows(rows);
    return rows;
}

std::vector<MetricRow> eval_dynamic_vs_checkpoints(const std::vector<std::string>& checkpoint_paths,
                                                   const EvalContext& ctx, int n_samples, std::uint64_t seed) {
    if (checkpoint_paths.size() < 2) fail(ErrorKind::InvalidArgument, "need at least 2 checkpoints");
    std::vector<Checkpoint> cks;
    for (const auto& p : checkpoint_paths) {
        DenoiserParams params = load_checkpoint(p);
        const std::int64_t step = params.step;
        cks.emplace_back(step, std::move(params));
    }
    return eval_dynamic_vs_checkpoints(cks, ctx, n_samples, seed);
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

} // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) fail(ErrorKind::InvalidArgument, "spearman: length mismatch");
    if (a.size() < 2) fail(ErrorKind::InvalidArgument, "spearman: need at least 2 points");
    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

void AblationSpec::validate() const {
    if (!id_pairs && !dynamic_pairs) fail(ErrorKind::Configuration, "ablation needs at least one pair stage enabled");
    if (!id_reward && !dynamic_reward && !semantic_reward)
        fail(ErrorKind::Configuration, "ablation needs at least one reward channel enabled");
}

PipelineConfig AblationSpec::apply(PipelineConfig cfg) const {
    validate();
    cfg.id_pairs = id_pairs;
    cfg.dynamic_pairs = dynamic_pairs;
    cfg.rewards = {id_reward, dynamic_reward, semantic_reward};
    return cfg;
}

std::string AblationSpec::label() const {
    auto join = [](std::initializer_list<std::pair<bool, const char*>> parts) {
        std::string s;
        for (const auto& [on, name] : parts) {
            if (!on) continue;
            if (!s.empty()) s += '+';
            s += name;
        }
        return s;
    };
    return join({{id_pairs, "Pid"}, {dynamic_pairs, "Pdy"}}) + '/' +
           join({{id_reward, "Rid"}, {dynamic_reward, "Rdy"}, {semantic_reward, "Rsem"}});
}

AblationSpec parse_ablation_spec(const std::string& label) {
    const auto slash = label.find('/');
    if (slash == std::string::npos || label.find('/', slash + 1) != std::string::npos)
        fail(ErrorKind::Usage, fmt::format("ablation '{}' is not of the form <pairs>/<rewards>", label));
    AblationSpec spec{false, false, false, false, false};
    auto parse_side = [&](const std::string& side, std::initializer_list<std::pair<const char*, bool*>> names) {
        if (!side.empty() && side.back() == '+')
            fail(ErrorKind::Usage, fmt::format("ablation '{}': dangling '+'", label));
        std::istringstream in(side);
        std::string tok;
        while (std::getline(in, tok, '+')) {
            bool* hit = nullptr;
            for (const auto& [name, flag] : names)
                if (tok == name) hit = flag;
            if (!hit || *hit) fail(ErrorKind::Usage, fmt::format("ablation '{}': unexpected term '{}'", label, tok));
            *hit = true;
        }
    };
    parse_side(label.substr(0, slash), {{"Pid", &spec.id_pairs}, {"Pdy", &spec.dynamic_pairs}});
    parse_side(label.substr(slash + 1),
               {{"Rid", &spec.id_reward}, {"Rdy", &spec.dynamic_reward}, {"Rsem", &spec.semantic_reward}});
    spec.validate();
    return spec;
}

std::vector<AblationSpec> default_ablation_grid() {
    return {
        {true, false, true, true, true},
        {false, true, true, true, true},
        {true, true, true, true, true},
        {true, true, true, false, false},
        {true, true, true, true, false},
        {true, true, true, false, true},
    };
}

AblationResult run_ablation(const AblationSpec& spec, const PipelineConfig& cfg, std::uint64_t seed,
                            const Foundation* foundation) {
    const PipelineConfig run_cfg = spec.apply(cfg);
    run_cfg.validate();
    Foundation owned;
    if (!foundation) {
        owned = make_foundation(run_cfg, seed);
        foundation = &owned;
    }
    const PipelineRun run = run_pipeline(run_cfg, *foundation, seed);
    const EvalContext ctx = make_eval_context(run_cfg, foundation->scenario);
    const std::uint64_t eval_seed = child_seed(seed, stream::eval);
    AblationResult r;
    r.spec = spec;
    r.pair_count = run.pairs.merged.size();
    r.untrained = evaluate_model(foundation->ft, ctx, run_cfg.eval.n_samples, eval_seed);
    r.trained = evaluate_model(run.hpo.theta, ctx, run_cfg.eval.n_samples, eval_seed);
    return r;
}

std::vector<AblationResult> run_ablations(const std::vector<AblationSpec>& specs, const PipelineConfig& cfg,
                                          std::uint64_t seed) {
    if (specs.empty()) fail(ErrorKind::InvalidArgument, "no ablations requested");
    for (const auto& s : specs) s.apply(cfg).validate();
    const Foundation foundation = make_foundation(cfg, seed);
    std::vector<AblationResult> out;
    for (const auto& s : specs) {
        try {
            out.push_back(run_ablation(s, cfg, seed, &foundation));
        } catch (const Error& e) {
            throw Error(e.kind(), fmt::format("ablation {}: {}", s.label(), e.what()));
        }
    }
    return out;
}

void write_ablation_table(const std::vector<AblationResult>& results, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, fmt::format("cannot open '{}' for writing", path));
    out << "label,id_pairs,dynamic_pairs,id_reward,dynamic_reward,semantic_reward,pairs,"
           "identity_before,dynamic_before,semantic_before,identity,dynamic,semantic\n";
    for (const auto& r : results) {
        const auto& s = r.spec;
        out << fmt::format("{},{},{},{},{},{},{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g}\n", s.label(),
                           int(s.id_pairs), int(s.dynamic_pairs), int(s.id_reward), int(s.dynamic_reward),
                           int(s.semantic_reward), r.pair_count, r.untrained.identity, r.untrained.dynamic,
                           r.untrained.semantic, r.trained.identity, r.trained.dynamic, r.trained.semantic);
    }
    if (!out) fail(ErrorKind::Io, fmt::format("failed writing '{}'", path));
}

ReportFormat parse_report_format(const std::string& name) {
    if (name == "csv") return ReportFormat::Csv;
    if (name == "svg") return ReportFormat::Svg;
    fail(ErrorKind::Usage, fmt::format("unknown report format '{}' (expected csv or svg)", name));
}

std::string render_csv(std::vector<MetricRow> rows) {
    canonicalize_rows(rows);
    std::string out = "name,x,value\n";
    for (const auto& r : rows) out += fmt::format("{},{:.9g},{:.9g}\n", r.name, r.x, r.value);
    return out;
}

namespace {

constexpr double kWidth = 640, kChartHeight = 300;
constexpr double kLeft = 80, kRight = 20, kTop = 40, kBottom = 50;

std::string escape_xml(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

std::pair<double, double> padded_range(double lo, double hi) {
    if (hi > lo) return {lo, hi};
    const double pad = lo == 0.0 ? 1.0 : 0.1 * std::abs(lo);
    return {lo - pad, hi + pad};
}

} // namespace

std::string render_svg(std::vector<MetricRow> rows, const std::string& x_label) {
    if (rows.empty()) fail(ErrorKind::InvalidArgument, "no metric rows to chart");
    canonicalize_rows(rows);
    std::map<std::string, std::vector<MetricRow>> charts;
    for (const auto& r : rows) charts[r.name].push_back(r);

    const double total_height = kChartHeight * static_cast<double>(charts.size());
    std::string out = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" viewBox=\"0 0 {:.0f} {:.0f}\" "
        "font-family=\"sans-serif\" font-size=\"11\">\n",
        kWidth, total_height, kWidth, total_height);
    out += fmt::format("<rect width=\"{:.0f}\" height=\"{:.0f}\" fill=\"white\"/>\n", kWidth, total_height);

    double y_offset = 0.0;
    for (const auto& [name, series] : charts) {
        auto [x_lo, x_hi] = padded_range(series.front().x, series.back().x);
        double v_lo = series.front().value, v_hi = v_lo;
        for (const auto& r : series) {
            v_lo = std::min(v_lo, r.value);
            v_hi = std::max(v_hi, r.value);
        }
        std::tie(v_lo, v_hi) = padded_range(v_lo, v_hi);
        const double pw = kWidth - kLeft - kRight;
        const double ph = kChartHeight - kTop - kBottom;
        auto px = [&](double x) { return kLeft + (x - x_lo) / (x_hi - x_lo) * pw; };
        auto py = [&](double v) { return kTop + (1.0 - (v - v_lo) / (v_hi - v_lo)) * ph; };

        out += fmt::format("<g transform=\"translate(0,{:.0f})\">\n", y_offset);
        out += fmt::format("<text x=\"{:.1f}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
                           kLeft + pw / 2, escape_xml(name));
        out += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{2:.1f}\" y2=\"{1:.1f}\" stroke=\"black\"/>\n",
                           kLeft, kTop + ph, kLeft + pw);
        out += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{0:.1f}\" y2=\"{2:.1f}\" stroke=\"black\"/>\n",
                           kLeft, kTop, kTop + ph);
        for (int i = 0; i <= 4; ++i) {
            const double fx = x_lo + (x_hi - x_lo) * i / 4.0;
            const double fv = v_lo + (v_hi - v_lo) * i / 4.0;
            out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{:.4g}</text>\n", px(fx),
                               kTop + ph + 16, fx);
            out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{:.4g}</text>\n", kLeft - 6,
                               py(fv) + 4, fv);
        }
        out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n", kLeft + pw / 2,
                           kChartHeight - 10, escape_xml(x_label));
        out += fmt::format("<text x=\"16\" y=\"{0:.1f}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0:.1f})\">{1}</text>\n",
                           kTop + ph / 2, escape_xml(name));
        std::string points;
        for (const auto& r : series) {
            if (!points.empty()) points += ' ';
            points += fmt::format("{:.2f},{:.2f}", px(r.x), py(r.value));
        }
        out += fmt::format("<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"{}\"/>\n", points);
        for (const auto& r : series)
            out += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3\" fill=\"#1f77b4\"/>\n", px(r.x), py(r.value));
        out += "</g>\n";
        y_offset += kChartHeight;
    }
    out += "</svg>\n";
    return out;
}

void emit_report(const std::vector<MetricRow>& rows, const std::string& out_path, const std::string& format,
                 const std::string& x_label) {
    const ReportFormat f = parse_report_format(format);
    const std::string body = f == ReportFormat::Csv ? render_csv(rows) : render_svg(rows, x_label);
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, fmt::format("cannot open '{}' for writing", out_path));
    out << body;
    if (!out) fail(ErrorKind::Io, fmt::format("failed writing '{}'", out_path));
}

std::vector<MetricRow> read_metric_rows(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, fmt::format("cannot open '{}'", path));
    std::string line;
    if (!std::getline(in, line) || line != "name,x,value")
        fail(ErrorKind::Parse, fmt::format("{}: expected header 'name,x,value'", path));
    std::vector<MetricRow> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto c1 = line.find(',');
        const auto c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
        if (c2 == std::string::npos) fail(ErrorKind::Parse, fmt::format("{}:{}: expected 3 fields", path, lineno));
        MetricRow r;
        r.name = line.substr(0, c1);
        try {
            std::size_t used = 0;
            const std::string xs = line.substr(c1 + 1, c2 - c1 - 1);
            const std::string vs = line.substr(c2 + 1);
            r.x = std::stod(xs, &used);
            if (used != xs.size()) throw std::invalid_argument(xs);
            r.value = std::stod(vs, &used);
            if (used != vs.size()) throw std::invalid_argument(vs);
        } catch (const std::exception&) {
            fail(ErrorKind::Parse, fmt::format("{}:{}: malformed number", path, lineno));
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

ExperimentSummary run_experiment(const PipelineConfig& cfg, std::uint64_t seed, const std::string& out_dir) {
    namespace fs = std::filesystem;
    cfg.validate();
    const fs::path dir(out_dir);
    std::error_code ec;
    fs::create_directories(dir / "checkpoints", ec);
    if (ec) fail(ErrorKind::Io, fmt::format("cannot create '{}': {}", (dir / "checkpoints").string(), ec.message()));
    auto at = [&](const std::string& name) { return (dir / name).string(); };

    save_world_file(cfg.world, at("world.json"));
    const Foundation f = make_foundation(cfg, seed);
    save_checkpoint(f.base, at("base.ckpt"));
    save_checkpoint(f.ft, at("ft.ckpt"));

    Repository repo = build_stage(cfg, f.scenario, f.ft, f.base, seed);
    const auto scores = score_stage(cfg, repo);
    save_repository(repo, at("repo.jsonl"));
    write_score_table(scores, at("scores.csv"));
    const PairSets pairs = select_stage(cfg, repo);
    save_pairs(pairs.merged, at("pairs.jsonl"));

    std::vector<Checkpoint> checkpoints;
    const HpoResult hpo = hpo_stage(cfg, f.ft, pairs, repo, seed, [&](std::int64_t step, const DenoiserParams& p) {
        save_checkpoint(p, at(fmt::format("checkpoints/step-{:05d}.ckpt", step)));
        checkpoints.emplace_back(step, p);
    });
    save_checkpoint(hpo.theta, at("theta.ckpt"));
    write_loss_trace(hpo.trace, at("trace.csv"));

    const EvalContext ctx = make_eval_context(cfg, f.scenario);
    const std::uint64_t eval_seed = child_seed(seed, stream::eval);
    const auto identity = eval_identity_vs_length(hpo.theta, ctx, cfg.eval.lengths, cfg.eval.n_samples, eval_seed,
                                                  cfg.eval.max_length_factor);
    emit_report(identity, at("identity.csv"), "csv", "frames");
    emit_report(identity, at("identity.svg"), "svg", "frames");
    if (checkpoints.size() >= 2) {
        const auto dynamic = eval_dynamic_vs_checkpoints(checkpoints, ctx, cfg.eval.n_samples, eval_seed);
        emit_report(dynamic, at("dynamic.csv"), "csv", "step");
        emit_report(dynamic, at("dynamic.svg"), "svg", "step");
    }

    ExperimentSummary summary;
    summary.pair_count = pairs.merged.size();
    summary.final_loss = hpo.trace.empty() ? 0.0 : hpo.trace.back().loss;
    summary.before = evaluate_model(f.ft, ctx, cfg.eval.n_samples, eval_seed);
    summary.after = evaluate_model(hpo.theta, ctx, cfg.eval.n_samples, eval_seed);
    return summary;
}

} // namespace idpref
