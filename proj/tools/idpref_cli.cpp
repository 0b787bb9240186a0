// Copyright (c) 2026, idpref contributors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Exit status: 0 success, 1 runtime error, 2 usage error.

#include <idpref/idpref.h>

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace {

struct Failure {
    idp_status status;
    std::string message;
};

void check(idp_status s) {
    if (s != IDP_OK) throw Failure{s, idp_last_error()};
}

template <class T, void (*Free)(T*)>
struct Deleter {
    void operator()(T* p) const { Free(p); }
};
using Config = std::unique_ptr<idp_config, Deleter<idp_config, idp_config_free>>;
using Model = std::unique_ptr<idp_model, Deleter<idp_model, idp_model_free>>;
using Repo = std::unique_ptr<idp_repo, Deleter<idp_repo, idp_repo_free>>;
using Pairs = std::unique_ptr<idp_pairs, Deleter<idp_pairs, idp_pairs_free>>;
using Rows = std::unique_ptr<idp_rows, Deleter<idp_rows, idp_rows_free>>;

Model load_model(const std::string& path) {
    idp_model* m = nullptr;
    check(idp_model_load(path.c_str(), &m));
    return Model(m);
}

Repo load_repo(const std::string& path) {
    idp_repo* r = nullptr;
    check(idp_repo_load(path.c_str(), &r));
    return Repo(r);
}

struct Globals {
    std::string config_path;
    std::string world_path;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> overrides;
};

Config make_config(const Globals& g) {
    idp_config* c = nullptr;
    if (g.config_path.empty())
        check(idp_config_new(&c));
    else
        check(idp_config_load(g.config_path.c_str(), &c));
    Config cfg(c);
    if (!g.world_path.empty()) check(idp_config_use_world(c, g.world_path.c_str()));
    for (const auto& kv : g.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0)
            throw Failure{IDP_ERR_USAGE, "--set expects key=value, got '" + kv + "'"};
        check(idp_config_set(c, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()));
    }
    if (g.seed) check(idp_config_set(c, "seed", std::to_string(*g.seed).c_str()));
    return cfg;
}

std::uint64_t seed_of(const Config& cfg) {
    std::uint64_t s = 0;
    check(idp_config_seed(cfg.get(), &s));
    return s;
}

struct CheckpointSink {
    std::filesystem::path dir;
    std::optional<Failure> error;
};

void save_checkpoint_cb(int64_t step, const idp_model* model, void* user) {
    auto* sink = static_cast<CheckpointSink*>(user);
    if (sink->error) return;
    char name[32];
    std::snprintf(name, sizeof name, "step-%05lld.ckpt", static_cast<long long>(step));
    const std::string path = (sink->dir / name).string();
    if (idp_model_save(model, path.c_str()) != IDP_OK) sink->error = Failure{IDP_ERR_IO, idp_last_error()};
}

std::optional<CheckpointSink> checkpoint_sink(const std::string& dir) {
    if (dir.empty()) return std::nullopt;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Failure{IDP_ERR_IO, "cannot create '" + dir + "': " + ec.message()};
    return CheckpointSink{dir, std::nullopt};
}

std::string default_format(const std::string& out) {
    return std::filesystem::path(out).extension() == ".svg" ? "svg" : "csv";
}

void emit(const Rows& rows, const std::string& out, const std::string& format, const char* x_label) {
    check(idp_rows_emit(rows.get(), out.c_str(), (format.empty() ? default_format(out) : format).c_str(), x_label));
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"idpref: identity-preserving preference optimization for a toy video diffusion model"};
    app.set_version_flag("--version", std::string(idp_version()));
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--config", g.config_path, "JSON config file (nested or dotted keys)")->check(CLI::ExistingFile);
    app.add_option("--world", g.world_path, "world file from gen-world; replaces the world.* settings")
        ->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "run seed (default: the config's seed)");
    app.add_option("--set", g.overrides, "override one config key, e.g. --set hpo.steps=200")->take_all();

    std::string out, in, repo_path, ft_path, base_path, from_path, pairs_path, scores_path, trace_path, model_path,
        ckpt_dir, format, base_out, repo_out;
    int steps = -1, checkpoint_every = 0;
    std::vector<std::string> checkpoints, specs;

    auto* gen_world = app.add_subcommand("gen-world", "write a world file from the world.* settings");
    gen_world->add_option("--out", out, "world file")->required();

    auto* train_init = app.add_subcommand("train-init", "pretrain a base model and fine-tune it on the references");
    train_init->add_option("--out", out, "fine-tuned checkpoint")->required();
    train_init->add_option("--from", from_path, "start from this base checkpoint instead of pretraining")
        ->check(CLI::ExistingFile);
    train_init->add_option("--base-out", base_out, "also write the pretrained base checkpoint");
    train_init->add_option("--steps", steps, "fine-tuning steps (default diffusion.init_steps)");
    train_init->add_option("--checkpoint-every", checkpoint_every, "checkpoint cadence (needs --checkpoint-dir)");
    train_init->add_option("--checkpoint-dir", ckpt_dir, "directory for step-NNNNN.ckpt files");

    auto* build_repo = app.add_subcommand("build-repo", "sample the preference video repository");
    build_repo->add_option("--ft", ft_path, "fine-tuned checkpoint")->required()->check(CLI::ExistingFile);
    build_repo->add_option("--base", base_path, "initial (base) checkpoint")->required()->check(CLI::ExistingFile);
    build_repo->add_option("--out", out, "repository file")->required();

    auto* refresh_repo = app.add_subcommand("refresh-repo", "resample the fine-tuned videos of a repository");
    refresh_repo->add_option("--repo", repo_path, "repository file")->required()->check(CLI::ExistingFile);
    refresh_repo->add_option("--ft", ft_path, "fine-tuned checkpoint")->required()->check(CLI::ExistingFile);
    refresh_repo->add_option("--out", out, "new repository file")->required();

    auto* score = app.add_subcommand("score", "score and normalize every video of a repository");
    score->add_option("--repo", repo_path, "repository file")->required()->check(CLI::ExistingFile);
    score->add_option("--out", out, "score table (CSV)")->required();
    score->add_option("--repo-out", repo_out, "also write the repository with rewards attached");

    auto* select = app.add_subcommand("select-pairs", "select identity- and dynamic-preferred pairs");
    select->add_option("--repo", repo_path, "repository file")->required()->check(CLI::ExistingFile);
    select->add_option("--scores", scores_path, "score table (needed unless the repository carries rewards)")
        ->check(CLI::ExistingFile);
    select->add_option("--out", out, "pairs file")->required();

    auto* train_hpo = app.add_subcommand("train-hpo", "preference-train a model on selected pairs");
    train_hpo->add_option("--init", model_path, "starting checkpoint (also the frozen reference)")
        ->required()
        ->check(CLI::ExistingFile);
    train_hpo->add_option("--pairs", pairs_path, "pairs file")->required()->check(CLI::ExistingFile);
    train_hpo->add_option("--repo", repo_path, "repository file")->required()->check(CLI::ExistingFile);
    train_hpo->add_option("--out", out, "trained checkpoint")->required();
    train_hpo->add_option("--trace", trace_path, "loss trace (CSV)");
    train_hpo->add_option("--checkpoint-dir", ckpt_dir, "directory for step-NNNNN.ckpt files (eval.checkpoint_every)");

    auto* eval_identity = app.add_subcommand("eval-identity", "mean identity score per video length");
    eval_identity->add_option("--model", model_path, "checkpoint")->required()->check(CLI::ExistingFile);
    eval_identity->add_option("--out", out, "report file")->required();
    eval_identity->add_option("--format", format, "csv or svg (default from the extension)");

    auto* eval_dynamic = app.add_subcommand("eval-dynamic", "mean dynamic score per training checkpoint");
    eval_dynamic->add_option("--checkpoints", checkpoints, "checkpoint files")->check(CLI::ExistingFile);
    eval_dynamic->add_option("--checkpoint-dir", ckpt_dir, "use every *.ckpt in this directory")
        ->check(CLI::ExistingDirectory);
    eval_dynamic->add_option("--out", out, "report file")->required();
    eval_dynamic->add_option("--format", format, "csv or svg (default from the extension)");

    auto* ablate = app.add_subcommand("ablate", "run pair-stage and reward-channel ablations");
    ablate->add_option("--spec", specs, "ablation label such as Pid+Pdy/Rid+Rsem (default: standard grid)");
    ablate->add_option("--out", out, "ablation table (CSV)")->required();

    auto* report = app.add_subcommand("report", "render metric rows as CSV or SVG");
    report->add_option("--in", in, "metric rows (CSV)")->required()->check(CLI::ExistingFile);
    report->add_option("--out", out, "report file")->required();
    report->add_option("--format", format, "csv or svg (default from the extension)");

    auto* pipeline = app.add_subcommand("pipeline", "run every stage and write all artifacts");
    pipeline->add_option("--out", out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::string what = e.what();
        if (app.get_subcommands().empty()) {
            for (int i = 1; i < argc; ++i) {
                const std::string a = argv[i];
                if (a.rfind("--", 0) == 0) {
                    if (a.find('=') == std::string::npos) ++i; // skip the option's value
                    continue;
                }
                if (!app.get_subcommand_no_throw(a)) what = "unknown subcommand '" + a + "'";
                break;
            }
        }
        std::fprintf(stderr, "idpref: %s\n\n%s", what.c_str(), app.help().c_str());
        return 2;
    }

    try {
        if (gen_world->parsed() && g.seed) {
            g.overrides.push_back("world.seed=" + std::to_string(*g.seed));
            g.seed.reset();
        }
        const Config cfg = make_config(g);
        const std::uint64_t seed = seed_of(cfg);

        if (gen_world->parsed()) {
            check(idp_world_save(cfg.get(), out.c_str()));
        } else if (train_init->parsed()) {
            Model base;
            if (from_path.empty()) {
                idp_model* m = nullptr;
                check(idp_pretrain(cfg.get(), seed, &m));
                base.reset(m);
            } else {
                base = load_model(from_path);
            }
            if (!base_out.empty()) check(idp_model_save(base.get(), base_out.c_str()));
            if (checkpoint_every > 0 && ckpt_dir.empty())
                throw Failure{IDP_ERR_USAGE, "--checkpoint-every needs --checkpoint-dir"};
            auto sink = checkpoint_sink(ckpt_dir);
            if (sink && checkpoint_every <= 0) throw Failure{IDP_ERR_USAGE, "--checkpoint-dir needs --checkpoint-every"};
            idp_model* ft = nullptr;
            check(idp_finetune(cfg.get(), base.get(), seed, steps, checkpoint_every,
                               sink ? save_checkpoint_cb : nullptr, sink ? &*sink : nullptr, &ft));
            const Model ft_model(ft);
            if (sink && sink->error) throw *sink->error;
            check(idp_model_save(ft, out.c_str()));
        } else if (build_repo->parsed()) {
            const Model ft = load_model(ft_path);
            const Model base = load_model(base_path);
            idp_repo* r = nullptr;
            check(idp_repo_build(cfg.get(), ft.get(), base.get(), seed, &r));
            const Repo repo(r);
            check(idp_repo_save(r, out.c_str()));
        } else if (refresh_repo->parsed()) {
            const Repo old = load_repo(repo_path);
            const Model ft = load_model(ft_path);
            idp_repo* r = nullptr;
            check(idp_repo_refresh(cfg.get(), old.get(), ft.get(), seed, &r));
            const Repo repo(r);
            check(idp_repo_save(r, out.c_str()));
        } else if (score->parsed()) {
            const Repo repo = load_repo(repo_path);
            check(idp_repo_score(cfg.get(), repo.get(), out.c_str()));
            if (!repo_out.empty()) check(idp_repo_save(repo.get(), repo_out.c_str()));
        } else if (select->parsed()) {
            const Repo repo = load_repo(repo_path);
            if (!scores_path.empty()) check(idp_repo_load_scores(repo.get(), scores_path.c_str()));
            idp_pairs* p = nullptr;
            check(idp_select_pairs(cfg.get(), repo.get(), &p));
            const Pairs pairs(p);
            check(idp_pairs_save(p, out.c_str()));
            std::size_t n = 0;
            check(idp_pairs_count(p, &n));
            std::printf("%zu pairs\n", n);
        } else if (train_hpo->parsed()) {
            const Model init = load_model(model_path);
            const Repo repo = load_repo(repo_path);
            idp_pairs* p = nullptr;
            check(idp_pairs_load(pairs_path.c_str(), &p));
            const Pairs pairs(p);
            auto sink = checkpoint_sink(ckpt_dir);
            idp_model* theta = nullptr;
            check(idp_hpo_train(cfg.get(), init.get(), p, repo.get(), seed, sink ? save_checkpoint_cb : nullptr,
                                sink ? &*sink : nullptr, trace_path.empty() ? nullptr : trace_path.c_str(), &theta));
            const Model trained(theta);
            if (sink && sink->error) throw *sink->error;
            check(idp_model_save(theta, out.c_str()));
        } else if (eval_identity->parsed()) {
            const Model model = load_model(model_path);
            idp_rows* r = nullptr;
            check(idp_eval_identity(cfg.get(), model.get(), seed, &r));
            emit(Rows(r), out, format, "frames");
        } else if (eval_dynamic->parsed()) {
            std::vector<std::string> paths = checkpoints;
            if (!ckpt_dir.empty()) {
                std::vector<std::string> found;
                for (const auto& e : std::filesystem::directory_iterator(ckpt_dir))
                    if (e.is_regular_file() && e.path().extension() == ".ckpt") found.push_back(e.path().string());
                std::sort(found.begin(), found.end());
                paths.insert(paths.end(), found.begin(), found.end());
            }
            if (paths.size() < 2) throw Failure{IDP_ERR_USAGE, "eval-dynamic needs at least two checkpoints"};
            std::vector<Model> models;
            std::vector<const idp_model*> views;
            for (const auto& p : paths) {
                models.push_back(load_model(p));
                views.push_back(models.back().get());
            }
            idp_rows* r = nullptr;
            check(idp_eval_dynamic(cfg.get(), views.data(), views.size(), seed, &r));
            emit(Rows(r), out, format, "step");
        } else if (ablate->parsed()) {
            std::vector<const char*> labels;
            for (const auto& s : specs) labels.push_back(s.c_str());
            check(idp_ablate(cfg.get(), seed, labels.data(), labels.size(), out.c_str()));
        } else if (report->parsed()) {
            idp_rows* r = nullptr;
            check(idp_rows_load(in.c_str(), &r));
            emit(Rows(r), out, format, nullptr);
        } else if (pipeline->parsed()) {
            check(idp_pipeline_run(cfg.get(), seed, out.c_str()));
        }
    } catch (const Failure& f) {
        std::fprintf(stderr, "idpref: %s: %s\n", idp_status_name(f.status), f.message.c_str());
        return f.status == IDP_ERR_USAGE ? 2 : 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "idpref: %s\n", e.what());
        return 1;
    }
    return 0;
}
