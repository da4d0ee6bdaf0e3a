#include "slabgan/cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>

#include "slabgan/data_pipeline.hpp"
#include "slabgan/eval_harness.hpp"
#include "slabgan/synthetic.hpp"
#include "slabgan/trainer.hpp"

namespace slabgan::cli {

std::optional<std::string> run_root_from_env() {
    const char* v = std::getenv(kRunRootEnv);
    if (v == nullptr || *v == '\0') return std::nullopt;
    return std::string(v);
}

RunConfig assemble_config(const ConfigSources& sources) {
    RunConfig cfg;
    if (sources.file) cfg.apply_file(*sources.file);
    if (sources.env_run_root) cfg.run_root = *sources.env_run_root;
    for (const auto& s : sources.sets) cfg.apply_override(s);
    for (const auto& f : sources.flags) cfg.apply_override(f);
    return cfg;
}

namespace {

/// Options shared by the commands that build a RunConfig.
struct ConfigFlags {
    std::string config_file;
    std::vector<std::string> sets;
    std::string manifest;
    std::string epochs, few_shot, encoder, decoder, lambda1, lambda2, resolution, seed, batch_size, run_dir;

    void add_to(CLI::App& cmd, bool model_flags) {
        cmd.add_option("--config", config_file, "config file of 'key = value' lines");
        cmd.add_option("--set", sets, "override any config key (key=value), repeatable");
        cmd.add_option("--manifest", manifest, "dataset manifest (data.manifest)");
        cmd.add_option("--epochs", epochs, "train.epochs");
        cmd.add_option("--few-shot", few_shot, "train.few_shot: train on this many pairs");
        cmd.add_option("--lambda1", lambda1, "objective.lambda1 (L1 weight)");
        cmd.add_option("--lambda2", lambda2, "objective.lambda2 (MS-SSIM weight)");
        cmd.add_option("--resolution", resolution, "train.resolution and eval.resolution (128 or 256)");
        cmd.add_option("--seed", seed, "train.seed");
        cmd.add_option("--batch-size", batch_size, "train.batch_size");
        cmd.add_option("--run-dir", run_dir, "run.dir");
        if (model_flags) {
            cmd.add_option("--encoder", encoder, "generator.encoder (se_residual | plain_residual)");
            cmd.add_option("--decoder", decoder, "generator.decoder (unetpp | unet)");
        }
    }

    ConfigSources sources() const {
        ConfigSources s;
        if (!config_file.empty()) s.file = config_file;
        s.env_run_root = run_root_from_env();
        s.sets = sets;
        auto flag = [&](const std::string& v, const char* key) {
            if (!v.empty()) s.flags.push_back(std::string(key) + "=" + v);
        };
        flag(manifest, "data.manifest");
        flag(epochs, "train.epochs");
        flag(few_shot, "train.few_shot");
        flag(encoder, "generator.encoder");
        flag(decoder, "generator.decoder");
        flag(lambda1, "objective.lambda1");
        flag(lambda2, "objective.lambda2");
        flag(resolution, "train.resolution");
        flag(resolution, "eval.resolution");
        flag(seed, "train.seed");
        flag(batch_size, "train.batch_size");
        flag(run_dir, "run.dir");
        return s;
    }
};

fs::path require_manifest(const RunConfig& cfg) {
    if (cfg.data.manifest.empty()) throw ConfigError("no manifest given (use --manifest or data.manifest)");
    const fs::path p = cfg.data.manifest;
    if (!fs::exists(p)) throw IoError("manifest not found: " + p.string());
    return p;
}

/// <run>/checkpoints/epoch_N -> <run>; anything else -> the checkpoint itself.
fs::path run_dir_of(const fs::path& checkpoint) {
    const fs::path c = fs::absolute(checkpoint).lexically_normal();
    const fs::path parent = c.has_filename() ? c.parent_path() : c.parent_path().parent_path();
    if (parent.filename() == "checkpoints") return parent.parent_path();
    return c;
}

fs::path default_manifest_for(const fs::path& checkpoint) { return run_dir_of(checkpoint) / "manifest.txt"; }

void print_report(std::ostream& out, const eval::EvalResult& r) {
    for (const char* m : metrics::kMetricOrder) {
        const auto& s = r.report.summary(m);
        if (s.n > 0) {
            out << fmt::format("  {:8s} {:.6g} +/- {:.4g} (n={}, excluded={})\n", m, s.mean, s.std, s.n, s.excluded);
        } else {
            out << fmt::format("  {:8s} NA (excluded={})\n", m, s.excluded);
        }
    }
    if (r.provenance.zero_shot) {
        out << fmt::format("zero-shot: trained on '{}', evaluated on '{}'\n", r.provenance.training_dataset,
                           r.provenance.eval_dataset);
    }
    for (const auto& w : r.provenance.warnings) out << "warning: " << w << "\n";
    if (!r.per_sample_csv.empty()) {
        out << "wrote " << r.per_sample_csv.string() << "\n";
        out << "wrote " << r.aggregate_csv.string() << "\n";
        out << "wrote " << r.meta.string() << "\n";
    }
}

int dispatch(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"2.5D MRI modality translation: preprocessing, training, evaluation and figures", "slabgan"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    // preprocess --------------------------------------------------------
    auto* pre = app.add_subcommand("preprocess", "extract central slab pairs from NIfTI volumes and split them");
    std::string pre_root, pre_out, pre_src = "T1", pre_tgt = "T2", pre_dataset;
    std::vector<std::string> pre_patterns;
    double pre_split = 0.8;
    std::uint64_t pre_seed = 42;
    int pre_cap = 0;
    pre->add_option("--volume-root", pre_root, "directory holding the volumes")->required();
    pre->add_option("--out", pre_out, "output directory for slabs and the manifest")->required();
    pre->add_option("--source", pre_src, "source modality");
    pre->add_option("--target", pre_tgt, "target modality");
    pre->add_option("--pattern", pre_patterns, "MODALITY=REGEX file-name pattern, repeatable (replaces the defaults)");
    pre->add_option("--split", pre_split, "training fraction");
    pre->add_option("--seed", pre_seed, "split seed");
    pre->add_option("--few-shot-cap", pre_cap, "keep at most this many training pairs (0: no cap)");
    pre->add_option("--dataset", pre_dataset, "dataset tag (default: the volume root's name)");

    // synth ---------------------------------------------------------------
    auto* syn = app.add_subcommand("synth", "write synthetic T1/T2 phantom volumes for trying the pipeline");
    std::string syn_out, syn_prefix = "sub";
    int syn_subjects = 5;
    std::vector<int> syn_shape{64, 64, 16};
    std::uint64_t syn_seed = 1;
    syn->add_option("--out", syn_out, "output directory")->required();
    syn->add_option("--subjects", syn_subjects, "number of subjects");
    syn->add_option("--shape", syn_shape, "nx ny nz")->expected(3);
    syn->add_option("--seed", syn_seed, "phantom seed");
    syn->add_option("--prefix", syn_prefix, "subject id prefix");

    // train ----------------------------------------------------------------
    auto* tr = app.add_subcommand("train", "train a generator/discriminator pair");
    ConfigFlags tr_flags;
    tr_flags.add_to(*tr, true);
    std::string tr_resume;
    tr->add_option("--resume", tr_resume, "continue from a checkpoint directory");

    // evaluate -------------------------------------------------------------
    auto* ev = app.add_subcommand("evaluate", "score a checkpoint on the test side of a manifest");
    std::string ev_ckpt, ev_manifest, ev_out, ev_lpips;
    int ev_res = 0;
    bool ev_save = false;
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint directory")->required();
    ev->add_option("--manifest", ev_manifest, "manifest (default: the run's own manifest.txt)");
    ev->add_option("--resolution", ev_res, "128 or 256 (default: the training resolution)");
    ev->add_option("--out", ev_out, "report directory (default: <run>/eval/<dataset>)");
    ev->add_option("--lpips-backend", ev_lpips, "command printing an LPIPS distance for two PNG paths");
    ev->add_flag("--save-images", ev_save, "also write generated PNGs");

    // ablate ---------------------------------------------------------------
    auto* ab = app.add_subcommand("ablate", "train and evaluate the four encoder x decoder configurations");
    ConfigFlags ab_flags;
    ab_flags.add_to(*ab, false);
    std::string ab_out, ab_task = "T1->T2";
    bool ab_dry = false;
    ab->add_option("--out", ab_out, "output directory (default: <run.root>/ablation)");
    ab->add_option("--task", ab_task, "task tag recorded with the runs");
    ab->add_flag("--dry-run", ab_dry, "skip training and evaluate the initialized networks");

    // figures --------------------------------------------------------------
    auto* fg = app.add_subcommand("figures", "error heatmaps and feature-map panels for a checkpoint");
    std::string fg_ckpt, fg_manifest, fg_out, fg_nodes;
    int fg_res = 0, fg_samples = 4;
    bool fg_shared = false;
    fg->add_option("--checkpoint", fg_ckpt, "checkpoint directory")->required();
    fg->add_option("--manifest", fg_manifest, "manifest (default: the run's own manifest.txt)");
    fg->add_option("--out", fg_out, "figures go to <out>/figures (default: the run directory)");
    fg->add_option("--resolution", fg_res, "128 or 256 (default: the training resolution)");
    fg->add_option("--samples", fg_samples, "number of test pairs rendered as heatmaps");
    fg->add_option("--nodes", fg_nodes, "extra panel of nodes, e.g. x1_0,x0_2");
    fg->add_flag("--shared-scale", fg_shared, "one error range across all heatmaps");

    std::vector<const char*> args;
    for (const auto& a : argv) args.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(args.size()), args.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }

    if (*pre) {
        data::PreprocessOptions o;
        o.volume_root = pre_root;
        o.out_root = pre_out;
        o.source_modality = pre_src;
        o.target_modality = pre_tgt;
        if (!pre_patterns.empty()) {
            o.patterns.clear();
            for (const auto& p : pre_patterns) {
                const auto eq = p.find('=');
                if (eq == std::string::npos || eq == 0) throw ConfigError("--pattern expects MODALITY=REGEX, got '" + p + "'");
                o.patterns[p.substr(0, eq)] = p.substr(eq + 1);
            }
        }
        if (!(pre_split > 0 && pre_split < 1)) throw ConfigError("--split must be in (0, 1)");
        o.split_ratio = pre_split;
        o.seed = pre_seed;
        if (pre_cap < 0) throw ConfigError("--few-shot-cap must be >= 0");
        if (pre_cap > 0) o.few_shot_cap = pre_cap;
        o.dataset = pre_dataset;
        if (!fs::is_directory(o.volume_root)) throw IoError("volume root not found: " + pre_root);
        const auto r = data::preprocess(o);
        out << fmt::format("matched {} volumes, wrote {} pairs ({} train, {} test)\n", r.volumes_matched,
                           r.pairs_written, r.manifest.train.size(), r.manifest.test.size());
        if (!r.anomalies.empty()) {
            out << fmt::format("{} warnings, see {}\n", r.anomalies.size(), (o.out_root / "anomalies.log").string());
        }
        out << "manifest " << r.manifest_path.string() << "\n";
        return kOk;
    }

    if (*syn) {
        if (syn_subjects < 1) throw ConfigError("--subjects must be >= 1");
        for (int v : syn_shape)
            if (v < 3) throw ConfigError("--shape entries must be >= 3");
        const auto ids = synthetic::write_phantom_dataset(syn_out, syn_subjects, {syn_shape[0], syn_shape[1], syn_shape[2]},
                                                          syn_seed, syn_prefix);
        out << fmt::format("wrote {} phantom subjects under {}\n", ids.size(), syn_out);
        return kOk;
    }

    if (*tr) {
        RunConfig cfg;
        training::TrainOptions topt;
        if (!tr_resume.empty()) {
            // Resume with the stored settings; explicit sources still apply on top.
            const fs::path ckpt = tr_resume;
            if (!fs::is_directory(ckpt)) throw IoError("checkpoint directory not found: " + tr_resume);
            ConfigSources s = tr_flags.sources();
            if (!s.file) s.file = ckpt / "config.cfg";
            cfg = assemble_config(s);
            if (cfg.run_dir.empty()) cfg.run_dir = run_dir_of(ckpt).string();
            topt.resume_from = ckpt;
        } else {
            cfg = assemble_config(tr_flags.sources());
        }
        const fs::path manifest_path = require_manifest(cfg);
        cfg.data.manifest = fs::absolute(manifest_path).lexically_normal().string();
        cfg.validate();
        const auto manifest = data::DatasetManifest::load(manifest_path);
        topt.on_step = [&out](const training::StepLog& r) {
            if (r.step % 10 == 0) {
                out << fmt::format("epoch {} step {} total {:.4f} l1 {:.4f} d {:.4f}\n", r.epoch, r.step, r.total, r.l1,
                                   r.d_loss);
            }
        };
        const auto result = training::train(manifest, cfg, topt);
        if (!result.log.empty()) {
            const auto& last = result.log.back();
            out << fmt::format("final step {}: adv {:.6g} l1 {:.6g} ms_ssim_loss {:.6g} total {:.6g} d_loss {:.6g}\n",
                               last.step, last.adv, last.l1, last.ms_ssim_loss, last.total, last.d_loss);
        }
        out << "run " << result.run_dir.string() << "\n";
        out << "checkpoint " << result.final_checkpoint.string() << "\n";
        return kOk;
    }

    if (*ev) {
        const fs::path ckpt = ev_ckpt;
        if (!fs::is_directory(ckpt)) throw IoError("checkpoint directory not found: " + ev_ckpt);
        const fs::path manifest_path = ev_manifest.empty() ? default_manifest_for(ckpt) : fs::path(ev_manifest);
        if (!fs::exists(manifest_path)) throw IoError("manifest not found: " + manifest_path.string());
        eval::EvalOptions o;
        RunConfig stored;
        stored.apply_file(ckpt / "config.cfg");
        o.resolution = ev_res > 0 ? ev_res : stored.train.resolution;
        o.lpips_backend = ev_lpips.empty() ? stored.eval.lpips_backend : ev_lpips;
        o.save_images = ev_save;
        if (ev_out.empty()) {
            const auto tag = data::DatasetManifest::load(manifest_path).dataset;
            o.out_dir = run_dir_of(ckpt) / "eval" / eval::safe_name(tag.empty() ? "unnamed" : tag);
        } else {
            o.out_dir = ev_out;
        }
        const auto r = eval::evaluate(ckpt, manifest_path, o);
        out << fmt::format("evaluated {} test pairs\n", r.report.per_sample.size());
        print_report(out, r);
        return kOk;
    }

    if (*ab) {
        RunConfig cfg = assemble_config(ab_flags.sources());
        const fs::path manifest_path = require_manifest(cfg);
        cfg.validate();
        eval::AblationSpec spec;
        spec.base = cfg;
        spec.manifest = manifest_path;
        spec.out_dir = ab_out.empty() ? fs::path(cfg.run_root) / "ablation" : fs::path(ab_out);
        spec.task = ab_task;
        spec.dry_run = ab_dry;
        const auto r = eval::run_ablation(spec);
        std::ifstream table(r.table);
        out << table.rdbuf();
        out << "wrote " << r.table.string() << "\n";
        int failed = 0;
        for (const auto& row : r.rows) failed += !row.error.empty();
        if (failed > 0) {
            err << failed << " of " << r.rows.size() << " ablation runs failed\n";
            return kData;
        }
        return kOk;
    }

    if (*fg) {
        const fs::path ckpt = fg_ckpt;
        if (!fs::is_directory(ckpt)) throw IoError("checkpoint directory not found: " + fg_ckpt);
        const fs::path manifest_path = fg_manifest.empty() ? default_manifest_for(ckpt) : fs::path(fg_manifest);
        if (!fs::exists(manifest_path)) throw IoError("manifest not found: " + manifest_path.string());
        RunConfig stored;
        stored.apply_file(ckpt / "config.cfg");
        eval::FigureOptions o;
        o.resolution = fg_res > 0 ? fg_res : stored.train.resolution;
        o.samples = fg_samples;
        o.shared_scale = fg_shared || stored.eval.shared_heatmap_scale;
        std::stringstream nodes(fg_nodes);
        for (std::string n; std::getline(nodes, n, ',');)
            if (!n.empty()) o.nodes.push_back(n);
        const fs::path out_dir = fg_out.empty() ? run_dir_of(ckpt) : fs::path(fg_out);
        const auto r = eval::render_figures(ckpt, manifest_path, out_dir, o);
        for (const auto& f : r.files) out << "wrote " << f.string() << "\n";
        return kOk;
    }
    return kUsage;
}

}  // namespace

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
    try {
        return dispatch(argv, out, err);
    } catch (const DivergenceError& e) {
        err << "error: " << e.what() << "\n";
        return kDivergence;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const DataError& e) {
        err << "error: " << e.what() << "\n";
        return kData;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kData;
    }
}

}  // namespace slabgan::cli
