#include "slabgan/eval_harness.hpp"

#include <fmt/format.h>

#include <chrono>
#include <ctime>
#include <iostream>

#include "slabgan/io.hpp"
#include "slabgan/trainer.hpp"

namespace slabgan::eval {

using model::DecoderKind;
using model::EncoderKind;
using model::FusionNodeId;

std::string safe_name(const std::string& id) {
    std::string out = id;
    for (char& c : out) {
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
    }
    return out;
}

std::string Provenance::note() const {
    std::string s;
    s += "checkpoint = " + checkpoint + "\n";
    s += "manifest = " + manifest + "\n";
    s += "training_dataset = " + training_dataset + "\n";
    s += "training_task = " + training_task + "\n";
    s += "eval_dataset = " + eval_dataset + "\n";
    s += "eval_task = " + eval_task + "\n";
    s += fmt::format("resolution = {}\n", resolution);
    s += fmt::format("zero_shot = {}\n", zero_shot ? "true" : "false");
    if (zero_shot) {
        s += fmt::format("note = zero-shot: trained on '{}', evaluated on '{}' without retraining\n", training_dataset,
                         eval_dataset);
    }
    for (const auto& w : warnings) s += "warning = " + w + "\n";
    return s;
}

Translator generator_translator(model::Generator generator) {
    return [g = std::move(generator)](const torch::Tensor& x) mutable {
        torch::NoGradGuard no_grad;
        g->eval();
        return g->forward(x);
    };
}

metrics::MetricReport evaluate_pairs(const std::vector<data::PairImages>& pairs, const Translator& translate,
                                     const EvalOptions& options) {
    if (pairs.empty()) throw DataError("nothing to evaluate: the test list is empty");
    const metrics::LpipsAdapter lpips(options.lpips_backend);
    const fs::path scratch = options.out_dir.empty() ? fs::temp_directory_path() / "slabgan_lpips" : options.out_dir / ".lpips";
    if (options.save_images && !options.out_dir.empty()) fs::create_directories(options.out_dir / "generated");

    std::vector<metrics::SampleMetrics> rows;
    rows.reserve(pairs.size());
    for (const auto& p : pairs) {
        const auto x = data::to_model_space(p.source).unsqueeze(0);
        const auto y = translate(x);
        if (!y.sizes().equals(x.sizes())) {
            throw ShapeError(c10::str("translator changed the shape of ", p.id, ": ", x.sizes(), " -> ", y.sizes()));
        }
        const Image8 generated = data::from_model_space(y.squeeze(0));
        auto m = metrics::score_pair(p.id, generated, p.target);
        auto l = lpips.score(generated, p.target, scratch);
        m.lpips = l.value;
        m.lpips_note = l.reason;
        if (options.save_images && !options.out_dir.empty()) {
            write_png(options.out_dir / "generated" / (safe_name(p.id) + ".png"), generated);
        }
        rows.push_back(std::move(m));
    }
    if (lpips.configured()) fs::remove_all(scratch);
    return metrics::aggregate(std::move(rows));
}

namespace {

std::string timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_report(EvalResult& r, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    r.per_sample_csv = out_dir / "report_per_sample.csv";
    r.aggregate_csv = out_dir / "report_aggregate.csv";
    r.meta = out_dir / "evaluation_meta.txt";
    write_text_atomic(r.per_sample_csv, r.report.per_sample_csv());
    write_text_atomic(r.aggregate_csv, r.report.aggregate_csv());
    // Timestamps live only here so the CSVs stay reproducible.
    write_text_atomic(r.meta, r.provenance.note() + "written_at = " + timestamp() + "\n");
}

}  // namespace

EvalResult evaluate_model(model::Generator generator, const data::DatasetManifest& manifest, const EvalOptions& options,
                          Provenance provenance) {
    data::require_supported_resolution(options.resolution);
    if (manifest.test.empty()) throw DataError("manifest has an empty test list");
    generator->check_input(torch::zeros({1, generator->config().in_channels, options.resolution, options.resolution}));

    provenance.eval_dataset = manifest.dataset;
    provenance.eval_task = manifest.task;
    provenance.resolution = options.resolution;
    provenance.zero_shot = !provenance.training_dataset.empty() && provenance.training_dataset != manifest.dataset;
    if (!provenance.training_task.empty() && provenance.training_task != manifest.task) {
        provenance.warnings.push_back(fmt::format("task mismatch: checkpoint trained for '{}', manifest is '{}'",
                                                  provenance.training_task, manifest.task));
    }

    EvalResult r;
    const auto pairs = data::load_pairs(manifest, data::Split::Test, options.resolution);
    r.report = evaluate_pairs(pairs, generator_translator(std::move(generator)), options);
    r.provenance = std::move(provenance);
    if (!options.out_dir.empty()) write_report(r, options.out_dir);
    return r;
}

EvalResult evaluate(const fs::path& checkpoint, const fs::path& manifest_path, const EvalOptions& options) {
    if (!fs::is_directory(checkpoint)) throw IoError("checkpoint directory not found: " + checkpoint.string());
    if (!fs::exists(manifest_path)) throw IoError("manifest not found: " + manifest_path.string());
    auto loaded = training::load_generator(checkpoint);
    const auto manifest = data::DatasetManifest::load(manifest_path);

    Provenance p;
    p.checkpoint = fs::absolute(checkpoint).lexically_normal().string();
    p.manifest = fs::absolute(manifest_path).lexically_normal().string();
    p.training_dataset = loaded.training_dataset;
    p.training_task = loaded.training_task;
    if (loaded.config.train.resolution != options.resolution) {
        p.warnings.push_back(fmt::format("checkpoint trained at {}x{}, evaluated at {}x{}", loaded.config.train.resolution,
                                         loaded.config.train.resolution, options.resolution, options.resolution));
    }
    return evaluate_model(std::move(loaded.generator), manifest, options, std::move(p));
}

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

std::string AblationVariant::label() const {
    const std::string enc = encoder == EncoderKind::SeResidual ? "SEResNet" : "ResNet";
    const std::string dec = decoder == DecoderKind::UNetPlusPlus ? "U-Net++" : "U-Net";
    return enc + " & " + dec;
}

std::vector<AblationVariant> ablation_grid() {
    return {{EncoderKind::PlainResidual, DecoderKind::UNet},
            {EncoderKind::SeResidual, DecoderKind::UNet},
            {EncoderKind::PlainResidual, DecoderKind::UNetPlusPlus},
            {EncoderKind::SeResidual, DecoderKind::UNetPlusPlus}};
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::string out = "model,encoder,decoder,params";
    for (const char* m : metrics::kMetricOrder) out += std::string(",") + m;
    out += ",status\n";
    for (const auto& r : rows) {
        out += fmt::format("{},{},{},{}", r.variant.label(), model::to_string(r.variant.encoder),
                           model::to_string(r.variant.decoder), r.parameters);
        for (const char* m : metrics::kMetricOrder) {
            if (!r.report) {
                out += ",NA";
                continue;
            }
            const auto& s = r.report->summary(m);
            out += s.n > 0 ? fmt::format(",{:.10g}", s.mean) : std::string(",NA");
        }
        std::string status = r.error.empty() ? "ok" : "failed: " + r.error;
        for (char& c : status)
            if (c == ',' || c == '\n') c = ';';
        out += "," + status + "\n";
    }
    return out;
}

AblationResult run_ablation(const AblationSpec& spec) {
    const auto manifest = data::DatasetManifest::load(spec.manifest);
    AblationResult result;
    fs::create_directories(spec.out_dir);

    for (const auto& v : ablation_grid()) {
        AblationRow row;
        row.variant = v;
        RunConfig cfg = spec.base;
        cfg.generator.encoder = v.encoder;
        cfg.generator.decoder = v.decoder;
        cfg.data.manifest = fs::absolute(spec.manifest).string();
        cfg.run_dir = (spec.out_dir / "runs" / (model::to_string(v.encoder) + "_" + model::to_string(v.decoder))).string();
        row.run_dir = cfg.run_dir;
        try {
            cfg.generator.validate();
            row.parameters = model::count_parameters(*model::Generator(cfg.generator));

            EvalOptions eo;
            eo.resolution = cfg.eval.resolution;
            eo.lpips_backend = cfg.eval.lpips_backend;
            eo.save_images = cfg.eval.save_images;
            eo.out_dir = row.run_dir / "eval";
            Provenance p;
            p.manifest = fs::absolute(spec.manifest).lexically_normal().string();
            p.training_dataset = manifest.dataset;
            p.training_task = spec.task;
            if (spec.dry_run) {
                training::Trainer untrained(cfg);
                p.checkpoint = "untrained (dry run)";
                row.report = evaluate_model(untrained.generator(), manifest, eo, p).report;
            } else {
                const auto trained = training::train(manifest, cfg);
                p.checkpoint = trained.final_checkpoint.string();
                row.report = evaluate_model(training::load_generator(trained.final_checkpoint).generator, manifest, eo, p).report;
            }
        } catch (const std::exception& e) {
            row.error = e.what();
            std::cerr << "ablation run " << v.label() << " failed: " << e.what() << "\n";
        }
        result.rows.push_back(std::move(row));
    }
    result.table = spec.out_dir / "ablation_table.csv";
    write_text_atomic(result.table, ablation_csv(result.rows));
    return result;
}

// ---------------------------------------------------------------------------
// Figures
// ---------------------------------------------------------------------------

std::vector<FusionNodeId> encoder_panel_nodes(const model::GeneratorConfig& config) {
    std::vector<FusionNodeId> out;
    for (int i = 1; i <= config.depth; ++i) out.push_back({i, 0});
    return out;
}

std::vector<FusionNodeId> decoder_panel_nodes(const model::GeneratorConfig& config) {
    std::vector<FusionNodeId> out;
    for (int j = 1; j <= config.depth; ++j) {
        out.push_back(config.decoder == DecoderKind::UNetPlusPlus ? FusionNodeId{0, j} : FusionNodeId{config.depth - j, j});
    }
    return out;
}

Image8 feature_panel(model::Generator& generator, const Image8& source, const std::vector<FusionNodeId>& nodes,
                     const std::string& title, int tile_size) {
    const auto maps = model::dump_feature_maps(generator, data::to_model_space(source).unsqueeze(0), nodes);
    std::vector<render::Tile> tiles;
    for (const auto& id : nodes) tiles.push_back({id.label(), render::scale_feature_map(maps.at(id)[0])});
    return render::tile_row(tiles, tile_size, title);
}

void render_feature_panels(model::Generator& generator, const Image8& source, const std::vector<FusionNodeId>& nodes,
                           const fs::path& out_path, const std::string& title, int tile_size) {
    const Image8 panel = feature_panel(generator, source, nodes, title, tile_size);
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    write_png(out_path, panel);
}

FigureResult render_figures(const fs::path& checkpoint, const fs::path& manifest_path, const fs::path& out_dir,
                            const FigureOptions& options) {
    if (!fs::is_directory(checkpoint)) throw IoError("checkpoint directory not found: " + checkpoint.string());
    if (options.samples < 1) throw ConfigError("figures: sample count must be >= 1");
    auto loaded = training::load_generator(checkpoint);
    auto& gen = loaded.generator;
    const auto manifest = data::DatasetManifest::load(manifest_path);
    if (manifest.test.empty()) throw DataError("manifest has an empty test list");

    std::vector<FusionNodeId> custom;
    for (const auto& n : options.nodes) custom.push_back(FusionNodeId::parse(n));
    for (const auto& id : custom) {
        if (!model::node_exists(id, gen->config())) {
            throw TopologyError(fmt::format("{} is not part of this checkpoint's topology", id.label()));
        }
    }

    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < manifest.test.size() && static_cast<int>(i) < options.samples; ++i) idx.push_back(i);
    const auto pairs = data::load_pairs(manifest, data::Split::Test, idx, options.resolution);

    const fs::path fig = out_dir / "figures";
    fs::create_directories(fig / "generated");
    const auto translate = generator_translator(gen);
    std::vector<Image8> generated;
    std::vector<ImageD> errors;
    for (const auto& p : pairs) {
        generated.push_back(data::from_model_space(translate(data::to_model_space(p.source).unsqueeze(0)).squeeze(0)));
        errors.push_back(render::abs_error_map(generated.back(), p.target));
    }
    std::optional<render::ErrorScale> shared;
    if (options.shared_scale) {
        render::ErrorScale s{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
        for (const auto& e : errors) {
            const auto r = render::error_range(e);
            s.lo = std::min(s.lo, r.lo);
            s.hi = std::max(s.hi, r.hi);
        }
        shared = s;
    }

    const std::string tag = model::to_string(gen->config().encoder) + "+" + model::to_string(gen->config().decoder);
    FigureResult out;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto name = safe_name(pairs[i].id);
        const fs::path gp = fig / "generated" / (name + ".png");
        write_png(gp, generated[i]);
        const fs::path hp = fig / ("heatmap_" + name + ".png");
        render::render_error_heatmap(pairs[i].source, pairs[i].target, generated[i], hp, tag + " " + pairs[i].id, shared);
        out.files.push_back(hp);
        out.files.push_back(gp);
    }

    const Image8& sample = pairs.front().source;
    const auto enc_path = fig / "features_encoder.png";
    render_feature_panels(gen, sample, encoder_panel_nodes(gen->config()), enc_path, tag + " encoder");
    out.files.push_back(enc_path);
    const auto dec_path = fig / "features_decoder.png";
    render_feature_panels(gen, sample, decoder_panel_nodes(gen->config()), dec_path, tag + " decoder");
    out.files.push_back(dec_path);
    if (!custom.empty()) {
        const auto p = fig / "features_selected.png";
        render_feature_panels(gen, sample, custom, p, tag);
        out.files.push_back(p);
    }
    return out;
}

}  // namespace slabgan::eval
