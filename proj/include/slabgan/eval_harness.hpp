#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "slabgan/batch.hpp"
#include "slabgan/config.hpp"
#include "slabgan/metrics.hpp"
#include "slabgan/render.hpp"

namespace slabgan::eval {

namespace fs = std::filesystem;

/// Maps a (1, 3, R, R) model-space source to a same-shaped model-space output.
using Translator = std::function<torch::Tensor(const torch::Tensor&)>;

struct EvalOptions {
    int resolution = 256;
    std::string lpips_backend;  // empty: LPIPS reported as unavailable
    bool save_images = false;   // generated PNGs under <out_dir>/generated
    fs::path out_dir;           // empty: nothing written
};

/// Where a report came from. `zero_shot` is set when the checkpoint was
/// trained on a different dataset tag than the one evaluated.
struct Provenance {
    std::string checkpoint;
    std::string manifest;
    std::string training_dataset;
    std::string training_task;
    std::string eval_dataset;
    std::string eval_task;
    int resolution = 0;
    bool zero_shot = false;
    std::vector<std::string> warnings;

    std::string note() const;
};

struct EvalResult {
    metrics::MetricReport report;
    Provenance provenance;
    fs::path per_sample_csv;
    fs::path aggregate_csv;
    fs::path meta;
};

/// Translates and scores every pair, one sample at a time.
metrics::MetricReport evaluate_pairs(const std::vector<data::PairImages>& pairs, const Translator& translate,
                                     const EvalOptions& options);

/// Wraps a generator for inference (eval mode, no autograd).
Translator generator_translator(model::Generator generator);

/// Scores a generator over the test side of a manifest and writes
/// report_per_sample.csv, report_aggregate.csv and evaluation_meta.txt into
/// options.out_dir when it is set. The checkpoint and manifest are only read.
EvalResult evaluate_model(model::Generator generator, const data::DatasetManifest& manifest, const EvalOptions& options,
                          Provenance provenance);

/// evaluate_model on a checkpoint directory. A dataset or task that differs
/// from the one the checkpoint was trained on is recorded, not rejected.
EvalResult evaluate(const fs::path& checkpoint, const fs::path& manifest_path, const EvalOptions& options);

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

struct AblationVariant {
    model::EncoderKind encoder;
    model::DecoderKind decoder;
    std::string label() const;  // "ResNet & U-Net", ...
};

/// The four encoder x decoder configurations in table order.
std::vector<AblationVariant> ablation_grid();

struct AblationSpec {
    RunConfig base;         // shared training and evaluation settings
    fs::path manifest;      // shared by all four runs
    fs::path out_dir;       // runs/<encoder>_<decoder>/ and ablation_table.csv
    std::string task = "T1->T2";
    bool dry_run = false;   // 0 epochs: evaluate the initialized networks
};

struct AblationRow {
    AblationVariant variant;
    std::int64_t parameters = 0;
    std::optional<metrics::MetricReport> report;
    std::string error;  // set when the run failed
    fs::path run_dir;
};

struct AblationResult {
    std::vector<AblationRow> rows;
    fs::path table;
};

/// ablation_table.csv: model,encoder,decoder,params,<six metric means>,status.
std::string ablation_csv(const std::vector<AblationRow>& rows);

/// Trains (unless dry_run) and evaluates each configuration in turn with the
/// same manifest and seed. A failed run keeps its row with the error recorded.
AblationResult run_ablation(const AblationSpec& spec);

// ---------------------------------------------------------------------------
// Figures
// ---------------------------------------------------------------------------

/// x_{1,0} .. x_{L,0}.
std::vector<model::FusionNodeId> encoder_panel_nodes(const model::GeneratorConfig& config);

/// The decoder refinement nodes feeding the head: x_{0,1} .. x_{0,L} for the
/// nested decoder, the diagonal x_{L-1,1} .. x_{0,L} for the plain one.
std::vector<model::FusionNodeId> decoder_panel_nodes(const model::GeneratorConfig& config);

/// Channel-mean maps of the requested nodes for one 8-bit source slab, each
/// min-max scaled on its own and tiled with node labels. Throws TopologyError
/// for a node the generator does not have.
Image8 feature_panel(model::Generator& generator, const Image8& source, const std::vector<model::FusionNodeId>& nodes,
                     const std::string& title, int tile_size = 128);

void render_feature_panels(model::Generator& generator, const Image8& source,
                           const std::vector<model::FusionNodeId>& nodes, const fs::path& out_path,
                           const std::string& title, int tile_size = 128);

struct FigureOptions {
    int resolution = 256;
    int samples = 4;            // test pairs rendered as heatmaps
    bool shared_scale = false;  // one error range across all rendered pairs
    std::vector<std::string> nodes;  // extra panel; empty: encoder and decoder panels only
};

struct FigureResult {
    std::vector<fs::path> files;
};

/// Heatmap panels for the first test pairs plus encoder and decoder feature
/// panels for the first one, all under <out_dir>/figures. Generated images
/// are saved alongside.
FigureResult render_figures(const fs::path& checkpoint, const fs::path& manifest_path, const fs::path& out_dir,
                            const FigureOptions& options);

/// File-name-safe form of a sample id.
std::string safe_name(const std::string& id);

}  // namespace slabgan::eval
