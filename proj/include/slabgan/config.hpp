#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "slabgan/discriminator.hpp"
#include "slabgan/generator.hpp"
#include "slabgan/objectives.hpp"

namespace slabgan {

namespace fs = std::filesystem;

/// Environment variable that overrides `run.root`.
inline constexpr const char* kRunRootEnv = "SLABGAN_RUN_ROOT";

struct DataConfig {
    std::string manifest;
    std::string volume_root;
    std::string out_root;
    std::string source_modality = "T1";
    std::string target_modality = "T2";
    double split_ratio = 0.8;
    std::uint64_t split_seed = 42;
    std::optional<int> few_shot_cap;

    bool operator==(const DataConfig&) const = default;
};

struct TrainConfig {
    double lr_g = 2e-4;
    double lr_d = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    int batch_size = 2;
    int epochs = 200;
    std::uint64_t seed = 0;
    int resolution = 256;
    int checkpoint_every = 50;
    std::optional<int> few_shot;  // truncate the training list at train time
    objectives::LossWeights loss;
    objectives::GanMode gan_mode = objectives::GanMode::Bce;
    int threads = 0;  // 0 keeps the library default

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

struct EvalConfig {
    int resolution = 256;
    std::string lpips_backend;
    bool save_images = false;
    bool shared_heatmap_scale = false;

    bool operator==(const EvalConfig&) const = default;
};

/// Every tunable of a run, addressable by flat dotted keys
/// (`train.epochs`, `generator.encoder`, ...).
struct RunConfig {
    DataConfig data;
    model::GeneratorConfig generator;
    model::DiscriminatorConfig discriminator;
    TrainConfig train;
    EvalConfig eval;
    std::string run_root = "runs";
    std::string run_dir;  // empty: derived from run_root and the model tags

    // Provenance, not serialized.
    fs::path source_file;
    std::vector<std::string> overrides;

    /// Sets one key from text. Throws ConfigError naming unknown keys or bad values.
    void set(const std::string& key, const std::string& value);
    std::string get(const std::string& key) const;
    static const std::vector<std::string>& keys();

    /// `key = value` lines in keys() order.
    std::string serialize() const;

    /// Applies `key = value` lines on top of the current values. `#` starts a comment.
    void apply_text(const std::string& text, const std::string& origin = "<text>");
    void apply_file(const fs::path& path);

    /// Applies a `key=value` override and records it.
    void apply_override(const std::string& assignment);

    void validate() const;

    /// run_dir when set, otherwise <run_root>/<encoder>_<decoder>_seed<seed>.
    fs::path resolved_run_dir() const;

    bool same_settings(const RunConfig& o) const {
        return data == o.data && generator == o.generator && discriminator == o.discriminator && train == o.train &&
               eval == o.eval && run_root == o.run_root && run_dir == o.run_dir;
    }
};

}  // namespace slabgan
