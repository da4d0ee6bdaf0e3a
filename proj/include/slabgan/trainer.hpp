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
#include "slabgan/discriminator.hpp"
#include "slabgan/generator.hpp"

namespace slabgan::training {

namespace fs = std::filesystem;

/// Xavier-uniform (gain 1) weights for every conv, transposed conv and linear
/// layer; zero biases; instance-norm affine parameters at identity.
void initialize_weights(torch::nn::Module& module);

struct StepLog {
    long step = 0;  // 1-based, global
    int epoch = 0;  // 1-based
    double adv = 0;
    double l1 = 0;
    double ms_ssim_loss = 0;
    double total = 0;
    double d_loss = 0;
};

inline constexpr const char* kLogHeader = "step,epoch,adv,l1,ms_ssim_loss,total,d_loss";
std::string format_log_row(const StepLog& row);

/// Both networks, both Adam optimizers and the progress counters.
class Trainer {
public:
    /// Seeds libtorch with config.train.seed, builds and initializes both networks.
    explicit Trainer(RunConfig config);

    /// One discriminator update on (real, generated-detached), then one
    /// generator update on the composite loss. Throws DivergenceError.
    StepLog train_step(const data::Batch& batch);

    model::Generator& generator() { return generator_; }
    model::PatchDiscriminator& discriminator() { return discriminator_; }
    torch::optim::Adam& generator_optimizer() { return *opt_g_; }
    torch::optim::Adam& discriminator_optimizer() { return *opt_d_; }
    const RunConfig& config() const { return config_; }

    int epochs_done() const { return epochs_done_; }
    long steps_done() const { return steps_done_; }
    void mark_epoch_done(int epoch) { epochs_done_ = epoch; }

    /// Dataset and task tags of the manifest being trained on; stored in checkpoints.
    void set_provenance(std::string dataset, std::string task) {
        dataset_ = std::move(dataset);
        task_ = std::move(task);
    }
    const std::string& dataset() const { return dataset_; }
    const std::string& task() const { return task_; }

    /// Writes <dir>/{weights.pt, optimizer_g.pt, optimizer_d.pt, config.cfg}
    /// into a temporary sibling first and renames it into place.
    void save_checkpoint(const fs::path& dir) const;

    /// Rebuilds a trainer from a checkpoint directory. `overrides` (e.g. a new
    /// epoch budget) are applied on top of the stored config.
    static Trainer load_checkpoint(const fs::path& dir, const std::vector<std::string>& overrides = {});

private:
    RunConfig config_;
    model::Generator generator_{nullptr};
    model::PatchDiscriminator discriminator_{nullptr};
    std::unique_ptr<torch::optim::Adam> opt_g_;
    std::unique_ptr<torch::optim::Adam> opt_d_;
    int epochs_done_ = 0;
    long steps_done_ = 0;
    std::string dataset_;
    std::string task_;
};

/// Generator (plus its config) restored from a checkpoint, for inference.
struct LoadedGenerator {
    RunConfig config;
    model::Generator generator{nullptr};
    std::string training_dataset;  // dataset tag of the manifest it was trained on
    std::string training_task;
};
LoadedGenerator load_generator(const fs::path& checkpoint_dir);

struct TrainResult {
    fs::path run_dir;
    fs::path final_checkpoint;
    std::vector<StepLog> log;  // rows written by this call (all rows when not resuming)
    long total_steps = 0;
};

struct TrainOptions {
    std::optional<fs::path> resume_from;  // checkpoint directory
    std::optional<int> stop_after_epoch;  // simulate an interruption
    std::function<void(const StepLog&)> on_step;
};

/// Shuffle seed for one epoch; derived from the run seed only.
std::uint64_t epoch_seed(std::uint64_t seed, int epoch);

/// Training-side indices used after the optional few-shot truncation.
std::vector<std::size_t> training_indices(std::size_t n, const TrainConfig& train);

/// Runs epochs * ceil(|train| / batch) steps. Writes config.cfg, manifest.txt,
/// train_log.csv and checkpoints/epoch_<n> into the run directory. Only the
/// training side of the manifest is ever read.
TrainResult train(const data::DatasetManifest& manifest, const RunConfig& config, const TrainOptions& options = {});

}  // namespace slabgan::training
