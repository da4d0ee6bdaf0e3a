#include "slabgan/trainer.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "slabgan/io.hpp"
#include "slabgan/objectives.hpp"

namespace slabgan::training {

void initialize_weights(torch::nn::Module& root) {
    torch::NoGradGuard no_grad;
    auto init_affine = [](torch::Tensor& weight, torch::Tensor& bias) {
        torch::nn::init::xavier_uniform_(weight, 1.0);
        if (bias.defined()) torch::nn::init::zeros_(bias);
    };
    for (auto& m : root.modules(/*include_self=*/true)) {
        if (auto* conv = m->as<torch::nn::Conv2d>()) {
            init_affine(conv->weight, conv->bias);
        } else if (auto* tconv = m->as<torch::nn::ConvTranspose2d>()) {
            init_affine(tconv->weight, tconv->bias);
        } else if (auto* linear = m->as<torch::nn::Linear>()) {
            init_affine(linear->weight, linear->bias);
        } else if (auto* norm = m->as<torch::nn::InstanceNorm2d>()) {
            if (norm->weight.defined()) torch::nn::init::ones_(norm->weight);
            if (norm->bias.defined()) torch::nn::init::zeros_(norm->bias);
        }
    }
}

std::string format_log_row(const StepLog& r) {
    return fmt::format("{},{},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g}", r.step, r.epoch, r.adv, r.l1, r.ms_ssim_loss,
                       r.total, r.d_loss);
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

Trainer::Trainer(RunConfig config) : config_(std::move(config)) {
    config_.generator.validate();
    config_.discriminator.validate();
    config_.train.loss.validate();
    torch::manual_seed(config_.train.seed);
    generator_ = model::Generator(config_.generator);
    discriminator_ = model::PatchDiscriminator(config_.discriminator);
    initialize_weights(*generator_);
    initialize_weights(*discriminator_);

    const auto& t = config_.train;
    opt_g_ = std::make_unique<torch::optim::Adam>(generator_->parameters(),
                                                  torch::optim::AdamOptions(t.lr_g).betas({t.beta1, t.beta2}));
    opt_d_ = std::make_unique<torch::optim::Adam>(discriminator_->parameters(),
                                                  torch::optim::AdamOptions(t.lr_d).betas({t.beta1, t.beta2}));
}

StepLog Trainer::train_step(const data::Batch& batch) {
    namespace obj = objectives;
    const auto mode = config_.train.gan_mode;
    generator_->train();
    discriminator_->train();

    auto fake = generator_(batch.source);

    opt_d_->zero_grad();
    auto d_loss = obj::discriminator_loss(discriminator_, batch.source, batch.target, fake, mode);
    const double d_value = d_loss.item<double>();
    if (!std::isfinite(d_value)) throw DivergenceError("d_loss", steps_done_, fmt::format("value {}", d_value));
    d_loss.backward();
    opt_d_->step();

    opt_g_->zero_grad();
    obj::LossBreakdown loss;
    try {
        loss = obj::total_generator_loss(obj::generator_adversarial_loss(discriminator_, batch.source, fake, mode),
                                         obj::l1_loss(fake, batch.target), obj::ms_ssim_loss(fake, batch.target),
                                         config_.train.loss);
    } catch (const DivergenceError& e) {
        throw DivergenceError(e.component, steps_done_, "");
    }
    loss.total.backward();
    opt_g_->step();

    ++steps_done_;
    StepLog row;
    row.step = steps_done_;
    row.epoch = epochs_done_ + 1;
    row.adv = loss.adv.item<double>();
    row.l1 = loss.l1.item<double>();
    row.ms_ssim_loss = loss.ms_ssim_loss.item<double>();
    row.total = loss.total.item<double>();
    row.d_loss = d_value;
    if (!std::isfinite(row.total)) throw DivergenceError("total", steps_done_ - 1, "");
    return row;
}

void Trainer::save_checkpoint(const fs::path& dir) const {
    fs::path tmp = dir;
    tmp += ".tmp";
    fs::remove_all(tmp);
    fs::create_directories(tmp);

    torch::serialize::OutputArchive archive;
    torch::serialize::OutputArchive g, d;
    generator_->save(g);
    discriminator_->save(d);
    archive.write("generator", g);
    archive.write("discriminator", d);
    archive.write("config", c10::IValue(config_.serialize()));
    archive.write("epoch", c10::IValue(static_cast<std::int64_t>(epochs_done_)));
    archive.write("step", c10::IValue(static_cast<std::int64_t>(steps_done_)));
    archive.write("training_dataset", c10::IValue(dataset_));
    archive.write("training_task", c10::IValue(task_));
    archive.write("rng_state", at::detail::getDefaultCPUGenerator().get_state());
    archive.save_to((tmp / "weights.pt").string());
    torch::save(*opt_g_, (tmp / "optimizer_g.pt").string());
    torch::save(*opt_d_, (tmp / "optimizer_d.pt").string());
    write_text_atomic(tmp / "config.cfg", config_.serialize());

    fs::remove_all(dir);
    fs::rename(tmp, dir);
}

namespace {

torch::serialize::InputArchive open_weights(const fs::path& dir) {
    const fs::path path = dir / "weights.pt";
    if (!fs::exists(path)) throw IoError("checkpoint " + dir.string() + " has no weights.pt");
    torch::serialize::InputArchive archive;
    try {
        archive.load_from(path.string());
    } catch (const c10::Error& e) {
        throw IoError("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
    }
    return archive;
}

RunConfig stored_config(torch::serialize::InputArchive& archive) {
    c10::IValue text;
    archive.read("config", text);
    RunConfig cfg;
    cfg.apply_text(text.toStringRef(), "checkpoint config");
    return cfg;
}

}  // namespace

Trainer Trainer::load_checkpoint(const fs::path& dir, const std::vector<std::string>& overrides) {
    auto archive = open_weights(dir);
    RunConfig cfg = stored_config(archive);
    for (const auto& o : overrides) cfg.apply_override(o);

    Trainer t(cfg);
    torch::serialize::InputArchive g, d;
    archive.read("generator", g);
    archive.read("discriminator", d);
    t.generator_->load(g);
    t.discriminator_->load(d);
    c10::IValue epoch, step;
    archive.read("epoch", epoch);
    archive.read("step", step);
    t.epochs_done_ = static_cast<int>(epoch.toInt());
    t.steps_done_ = static_cast<long>(step.toInt());
    c10::IValue dataset, task;
    archive.read("training_dataset", dataset);
    archive.read("training_task", task);
    t.set_provenance(dataset.toStringRef(), task.toStringRef());
    torch::Tensor rng;
    archive.read("rng_state", rng);
    auto cpu_gen = at::detail::getDefaultCPUGenerator();
    cpu_gen.set_state(rng);
    torch::load(*t.opt_g_, (dir / "optimizer_g.pt").string());
    torch::load(*t.opt_d_, (dir / "optimizer_d.pt").string());
    return t;
}

LoadedGenerator load_generator(const fs::path& checkpoint_dir) {
    auto archive = open_weights(checkpoint_dir);
    LoadedGenerator out;
    out.config = stored_config(archive);
    out.generator = model::Generator(out.config.generator);
    torch::serialize::InputArchive g;
    archive.read("generator", g);
    out.generator->load(g);
    out.generator->eval();

    c10::IValue dataset, task;
    archive.read("training_dataset", dataset);
    archive.read("training_task", task);
    out.training_dataset = dataset.toStringRef();
    out.training_task = task.toStringRef();
    return out;
}

// ---------------------------------------------------------------------------
// train()
// ---------------------------------------------------------------------------

std::uint64_t epoch_seed(std::uint64_t seed, int epoch) {
    // splitmix64 finalizer over (seed, epoch)
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(epoch + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::vector<std::size_t> training_indices(std::size_t n, const TrainConfig& train) {
    std::vector<std::size_t> idx;
    if (train.few_shot && static_cast<std::size_t>(*train.few_shot) < n) {
        auto perm = data::seeded_permutation(n, train.seed);
        idx.assign(perm.begin(), perm.begin() + *train.few_shot);
        std::sort(idx.begin(), idx.end());
    } else {
        for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
    }
    return idx;
}

namespace {

std::vector<std::string> read_lines(const fs::path& path) {
    std::vector<std::string> lines;
    std::ifstream in(path);
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    return lines;
}

}  // namespace

TrainResult train(const data::DatasetManifest& manifest, const RunConfig& config_in, const TrainOptions& options) {
    config_in.validate();
    if (manifest.train.empty()) throw DataError("manifest has an empty training list");
    if (config_in.train.threads > 0) torch::set_num_threads(config_in.train.threads);

    TrainResult result;
    result.run_dir = config_in.resolved_run_dir();
    fs::create_directories(result.run_dir / "checkpoints");

    std::optional<Trainer> trainer;
    if (options.resume_from) {
        trainer.emplace(Trainer::load_checkpoint(*options.resume_from,
                                                 {"train.epochs=" + std::to_string(config_in.train.epochs)}));
    } else {
        trainer.emplace(config_in);
    }
    const RunConfig& config = trainer->config();
    const auto& tc = config.train;
    trainer->set_provenance(manifest.dataset, manifest.task);

    write_text_atomic(result.run_dir / "config.cfg", config.serialize());
    {
        data::DatasetManifest copy = manifest;
        for (auto* side : {&copy.train, &copy.test}) {
            for (auto& e : *side) {
                e.source = fs::absolute(manifest.resolve(e.source)).lexically_normal();
                e.target = fs::absolute(manifest.resolve(e.target)).lexically_normal();
            }
        }
        copy.save(result.run_dir / "manifest.txt");
    }

    const fs::path log_path = result.run_dir / "train_log.csv";
    {
        std::string text = std::string(kLogHeader) + "\n";
        if (options.resume_from) {
            const auto lines = read_lines(log_path);
            for (std::size_t i = 1; i < lines.size() && static_cast<long>(i) <= trainer->steps_done(); ++i) {
                text += lines[i] + "\n";
            }
        }
        write_text_atomic(log_path, text);
    }
    std::ofstream log(log_path, std::ios::app);
    if (!log) throw IoError("cannot append to " + log_path.string());

    const auto indices = training_indices(manifest.train.size(), tc);
    const auto pairs = data::load_pairs(manifest, data::Split::Train, indices, tc.resolution);
    const std::size_t n = pairs.size();
    const std::size_t batch = static_cast<std::size_t>(tc.batch_size);
    const std::size_t steps_per_epoch = (n + batch - 1) / batch;
    result.total_steps = static_cast<long>(steps_per_epoch) * tc.epochs;

    for (int epoch = trainer->epochs_done() + 1; epoch <= tc.epochs; ++epoch) {
        const auto order = data::seeded_permutation(n, epoch_seed(tc.seed, epoch));
        for (std::size_t s = 0; s < steps_per_epoch; ++s) {
            const std::size_t lo = s * batch;
            const std::size_t hi = std::min(n, lo + batch);
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                         order.begin() + static_cast<std::ptrdiff_t>(hi));
            const StepLog row = trainer->train_step(data::make_batch(pairs, idx));
            log << format_log_row(row) << '\n';
            result.log.push_back(row);
            if (options.on_step) options.on_step(row);
        }
        log.flush();
        trainer->mark_epoch_done(epoch);

        const bool stop = options.stop_after_epoch && *options.stop_after_epoch == epoch;
        if (epoch % tc.checkpoint_every == 0 || epoch == tc.epochs || stop) {
            result.final_checkpoint = result.run_dir / "checkpoints" / ("epoch_" + std::to_string(epoch));
            trainer->save_checkpoint(result.final_checkpoint);
        }
        if (stop) break;
    }
    if (result.final_checkpoint.empty()) {
        // Nothing left to train (resumed at the final epoch): re-export the current state.
        result.final_checkpoint = result.run_dir / "checkpoints" / ("epoch_" + std::to_string(trainer->epochs_done()));
        trainer->save_checkpoint(result.final_checkpoint);
    }
    if (!log) throw IoError("write failure on " + log_path.string());
    return result;
}

}  // namespace slabgan::training
