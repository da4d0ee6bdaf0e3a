#include <gtest/gtest.h>

#include <fstream>

#include "oracles/scalar_ops.hpp"
#include "slabgan/objectives.hpp"
#include "slabgan/trainer.hpp"
#include "tiny_run.hpp"

using namespace slabgan;
using namespace slabgan::training;
using testing_support::TempDir;
using testing_support::tiny_config;
using testing_support::tiny_manifest;

namespace {

std::vector<std::string> lines_of(const fs::path& p) {
    std::vector<std::string> out;
    std::ifstream in(p);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

void expect_same_parameters(torch::nn::Module& a, torch::nn::Module& b) {
    const auto pa = a.named_parameters(), pb = b.named_parameters();
    ASSERT_EQ(pa.size(), pb.size());
    for (const auto& p : pa) EXPECT_TRUE(torch::equal(p.value(), pb[p.key()])) << p.key();
}

data::Batch random_batch(int n, int s, std::uint64_t seed) {
    torch::manual_seed(seed);
    return {torch::rand({n, 3, s, s}) * 2 - 1, torch::rand({n, 3, s, s}) * 2 - 1, {}};
}

}  // namespace

TEST(Initialization, XavierVarianceOnLinearMap) {
    torch::manual_seed(1);
    torch::nn::Linear lin(128, 64);
    initialize_weights(*lin);
    const double var = lin->weight.var().item<double>();
    const double want = 2.0 / (128 + 64);
    EXPECT_NEAR(var, want, 0.2 * want);
    const double bound = std::sqrt(6.0 / (128 + 64));
    EXPECT_LE(lin->weight.abs().max().item<double>(), bound);
    EXPECT_EQ(lin->bias.abs().max().item<float>(), 0.f);
}

TEST(Initialization, BiasesZeroAndNormsAtIdentity) {
    Trainer t(tiny_config("unused"));
    for (auto* m : {static_cast<torch::nn::Module*>(t.generator().get()),
                    static_cast<torch::nn::Module*>(t.discriminator().get())}) {
        for (const auto& p : m->named_parameters()) {
            const auto& k = p.key();
            if (k.size() >= 4 && k.substr(k.size() - 4) == "bias") {
                EXPECT_EQ(p.value().abs().max().item<float>(), 0.f) << k;
            } else if (p.value().dim() == 1) {  // instance-norm scale
                EXPECT_TRUE(torch::all(p.value() == 1).item<bool>()) << k;
            }
        }
    }
}

TEST(Initialization, EqualSeedsGiveBitIdenticalNetworks) {
    Trainer a(tiny_config("unused")), b(tiny_config("unused"));
    expect_same_parameters(*a.generator(), *b.generator());
    expect_same_parameters(*a.discriminator(), *b.discriminator());
    auto other = tiny_config("unused");
    other.train.seed = 8;
    Trainer c(other);
    EXPECT_FALSE(torch::equal(a.generator()->parameters()[0], c.generator()->parameters()[0]));
}

TEST(Optimizer, AdamFirstStepMatchesClosedForm) {
    for (double theta0 : {0.7, -2.0, 10.0}) {
        auto theta = torch::tensor({theta0}, torch::kDouble).requires_grad_(true);
        torch::optim::Adam opt({theta}, torch::optim::AdamOptions(2e-4).betas({0.5, 0.999}));
        opt.zero_grad();
        const auto loss = 0.5 * (theta - 3.0).pow(2).sum();
        loss.backward();
        const double g = theta.grad().item<double>();
        opt.step();
        EXPECT_NEAR(theta.item<double>(), oracle::adam_first_step(theta0, g, 2e-4, 0.5, 0.999), 1e-10);
    }
}

TEST(TrainStep, IdenticalStateAndBatchGiveIdenticalDeltas) {
    const auto batch = random_batch(2, 128, 3);
    Trainer a(tiny_config("unused")), b(tiny_config("unused"));
    const auto ra = a.train_step(batch);
    const auto rb = b.train_step(batch);
    EXPECT_EQ(format_log_row(ra), format_log_row(rb));
    expect_same_parameters(*a.generator(), *b.generator());
    expect_same_parameters(*a.discriminator(), *b.discriminator());
}

TEST(TrainStep, ZeroLambdasIsolateTheAdversarialGradient) {
    auto cfg = tiny_config("unused");
    cfg.train.loss = {0, 0};
    Trainer t(cfg);
    auto& d = t.discriminator();
    {
        torch::NoGradGuard g;
        for (auto& p : d->parameters()) p.zero_();
    }
    const auto batch = random_batch(2, 128, 4);
    auto fake = t.generator()(batch.source);
    const auto loss = objectives::total_generator_loss(objectives::generator_adversarial_loss(d, batch.source, fake),
                                                       objectives::l1_loss(fake, batch.target),
                                                       objectives::ms_ssim_loss(fake, batch.target), cfg.train.loss);
    EXPECT_NEAR(loss.total.item<double>(), std::log(2.0), 1e-6);
    const auto g_total = torch::autograd::grad({loss.total}, {fake}, {}, true)[0];
    const auto g_adv = torch::autograd::grad({loss.adv}, {fake})[0];
    EXPECT_TRUE(torch::equal(g_total, g_adv));
}

TEST(TrainStep, LogRowCarriesTheBreakdown) {
    Trainer t(tiny_config("unused"));
    const auto r = t.train_step(random_batch(2, 128, 5));
    EXPECT_EQ(r.step, 1);
    EXPECT_EQ(r.epoch, 1);
    EXPECT_NEAR(r.total, r.adv + 100 * r.l1 + 100 * r.ms_ssim_loss, 1e-4 * r.total);
    EXPECT_GT(r.d_loss, 0);
}

TEST(Train, EightSamplesBatchTwoThreeEpochsIsTwelveSteps) {
    TempDir dir("train12");
    const auto m = tiny_manifest(dir / "data", 8, 2, 1);
    const auto cfg = tiny_config(dir / "run", 3);
    const auto r = train(m, cfg);
    EXPECT_EQ(r.total_steps, 12);
    EXPECT_EQ(r.log.size(), 12u);
    const auto lines = lines_of(dir / "run" / "train_log.csv");
    ASSERT_EQ(lines.size(), 13u);
    EXPECT_EQ(lines[0], kLogHeader);
    EXPECT_EQ(lines[12].substr(0, 5), "12,3,");
    EXPECT_TRUE(fs::exists(dir / "run" / "config.cfg"));
    EXPECT_TRUE(fs::exists(dir / "run" / "manifest.txt"));
    EXPECT_EQ(r.final_checkpoint, dir / "run" / "checkpoints" / "epoch_3");
    EXPECT_TRUE(fs::exists(r.final_checkpoint / "weights.pt"));
}

TEST(Train, OddCountRoundsStepsUp) {
    TempDir dir("train5");
    const auto m = tiny_manifest(dir / "data", 5, 1, 2);
    const auto r = train(m, tiny_config(dir / "run", 1));
    EXPECT_EQ(r.total_steps, 3);
}

TEST(Train, ResumeReproducesUninterruptedLog) {
    TempDir dir("resume");
    const auto m = tiny_manifest(dir / "data", 4, 1, 3);
    train(m, tiny_config(dir / "full", 3));

    TrainOptions first;
    first.stop_after_epoch = 1;
    const auto part = train(m, tiny_config(dir / "split", 3), first);
    EXPECT_EQ(part.log.size(), 2u);
    EXPECT_EQ(lines_of(dir / "split" / "train_log.csv").size(), 3u);

    TrainOptions resume;
    resume.resume_from = part.final_checkpoint;
    const auto rest = train(m, tiny_config(dir / "split", 3), resume);
    EXPECT_EQ(rest.log.size(), 4u);
    EXPECT_EQ(lines_of(dir / "split" / "train_log.csv"), lines_of(dir / "full" / "train_log.csv"));

    Trainer a = Trainer::load_checkpoint(dir / "full" / "checkpoints" / "epoch_3");
    Trainer b = Trainer::load_checkpoint(rest.final_checkpoint);
    expect_same_parameters(*a.generator(), *b.generator());
    EXPECT_EQ(a.steps_done(), 6);
    EXPECT_EQ(a.dataset(), "tiny");
}

TEST(Train, ZeroEpochsRejected) {
    TempDir dir("zero");
    const auto m = tiny_manifest(dir / "data", 2, 1, 4);
    EXPECT_THROW(train(m, tiny_config(dir / "run", 0)), ConfigError);
}

TEST(Train, TestSideIsNeverRead) {
    TempDir dir("notest");
    const auto m = tiny_manifest(dir / "data", 4, 2, 5);
    for (const auto& e : m.test) {
        fs::remove(m.resolve(e.source));
        fs::remove(m.resolve(e.target));
    }
    EXPECT_NO_THROW(train(m, tiny_config(dir / "run", 1)));
}

TEST(Train, FewShotUsesASeededSubset) {
    TrainConfig t;
    t.seed = 3;
    t.few_shot = 4;
    const auto idx = training_indices(10, t);
    EXPECT_EQ(idx.size(), 4u);
    EXPECT_EQ(idx, training_indices(10, t));
    EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
    t.few_shot = 20;
    EXPECT_EQ(training_indices(10, t).size(), 10u);
}

TEST(Train, EmptyTrainingListIsDataError) {
    data::DatasetManifest m;
    EXPECT_THROW(train(m, tiny_config("unused")), DataError);
}
