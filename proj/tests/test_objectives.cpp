#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles/naive_metrics.hpp"
#include "oracles/scalar_ops.hpp"
#include "slabgan/objectives.hpp"

using namespace slabgan;
using namespace slabgan::objectives;

namespace {

std::vector<double> to_vec(const torch::Tensor& t) {
    auto c = t.contiguous().to(torch::kDouble);
    return {c.data_ptr<double>(), c.data_ptr<double>() + c.numel()};
}

/// Smooth field plus noise in model space, so SSIM terms stay well away from zero.
torch::Tensor textured(int n, int c, int s, double noise) {
    auto y = torch::linspace(0, 1, s, torch::kDouble).view({1, 1, s, 1});
    auto x = torch::linspace(0, 1, s, torch::kDouble).view({1, 1, 1, s});
    auto base = 0.6 * torch::sin(7 * x + 3 * y) * torch::cos(5 * y);
    return (base.expand({n, c, s, s}) + noise * torch::randn({n, c, s, s}, torch::kDouble)).clamp(-1, 1);
}

oracle::Img unit_range_image(const torch::Tensor& model_space) {
    const auto t = (model_space + 1) * 0.5;
    return {int(t.size(1)), int(t.size(2)), int(t.size(3)), to_vec(t[0])};
}

}  // namespace

TEST(L1, Examples) {
    torch::manual_seed(1);
    const auto t = torch::randn({2, 3, 8, 8});
    EXPECT_EQ(objectives::l1_loss(t, t).item<float>(), 0.f);
    EXPECT_NEAR(objectives::l1_loss(t + 0.5, t).item<double>(), 0.5, 1e-6);
    EXPECT_THROW(objectives::l1_loss(t, torch::zeros({2, 3, 8, 7})), ShapeError);
}

TEST(L1, MatchesScalarLoop) {
    torch::manual_seed(2);
    const auto a = torch::randn({2, 3, 16, 16}, torch::kDouble), b = torch::randn({2, 3, 16, 16}, torch::kDouble);
    EXPECT_NEAR(objectives::l1_loss(a, b).item<double>(), oracle::l1_scalar(to_vec(a), to_vec(b)), 1e-14);
}

TEST(MsSsimLoss, MatchesNaiveOracleAt176) {
    torch::manual_seed(3);
    for (int trial = 0; trial < 3; ++trial) {
        const auto a = textured(1, 1, 176, 0.05);
        const auto b = (a + 0.1 * torch::randn_like(a)).clamp(-1, 1);
        const double got = ms_ssim_loss(a, b).item<double>();
        const double want = 1.0 - oracle::naive_ms_ssim(unit_range_image(a), unit_range_image(b), 5, 1.0);
        EXPECT_LE(std::abs(got - want) / std::abs(want), 1e-6) << got << " vs " << want;
    }
}

TEST(MsSsimLoss, IdentityRangeAndSymmetry) {
    torch::manual_seed(4);
    const auto a = textured(2, 3, 64, 0.1);
    const auto b = torch::rand({2, 3, 64, 64}, torch::kDouble) * 2 - 1;
    EXPECT_NEAR(ms_ssim_loss(a, a).item<double>(), 0.0, 1e-12);
    const double ab = ms_ssim_loss(a, b).item<double>();
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
    EXPECT_NEAR(ab, ms_ssim_loss(b, a).item<double>(), 1e-12);
    EXPECT_NEAR(ms_ssim_loss(-a, a).item<double>(), ms_ssim_loss(a, -a).item<double>(), 1e-12);
}

TEST(MsSsimLoss, ScaleCountFollowsImageSize) {
    const auto a = torch::zeros({1, 1, 32, 32});
    EXPECT_NO_THROW(ms_ssim_loss(a, a));
    EXPECT_NO_THROW(ms_ssim_loss(a, a, 2));
    try {
        ms_ssim_loss(a, a, 3);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("at most 2"), std::string::npos) << e.what();
    }
}

TEST(Adversarial, ZeroLogitsGiveLn2) {
    const auto z = torch::zeros({2, 1, 30, 30}, torch::kDouble);
    EXPECT_NEAR(gan_criterion(z, true).item<double>(), std::log(2.0), 1e-12);
    EXPECT_NEAR(gan_criterion(z, false).item<double>(), std::log(2.0), 1e-12);
}

TEST(Adversarial, DiscriminatorLossWithZeroLogitsIsLn2) {
    model::DiscriminatorConfig cfg;
    cfg.base_channels = 8;
    model::PatchDiscriminator d(cfg);
    {
        torch::NoGradGuard g;
        for (auto& p : d->parameters()) p.zero_();
    }
    torch::manual_seed(5);
    const auto s = torch::randn({1, 3, 64, 64}), t = torch::randn({1, 3, 64, 64}), g = torch::randn({1, 3, 64, 64});
    const auto losses = adversarial_losses(d, s, t, g);
    EXPECT_NEAR(losses.discriminator.item<double>(), std::log(2.0), 1e-6);
    EXPECT_NEAR(losses.generator.item<double>(), std::log(2.0), 1e-6);
}

TEST(Adversarial, BceMatchesScalarLoop) {
    torch::manual_seed(6);
    const auto logits = 3 * torch::randn({2, 1, 7, 7}, torch::kDouble);
    for (bool real : {true, false}) {
        EXPECT_NEAR(gan_criterion(logits, real).item<double>(), oracle::bce_scalar(to_vec(logits), real ? 1.0 : 0.0),
                    1e-12);
    }
}

TEST(Adversarial, GeneratorGradientFlowsOnlyThroughGeneratorTerm) {
    model::DiscriminatorConfig cfg;
    cfg.base_channels = 8;
    torch::manual_seed(7);
    model::PatchDiscriminator d(cfg);
    const auto s = torch::randn({1, 3, 32, 32}), t = torch::randn({1, 3, 32, 32});
    auto g = torch::randn({1, 3, 32, 32}).requires_grad_(true);
    discriminator_loss(d, s, t, g).backward();
    EXPECT_FALSE(g.grad().defined());
    generator_adversarial_loss(d, s, g).backward();
    EXPECT_TRUE(g.grad().defined());
}

TEST(TotalLoss, WeightedSum) {
    auto s = [](double v) { return torch::tensor(v, torch::kDouble); };
    EXPECT_NEAR(total_generator_loss(s(0.7), s(0.01), s(0.02), {}).total.item<double>(), 3.7, 1e-12);
    EXPECT_EQ(total_generator_loss(s(0.7), s(0.01), s(0.02), {0, 0}).total.item<double>(), 0.7);
    EXPECT_EQ(total_generator_loss(s(0.7), s(0), s(0), {}).total.item<double>(), 0.7);
    EXPECT_THROW(total_generator_loss(s(0.7), s(0), s(0), {-1, 0}), ConfigError);
}

TEST(TotalLoss, NonFiniteComponentIsNamed) {
    auto s = [](double v) { return torch::tensor(v, torch::kDouble); };
    try {
        total_generator_loss(s(0.7), s(NAN), s(0.1), {});
        FAIL();
    } catch (const DivergenceError& e) {
        EXPECT_EQ(e.component, "l1");
    }
    try {
        total_generator_loss(s(0.7), s(0.1), s(INFINITY), {});
        FAIL();
    } catch (const DivergenceError& e) {
        EXPECT_EQ(e.component, "ms_ssim_loss");
    }
}

TEST(TotalLoss, LinearInLambda1WithSlopeL1) {
    torch::manual_seed(8);
    const auto g = torch::rand({1, 3, 32, 32}, torch::kDouble) * 2 - 1;
    const auto t = torch::rand({1, 3, 32, 32}, torch::kDouble) * 2 - 1;
    const auto adv = torch::tensor(0.3, torch::kDouble);
    const auto l1 = objectives::l1_loss(g, t);
    const auto ms = ms_ssim_loss(g, t);
    double prev = -1;
    for (double lambda : {0.0, 1.0, 10.0, 100.0}) {
        const double total = total_generator_loss(adv, l1, ms, {lambda, 100}).total.item<double>();
        EXPECT_NEAR(total, 0.3 + 100 * ms.item<double>() + lambda * l1.item<double>(), 1e-9);
        EXPECT_GT(total, prev);
        prev = total;
    }
}

TEST(TotalLoss, GradientMatchesCentralDifferences) {
    torch::manual_seed(9);
    model::DiscriminatorConfig cfg;
    cfg.base_channels = 4;
    model::PatchDiscriminator d(cfg);
    d->to(torch::kDouble);
    const auto source = torch::rand({1, 3, 32, 32}, torch::kDouble) * 2 - 1;
    const auto target = textured(1, 3, 32, 0.1);
    auto generated = (target + 0.2 * torch::randn_like(target)).clamp(-0.95, 0.95).detach().requires_grad_(true);

    auto total_of = [&](const torch::Tensor& g) {
        return total_generator_loss(generator_adversarial_loss(d, source, g), objectives::l1_loss(g, target),
                                    ms_ssim_loss(g, target), {})
            .total;
    };
    total_of(generated).backward();
    const auto analytic = generated.grad().clone();

    // L1 has a kink at g == target; keep every probe well away from it.
    const auto base = generated.detach().clone();
    const double h = 1e-5;
    double worst = 0;
    int checked = 0;
    std::mt19937 rng(3);
    std::uniform_int_distribution<int> pick(0, int(base.numel()) - 1);
    while (checked < 60) {
        const int i = pick(rng);
        if (std::abs(base.view(-1)[i].item<double>() - target.view(-1)[i].item<double>()) < 1e-3) continue;
        auto plus = base.clone(), minus = base.clone();
        plus.view(-1)[i] += h;
        minus.view(-1)[i] -= h;
        const double numeric = (total_of(plus).item<double>() - total_of(minus).item<double>()) / (2 * h);
        const double a = analytic.view(-1)[i].item<double>();
        worst = std::max(worst, std::abs(a - numeric) / std::max(std::abs(numeric), 1e-6));
        ++checked;
    }
    EXPECT_LT(worst, 1e-4);
}
