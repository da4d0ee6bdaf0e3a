// Acceptance suite: prints one PASS/FAIL line per criterion and exits nonzero
// when any criterion fails. Pass criterion numbers to run a subset.

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "oracles/naive_metrics.hpp"
#include "oracles/reference_slab.hpp"
#include "slabgan/batch.hpp"
#include "slabgan/cli.hpp"
#include "slabgan/data_pipeline.hpp"
#include "slabgan/eval_harness.hpp"
#include "slabgan/metrics.hpp"
#include "slabgan/objectives.hpp"
#include "slabgan/synthetic.hpp"
#include "slabgan/trainer.hpp"
#include "test_support.hpp"

using namespace slabgan;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = true;
    std::vector<std::string> notes;

    void check(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            notes.push_back("failed: " + what);
        }
    }
    void note(const std::string& s) { notes.push_back(s); }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double rel_err(double got, double want) { return std::abs(got - want) / std::max(std::abs(want), 1e-12); }

int run_cli(std::vector<std::string> args, std::string* out_text = nullptr) {
    args.insert(args.begin(), "slabgan");
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    if (out_text) *out_text = out.str();
    if (code != 0) std::cerr << err.str();
    return code;
}

std::vector<std::string> read_lines(const fs::path& p) {
    std::vector<std::string> lines;
    std::ifstream in(p);
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    return lines;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
    return cols;
}

/// Narrow networks at 128 px for the end-to-end workflow criteria.
fs::path write_small_config(const fs::path& dir) {
    fs::create_directories(dir);
    const fs::path p = dir / "small.cfg";
    std::ofstream(p) << "generator.base_channels = 8\n"
                        "generator.max_channels = 64\n"
                        "generator.se_reduction = 4\n"
                        "discriminator.base_channels = 8\n"
                        "train.resolution = 128\n"
                        "eval.resolution = 128\n";
    return p;
}

// ---------------------------------------------------------------------------

Outcome metric_oracles() {
    Outcome o;
    const auto t0 = Clock::now();
    std::mt19937_64 rng(20240611);
    double worst = 0;
    for (int k = 0; k < 24; ++k) {
        const Image8 a = k % 2 ? testing_support::random_image(3, 176, 176, rng)
                               : testing_support::textured_image(3, 176, 176, rng);
        const Image8 b = testing_support::perturbed(a, 8 + 4 * (k % 6), rng);
        const auto oa = testing_support::to_oracle(a), ob = testing_support::to_oracle(b);
        worst = std::max({worst, rel_err(metrics::psnr(a, b), oracle::naive_psnr(oa, ob)),
                          rel_err(metrics::mse(a, b), oracle::naive_mse(oa, ob)),
                          rel_err(metrics::nmse(a, b), oracle::naive_nmse(oa, ob)),
                          rel_err(metrics::ssim(a, b), oracle::naive_ssim(oa, ob)),
                          rel_err(metrics::ms_ssim(a, b, {}, 5), oracle::naive_ms_ssim(oa, ob, 5))});
    }
    const double t = seconds_since(t0);
    o.check(worst < 1e-6, "relative error within 1e-6");
    o.check(t < 120, "runtime under 2 min");
    o.note(fmt::format("24 pairs at 176x176, worst relative error {:.2e}, {:.1f} s", worst, t));
    return o;
}

Outcome closed_form_metrics() {
    Outcome o;
    std::mt19937_64 rng(2);
    const Image8 a = testing_support::random_image(3, 176, 176, rng);
    o.check(std::abs(metrics::ssim(a, a) - 1) < 1e-9, "SSIM(a, a) = 1");
    o.check(std::abs(metrics::ms_ssim(a, a) - 1) < 1e-9, "MS-SSIM(a, a) = 1");
    o.check(metrics::mse(a, a) == 0, "MSE(a, a) = 0");
    o.check(metrics::nmse(a, a) == 0, "NMSE(a, a) = 0");
    o.check(std::isinf(metrics::psnr(a, a)) && metrics::psnr(a, a) > 0, "PSNR(a, a) = +inf");
    const Image8 black(3, 64, 64, 0), white(3, 64, 64, 255);
    o.check(metrics::mse(black, white) == 65025, "MSE(black, white) = 65025");
    o.check(std::abs(metrics::psnr(black, white)) < 1e-12, "PSNR(black, white) = 0 dB");
    o.note(fmt::format("MSE(black, white) = {}, PSNR = {} dB", metrics::mse(black, white), metrics::psnr(black, white)));
    return o;
}

template <class F>
double worst_fd_error(torch::Tensor x, F loss_of, double h, int max_probes, const std::function<bool(int)>& usable) {
    auto leaf = x.detach().clone().requires_grad_(true);
    loss_of(leaf).backward();
    const auto analytic = leaf.grad();
    double worst = 0;
    int probes = 0;
    for (int i = 0; i < x.numel() && probes < max_probes; ++i) {
        if (!usable(i)) continue;
        auto plus = x.detach().clone(), minus = x.detach().clone();
        plus.view(-1)[i] += h;
        minus.view(-1)[i] -= h;
        const double numeric = (loss_of(plus).template item<double>() - loss_of(minus).template item<double>()) / (2 * h);
        const double a = analytic.view(-1)[i].template item<double>();
        worst = std::max(worst, std::abs(a - numeric) / std::max(std::abs(numeric), 1e-6));
        ++probes;
    }
    return worst;
}

Outcome gradient_checks() {
    Outcome o;
    const auto t0 = Clock::now();
    torch::manual_seed(5);
    const model::SEBlockParams p{torch::randn({2, 4}, torch::kDouble), torch::randn({2}, torch::kDouble),
                                 torch::randn({4, 2}, torch::kDouble), torch::randn({4}, torch::kDouble)};
    const auto w = torch::randn({1, 4, 2, 2}, torch::kDouble);
    const double se_err = worst_fd_error(
        torch::randn({1, 4, 2, 2}, torch::kDouble),
        [&](const torch::Tensor& x) { return (model::se_recalibrate(x, p) * w).sum(); }, 1e-6, 16,
        [](int) { return true; });

    model::DiscriminatorConfig dc;
    dc.base_channels = 4;
    model::PatchDiscriminator d(dc);
    d->to(torch::kDouble);
    const auto source = torch::rand({1, 3, 32, 32}, torch::kDouble) * 2 - 1;
    const auto target = torch::rand({1, 3, 32, 32}, torch::kDouble) * 1.6 - 0.8;
    const auto generated = (target + 0.2 * torch::randn_like(target)).clamp(-0.95, 0.95);
    auto total_of = [&](const torch::Tensor& g) {
        return objectives::total_generator_loss(objectives::generator_adversarial_loss(d, source, g),
                                                objectives::l1_loss(g, target), objectives::ms_ssim_loss(g, target),
                                                {})
            .total;
    };
    // Every element is probed except those within 1e-3 of the L1 kink.
    const double total_err = worst_fd_error(generated, total_of, 1e-5, int(generated.numel()), [&](int i) {
        return std::abs(generated.view(-1)[i].item<double>() - target.view(-1)[i].item<double>()) > 1e-3;
    });
    const double t = seconds_since(t0);
    o.check(se_err < 1e-4, "se_recalibrate gradient");
    o.check(total_err < 1e-4, "total loss gradient");
    o.check(t < 60, "runtime under 1 min");
    o.note(fmt::format("SE 1x4x2x2 worst rel err {:.2e}; total loss 1x3x32x32 (2 MS-SSIM scales) worst rel err {:.2e}; "
                       "float64, {:.1f} s",
                       se_err, total_err, t));
    return o;
}

Outcome topology() {
    Outcome o;
    model::GeneratorConfig cfg;  // depth 4, default widths
    const auto nodes = model::fusion_nodes(cfg);
    o.check(nodes.size() == 10, "10 fusion nodes");
    const auto enc = eval::encoder_panel_nodes(cfg);
    const auto dec = eval::decoder_panel_nodes(cfg);
    o.check(enc == std::vector<model::FusionNodeId>{{1, 0}, {2, 0}, {3, 0}, {4, 0}}, "encoder panel x_{1,0}..x_{4,0}");
    o.check(dec == std::vector<model::FusionNodeId>{{0, 1}, {0, 2}, {0, 3}, {0, 4}}, "decoder panel x_{0,1}..x_{0,4}");

    auto narrow = cfg;
    narrow.base_channels = 8;
    narrow.se_reduction = 4;
    torch::manual_seed(1);
    model::Generator g(narrow);
    auto all = enc;
    all.insert(all.end(), dec.begin(), dec.end());
    const auto maps = model::dump_feature_maps(g, torch::zeros({1, 3, 128, 128}), all);
    bool sizes_ok = maps.size() == 8;
    for (const auto& [id, m] : maps) sizes_ok = sizes_ok && m.size(1) == (128 >> id.level);
    o.check(sizes_ok, "all panel nodes addressable with level-consistent sizes");

    std::map<std::string, std::int64_t> params;
    for (const auto& v : eval::ablation_grid()) {
        auto c = cfg;
        c.encoder = v.encoder;
        c.decoder = v.decoder;
        params[v.label()] = model::count_parameters(*model::Generator(c));
    }
    o.check(params["ResNet & U-Net++"] > params["ResNet & U-Net"], "U-Net++ > U-Net (ResNet)");
    o.check(params["SEResNet & U-Net++"] > params["SEResNet & U-Net"], "U-Net++ > U-Net (SEResNet)");
    o.check(params["SEResNet & U-Net"] > params["ResNet & U-Net"], "SE > plain (U-Net)");
    o.check(params["SEResNet & U-Net++"] > params["ResNet & U-Net++"], "SE > plain (U-Net++)");
    std::string counts;
    for (const auto& v : eval::ablation_grid()) counts += fmt::format("{}={} ", v.label(), params[v.label()]);
    o.note(fmt::format("{} fusion nodes; params {}", nodes.size(), counts));
    return o;
}

Outcome shape_range() {
    Outcome o;
    torch::manual_seed(3);
    model::Generator g{model::GeneratorConfig{}};
    model::PatchDiscriminator d;
    training::initialize_weights(*g);
    training::initialize_weights(*d);
    torch::NoGradGuard ng;
    std::string detail;
    for (int s : {128, 256}) {
        const auto x = torch::rand({1, 3, s, s}) * 2 - 1;
        const auto y = g(x);
        o.check(y.sizes().equals(x.sizes()), fmt::format("shape preserved at {}", s));
        const double m = y.abs().max().item<double>();
        o.check(m < 1.0, fmt::format("outputs strictly inside (-1, 1) at {}", s));
        const auto logits = d(x, y);
        o.check(logits.size(2) > 1 && logits.size(3) > 1, fmt::format("patch map at {}", s));
        detail += fmt::format("S={}: out {}x{}, max|y| {:.4f}, logits {}x{}; ", s, y.size(2), y.size(3), m,
                              logits.size(2), logits.size(3));
    }
    o.note(detail + "default widths");
    return o;
}

Outcome overfit() {
    Outcome o;
    const auto t0 = Clock::now();
    RunConfig cfg;
    cfg.generator.base_channels = 16;
    cfg.generator.max_channels = 128;
    cfg.generator.se_reduction = 4;
    cfg.discriminator.base_channels = 16;
    cfg.train.seed = 1;
    cfg.train.resolution = 64;  // not a data-pipeline resolution; batches are built directly
    // lr 2e-4, betas (0.5, 0.999), batch 2, lambda1 = lambda2 = 100 are the defaults.

    std::vector<data::PairImages> pairs;
    for (int i = 0; i < 4; ++i) {
        const auto ph = synthetic::make_phantom({64, 64, 8}, 100 + i);
        const int z = 2 + i;
        auto src = data::build_slab(ph.t1, z, {"p" + std::to_string(i), "T1", z}, 64);
        auto tgt = data::build_slab(ph.t2, z, {"p" + std::to_string(i), "T2", z}, 64);
        pairs.push_back({src.source.patient_id, src.pixels, tgt.pixels});
    }
    std::vector<std::size_t> all{0, 1, 2, 3};
    const auto full = data::make_batch(pairs, all);

    training::Trainer trainer(cfg);
    auto train_l1 = [&] {
        torch::NoGradGuard ng;
        auto& g = trainer.generator();
        g->eval();
        const double v = objectives::l1_loss(g(full.source), full.target).item<double>();
        g->train();
        return v;
    };
    const double start = train_l1();
    double l1 = start;
    int step = 0;
    for (int epoch = 1; step < 2000; ++epoch) {
        const auto order = data::seeded_permutation(4, training::epoch_seed(cfg.train.seed, epoch));
        for (std::size_t s = 0; s < 4 && step < 2000; s += 2) {
            const std::vector<std::size_t> idx{order[s], order[s + 1]};
            trainer.train_step(data::make_batch(pairs, idx));
            ++step;
        }
        if (step % 50 == 0) {
            l1 = train_l1();
            if (l1 < 0.05) break;
        }
    }
    const double t = seconds_since(t0);
    o.check(l1 < 0.05, "training-set mean L1 < 0.05 within 2000 steps");
    o.check(t < 40 * 60, "runtime under 40 min on CPU");
    o.note(fmt::format("L1 {:.4f} -> {:.4f} after {} steps, {:.0f} s (generator base width 16)", start, l1, step, t));
    return o;
}

Outcome preprocessing() {
    Outcome o;
    Volume v;
    v.shape = {40, 36, 7};
    v.voxels.resize(40 * 36 * 7);
    for (int z = 0; z < 7; ++z)
        for (int y = 0; y < 36; ++y)
            for (int x = 0; x < 40; ++x)
                v.voxels[x + 40 * (y + 36 * z)] = float(10 * z + ((x * (z + 1) + 3 * y) % 17));
    bool exact = true;
    for (int zc = 1; zc <= 5; ++zc) {
        const auto slab = data::build_slab(v, zc, {"p", "T1", zc});
        for (int c = 0; c < 3; ++c) {
            oracle::Plane p{36, 40, {}};
            for (int i = 0; i < 36 * 40; ++i) p.v.push_back(v.voxels[std::size_t(36 * 40 * (zc - 1 + c) + i)]);
            const auto want = oracle::reference_slab_channel(p);
            exact = exact && std::equal(want.begin(), want.end(), slab.pixels.data.begin() + c * slab.pixels.plane_size());
        }
    }
    o.check(exact, "slab channels equal the reference per-slice pipeline bit-for-bit");

    Volume flat = v;
    std::fill(flat.voxels.begin() + 40 * 36 * 3, flat.voxels.begin() + 40 * 36 * 4, 5.f);
    const auto slab = data::build_slab(flat, 2, {"p", "T1", 2});
    const bool zero = std::all_of(slab.pixels.data.begin() + 2 * slab.pixels.plane_size(), slab.pixels.data.end(),
                                  [](auto x) { return x == 0; });
    o.check(zero, "uniform slice gives an all-zero channel");

    testing_support::TempDir dir("acc7");
    synthetic::write_phantom_dataset(dir / "vols", 6, {32, 32, 8}, 5);
    data::PreprocessOptions po;
    po.volume_root = dir / "vols";
    po.out_root = dir / "a";
    const auto a = data::preprocess(po);
    po.out_root = dir / "b";
    const auto b = data::preprocess(po);
    o.check(a.manifest.serialize() == b.manifest.serialize(), "split identical across reruns");
    o.note(fmt::format("z_c 1..5 on a 40x36x7 volume; rerun manifests {}", a.manifest.serialize() == b.manifest.serialize() ? "identical" : "differ"));
    return o;
}

Outcome ablation() {
    Outcome o;
    testing_support::TempDir dir("acc8");
    synthetic::write_phantom_dataset(dir / "vols", 5, {32, 32, 8}, 8);
    const auto cfg = write_small_config(dir.path());
    if (run_cli({"preprocess", "--volume-root", (dir / "vols").string(), "--out", (dir / "data").string()}) != 0) {
        o.check(false, "preprocess");
        return o;
    }
    const int code = run_cli({"ablate", "--config", cfg.string(), "--manifest", (dir / "data" / "manifest.txt").string(),
                              "--out", (dir / "ab").string(), "--dry-run"});
    o.check(code == 0, "ablate --dry-run exit 0");
    const auto lines = read_lines(dir / "ab" / "ablation_table.csv");
    o.check(lines.size() == 5, "header plus 4 rows");
    if (lines.size() != 5) return o;
    const auto header = split_csv(lines[0]);
    const std::vector<std::string> metric_cols{"psnr", "ssim", "lpips", "ms_ssim", "mse", "nmse"};
    o.check(std::vector<std::string>(header.begin() + 4, header.begin() + 10) == metric_cols, "six metric columns");
    const std::vector<std::string> order{"ResNet & U-Net", "SEResNet & U-Net", "ResNet & U-Net++", "SEResNet & U-Net++"};
    std::vector<std::int64_t> params;
    for (int i = 0; i < 4; ++i) {
        const auto cols = split_csv(lines[i + 1]);
        o.check(cols.size() == header.size() && cols[0] == order[i], "row order " + order[i]);
        if (cols.size() < 4) return o;
        params.push_back(std::stoll(cols[3]));
    }
    RunConfig rc;
    rc.apply_file(cfg);
    rc.generator.encoder = model::EncoderKind::SeResidual;
    const auto se = model::se_parameter_count(rc.generator);
    o.check(params[1] - params[0] == se && params[3] - params[2] == se, "SE parameter difference equals closed form");
    o.note(fmt::format("params {} / {} / {} / {}; SE closed form {}", params[0], params[1], params[2], params[3], se));
    return o;
}

Outcome zero_shot() {
    Outcome o;
    testing_support::TempDir dir("acc9");
    synthetic::write_phantom_dataset(dir / "siteA", 5, {32, 32, 8}, 91, "a");
    synthetic::write_phantom_dataset(dir / "siteB", 5, {40, 40, 10}, 92, "b");
    const auto cfg = write_small_config(dir.path());
    bool ok = run_cli({"preprocess", "--volume-root", (dir / "siteA").string(), "--out", (dir / "dataA").string()}) == 0;
    ok = ok && run_cli({"preprocess", "--volume-root", (dir / "siteB").string(), "--out", (dir / "dataB").string(),
                        "--split", "0.5"}) == 0;
    std::string out;
    ok = ok && run_cli({"train", "--config", cfg.string(), "--manifest", (dir / "dataA" / "manifest.txt").string(),
                        "--epochs", "1", "--run-dir", (dir / "run").string()}) == 0;
    const fs::path ckpt = dir / "run" / "checkpoints" / "epoch_1";
    const auto before = fs::last_write_time(ckpt / "weights.pt");
    ok = ok && run_cli({"evaluate", "--checkpoint", ckpt.string(), "--manifest", (dir / "dataB" / "manifest.txt").string(),
                        "--out", (dir / "zs").string()},
                       &out) == 0;
    o.check(ok, "preprocess, train and evaluate succeed");
    if (!ok) return o;
    const auto manifest_b = data::DatasetManifest::load(dir / "dataB" / "manifest.txt");
    const auto per = read_lines(dir / "zs" / "report_per_sample.csv");
    const auto agg = read_lines(dir / "zs" / "report_aggregate.csv");
    o.check(per.size() == manifest_b.test.size() + 1, "one row per foreign test pair");
    o.check(agg.size() == 7, "aggregate covers six metrics");
    std::ifstream meta(dir / "zs" / "evaluation_meta.txt");
    std::stringstream text;
    text << meta.rdbuf();
    o.check(text.str().find("zero_shot = true") != std::string::npos, "provenance marks zero-shot");
    o.check(out.find("zero-shot: trained on 'siteA', evaluated on 'siteB'") != std::string::npos, "note printed");
    o.check(fs::last_write_time(ckpt / "weights.pt") == before, "checkpoint untouched (no retraining)");
    o.note(fmt::format("{} foreign test pairs scored", manifest_b.test.size()));
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"metric oracle suite", metric_oracles},
        {"closed-form metric checks", closed_form_metrics},
        {"gradient checks", gradient_checks},
        {"topology and parameter orderings", topology},
        {"generator shape/range, discriminator patch map", shape_range},
        {"overfit integration test", overfit},
        {"preprocessing bit-exactness and split determinism", preprocessing},
        {"ablation dry-run table", ablation},
        {"zero-shot evaluation workflow", zero_shot},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

    torch::set_num_threads(1);
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int n = static_cast<int>(i) + 1;
        if (!only.empty() && !only.count(n)) continue;
        Outcome r;
        try {
            r = criteria[i].second();
        } catch (const std::exception& e) {
            r.check(false, std::string("exception: ") + e.what());
        }
        failed += !r.pass;
        std::string detail;
        for (const auto& s : r.notes) detail += (detail.empty() ? "" : "; ") + s;
        std::cout << fmt::format("criterion {}: {} - {} ({})", n, r.pass ? "PASS" : "FAIL", criteria[i].first, detail)
                  << std::endl;
    }
    std::cout << "criterion 10: documented only - full-scale results need the complete corpus and 200-epoch "
                 "training; see README"
              << std::endl;
    return failed == 0 ? 0 : 1;
}
