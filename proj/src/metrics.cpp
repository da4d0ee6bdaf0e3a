#include "slabgan/metrics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numeric>
#include <sys/wait.h>

#include "slabgan/io.hpp"

namespace slabgan::metrics {

std::vector<double> SsimParams::gaussian_taps() const {
    std::vector<double> g(static_cast<std::size_t>(window));
    const double centre = (window - 1) / 2.0;
    for (int i = 0; i < window; ++i) g[i] = std::exp(-((i - centre) * (i - centre)) / (2.0 * sigma * sigma));
    const double s = std::accumulate(g.begin(), g.end(), 0.0);
    for (double& v : g) v /= s;
    return g;
}

std::vector<double> SsimParams::scale_weights(int scales) const {
    if (scales < 1 || scales > static_cast<int>(ms_weights.size())) {
        throw ConfigError("MS-SSIM scale count must be in [1, 5], got " + std::to_string(scales));
    }
    std::vector<double> w(ms_weights.begin(), ms_weights.begin() + scales);
    const double s = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& v : w) v /= s;
    return w;
}

int max_scales(int size, int window) {
    int s = 0;
    while (s < 5 && static_cast<long>(window) << s <= size) ++s;
    return s;
}

double mse(const ImageD& a, const ImageD& b) {
    require_same_shape(a, b, "mse");
    if (a.data.empty()) throw ShapeError("mse: empty images");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.data.size());
}

double mse(const Image8& a, const Image8& b) { return mse(convert<double>(a), convert<double>(b)); }

double psnr(const ImageD& a, const ImageD& b, double peak) {
    const double m = mse(a, b);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / m);
}

double psnr(const Image8& a, const Image8& b) { return psnr(convert<double>(a), convert<double>(b), 255.0); }

double nmse(const ImageD& generated, const ImageD& reference) {
    require_same_shape(generated, reference, "nmse");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < generated.data.size(); ++i) {
        const double d = generated.data[i] - reference.data[i];
        num += d * d;
        den += reference.data[i] * reference.data[i];
    }
    if (den == 0.0) throw DataError("nmse: reference image has zero energy");
    return num / den;
}

double nmse(const Image8& generated, const Image8& reference) {
    return nmse(convert<double>(generated), convert<double>(reference));
}

namespace {

// Valid-mode separable filtering of one (H, W) plane.
std::vector<double> filter_valid(const double* plane, int h, int w, const std::vector<double>& g) {
    const int k = static_cast<int>(g.size());
    const int ow = w - k + 1;
    const int oh = h - k + 1;
    std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
    for (int y = 0; y < h; ++y) {
        const double* row = plane + static_cast<std::size_t>(y) * w;
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int t = 0; t < k; ++t) s += g[t] * row[x + t];
            tmp[static_cast<std::size_t>(y) * ow + x] = s;
        }
    }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int t = 0; t < k; ++t) s += g[t] * tmp[static_cast<std::size_t>(y + t) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = s;
        }
    }
    return out;
}

}  // namespace

SsimTerms ssim_terms(const ImageD& a, const ImageD& b, const SsimParams& p) {
    require_same_shape(a, b, "ssim");
    if (a.height < p.window || a.width < p.window) {
        throw ConfigError(fmt::format("ssim: {}x{} image is smaller than the {}x{} window", a.height, a.width,
                                      p.window, p.window));
    }
    const auto g = p.gaussian_taps();
    const double c1 = (p.k1 * p.data_range) * (p.k1 * p.data_range);
    const double c2 = (p.k2 * p.data_range) * (p.k2 * p.data_range);
    const std::size_t plane = a.plane_size();

    SsimTerms terms;
    std::vector<double> xx(plane), yy(plane), xy(plane);
    for (int c = 0; c < a.channels; ++c) {
        const double* x = a.data.data() + c * plane;
        const double* y = b.data.data() + c * plane;
        for (std::size_t i = 0; i < plane; ++i) {
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const auto mx = filter_valid(x, a.height, a.width, g);
        const auto my = filter_valid(y, a.height, a.width, g);
        const auto sxx = filter_valid(xx.data(), a.height, a.width, g);
        const auto syy = filter_valid(yy.data(), a.height, a.width, g);
        const auto sxy = filter_valid(xy.data(), a.height, a.width, g);

        double ssim_acc = 0.0, cs_acc = 0.0;
        for (std::size_t i = 0; i < mx.size(); ++i) {
            const double vx = sxx[i] - mx[i] * mx[i];
            const double vy = syy[i] - my[i] * my[i];
            const double cov = sxy[i] - mx[i] * my[i];
            const double cs = (2.0 * cov + c2) / (vx + vy + c2);
            const double lum = (2.0 * mx[i] * my[i] + c1) / (mx[i] * mx[i] + my[i] * my[i] + c1);
            ssim_acc += lum * cs;
            cs_acc += cs;
        }
        terms.ssim.push_back(ssim_acc / static_cast<double>(mx.size()));
        terms.cs.push_back(cs_acc / static_cast<double>(mx.size()));
    }
    return terms;
}

double ssim(const ImageD& a, const ImageD& b, const SsimParams& params) {
    const auto t = ssim_terms(a, b, params);
    return std::accumulate(t.ssim.begin(), t.ssim.end(), 0.0) / static_cast<double>(t.ssim.size());
}

double ssim(const Image8& a, const Image8& b, const SsimParams& params) {
    return ssim(convert<double>(a), convert<double>(b), params);
}

ImageD downsample2(const ImageD& in) {
    ImageD out(in.channels, in.height / 2, in.width / 2);
    for (int c = 0; c < in.channels; ++c)
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x) {
                out.at(c, y, x) = 0.25 * (in.at(c, 2 * y, 2 * x) + in.at(c, 2 * y, 2 * x + 1) +
                                          in.at(c, 2 * y + 1, 2 * x) + in.at(c, 2 * y + 1, 2 * x + 1));
            }
    return out;
}

double ms_ssim(const ImageD& a, const ImageD& b, const SsimParams& params, int scales) {
    require_same_shape(a, b, "ms_ssim");
    const int feasible = max_scales(std::min(a.height, a.width), params.window);
    if (scales == 0) scales = feasible;
    if (scales < 1 || scales > feasible) {
        throw ConfigError(fmt::format("ms_ssim: {} scales need at least {} px with a {}-tap window; "
                                      "a {}x{} image supports at most {} scales",
                                      scales, static_cast<long>(params.window) << (std::max(scales, 1) - 1),
                                      params.window, a.height, a.width, feasible));
    }
    const auto w = params.scale_weights(scales);

    std::vector<double> per_channel(static_cast<std::size_t>(a.channels), 1.0);
    ImageD x = a, y = b;
    for (int s = 0; s < scales; ++s) {
        const auto t = ssim_terms(x, y, params);
        const auto& term = s + 1 < scales ? t.cs : t.ssim;
        for (int c = 0; c < a.channels; ++c) per_channel[c] *= std::pow(std::max(term[c], 0.0), w[s]);
        if (s + 1 < scales) {
            x = downsample2(x);
            y = downsample2(y);
        }
    }
    return std::accumulate(per_channel.begin(), per_channel.end(), 0.0) / static_cast<double>(per_channel.size());
}

double ms_ssim(const Image8& a, const Image8& b, const SsimParams& params, int scales) {
    return ms_ssim(convert<double>(a), convert<double>(b), params, scales);
}

// ---------------------------------------------------------------------------
// LPIPS adapter
// ---------------------------------------------------------------------------

namespace {

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "'\\''";
        else out += c;
    }
    return out + "'";
}

}  // namespace

LpipsResult LpipsAdapter::score_files(const std::filesystem::path& a, const std::filesystem::path& b) const {
    if (!configured()) return {std::nullopt, "unavailable: no LPIPS backend configured"};
    const std::string cmd = backend_ + " " + shell_quote(a.string()) + " " + shell_quote(b.string()) + " 2>/dev/null";
    std::unique_ptr<FILE, int (*)(FILE*)> pipe(popen(cmd.c_str(), "r"), pclose);
    if (!pipe) return {std::nullopt, "unavailable: cannot start backend"};
    std::string output;
    std::array<char, 256> buf{};
    while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe.get())) output += buf.data();
    const int status = pclose(pipe.release());
    if (status != 0) {
        return {std::nullopt, "unavailable: backend exited with status " +
                                  std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : status)};
    }
    while (!output.empty() && std::isspace(static_cast<unsigned char>(output.back()))) output.pop_back();
    std::size_t start = 0;
    while (start < output.size() && std::isspace(static_cast<unsigned char>(output[start]))) ++start;
    const std::string text = output.substr(start);
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size() || !std::isfinite(v)) throw std::invalid_argument(text);
        return {v, {}};
    } catch (const std::exception&) {
        return {std::nullopt, "unavailable: backend printed non-numeric output '" + text + "'"};
    }
}

LpipsResult LpipsAdapter::score(const Image8& a, const Image8& b, const std::filesystem::path& scratch_dir) const {
    if (!configured()) return {std::nullopt, "unavailable: no LPIPS backend configured"};
    std::filesystem::create_directories(scratch_dir);
    const auto pa = scratch_dir / "lpips_a.png";
    const auto pb = scratch_dir / "lpips_b.png";
    write_png(pa, a);
    write_png(pb, b);
    auto r = score_files(pa, pb);
    std::filesystem::remove(pa);
    std::filesystem::remove(pb);
    return r;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

SampleMetrics score_pair(std::string id, const Image8& generated, const Image8& reference, const SsimParams& params,
                         int ms_scales) {
    const ImageD g = convert<double>(generated);
    const ImageD r = convert<double>(reference);
    SampleMetrics s;
    s.id = std::move(id);
    s.mse = mse(g, r);
    s.psnr = psnr(g, r, 255.0);
    s.nmse = nmse(g, r);
    s.ssim = ssim(g, r, params);
    s.ms_ssim = ms_ssim(g, r, params, ms_scales);
    return s;
}

const MetricSummary& MetricReport::summary(const std::string& metric) const {
    for (const auto& s : aggregate)
        if (s.metric == metric) return s;
    throw std::out_of_range("no aggregate for metric " + metric);
}

namespace {

std::string num(double v) {
    if (std::isnan(v)) return "NA";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return fmt::format("{:.10g}", v);
}

}  // namespace

std::string MetricReport::per_sample_csv() const {
    std::string out = "sample_id,psnr,ssim,ms_ssim,mse,nmse,lpips\n";
    for (const auto& s : per_sample) {
        out += fmt::format("{},{},{},{},{},{},{}\n", s.id, num(s.psnr), num(s.ssim), num(s.ms_ssim), num(s.mse),
                           num(s.nmse), s.lpips ? num(*s.lpips) : std::string("NA"));
    }
    return out;
}

std::string MetricReport::aggregate_csv() const {
    std::string out = "metric,mean,std,n,excluded\n";
    for (const auto& s : aggregate) {
        out += fmt::format("{},{},{},{},{}\n", s.metric, num(s.mean), num(s.std), s.n, s.excluded);
    }
    return out;
}

MetricReport aggregate(std::vector<SampleMetrics> per_sample) {
    if (per_sample.empty()) throw DataError("aggregate: no samples");
    MetricReport report;
    auto fold = [&](const char* name, auto get) {
        MetricSummary s;
        s.metric = name;
        std::vector<double> vals;
        for (const auto& p : per_sample) {
            std::optional<double> v = get(p);
            if (!v || !std::isfinite(*v)) {
                ++s.excluded;
                continue;
            }
            vals.push_back(*v);
        }
        s.n = static_cast<int>(vals.size());
        if (vals.empty()) {
            const bool all_inf_psnr = std::string(name) == "psnr";
            s.mean = all_inf_psnr ? std::numeric_limits<double>::infinity() : std::nan("");
            s.std = all_inf_psnr ? 0.0 : std::nan("");
        } else {
            s.mean = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
            double var = 0.0;
            for (double v : vals) var += (v - s.mean) * (v - s.mean);
            s.std = std::sqrt(var / static_cast<double>(vals.size()));
        }
        report.aggregate.push_back(s);
    };
    using O = std::optional<double>;
    fold("psnr", [](const SampleMetrics& p) { return O(p.psnr); });
    fold("ssim", [](const SampleMetrics& p) { return O(p.ssim); });
    fold("lpips", [](const SampleMetrics& p) { return p.lpips; });
    fold("ms_ssim", [](const SampleMetrics& p) { return O(p.ms_ssim); });
    fold("mse", [](const SampleMetrics& p) { return O(p.mse); });
    fold("nmse", [](const SampleMetrics& p) { return O(p.nmse); });
    report.per_sample = std::move(per_sample);
    return report;
}

}  // namespace slabgan::metrics
