#pragma once

#include <array>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "slabgan/image.hpp"

namespace slabgan::metrics {

/// Gaussian-window SSIM settings shared by SSIM, MS-SSIM and the MS-SSIM loss.
struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double data_range = 255.0;
    std::array<double, 5> ms_weights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

    /// Normalized 1D Gaussian taps; the 2D window is their outer product.
    std::vector<double> gaussian_taps() const;
    /// First `scales` weights renormalized to sum to one.
    std::vector<double> scale_weights(int scales) const;
};

/// Largest scale count whose coarsest level still fits the window:
/// size >= window * 2^(scales - 1). Capped at 5.
int max_scales(int size, int window = 11);

double mse(const ImageD& a, const ImageD& b);
double mse(const Image8& a, const Image8& b);

/// 10 log10(peak^2 / mse); +infinity when the images are identical.
double psnr(const ImageD& a, const ImageD& b, double peak = 255.0);
double psnr(const Image8& a, const Image8& b);

/// ||generated - reference||^2 / ||reference||^2. Throws DataError for a zero-energy reference.
double nmse(const ImageD& generated, const ImageD& reference);
double nmse(const Image8& generated, const Image8& reference);

/// Per-channel SSIM and contrast-structure means over the valid window positions.
struct SsimTerms {
    std::vector<double> ssim;
    std::vector<double> cs;
};
SsimTerms ssim_terms(const ImageD& a, const ImageD& b, const SsimParams& params);

/// Mean SSIM over valid (unpadded) window positions, averaged over channels.
double ssim(const ImageD& a, const ImageD& b, const SsimParams& params = {});
double ssim(const Image8& a, const Image8& b, const SsimParams& params = {});

/// Multi-scale SSIM. Contrast-structure terms at every scale but the last,
/// full SSIM at the coarsest, 2x2 average pooling between scales, per-scale
/// terms clamped at zero before the fractional power, mean over channels.
/// `scales` = 0 selects max_scales(). Throws ConfigError naming the feasible
/// maximum when the image is too small.
double ms_ssim(const ImageD& a, const ImageD& b, const SsimParams& params = {}, int scales = 5);
double ms_ssim(const Image8& a, const Image8& b, const SsimParams& params = {}, int scales = 5);

/// 2x2 average pooling (odd trailing rows/columns dropped).
ImageD downsample2(const ImageD& in);

// ---------------------------------------------------------------------------
// LPIPS via an external scorer
// ---------------------------------------------------------------------------

struct LpipsResult {
    std::optional<double> value;
    std::string reason;  // why value is absent
};

/// Runs `backend <a.png> <b.png>` and parses the single number it prints.
/// An empty backend yields "unavailable" without running anything.
class LpipsAdapter {
public:
    explicit LpipsAdapter(std::string backend_command = {}) : backend_(std::move(backend_command)) {}
    bool configured() const { return !backend_.empty(); }
    LpipsResult score(const Image8& a, const Image8& b, const std::filesystem::path& scratch_dir) const;
    LpipsResult score_files(const std::filesystem::path& a, const std::filesystem::path& b) const;

private:
    std::string backend_;
};

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct SampleMetrics {
    std::string id;
    double psnr = 0;
    double ssim = 0;
    double ms_ssim = 0;
    double mse = 0;
    double nmse = 0;
    std::optional<double> lpips;
    std::string lpips_note;
};

/// Scores one generated/reference pair with the five built-in metrics.
SampleMetrics score_pair(std::string id, const Image8& generated, const Image8& reference,
                         const SsimParams& params = {}, int ms_scales = 0);

struct MetricSummary {
    std::string metric;
    double mean = 0;
    double std = 0;  // population
    int n = 0;
    int excluded = 0;  // infinite PSNR or unavailable LPIPS samples
};

struct MetricReport {
    std::vector<SampleMetrics> per_sample;
    std::vector<MetricSummary> aggregate;  // psnr, ssim, lpips, ms_ssim, mse, nmse

    const MetricSummary& summary(const std::string& metric) const;
    std::string per_sample_csv() const;
    std::string aggregate_csv() const;
};

/// Mean and population std per metric. Infinite PSNR values and missing
/// LPIPS values are excluded and counted. Throws DataError on an empty list.
MetricReport aggregate(std::vector<SampleMetrics> per_sample);

/// Order of the metric columns in every table.
inline const std::array<const char*, 6> kMetricOrder{"psnr", "ssim", "lpips", "ms_ssim", "mse", "nmse"};

}  // namespace slabgan::metrics
