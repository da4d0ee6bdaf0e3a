#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "slabgan/image.hpp"
#include "slabgan/io.hpp"

namespace slabgan::data {

namespace fs = std::filesystem;

/// Edge length of every stored slab.
inline constexpr int kSlabSize = 512;

enum class ModalityKind { T1, T2, Flair, PD, Other };

struct Modality {
    ModalityKind kind = ModalityKind::Other;
    std::string tag;  // canonical text, never empty

    /// "t1", "T1" -> T1; "flair" -> FLAIR; anything else is kept verbatim as Other.
    static Modality parse(std::string_view text);
    bool operator==(const Modality& o) const { return tag == o.tag; }
};

struct VolumeRecord {
    std::string patient_id;
    Modality modality;
    fs::path path;
    std::array<int, 3> shape{0, 0, 0};  // nx, ny, nz

    /// Checks nz >= 3 and a nonempty modality tag.
    void validate() const;
};

struct SlabSource {
    std::string patient_id;
    std::string modality;
    int z_center = 0;
};

/// Three consecutive axial slices stacked as channels (z-1, z, z+1).
struct Slab25D {
    Image8 pixels;  // (3, kSlabSize, kSlabSize)
    SlabSource source;
};

struct PairedSample {
    Slab25D source;
    Slab25D target;
};

/// Checks patient id, slice centre and spatial shape agree on both sides.
void check_pairing(const PairedSample& pair);

// ---------------------------------------------------------------------------
// Slice-level operations
// ---------------------------------------------------------------------------

/// Linear min-max map of a finite slice onto [0, 255] with round-half-up.
/// A uniform slice maps to all zeros. Throws DataError naming `slice_name`
/// when a NaN or Inf is present.
Image8 normalize_slice(const Slice& raw, std::string_view slice_name = "slice");

/// Bilinear resize with half-pixel-centred sampling (edge-clamped), rounded
/// half-up back to 8 bits. Applies per channel.
Image8 resize_bilinear(const Image8& in, int out_height, int out_width);

/// floor(nz / 2) clamped to [1, nz - 2]; throws DataError when nz < 3.
int default_center(int nz);
int default_center(const VolumeRecord& volume);

/// Normalizes slices z-1, z, z+1 independently, resizes each to `size`, and
/// stacks them in that channel order.
Slab25D build_slab(const Volume& volume, int z_center, SlabSource source, int size = kSlabSize);

/// Reads the volume from disk (IoError with the path on failure) and builds the slab.
Slab25D build_slab(const VolumeRecord& volume, int z_center);

// ---------------------------------------------------------------------------
// Manifests and splits
// ---------------------------------------------------------------------------

struct ManifestEntry {
    std::string patient_id;
    int z_center = 0;
    fs::path source;  // slab PNG, relative to the manifest directory unless absolute
    fs::path target;

    std::string id() const { return patient_id + ":z" + std::to_string(z_center); }
    bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
    std::string dataset;  // provenance tag, e.g. the volume root's name
    std::string task;     // e.g. "T1->T2"
    double split_ratio = 0.8;
    std::uint64_t rng_seed = 0;
    std::optional<int> few_shot_cap;
    std::vector<ManifestEntry> train;
    std::vector<ManifestEntry> test;

    fs::path base_dir;  // where relative paths resolve; not serialized

    fs::path resolve(const fs::path& p) const { return p.is_absolute() ? p : base_dir / p; }

    std::string serialize() const;
    static DatasetManifest parse(const std::string& text, fs::path base_dir = {});
    static DatasetManifest load(const fs::path& path);
    void save(const fs::path& path) const;
};

/// Deterministic shuffle-and-cut of `samples` into train/test. Input order is
/// irrelevant (samples are sorted by id first). The train side is truncated to
/// `few_shot_cap` when given; the test side is never touched.
DatasetManifest split_dataset(std::vector<ManifestEntry> samples, double ratio, std::uint64_t seed,
                              std::optional<int> few_shot_cap = std::nullopt);

/// Fisher-Yates permutation of [0, n) fully determined by `seed`.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Volume discovery and the preprocessing run
// ---------------------------------------------------------------------------

/// Modality name -> ECMAScript regex matched (case-insensitively) against file names.
using ModalityPatterns = std::map<std::string, std::string>;

/// BraTS 2023 style (t1n/t2w/t2f) and IXI style (-T1/-T2/-PD) names.
ModalityPatterns default_patterns();

/// Files under `root` whose names end in .nii/.nii.gz and match a pattern.
/// The patient id is the first directory level below `root`, or the file-name
/// prefix before the match for files directly in `root`.
std::vector<VolumeRecord> discover_volumes(const fs::path& root, const ModalityPatterns& patterns);

struct PreprocessOptions {
    fs::path volume_root;
    fs::path out_root;
    std::string source_modality = "T1";
    std::string target_modality = "T2";
    ModalityPatterns patterns = default_patterns();
    double split_ratio = 0.8;
    std::uint64_t seed = 42;
    std::optional<int> few_shot_cap;
    std::string dataset;  // defaults to volume_root's directory name
};

struct PreprocessReport {
    int volumes_matched = 0;
    int pairs_written = 0;
    std::vector<std::pair<std::string, std::string>> anomalies;  // (subject, reason)
    fs::path manifest_path;
    DatasetManifest manifest;
};

/// Builds one central slab pair per patient, splits, and writes
/// `<out>/{train,test}/<patient>_<modality>.png`, `<out>/manifest.txt`
/// and `<out>/anomalies.log`. Slabs cut by the few-shot cap go to `<out>/unused/`.
/// Throws DataError when no volume matches.
PreprocessReport preprocess(const PreprocessOptions& options);

}  // namespace slabgan::data
