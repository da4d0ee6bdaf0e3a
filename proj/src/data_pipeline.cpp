#include "slabgan/data_pipeline.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <random>
#include <regex>
#include <set>
#include <sstream>

namespace slabgan::data {

namespace {

std::string upper(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

std::uint8_t round_to_u8(double v) {
    const double r = std::floor(v + 0.5);
    return static_cast<std::uint8_t>(std::clamp(r, 0.0, 255.0));
}

}  // namespace

Modality Modality::parse(std::string_view text) {
    const std::string u = upper(text);
    if (u == "T1") return {ModalityKind::T1, "T1"};
    if (u == "T2") return {ModalityKind::T2, "T2"};
    if (u == "FLAIR") return {ModalityKind::Flair, "FLAIR"};
    if (u == "PD") return {ModalityKind::PD, "PD"};
    if (text.empty()) throw DataError("modality tag must be nonempty");
    return {ModalityKind::Other, std::string(text)};
}

void VolumeRecord::validate() const {
    if (modality.tag.empty()) throw DataError("volume " + path.string() + " has an empty modality tag");
    if (shape[2] < 3) {
        throw DataError("volume " + path.string() + " has nz=" + std::to_string(shape[2]) +
                        "; three consecutive axial slices are required");
    }
}

void check_pairing(const PairedSample& pair) {
    const auto& s = pair.source.source;
    const auto& t = pair.target.source;
    if (s.patient_id != t.patient_id) throw DataError("pair mixes patients " + s.patient_id + " and " + t.patient_id);
    if (s.z_center != t.z_center) throw DataError("pair for " + s.patient_id + " mixes slice centres");
    if (pair.source.pixels.height != pair.target.pixels.height || pair.source.pixels.width != pair.target.pixels.width) {
        throw ShapeError("pair for " + s.patient_id + " has mismatched slab sizes");
    }
}

Image8 normalize_slice(const Slice& raw, std::string_view slice_name) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (float v : raw.data) {
        if (!std::isfinite(v)) throw DataError("non-finite intensity in " + std::string(slice_name));
        lo = std::min<double>(lo, v);
        hi = std::max<double>(hi, v);
    }
    Image8 out(raw.channels, raw.height, raw.width, 0);
    if (raw.data.empty() || !(hi > lo)) return out;
    const double range = hi - lo;
    for (std::size_t i = 0; i < raw.data.size(); ++i) out.data[i] = round_to_u8(255.0 * (raw.data[i] - lo) / range);
    return out;
}

Image8 resize_bilinear(const Image8& in, int out_height, int out_width) {
    if (out_height <= 0 || out_width <= 0) throw ShapeError("resize target must be positive");
    if (in.height == out_height && in.width == out_width) return in;

    // Source coordinate of output pixel d is (d + 0.5) * scale - 0.5, clamped at 0.
    struct Tap {
        int i0, i1;
        double w1;
    };
    auto taps = [](int in_size, int out_size) {
        std::vector<Tap> t(out_size);
        const double scale = static_cast<double>(in_size) / out_size;
        for (int d = 0; d < out_size; ++d) {
            double src = std::max((d + 0.5) * scale - 0.5, 0.0);
            int i0 = std::min(static_cast<int>(std::floor(src)), in_size - 1);
            int i1 = std::min(i0 + 1, in_size - 1);
            t[d] = {i0, i1, src - i0};
        }
        return t;
    };
    const auto ty = taps(in.height, out_height);
    const auto tx = taps(in.width, out_width);

    Image8 out(in.channels, out_height, out_width);
    for (int c = 0; c < in.channels; ++c) {
        for (int y = 0; y < out_height; ++y) {
            const Tap& a = ty[y];
            for (int x = 0; x < out_width; ++x) {
                const Tap& b = tx[x];
                const double top = in.at(c, a.i0, b.i0) * (1.0 - b.w1) + in.at(c, a.i0, b.i1) * b.w1;
                const double bottom = in.at(c, a.i1, b.i0) * (1.0 - b.w1) + in.at(c, a.i1, b.i1) * b.w1;
                out.at(c, y, x) = round_to_u8(top * (1.0 - a.w1) + bottom * a.w1);
            }
        }
    }
    return out;
}

int default_center(int nz) {
    if (nz < 3) throw DataError("volume has nz=" + std::to_string(nz) + "; at least 3 axial slices are required");
    return std::clamp(nz / 2, 1, nz - 2);
}

int default_center(const VolumeRecord& volume) { return default_center(volume.shape[2]); }

Slab25D build_slab(const Volume& volume, int z_center, SlabSource source, int size) {
    if (z_center < 1 || z_center > volume.nz() - 2) {
        throw std::out_of_range("slab centre " + std::to_string(z_center) + " outside [1, " +
                                std::to_string(volume.nz() - 2) + "]");
    }
    source.z_center = z_center;
    Slab25D slab{Image8(3, size, size), std::move(source)};
    for (int c = 0; c < 3; ++c) {
        const int z = z_center - 1 + c;
        const std::string name = slab.source.patient_id + "/" + slab.source.modality + " z=" + std::to_string(z);
        Image8 plane = resize_bilinear(normalize_slice(volume.axial(z), name), size, size);
        std::copy(plane.data.begin(), plane.data.end(),
                  slab.pixels.data.begin() + static_cast<std::ptrdiff_t>(c * slab.pixels.plane_size()));
    }
    return slab;
}

Slab25D build_slab(const VolumeRecord& record, int z_center) {
    record.validate();
    if (z_center < 1 || z_center > record.shape[2] - 2) {
        throw std::out_of_range("slab centre " + std::to_string(z_center) + " outside [1, " +
                                std::to_string(record.shape[2] - 2) + "] for " + record.path.string());
    }
    Volume vol = read_nifti(record.path);
    return build_slab(vol, z_center, {record.patient_id, record.modality.tag, z_center});
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

std::string DatasetManifest::serialize() const {
    std::string out = "# slabgan dataset manifest v1\n";
    out += fmt::format("dataset\t{}\n", dataset.empty() ? "-" : dataset);
    out += fmt::format("task\t{}\n", task.empty() ? "-" : task);
    out += fmt::format("split_ratio\t{}\n", split_ratio);
    out += fmt::format("seed\t{}\n", rng_seed);
    out += fmt::format("few_shot_cap\t{}\n", few_shot_cap ? std::to_string(*few_shot_cap) : "none");
    auto rows = [&](const char* side, const std::vector<ManifestEntry>& list) {
        for (const auto& e : list) {
            out += fmt::format("{}\t{}\t{}\t{}\t{}\n", side, e.patient_id, e.z_center, e.source.generic_string(),
                               e.target.generic_string());
        }
    };
    rows("train", train);
    rows("test", test);
    return out;
}

DatasetManifest DatasetManifest::parse(const std::string& text, fs::path base_dir) {
    DatasetManifest m;
    m.base_dir = std::move(base_dir);
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> f;
        std::stringstream ls(line);
        for (std::string tok; std::getline(ls, tok, '\t');) f.push_back(tok);
        auto bad = [&] { return DataError(fmt::format("manifest line {}: malformed '{}'", lineno, line)); };
        if (f.empty()) continue;
        const std::string& key = f[0];
        if (key == "train" || key == "test") {
            if (f.size() != 5) throw bad();
            ManifestEntry e{f[1], std::stoi(f[2]), fs::path(f[3]), fs::path(f[4])};
            (key == "train" ? m.train : m.test).push_back(std::move(e));
        } else if (f.size() != 2) {
            throw bad();
        } else if (key == "dataset") {
            m.dataset = f[1] == "-" ? "" : f[1];
        } else if (key == "task") {
            m.task = f[1] == "-" ? "" : f[1];
        } else if (key == "split_ratio") {
            m.split_ratio = std::stod(f[1]);
        } else if (key == "seed") {
            m.rng_seed = std::stoull(f[1]);
        } else if (key == "few_shot_cap") {
            if (f[1] == "none") m.few_shot_cap.reset();
            else m.few_shot_cap = std::stoi(f[1]);
        } else {
            throw bad();
        }
    }
    return m;
}

DatasetManifest DatasetManifest::load(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open manifest " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), path.parent_path());
}

void DatasetManifest::save(const fs::path& path) const { write_text_atomic(path, serialize()); }

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    // Bounded draws by rejection so the permutation only depends on the engine,
    // never on a standard-library distribution implementation.
    auto draw = [&](std::uint64_t bound) {
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t v;
        do v = rng();
        while (v >= limit);
        return v % bound;
    };
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[draw(i)]);
    return idx;
}

DatasetManifest split_dataset(std::vector<ManifestEntry> samples, double ratio, std::uint64_t seed,
                              std::optional<int> few_shot_cap) {
    if (samples.empty()) throw DataError("split_dataset: no samples");
    if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError(fmt::format("split ratio {} outside (0, 1)", ratio));
    if (few_shot_cap && *few_shot_cap < 1) throw ConfigError("few-shot cap must be >= 1");

    auto by_id = [](const ManifestEntry& a, const ManifestEntry& b) {
        return std::tie(a.patient_id, a.z_center) < std::tie(b.patient_id, b.z_center);
    };
    std::sort(samples.begin(), samples.end(), by_id);
    for (std::size_t i = 1; i < samples.size(); ++i) {
        if (samples[i].id() == samples[i - 1].id()) throw DataError("duplicate sample " + samples[i].id());
    }

    const auto n = samples.size();
    auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
    if (n >= 2) n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
    else n_train = 1;

    const auto perm = seeded_permutation(n, seed);
    DatasetManifest m;
    m.split_ratio = ratio;
    m.rng_seed = seed;
    m.few_shot_cap = few_shot_cap;
    std::size_t train_take = n_train;
    if (few_shot_cap) train_take = std::min<std::size_t>(train_take, static_cast<std::size_t>(*few_shot_cap));
    for (std::size_t k = 0; k < n; ++k) {
        if (k < train_take) m.train.push_back(samples[perm[k]]);
        else if (k >= n_train) m.test.push_back(samples[perm[k]]);
    }
    std::sort(m.train.begin(), m.train.end(), by_id);
    std::sort(m.test.begin(), m.test.end(), by_id);
    return m;
}

// ---------------------------------------------------------------------------
// Discovery + preprocessing
// ---------------------------------------------------------------------------

ModalityPatterns default_patterns() {
    return {
        {"T1", R"((t1n|[-_.]t1)\.nii(\.gz)?$)"},
        {"T2", R"((t2w|[-_.]t2)\.nii(\.gz)?$)"},
        {"FLAIR", R"((t2f|flair)\.nii(\.gz)?$)"},
        {"PD", R"([-_.]pd\.nii(\.gz)?$)"},
    };
}

std::vector<VolumeRecord> discover_volumes(const fs::path& root, const ModalityPatterns& patterns) {
    if (!fs::is_directory(root)) throw IoError("volume root is not a directory: " + root.string());

    std::vector<std::pair<Modality, std::regex>> compiled;
    for (const auto& [name, pattern] : patterns) {
        try {
            compiled.emplace_back(Modality::parse(name), std::regex(pattern, std::regex::icase | std::regex::ECMAScript));
        } catch (const std::regex_error& e) {
            throw ConfigError("invalid pattern for modality " + name + ": " + e.what());
        }
    }

    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        const std::string lower = [&] {
            std::string s = name;
            for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            return s;
        }();
        if (lower.ends_with(".nii") || lower.ends_with(".nii.gz")) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    std::vector<VolumeRecord> out;
    for (const auto& file : files) {
        const std::string name = file.filename().string();
        for (const auto& [modality, re] : compiled) {
            std::smatch match;
            if (!std::regex_search(name, match, re)) continue;
            VolumeRecord rec;
            rec.modality = modality;
            rec.path = file;
            const fs::path rel = fs::relative(file, root);
            if (std::distance(rel.begin(), rel.end()) > 1) {
                rec.patient_id = rel.begin()->string();
            } else {
                std::string prefix = name.substr(0, static_cast<std::size_t>(match.position(0)));
                while (!prefix.empty() && (prefix.back() == '-' || prefix.back() == '_' || prefix.back() == '.'))
                    prefix.pop_back();
                rec.patient_id = prefix.empty() ? file.stem().string() : prefix;
            }
            out.push_back(std::move(rec));
            break;
        }
    }
    return out;
}

PreprocessReport preprocess(const PreprocessOptions& opt) {
    PreprocessReport report;
    const auto volumes = discover_volumes(opt.volume_root, opt.patterns);
    report.volumes_matched = static_cast<int>(volumes.size());
    if (volumes.empty()) {
        std::string pats;
        for (const auto& [m, p] : opt.patterns) pats += "\n  " + m + ": " + p;
        throw DataError("no volumes matched under " + opt.volume_root.string() + "; patterns:" + pats);
    }

    const Modality src_mod = Modality::parse(opt.source_modality);
    const Modality tgt_mod = Modality::parse(opt.target_modality);

    std::map<std::string, std::map<std::string, const VolumeRecord*>> by_patient;
    for (const auto& v : volumes) {
        auto& slot = by_patient[v.patient_id][v.modality.tag];
        if (slot) {
            report.anomalies.emplace_back(v.path.string(), "duplicate " + v.modality.tag + " volume for patient; first kept");
            continue;
        }
        slot = &v;
    }

    const fs::path staging = opt.out_root / ".staging";
    fs::create_directories(staging);

    auto slab_name = [](const std::string& patient, const std::string& modality) {
        return patient + "_" + modality + ".png";
    };

    std::vector<ManifestEntry> entries;
    for (const auto& [patient, mods] : by_patient) {
        auto s = mods.find(src_mod.tag);
        auto t = mods.find(tgt_mod.tag);
        if (s == mods.end() || t == mods.end()) {
            report.anomalies.emplace_back(patient, "missing " + (s == mods.end() ? src_mod.tag : tgt_mod.tag) + " volume");
            continue;
        }
        try {
            Volume sv = read_nifti(s->second->path);
            Volume tv = read_nifti(t->second->path);
            if (sv.shape != tv.shape) throw DataError("source and target volumes differ in shape");
            const int zc = default_center(sv.nz());
            PairedSample pair{build_slab(sv, zc, {patient, src_mod.tag, zc}), build_slab(tv, zc, {patient, tgt_mod.tag, zc})};
            check_pairing(pair);
            write_png(staging / slab_name(patient, src_mod.tag), pair.source.pixels);
            write_png(staging / slab_name(patient, tgt_mod.tag), pair.target.pixels);
            entries.push_back({patient, zc, {}, {}});
        } catch (const std::exception& e) {
            report.anomalies.emplace_back(patient, e.what());
        }
    }

    std::string log;
    for (const auto& [subject, reason] : report.anomalies) log += subject + "\t" + reason + "\n";
    write_text_atomic(opt.out_root / "anomalies.log", log);

    if (entries.empty()) {
        fs::remove_all(staging);
        throw DataError("no usable " + src_mod.tag + "/" + tgt_mod.tag + " pairs; see " +
                        (opt.out_root / "anomalies.log").string());
    }

    DatasetManifest m = split_dataset(entries, opt.split_ratio, opt.seed, opt.few_shot_cap);
    m.dataset = opt.dataset.empty() ? fs::absolute(opt.volume_root).lexically_normal().filename().string() : opt.dataset;
    if (m.dataset.empty()) m.dataset = fs::absolute(opt.volume_root).lexically_normal().parent_path().filename().string();
    m.task = src_mod.tag + "->" + tgt_mod.tag;

    std::set<std::string> placed;
    auto place = [&](std::vector<ManifestEntry>& list, const std::string& dir) {
        fs::create_directories(opt.out_root / dir);
        for (auto& e : list) {
            e.source = fs::path(dir) / slab_name(e.patient_id, src_mod.tag);
            e.target = fs::path(dir) / slab_name(e.patient_id, tgt_mod.tag);
            fs::rename(staging / e.source.filename(), opt.out_root / e.source);
            fs::rename(staging / e.target.filename(), opt.out_root / e.target);
            placed.insert(e.patient_id);
        }
    };
    place(m.train, "train");
    place(m.test, "test");
    for (const auto& e : entries) {
        if (placed.count(e.patient_id)) continue;
        fs::create_directories(opt.out_root / "unused");
        for (const auto& mod : {src_mod.tag, tgt_mod.tag}) {
            fs::rename(staging / slab_name(e.patient_id, mod), opt.out_root / "unused" / slab_name(e.patient_id, mod));
        }
    }
    fs::remove_all(staging);

    report.pairs_written = static_cast<int>(entries.size());
    report.manifest_path = opt.out_root / "manifest.txt";
    m.base_dir = opt.out_root;
    m.save(report.manifest_path);
    report.manifest = std::move(m);
    return report;
}

}  // namespace slabgan::data
