#include "slabgan/io.hpp"

#include <png.h>
#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

namespace slabgan {

// ---------------------------------------------------------------------------
// PNG
// ---------------------------------------------------------------------------

void write_png(const fs::path& path, const Image8& image) {
    if (image.channels != 1 && image.channels != 3) {
        throw ShapeError("write_png: expected 1 or 3 channels, got " + std::to_string(image.channels));
    }
    if (path.has_parent_path()) fs::create_directories(path.parent_path());

    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    png.format = image.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;

    std::vector<std::uint8_t> interleaved(image.size());
    const std::size_t plane = image.plane_size();
    for (int c = 0; c < image.channels; ++c)
        for (std::size_t p = 0; p < plane; ++p) interleaved[p * image.channels + c] = image.data[c * plane + p];

    // Write to a temporary sibling so a crashed run never leaves a truncated file.
    fs::path tmp = path;
    tmp += ".tmp";
    if (!png_image_write_to_file(&png, tmp.c_str(), 0, interleaved.data(), 0, nullptr)) {
        std::string msg = png.message;
        png_image_free(&png);
        throw IoError("cannot write PNG " + path.string() + ": " + msg);
    }
    fs::rename(tmp, path);
}

Image8 read_png(const fs::path& path) {
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str())) {
        throw IoError("cannot read PNG " + path.string() + ": " + png.message);
    }
    const bool gray = (png.format & PNG_FORMAT_FLAG_COLOR) == 0;
    png.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    const int channels = gray ? 1 : 3;

    std::vector<std::uint8_t> interleaved(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, interleaved.data(), 0, nullptr)) {
        std::string msg = png.message;
        png_image_free(&png);
        throw IoError("cannot decode PNG " + path.string() + ": " + msg);
    }

    Image8 out(channels, static_cast<int>(png.height), static_cast<int>(png.width));
    const std::size_t plane = out.plane_size();
    for (int c = 0; c < channels; ++c)
        for (std::size_t p = 0; p < plane; ++p) out.data[c * plane + p] = interleaved[p * channels + c];
    return out;
}

// ---------------------------------------------------------------------------
// NIfTI-1
// ---------------------------------------------------------------------------

namespace {

constexpr int kHeaderSize = 348;

struct GzFile {
    gzFile handle = nullptr;
    GzFile(const fs::path& path, const char* mode) : handle(gzopen(path.c_str(), mode)) {}
    ~GzFile() {
        if (handle) gzclose(handle);
    }
    GzFile(const GzFile&) = delete;
    GzFile& operator=(const GzFile&) = delete;
};

template <class T>
T load(const unsigned char* p, bool swap) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    if (swap) {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
        std::memcpy(&v, b, sizeof(T));
    }
    return v;
}

template <class T>
void store(unsigned char* p, T v) {
    std::memcpy(p, &v, sizeof(T));
}

struct NiftiHeader {
    std::array<int, 3> shape{};
    int datatype = 0;
    int bitpix = 0;
    long vox_offset = 352;
    float slope = 0.0F;
    float inter = 0.0F;
    bool swap = false;
};

NiftiHeader parse_header(const unsigned char* h, const fs::path& path) {
    NiftiHeader hdr;
    int sizeof_hdr = load<int>(h, false);
    if (sizeof_hdr != kHeaderSize) {
        if (load<int>(h, true) != kHeaderSize) throw IoError("not a NIfTI-1 file: " + path.string());
        hdr.swap = true;
    }
    if (std::memcmp(h + 344, "n+1", 3) != 0 && std::memcmp(h + 344, "ni1", 3) != 0) {
        throw IoError("bad NIfTI magic in " + path.string());
    }
    if (std::memcmp(h + 344, "ni1", 3) == 0) {
        throw IoError("two-file NIfTI (.hdr/.img) is not supported: " + path.string());
    }
    const int ndim = load<short>(h + 40, hdr.swap);
    if (ndim < 3 || ndim > 7) throw IoError("NIfTI volume must have >= 3 dimensions: " + path.string());
    for (int d = 0; d < 3; ++d) {
        hdr.shape[d] = load<short>(h + 42 + 2 * d, hdr.swap);
        if (hdr.shape[d] <= 0) throw IoError("non-positive NIfTI dimension in " + path.string());
    }
    hdr.datatype = load<short>(h + 70, hdr.swap);
    hdr.bitpix = load<short>(h + 72, hdr.swap);
    hdr.vox_offset = static_cast<long>(load<float>(h + 108, hdr.swap));
    hdr.slope = load<float>(h + 112, hdr.swap);
    hdr.inter = load<float>(h + 116, hdr.swap);
    if (hdr.vox_offset < kHeaderSize) hdr.vox_offset = 352;
    return hdr;
}

NiftiHeader read_header(GzFile& f, const fs::path& path) {
    if (!f.handle) throw IoError("cannot open volume " + path.string());
    unsigned char h[kHeaderSize];
    if (gzread(f.handle, h, kHeaderSize) != kHeaderSize) throw IoError("truncated NIfTI header: " + path.string());
    return parse_header(h, path);
}

template <class T>
void decode(const std::vector<unsigned char>& raw, std::vector<float>& out, bool swap) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(load<T>(raw.data() + i * sizeof(T), swap));
}

}  // namespace

Slice Volume::axial(int z) const {
    if (z < 0 || z >= nz()) throw std::out_of_range("axial slice " + std::to_string(z) + " outside [0, " + std::to_string(nz()) + ")");
    Slice s(1, ny(), nx());
    const std::size_t plane = static_cast<std::size_t>(nx()) * ny();
    std::copy_n(voxels.begin() + static_cast<std::ptrdiff_t>(plane * z), plane, s.data.begin());
    return s;
}

std::array<int, 3> read_nifti_shape(const fs::path& path) {
    GzFile f(path, "rb");
    return read_header(f, path).shape;
}

Volume read_nifti(const fs::path& path) {
    GzFile f(path, "rb");
    const NiftiHeader hdr = read_header(f, path);

    int bytes = 0;
    switch (hdr.datatype) {
        case 2: case 256: bytes = 1; break;
        case 4: case 512: bytes = 2; break;
        case 8: case 768: case 16: bytes = 4; break;
        case 64: bytes = 8; break;
        default: throw IoError("unsupported NIfTI datatype " + std::to_string(hdr.datatype) + " in " + path.string());
    }

    if (gzseek(f.handle, hdr.vox_offset, SEEK_SET) < 0) throw IoError("cannot seek to voxel data in " + path.string());

    Volume vol;
    vol.shape = hdr.shape;
    const std::size_t count = static_cast<std::size_t>(hdr.shape[0]) * hdr.shape[1] * hdr.shape[2];
    std::vector<unsigned char> raw(count * bytes);
    std::size_t done = 0;
    while (done < raw.size()) {
        const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(raw.size() - done, 1u << 30));
        const int got = gzread(f.handle, raw.data() + done, chunk);
        if (got <= 0) throw IoError("truncated NIfTI voxel data in " + path.string());
        done += static_cast<std::size_t>(got);
    }

    vol.voxels.resize(count);
    switch (hdr.datatype) {
        case 2: decode<std::uint8_t>(raw, vol.voxels, hdr.swap); break;
        case 256: decode<std::int8_t>(raw, vol.voxels, hdr.swap); break;
        case 4: decode<std::int16_t>(raw, vol.voxels, hdr.swap); break;
        case 512: decode<std::uint16_t>(raw, vol.voxels, hdr.swap); break;
        case 8: decode<std::int32_t>(raw, vol.voxels, hdr.swap); break;
        case 768: decode<std::uint32_t>(raw, vol.voxels, hdr.swap); break;
        case 16: decode<float>(raw, vol.voxels, hdr.swap); break;
        case 64: decode<double>(raw, vol.voxels, hdr.swap); break;
    }
    if (hdr.slope != 0.0F && std::isfinite(hdr.slope)) {
        for (float& v : vol.voxels) v = v * hdr.slope + hdr.inter;
    }
    return vol;
}

void write_nifti(const fs::path& path, const Volume& volume) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());

    std::vector<unsigned char> header(352, 0);
    unsigned char* h = header.data();
    store<int>(h, kHeaderSize);
    store<short>(h + 40, 3);
    for (int d = 0; d < 3; ++d) store<short>(h + 42 + 2 * d, static_cast<short>(volume.shape[d]));
    for (int d = 3; d < 8; ++d) store<short>(h + 42 + 2 * d, 1);
    store<short>(h + 70, 16);
    store<short>(h + 72, 32);
    for (int d = 0; d < 8; ++d) store<float>(h + 76 + 4 * d, 1.0F);
    store<float>(h + 108, 352.0F);
    store<float>(h + 112, 1.0F);
    std::memcpy(h + 344, "n+1", 4);

    const bool gz = path.extension() == ".gz";
    GzFile f(path, gz ? "wb6" : "wbT");
    if (!f.handle) throw IoError("cannot create volume " + path.string());
    const auto bytes = static_cast<unsigned>(volume.voxels.size() * sizeof(float));
    if (gzwrite(f.handle, header.data(), static_cast<unsigned>(header.size())) != static_cast<int>(header.size()) ||
        gzwrite(f.handle, volume.voxels.data(), bytes) != static_cast<int>(bytes)) {
        throw IoError("short write to " + path.string());
    }
}

void write_text_atomic(const fs::path& path, const std::string& contents) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << contents;
        if (!out) throw IoError("short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

}  // namespace slabgan
