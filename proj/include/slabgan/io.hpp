#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "slabgan/image.hpp"

namespace slabgan {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// PNG (8-bit gray or RGB)
// ---------------------------------------------------------------------------

/// Writes a 1- or 3-channel image as an 8-bit PNG.
void write_png(const fs::path& path, const Image8& image);

/// Reads an 8-bit gray/RGB(A) PNG. Gray stays 1 channel, RGB(A) becomes 3.
Image8 read_png(const fs::path& path);

// ---------------------------------------------------------------------------
// NIfTI-1 volumes (.nii, .nii.gz)
// ---------------------------------------------------------------------------

/// A scalar 3D volume stored x-fastest, i.e. index = x + nx * (y + ny * z).
struct Volume {
    std::array<int, 3> shape{0, 0, 0};  // nx, ny, nz
    std::vector<float> voxels;

    int nx() const { return shape[0]; }
    int ny() const { return shape[1]; }
    int nz() const { return shape[2]; }

    /// Axial slice z as an (ny rows, nx columns) image.
    Slice axial(int z) const;
};

/// Reads only the header and returns (nx, ny, nz).
std::array<int, 3> read_nifti_shape(const fs::path& path);

/// Reads a NIfTI-1 volume; scl_slope/scl_inter are applied when slope != 0.
Volume read_nifti(const fs::path& path);

/// Writes a float32 NIfTI-1 volume; gzip-compressed when the name ends in .gz.
void write_nifti(const fs::path& path, const Volume& volume);

/// Writes `contents` to `path` via a temporary sibling and an atomic rename.
void write_text_atomic(const fs::path& path, const std::string& contents);

}  // namespace slabgan
