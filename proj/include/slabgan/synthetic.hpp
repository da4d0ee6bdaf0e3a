#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "slabgan/io.hpp"

namespace slabgan::synthetic {

namespace fs = std::filesystem;

/// A T1/T2-like pair of phantom volumes for one subject: an ellipsoidal head
/// with a fluid-filled core that is dark in T1 and bright in T2.
struct PhantomPair {
    Volume t1;
    Volume t2;
};

PhantomPair make_phantom(std::array<int, 3> shape, std::uint64_t seed);

/// Writes <root>/<prefix>NNN/<prefix>NNN_t1.nii.gz and _t2.nii.gz for
/// `subjects` phantoms and returns the subject ids.
std::vector<std::string> write_phantom_dataset(const fs::path& root, int subjects, std::array<int, 3> shape,
                                               std::uint64_t seed, const std::string& prefix = "sub");

}  // namespace slabgan::synthetic
