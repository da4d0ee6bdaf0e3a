#include "slabgan/synthetic.hpp"

#include <fmt/format.h>

#include <cmath>
#include <random>

namespace slabgan::synthetic {

PhantomPair make_phantom(std::array<int, 3> shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double rx = 0.70 + 0.2 * u(rng), ry = 0.75 + 0.2 * u(rng), rz = 0.9 + 0.3 * u(rng);
    const double cx = 0.1 * (u(rng) - 0.5), cy = 0.1 * (u(rng) - 0.5);
    const double core = 0.25 + 0.15 * u(rng);
    const double freq = 2.0 + 3.0 * u(rng), phase = 6.283 * u(rng);
    std::normal_distribution<double> noise(0.0, 0.01);

    PhantomPair p;
    p.t1.shape = p.t2.shape = shape;
    const std::size_t n = std::size_t(shape[0]) * shape[1] * shape[2];
    p.t1.voxels.resize(n);
    p.t2.voxels.resize(n);
    std::size_t i = 0;
    for (int z = 0; z < shape[2]; ++z) {
        const double pz = 2.0 * (z + 0.5) / shape[2] - 1.0;
        for (int y = 0; y < shape[1]; ++y) {
            const double py = 2.0 * (y + 0.5) / shape[1] - 1.0 - cy;
            for (int x = 0; x < shape[0]; ++x, ++i) {
                const double px = 2.0 * (x + 0.5) / shape[0] - 1.0 - cx;
                const double r = std::sqrt(px * px / (rx * rx) + py * py / (ry * ry) + pz * pz / (rz * rz));
                double t1 = 0.0, t2 = 0.0;
                if (r < 1.0) {
                    const double texture = 0.08 * std::sin(freq * px * 3.0 + phase) * std::cos(freq * py * 3.0);
                    if (r < core) {
                        t1 = 0.25 + texture;
                        t2 = 0.95 - texture;
                    } else if (r > 0.88) {
                        t1 = 0.95;
                        t2 = 0.35;
                    } else {
                        t1 = 0.65 + texture;
                        t2 = 0.5 - 0.5 * texture;
                    }
                }
                p.t1.voxels[i] = static_cast<float>(100.0 * (t1 + noise(rng)));
                p.t2.voxels[i] = static_cast<float>(100.0 * (t2 + noise(rng)));
            }
        }
    }
    return p;
}

std::vector<std::string> write_phantom_dataset(const fs::path& root, int subjects, std::array<int, 3> shape,
                                               std::uint64_t seed, const std::string& prefix) {
    std::vector<std::string> ids;
    for (int s = 0; s < subjects; ++s) {
        const std::string id = fmt::format("{}{:03d}", prefix, s);
        const auto p = make_phantom(shape, seed * 1000003ULL + static_cast<std::uint64_t>(s));
        fs::create_directories(root / id);
        write_nifti(root / id / (id + "_t1.nii.gz"), p.t1);
        write_nifti(root / id / (id + "_t2.nii.gz"), p.t2);
        ids.push_back(id);
    }
    return ids;
}

}  // namespace slabgan::synthetic
