#pragma once

#include "deq/tensor_core.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace test_support {

// Fresh, empty scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("deq_unit_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline deq::Matrix gaussian(Eigen::Index rows, Eigen::Index cols, unsigned seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, scale);
    deq::Matrix a(rows, cols);
    for (Eigen::Index k = 0; k < a.size(); ++k) a.data()[k] = nd(rng);
    return a;
}

}  // namespace test_support
