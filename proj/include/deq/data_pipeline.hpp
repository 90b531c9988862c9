#pragma once

#include "deq/tensor_core.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace deq {

enum class Provenance { synthetic, mnist, cifar10, file };

const char* to_string(Provenance p);

struct DatasetLimits {
    double norm_rel_tol = 1e-8;
    double parallel_tol = 1e-9;  // |cos| must stay <= 1 - parallel_tol
    double y_cap = 10.0;
};

// Inputs X (d x n, columns are samples) with labels y. Construction validates
// that every column has norm sqrt(d), no two columns are parallel, and
// |y_i| <= y_cap; violations throw AssumptionError.
class Dataset {
public:
    Dataset(Matrix x, Vector y, Provenance provenance, const DatasetLimits& limits = {});

    const Matrix& X() const noexcept { return x_; }
    const Vector& y() const noexcept { return y_; }
    Eigen::Index d() const noexcept { return x_.rows(); }
    Eigen::Index n() const noexcept { return x_.cols(); }
    Provenance provenance() const noexcept { return provenance_; }

    Dataset with_labels(Vector y) const;

private:
    Matrix x_;
    Vector y_;
    Provenance provenance_;
    DatasetLimits limits_;
};

// Pairs (i, j), i < j, whose |cos| exceeds 1 - tol.
std::vector<std::pair<Eigen::Index, Eigen::Index>> parallel_pairs(const Matrix& x, double tol);

Dataset gen_sphere_data(Eigen::Index n, Eigen::Index d, std::uint64_t seed, double y_cap = 10.0);

Matrix normalize_to_sphere(const Matrix& raw);

// Raw image data with integer class labels (0..255 for IDX, 0..9 for CIFAR).
struct RawImages {
    Matrix pixels;  // d x count, byte values as doubles
    std::vector<int> labels;
};

RawImages load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);
RawImages load_cifar_bin(const std::filesystem::path& path);

// Balanced binary task: class_a -> y = -1, class_b -> y = +1.
Dataset subset_binary(const RawImages& raw, int class_a, int class_b, std::size_t per_class,
                      std::uint64_t seed);

// Matrix CSV: first line "d,n", second line the two counts, then n lines each
// holding one column (d values, %.17g). Lines starting with '#' are skipped.
void write_matrix_csv(const std::filesystem::path& path, const Matrix& x,
                      const std::string& comment = {});
Matrix read_matrix_csv(const std::filesystem::path& path);

// Label CSV: header "y" then one value per line.
void write_labels_csv(const std::filesystem::path& path, const Vector& y,
                      const std::string& comment = {});
Vector read_labels_csv(const std::filesystem::path& path);

}  // namespace deq
