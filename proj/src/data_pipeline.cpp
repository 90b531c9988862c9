#include "deq/data_pipeline.hpp"

#include "deq/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

namespace deq {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
constexpr std::size_t kCifarRecord = 3073;
constexpr std::size_t kCifarPixels = 3072;

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset,
                        const std::filesystem::path& path) {
    if (offset + 4 > buf.size()) throw ParseError(path.string() + ": truncated header");
    return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
           (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(std::string_view tok, const std::filesystem::path& path) {
    while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\t')) tok.remove_prefix(1);
    while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\t' || tok.back() == '\r')) {
        tok.remove_suffix(1);
    }
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
        throw ParseError(path.string() + ": bad number '" + std::string(tok) + "'");
    }
    return v;
}

std::vector<std::string> data_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        lines.push_back(line);
    }
    return lines;
}

std::vector<double> split_doubles(const std::string& line, const std::filesystem::path& path) {
    std::vector<double> out;
    std::size_t start = 0;
    while (start <= line.size()) {
        const auto comma = line.find(',', start);
        const auto end = comma == std::string::npos ? line.size() : comma;
        out.push_back(parse_double(std::string_view(line).substr(start, end - start), path));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

void write_comment(std::ofstream& out, const std::string& comment) {
    if (comment.empty()) return;
    std::istringstream lines(comment);
    std::string line;
    while (std::getline(lines, line)) out << "# " << line << '\n';
}

}  // namespace

const char* to_string(Provenance p) {
    switch (p) {
        case Provenance::synthetic: return "synthetic";
        case Provenance::mnist: return "mnist";
        case Provenance::cifar10: return "cifar10";
        case Provenance::file: return "file";
    }
    return "unknown";
}

std::vector<std::pair<Eigen::Index, Eigen::Index>> parallel_pairs(const Matrix& x, double tol) {
    std::vector<std::pair<Eigen::Index, Eigen::Index>> out;
    const Vector norms = x.colwise().norm().transpose();
    const Matrix g = x.transpose() * x;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        for (Eigen::Index i = 0; i < j; ++i) {
            const double c = g(i, j) / (norms(i) * norms(j));
            if (std::abs(c) > 1.0 - tol) out.emplace_back(i, j);
        }
    }
    return out;
}

Dataset::Dataset(Matrix x, Vector y, Provenance provenance, const DatasetLimits& limits)
    : x_(std::move(x)), y_(std::move(y)), provenance_(provenance), limits_(limits) {
    if (x_.cols() == 0 || x_.rows() == 0) throw InputError("Dataset: empty input matrix");
    if (y_.size() != x_.cols()) throw InputError("Dataset: label count does not match n");
    require_finite(x_, "Dataset X");
    if (!y_.allFinite()) throw InputError("Dataset: non-finite label");

    const double target = std::sqrt(static_cast<double>(x_.rows()));
    for (Eigen::Index i = 0; i < x_.cols(); ++i) {
        const double nrm = x_.col(i).norm();
        if (std::abs(nrm - target) > limits_.norm_rel_tol * target) {
            throw AssumptionError("Dataset: column " + std::to_string(i) + " has norm " +
                                  fmt_double(nrm) + ", expected sqrt(d)");
        }
    }
    const auto pairs = parallel_pairs(x_, limits_.parallel_tol);
    if (!pairs.empty()) {
        std::string msg = "Dataset: parallel input pairs:";
        for (std::size_t k = 0; k < std::min<std::size_t>(pairs.size(), 10); ++k) {
            msg += " (" + std::to_string(pairs[k].first) + "," + std::to_string(pairs[k].second) +
                   ")";
        }
        throw AssumptionError(msg);
    }
    for (Eigen::Index i = 0; i < y_.size(); ++i) {
        if (std::abs(y_(i)) > limits_.y_cap) {
            throw AssumptionError("Dataset: |y_" + std::to_string(i) + "| exceeds label cap");
        }
    }
}

Dataset Dataset::with_labels(Vector y) const { return Dataset(x_, std::move(y), provenance_, limits_); }

Dataset gen_sphere_data(Eigen::Index n, Eigen::Index d, std::uint64_t seed, double y_cap) {
    if (n < 2) throw InputError("gen_sphere_data: n must be >= 2");
    if (d < 2) throw InputError("gen_sphere_data: d must be >= 2");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double radius = std::sqrt(static_cast<double>(d));

    auto draw_column = [&](Matrix& x, Eigen::Index j) {
        for (;;) {
            for (Eigen::Index i = 0; i < d; ++i) x(i, j) = normal(rng);
            const double nrm = x.col(j).norm();
            if (nrm > 0.0) {
                x.col(j) *= radius / nrm;
                return;
            }
        }
    };

    Matrix x(d, n);
    for (Eigen::Index j = 0; j < n; ++j) draw_column(x, j);
    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = std::clamp(normal(rng), -y_cap, y_cap);

    DatasetLimits limits;
    limits.y_cap = y_cap;
    for (int round = 0; round < 100; ++round) {
        const auto pairs = parallel_pairs(x, limits.parallel_tol);
        if (pairs.empty()) return Dataset(std::move(x), std::move(y), Provenance::synthetic, limits);
        for (const auto& pr : pairs) draw_column(x, pr.second);
    }
    throw AssumptionError("gen_sphere_data: could not remove parallel pairs");
}

Matrix normalize_to_sphere(const Matrix& raw) {
    require_finite(raw, "normalize_to_sphere");
    const double radius = std::sqrt(static_cast<double>(raw.rows()));
    Matrix out = raw;
    for (Eigen::Index j = 0; j < raw.cols(); ++j) {
        const double nrm = raw.col(j).norm();
        if (nrm == 0.0) {
            throw InputError("normalize_to_sphere: column " + std::to_string(j) + " is zero");
        }
        out.col(j) *= radius / nrm;
    }
    return out;
}

RawImages load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
    const auto ib = read_bytes(images);
    const auto lb = read_bytes(labels);

    if (read_be32(ib, 0, images) != kIdxImagesMagic) {
        throw ParseError(images.string() + ": bad IDX image magic");
    }
    if (read_be32(lb, 0, labels) != kIdxLabelsMagic) {
        throw ParseError(labels.string() + ": bad IDX label magic");
    }
    const std::size_t count = read_be32(ib, 4, images);
    const std::size_t rows = read_be32(ib, 8, images);
    const std::size_t cols = read_be32(ib, 12, images);
    const std::size_t label_count = read_be32(lb, 4, labels);
    if (count != label_count) {
        throw ParseError("IDX image/label count mismatch: " + std::to_string(count) + " vs " +
                         std::to_string(label_count));
    }
    const std::size_t d = rows * cols;
    if (ib.size() < 16 + count * d) throw ParseError(images.string() + ": truncated image data");
    if (lb.size() < 8 + count) throw ParseError(labels.string() + ": truncated label data");

    RawImages raw;
    raw.pixels.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(count));
    raw.labels.resize(count);
    for (std::size_t s = 0; s < count; ++s) {
        const unsigned char* px = ib.data() + 16 + s * d;
        for (std::size_t k = 0; k < d; ++k) {
            raw.pixels(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(s)) = px[k];
        }
        raw.labels[s] = lb[8 + s];
    }
    return raw;
}

RawImages load_cifar_bin(const std::filesystem::path& path) {
    const auto buf = read_bytes(path);
    if (buf.empty() || buf.size() % kCifarRecord != 0) {
        throw ParseError(path.string() + ": size is not a multiple of 3073");
    }
    const std::size_t count = buf.size() / kCifarRecord;
    RawImages raw;
    raw.pixels.resize(static_cast<Eigen::Index>(kCifarPixels), static_cast<Eigen::Index>(count));
    raw.labels.resize(count);
    for (std::size_t s = 0; s < count; ++s) {
        const unsigned char* rec = buf.data() + s * kCifarRecord;
        if (rec[0] > 9) {
            throw ParseError(path.string() + ": label byte " + std::to_string(rec[0]) +
                             " out of range in record " + std::to_string(s));
        }
        raw.labels[s] = rec[0];
        for (std::size_t k = 0; k < kCifarPixels; ++k) {
            raw.pixels(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(s)) = rec[1 + k];
        }
    }
    return raw;
}

Dataset subset_binary(const RawImages& raw, int class_a, int class_b, std::size_t per_class,
                      std::uint64_t seed) {
    if (class_a == class_b) throw InputError("subset_binary: classes must differ");
    if (per_class == 0) throw InputError("subset_binary: per_class must be positive");
    if (static_cast<std::size_t>(raw.pixels.cols()) != raw.labels.size()) {
        throw InputError("subset_binary: pixel/label count mismatch");
    }

    std::mt19937_64 rng(seed);
    const DatasetLimits limits;
    const double radius = std::sqrt(static_cast<double>(raw.pixels.rows()));

    std::vector<Eigen::Index> chosen;
    std::vector<double> labels;
    Matrix x(raw.pixels.rows(), static_cast<Eigen::Index>(2 * per_class));

    for (const int cls : {class_a, class_b}) {
        std::vector<Eigen::Index> pool;
        for (std::size_t s = 0; s < raw.labels.size(); ++s) {
            if (raw.labels[s] == cls) pool.push_back(static_cast<Eigen::Index>(s));
        }
        if (pool.size() < per_class) {
            throw InputError("subset_binary: class " + std::to_string(cls) + " has " +
                             std::to_string(pool.size()) + " samples, need " +
                             std::to_string(per_class));
        }
        std::shuffle(pool.begin(), pool.end(), rng);

        // Take from the shuffled pool, skipping images parallel to one already
        // taken (or zero images); exhausting the pool is an error.
        std::size_t next = 0;
        std::size_t taken = 0;
        std::vector<std::pair<Eigen::Index, Eigen::Index>> rejected;
        while (taken < per_class) {
            if (next >= pool.size()) {
                std::string msg = "subset_binary: class " + std::to_string(cls) +
                                  " has too many parallel/duplicate images; offending indices:";
                for (const auto& [a, b] : rejected) {
                    msg += " (" + std::to_string(a) + "," + std::to_string(b) + ")";
                }
                throw AssumptionError(msg);
            }
            const Eigen::Index s = pool[next++];
            const double nrm = raw.pixels.col(s).norm();
            if (nrm == 0.0) {
                rejected.emplace_back(s, s);
                continue;
            }
            const Vector col = raw.pixels.col(s) * (radius / nrm);
            bool parallel = false;
            for (std::size_t k = 0; k < chosen.size(); ++k) {
                const double c = x.col(static_cast<Eigen::Index>(k)).dot(col) / (radius * radius);
                if (std::abs(c) > 1.0 - limits.parallel_tol) {
                    rejected.emplace_back(chosen[k], s);
                    parallel = true;
                    break;
                }
            }
            if (parallel) continue;
            x.col(static_cast<Eigen::Index>(chosen.size())) = col;
            chosen.push_back(s);
            labels.push_back(cls == class_a ? -1.0 : 1.0);
            ++taken;
        }
    }
    Vector y = Eigen::Map<const Vector>(labels.data(), static_cast<Eigen::Index>(labels.size()));
    const Provenance prov = raw.pixels.rows() == static_cast<Eigen::Index>(kCifarPixels)
                                ? Provenance::cifar10
                                : Provenance::mnist;
    return Dataset(std::move(x), std::move(y), prov, limits);
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& x,
                      const std::string& comment) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    write_comment(out, comment);
    out << "d,n\n" << x.rows() << ',' << x.cols() << '\n';
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            if (i) out << ',';
            out << fmt_double(x(i, j));
        }
        out << '\n';
    }
}

Matrix read_matrix_csv(const std::filesystem::path& path) {
    const auto lines = data_lines(path);
    if (lines.size() < 2 || lines[0] != "d,n") throw ParseError(path.string() + ": missing d,n header");
    const auto dims = split_doubles(lines[1], path);
    if (dims.size() != 2 || dims[0] < 1 || dims[1] < 1) {
        throw ParseError(path.string() + ": bad dimensions line");
    }
    const auto d = static_cast<Eigen::Index>(dims[0]);
    const auto n = static_cast<Eigen::Index>(dims[1]);
    if (static_cast<Eigen::Index>(lines.size()) != 2 + n) {
        throw ParseError(path.string() + ": expected " + std::to_string(n) + " column rows");
    }
    Matrix x(d, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto vals = split_doubles(lines[static_cast<std::size_t>(2 + j)], path);
        if (static_cast<Eigen::Index>(vals.size()) != d) {
            throw ParseError(path.string() + ": column " + std::to_string(j) + " has wrong length");
        }
        for (Eigen::Index i = 0; i < d; ++i) x(i, j) = vals[static_cast<std::size_t>(i)];
    }
    return x;
}

void write_labels_csv(const std::filesystem::path& path, const Vector& y,
                      const std::string& comment) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    write_comment(out, comment);
    out << "y\n";
    for (Eigen::Index i = 0; i < y.size(); ++i) out << fmt_double(y(i)) << '\n';
}

Vector read_labels_csv(const std::filesystem::path& path) {
    const auto lines = data_lines(path);
    if (lines.empty() || lines[0] != "y") throw ParseError(path.string() + ": missing y header");
    Vector y(static_cast<Eigen::Index>(lines.size() - 1));
    for (std::size_t k = 1; k < lines.size(); ++k) {
        y(static_cast<Eigen::Index>(k - 1)) = parse_double(lines[k], path);
    }
    return y;
}

}  // namespace deq
