#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "randls/errors.hpp"
#include "randls/matrix.hpp"
#include "randls/matrix_io.hpp"
#include "randls/problem.hpp"
#include "randls/rng.hpp"
#include "randls/sketch.hpp"
#include "randls/solver.hpp"

namespace randls {

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

/// Raster images as flat row-major vectors with entries in [0, 1], plus class
/// labels in 0..n_classes-1.
struct ImageDataset {
    std::vector<Vector> images;
    std::vector<int> labels;
    Index width = 0;
    Index height = 0;
    Index n_classes = 0;

    Index size() const { return Index(images.size()); }
    Index dim() const { return width * height; }
};

namespace detail {

inline std::uint32_t get_u32_be(std::istream& is, const std::string& path, const char* what) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw ParseError(path + ": truncated " + what);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

inline void put_u32_be(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

} // namespace detail

inline constexpr std::uint32_t kIdxImageMagic = 2051; // 0x00000803
inline constexpr std::uint32_t kIdxLabelMagic = 2049; // 0x00000801

/// Reads an IDX image/label file pair (the MNIST layout: big-endian u32 magic
/// and dimension sizes, then raw unsigned bytes). Pixels are scaled by 1/255;
/// image and label counts are cross-checked.
inline ImageDataset read_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw ParseError("cannot open " + images_path);
    const std::uint32_t magic = detail::get_u32_be(imgs, images_path, "magic");
    if (magic != kIdxImageMagic)
        throw ParseError(images_path + ": bad image magic " + std::to_string(magic) + " (expected " +
                         std::to_string(kIdxImageMagic) + ")");
    const std::uint32_t count = detail::get_u32_be(imgs, images_path, "image count");
    const std::uint32_t rows = detail::get_u32_be(imgs, images_path, "row count");
    const std::uint32_t cols = detail::get_u32_be(imgs, images_path, "column count");
    if (rows == 0 || cols == 0) throw ParseError(images_path + ": zero image dimensions");

    ImageDataset ds;
    ds.height = Index(rows);
    ds.width = Index(cols);
    const std::size_t pixels = std::size_t(rows) * cols;
    std::vector<unsigned char> buf(pixels);
    ds.images.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        imgs.read(reinterpret_cast<char*>(buf.data()), std::streamsize(pixels));
        if (!imgs) throw ParseError(images_path + ": truncated pixel payload at image " + std::to_string(i));
        Vector v(static_cast<Index>(pixels));
        for (std::size_t p = 0; p < pixels; ++p) v(Index(p)) = double(buf[p]) / 255.0;
        ds.images.push_back(std::move(v));
    }
    imgs.peek();
    if (!imgs.eof()) throw ParseError(images_path + ": trailing bytes after pixel payload");

    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) throw ParseError("cannot open " + labels_path);
    const std::uint32_t lmagic = detail::get_u32_be(labs, labels_path, "magic");
    if (lmagic != kIdxLabelMagic)
        throw ParseError(labels_path + ": bad label magic " + std::to_string(lmagic) + " (expected " +
                         std::to_string(kIdxLabelMagic) + ")");
    const std::uint32_t lcount = detail::get_u32_be(labs, labels_path, "label count");
    if (lcount != count)
        throw ParseError(labels_path + ": label count " + std::to_string(lcount) + " != image count " +
                         std::to_string(count));
    ds.labels.resize(lcount);
    for (std::uint32_t i = 0; i < lcount; ++i) {
        const int c = labs.get();
        if (c == EOF) throw ParseError(labels_path + ": truncated label payload at label " + std::to_string(i));
        ds.labels[i] = c;
        ds.n_classes = std::max<Index>(ds.n_classes, c + 1);
    }
    labs.peek();
    if (!labs.eof()) throw ParseError(labels_path + ": trailing bytes after label payload");
    return ds;
}

/// Writes a dataset back to an IDX pair, re-quantizing pixels to bytes.
inline void write_idx(const ImageDataset& ds, const std::string& images_path, const std::string& labels_path) {
    std::ofstream imgs(images_path, std::ios::binary);
    if (!imgs) throw ParseError("cannot open " + images_path + " for writing");
    detail::put_u32_be(imgs, kIdxImageMagic);
    detail::put_u32_be(imgs, std::uint32_t(ds.images.size()));
    detail::put_u32_be(imgs, std::uint32_t(ds.height));
    detail::put_u32_be(imgs, std::uint32_t(ds.width));
    for (const auto& img : ds.images)
        for (Index p = 0; p < img.size(); ++p)
            imgs.put(char(static_cast<unsigned char>(std::lround(std::clamp(img(p), 0.0, 1.0) * 255.0))));
    if (!imgs) throw ParseError("write failed for " + images_path);

    std::ofstream labs(labels_path, std::ios::binary);
    if (!labs) throw ParseError("cannot open " + labels_path + " for writing");
    detail::put_u32_be(labs, kIdxLabelMagic);
    detail::put_u32_be(labs, std::uint32_t(ds.labels.size()));
    for (int c : ds.labels) labs.put(char(static_cast<unsigned char>(c)));
    if (!labs) throw ParseError("write failed for " + labels_path);
}

// ---------------------------------------------------------------------------
// Rotation augmentation
// ---------------------------------------------------------------------------

/// Beta(2,2) deviate as the median of three independent uniforms.
inline double beta22(Rng& rng) {
    const double a = rng.next_unit(), b = rng.next_unit(), c = rng.next_unit();
    return std::max(std::min(a, b), std::min(std::max(a, b), c));
}

/// Rotates a raster about its center by the given angle (degrees) with
/// bilinear interpolation; samples falling outside the frame read as 0.
/// A zero angle reproduces the input exactly.
inline Vector rotate_image(const Vector& img, Index width, Index height, double angle_degrees) {
    if (img.size() != width * height) throw DimensionError("rotate_image: raster size mismatch");
    const double theta = angle_degrees * std::numbers::pi / 180.0;
    const double c = std::cos(theta), s = std::sin(theta);
    const double cx = double(width - 1) / 2.0, cy = double(height - 1) / 2.0;
    Vector out = Vector::Zero(img.size());
    for (Index y = 0; y < height; ++y)
        for (Index x = 0; x < width; ++x) {
            const double dx = double(x) - cx, dy = double(y) - cy;
            const double sx = c * dx + s * dy + cx;
            const double sy = -s * dx + c * dy + cy;
            const double fx = std::floor(sx), fy = std::floor(sy);
            const double wx = sx - fx, wy = sy - fy;
            auto at = [&](double px, double py) -> double {
                const Index ix = Index(px), iy = Index(py);
                if (px < 0 || py < 0 || ix >= width || iy >= height) return 0.0;
                return img(iy * width + ix);
            };
            out(y * width + x) = (1 - wx) * (1 - wy) * at(fx, fy) + wx * (1 - wy) * at(fx + 1, fy) +
                                 (1 - wx) * wy * at(fx, fy + 1) + wx * wy * at(fx + 1, fy + 1);
        }
    return out;
}

/// Random rotation by 20 (eta - 0.5) degrees, eta ~ Beta(2,2); the angle is
/// always within +-10 degrees.
inline Vector augment_rotate(const Vector& img, Index width, Index height, Rng& rng) {
    return rotate_image(img, width, height, 20.0 * (beta22(rng) - 0.5));
}

/// Appends `rotations` randomly rotated copies of every image.
inline ImageDataset augment_dataset(const ImageDataset& ds, int rotations, std::uint64_t seed) {
    if (rotations < 0) throw ArgumentError("augment_dataset: rotations must be nonnegative");
    if (ds.height < 2 || ds.width < 2) throw ArgumentError("augment_dataset: rasters too small to rotate");
    ImageDataset out = ds;
    Rng rng(seed);
    for (int r = 0; r < rotations; ++r)
        for (std::size_t i = 0; i < ds.images.size(); ++i) {
            out.images.push_back(augment_rotate(ds.images[i], ds.width, ds.height, rng));
            out.labels.push_back(ds.labels[i]);
        }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic blobs (desk-scale stand-in for MNIST)
// ---------------------------------------------------------------------------

/// Gaussian blobs in [0, 1]^d with deterministic class centers (so train and
/// test splits drawn with different seeds share the same geometry).
inline ImageDataset make_blobs(Index m, Index d, Index n_classes, std::uint64_t seed, double spread = 0.08,
                               double offset = 0.15) {
    if (m < 1 || d < 1 || n_classes < 2) throw ArgumentError("make_blobs: need m >= 1, d >= 1, n_classes >= 2");
    int bits = 1;
    while ((Index(1) << bits) < n_classes) ++bits;
    ImageDataset ds;
    ds.width = d;
    ds.height = 1;
    ds.n_classes = n_classes;
    Rng rng(seed);
    for (Index i = 0; i < m; ++i) {
        const Index cls = i % n_classes;
        Vector v(d);
        for (Index j = 0; j < d; ++j) {
            const double sign = ((cls >> (j % bits)) & 1) ? 1.0 : -1.0;
            v(j) = std::clamp(0.5 + sign * offset + spread * rng.next_normal(), 0.0, 1.0);
        }
        ds.images.push_back(std::move(v));
        ds.labels.push_back(int(cls));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// The model
// ---------------------------------------------------------------------------

/// Single-hidden-layer network with fixed random sigmoid nodes
/// h_j(xi) = 1 / (1 + exp(-d_j . xi + delta_j)); training fits only the
/// output weights by linear least squares.
struct ElmModel {
    Matrix d_weights; // n_hidden x d
    Vector biases;    // n_hidden
    std::optional<Matrix> out_weights; // n_hidden x n_classes, set by training
    Index n_classes = 0;

    Index n_hidden() const { return d_weights.rows(); }
    Index dim() const { return d_weights.cols(); }
    bool trained() const { return out_weights.has_value(); }
};

/// Hidden weights uniform on [-1, 1], biases uniform on [0, 1].
inline ElmModel init_hidden(Index n_hidden, Index d, std::uint64_t seed) {
    if (n_hidden < 1 || d < 1) throw ArgumentError("init_hidden: need n_hidden >= 1 and d >= 1");
    ElmModel m;
    Rng rng(seed);
    m.d_weights.resize(n_hidden, d);
    for (Index i = 0; i < n_hidden; ++i)
        for (Index j = 0; j < d; ++j) m.d_weights(i, j) = 2.0 * rng.next_unit() - 1.0;
    m.biases.resize(n_hidden);
    for (Index i = 0; i < n_hidden; ++i) m.biases(i) = rng.next_unit();
    return m;
}

inline Vector feature_map(const ElmModel& m, const Vector& xi) {
    if (xi.size() != m.dim()) throw DimensionError("feature_map: input dimension mismatch");
    Vector t = m.d_weights * xi - m.biases;
    return t.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

/// Hidden-layer output matrix H (row i = h(xi_i)) and the +-1 one-vs-rest
/// target matrix Y (+1 in the column of the true class).
inline std::pair<Matrix, Matrix> build_training(const ElmModel& m, const ImageDataset& ds) {
    if (ds.size() == 0) throw ArgumentError("build_training: empty dataset");
    Matrix h(ds.size(), m.n_hidden());
    Matrix y = Matrix::Constant(ds.size(), ds.n_classes, -1.0);
    for (Index i = 0; i < ds.size(); ++i) {
        h.row(i) = feature_map(m, ds.images[std::size_t(i)]).transpose();
        const int label = ds.labels[std::size_t(i)];
        if (label < 0 || label >= ds.n_classes)
            throw ArgumentError("build_training: label " + std::to_string(label) + " out of range at row " +
                                std::to_string(i));
        y(i, label) = 1.0;
    }
    return {std::move(h), std::move(y)};
}

enum class TrainMethod { Sqn, QrBaseline };

/// Training configuration for the stochastic path: sparse Rademacher sketch
/// with ell = p = 50, lambda1 = 1e-5, harmonic steps, tol 1e-4, at most
/// 1000 iterations from a zero initial guess.
struct ElmTrainConfig {
    Index ell = 50;
    Index p = 0; // 0 = same as ell
    double lambda1 = 1e-5;
    long max_iters = 1000;
    double tol = 1e-4;
    StopMode stop_mode = StopMode::Both;
};

struct TrainOutcome {
    ElmModel model;
    std::optional<SolveReport> report; // stochastic path only
};

inline TrainOutcome train(const ElmModel& base, const ImageDataset& ds, TrainMethod method, std::uint64_t seed = 0,
                          const ElmTrainConfig& cfg = {}) {
    auto [h, y] = build_training(base, ds);
    if (h.rows() < h.cols())
        std::cerr << "randls: warning: only " << h.rows() << " training rows for " << h.cols()
                  << " hidden nodes; H cannot have full column rank\n";
    TrainOutcome out;
    out.model = base;
    out.model.n_classes = ds.n_classes;
    if (method == TrainMethod::QrBaseline) {
        out.model.out_weights = qr_solve(h, y);
        return out;
    }
    LsProblem problem;
    problem.a = std::move(h);
    problem.rhs = std::move(y);
    const Index ell = std::min(cfg.ell, problem.m());
    const Index p = cfg.p > 0 ? std::min(cfg.p, problem.m()) : std::min(ell, problem.m());
    SketchSpec spec = SparseRademacherSpec{problem.m(), ell, p};
    StoppingRule rule{cfg.max_iters, cfg.tol, 10, cfg.stop_mode};
    out.report = run_multi_rhs(problem, spec, HarmonicStep{1.0}, QuasiNewton{cfg.lambda1, 0.0}, rule, {}, seed);
    out.model.out_weights = out.report->final_x;
    return out;
}

/// Predicted class argmax_j h(xi) . x_j, ties broken toward the smaller
/// class index.
inline int classify(const ElmModel& m, const Vector& xi) {
    if (!m.trained()) throw StateError("classify: model has no trained output weights");
    const Vector scores = m.out_weights->transpose() * feature_map(m, xi);
    int best = 0;
    for (Index j = 1; j < scores.size(); ++j)
        if (scores(j) > scores(best)) best = int(j);
    return best;
}

inline double accuracy(const ElmModel& m, const ImageDataset& ds) {
    if (!m.trained()) throw StateError("accuracy: model has no trained output weights");
    if (ds.size() == 0) throw ArgumentError("accuracy: empty dataset");
    Index wrong = 0;
    for (Index i = 0; i < ds.size(); ++i)
        if (classify(m, ds.images[std::size_t(i)]) != ds.labels[std::size_t(i)]) ++wrong;
    return 1.0 - double(wrong) / double(ds.size());
}

// ---------------------------------------------------------------------------
// Model container file: 16-byte header (magic "ELM1", version, n_hidden, d as
// little-endian u32), then d_weights, biases, and (when trained) out_weights
// in the binary matrix format.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kElmFormatVersion = 1;

inline void save_model(const ElmModel& m, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ParseError("cannot open " + path + " for writing");
    os.write("ELM1", 4);
    auto put_u32_le = [&os](std::uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
        os.write(reinterpret_cast<const char*>(b), 4);
    };
    put_u32_le(kElmFormatVersion);
    put_u32_le(std::uint32_t(m.n_hidden()));
    put_u32_le(std::uint32_t(m.dim()));
    write_matrix_binary(m.d_weights, os);
    write_matrix_binary(Matrix(m.biases), os);
    if (m.trained()) write_matrix_binary(*m.out_weights, os);
    if (!os) throw ParseError("write failed for " + path);
}

inline ElmModel load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ParseError("cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != "ELM1") throw ParseError(path + ": bad model magic");
    auto get_u32_le = [&is, &path](const char* what) {
        unsigned char b[4];
        is.read(reinterpret_cast<char*>(b), 4);
        if (!is) throw ParseError(path + ": truncated " + std::string(what));
        return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
               (std::uint32_t(b[3]) << 24);
    };
    const std::uint32_t version = get_u32_le("version");
    if (version != kElmFormatVersion)
        throw ParseError(path + ": unsupported model version " + std::to_string(version));
    const std::uint32_t n_hidden = get_u32_le("n_hidden");
    const std::uint32_t d = get_u32_le("d");
    ElmModel m;
    m.d_weights = read_matrix_binary(is, path);
    m.biases = read_matrix_binary(is, path);
    if (m.d_weights.rows() != Index(n_hidden) || m.d_weights.cols() != Index(d) ||
        m.biases.size() != Index(n_hidden))
        throw ParseError(path + ": header dimensions disagree with payload");
    is.peek();
    if (!is.eof()) {
        m.out_weights = read_matrix_binary(is, path);
        if (m.out_weights->rows() != Index(n_hidden)) throw ParseError(path + ": output weight shape mismatch");
        m.n_classes = m.out_weights->cols();
    }
    return m;
}

} // namespace randls
