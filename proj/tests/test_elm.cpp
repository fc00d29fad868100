#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "randls/elm.hpp"

using namespace randls;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path("randls_test_" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

ImageDataset tiny_dataset() {
    ImageDataset ds;
    ds.width = 2;
    ds.height = 2;
    ds.n_classes = 2;
    Vector a(4), b(4);
    a << 0.0, 1.0, 0.5, 0.25;
    b << 1.0, 0.0, 0.25, 0.5;
    ds.images = {a, b};
    ds.labels = {0, 1};
    return ds;
}

} // namespace

TEST_CASE("idx round trip is byte-exact") {
    const ImageDataset ds = tiny_dataset();
    TempFile imgs("imgs.idx"), labs("labs.idx");
    write_idx(ds, imgs.path, labs.path);
    const ImageDataset back = read_idx(imgs.path, labs.path);
    REQUIRE(back.size() == 2);
    REQUIRE(back.width == 2);
    REQUIRE(back.height == 2);
    REQUIRE(back.labels == ds.labels);

    TempFile imgs2("imgs2.idx"), labs2("labs2.idx");
    write_idx(back, imgs2.path, labs2.path);
    REQUIRE(slurp(imgs.path) == slurp(imgs2.path));
    REQUIRE(slurp(labs.path) == slurp(labs2.path));
}

TEST_CASE("idx pixel 255 scales to exactly 1") {
    ImageDataset ds = tiny_dataset();
    ds.images[0](0) = 1.0;
    TempFile imgs("scale_i.idx"), labs("scale_l.idx");
    write_idx(ds, imgs.path, labs.path);
    const ImageDataset back = read_idx(imgs.path, labs.path);
    REQUIRE(back.images[0](0) == 1.0);
    REQUIRE(back.images[0](1) == 1.0); // 255/255
}

TEST_CASE("idx rejects a label magic in the image slot") {
    const ImageDataset ds = tiny_dataset();
    TempFile imgs("magic_i.idx"), labs("magic_l.idx");
    write_idx(ds, imgs.path, labs.path);
    REQUIRE_THROWS_AS(read_idx(labs.path, imgs.path), ParseError);
}

TEST_CASE("idx rejects image/label count mismatch") {
    const ImageDataset ds = tiny_dataset();
    ImageDataset fewer = ds;
    fewer.images.pop_back();
    fewer.labels.pop_back();
    TempFile imgs("cnt_i.idx"), labs("cnt_l.idx"), labs1("cnt_l1.idx");
    write_idx(ds, imgs.path, labs.path);
    write_idx(fewer, "randls_test_cnt_tmp.idx", labs1.path);
    std::remove("randls_test_cnt_tmp.idx");
    REQUIRE_THROWS_AS(read_idx(imgs.path, labs1.path), ParseError);
}

TEST_CASE("idx rejects a truncated payload") {
    const ImageDataset ds = tiny_dataset();
    TempFile imgs("trunc_i.idx"), labs("trunc_l.idx");
    write_idx(ds, imgs.path, labs.path);
    std::string bytes = slurp(imgs.path);
    bytes.resize(bytes.size() - 2);
    std::ofstream(imgs.path, std::ios::binary) << bytes;
    REQUIRE_THROWS_AS(read_idx(imgs.path, labs.path), ParseError);
}

TEST_CASE("beta22 stays in the unit interval with the right moments") {
    Rng rng(1);
    double sum = 0.0, sum_sq = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double e = beta22(rng);
        REQUIRE(e >= 0.0);
        REQUIRE(e <= 1.0);
        sum += e;
        sum_sq += e * e;
    }
    const double mean = sum / n;
    REQUIRE(mean == Catch::Approx(0.5).margin(0.005));
    REQUIRE(sum_sq / n - mean * mean == Catch::Approx(0.05).margin(0.005)); // Var Beta(2,2) = 1/20
}

TEST_CASE("zero-angle rotation is the identity") {
    Rng rng(2);
    Vector img(12 * 10);
    for (Index i = 0; i < img.size(); ++i) img(i) = rng.next_unit();
    REQUIRE(rotate_image(img, 12, 10, 0.0) == img);
}

TEST_CASE("rotation of a constant image keeps the interior constant") {
    Vector img = Vector::Ones(9 * 9);
    const Vector rot = rotate_image(img, 9, 9, 7.0);
    // away from the borders every bilinear sample hits four ones
    for (Index y = 3; y <= 5; ++y)
        for (Index x = 3; x <= 5; ++x) REQUIRE(rot(y * 9 + x) == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(rot.minCoeff() >= 0.0);
    REQUIRE(rot.maxCoeff() <= 1.0 + 1e-12);
}

TEST_CASE("augment_rotate angles are within ten degrees") {
    // angle = 20 (eta - 0.5) with eta in [0, 1]; exercised through beta22 range
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
        const double angle = 20.0 * (beta22(rng) - 0.5);
        REQUIRE(angle >= -10.0);
        REQUIRE(angle <= 10.0);
    }
}

TEST_CASE("init_hidden respects the declared ranges and the seed") {
    const ElmModel m = init_hidden(300, 7, 3);
    REQUIRE(m.n_hidden() == 300);
    REQUIRE(m.d_weights.minCoeff() >= -1.0);
    REQUIRE(m.d_weights.maxCoeff() <= 1.0);
    REQUIRE(m.biases.minCoeff() >= 0.0);
    REQUIRE(m.biases.maxCoeff() <= 1.0);

    const ElmModel m2 = init_hidden(300, 7, 3);
    REQUIRE(m.d_weights == m2.d_weights);
    REQUIRE(m.biases == m2.biases);
}

TEST_CASE("feature_map midpoint, saturation, and gradient") {
    ElmModel m;
    m.d_weights = Matrix::Ones(1, 2);
    m.biases = Vector::Ones(1) * 1.5;
    Vector xi(2);
    xi << 0.75, 0.75; // d . xi = 1.5 = delta -> 0.5
    REQUIRE(feature_map(m, xi)(0) == Catch::Approx(0.5).margin(1e-15));

    Vector big(2);
    big << 500.0, 500.0;
    REQUIRE(feature_map(m, big)(0) == Catch::Approx(1.0).margin(1e-12));

    // d h / d xi = h (1 - h) d
    const ElmModel rm = init_hidden(5, 3, 9);
    Vector x0(3);
    x0 << 0.3, 0.6, 0.9;
    const Vector h = feature_map(rm, x0);
    const double eps = 1e-6;
    for (Index j = 0; j < 3; ++j) {
        Vector xp = x0, xm = x0;
        xp(j) += eps;
        xm(j) -= eps;
        const Vector fd = (feature_map(rm, xp) - feature_map(rm, xm)) / (2.0 * eps);
        const Vector analytic = (h.array() * (1.0 - h.array())).matrix().cwiseProduct(rm.d_weights.col(j));
        REQUIRE((fd - analytic).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("feature_map output is strictly inside (0, 1)") {
    const ElmModel m = init_hidden(50, 10, 11);
    Rng rng(4);
    for (int rep = 0; rep < 100; ++rep) {
        Vector xi(10);
        for (Index i = 0; i < 10; ++i) xi(i) = rng.next_unit();
        const Vector h = feature_map(m, xi);
        REQUIRE(h.minCoeff() > 0.0);
        REQUIRE(h.maxCoeff() < 1.0);
    }
}

TEST_CASE("build_training encodes labels one-vs-rest") {
    ImageDataset ds;
    ds.width = 3;
    ds.height = 1;
    ds.n_classes = 10;
    Vector img = Vector::Zero(3);
    ds.images = {img};
    ds.labels = {3};
    const ElmModel m = init_hidden(4, 3, 5);
    const auto [h, y] = build_training(m, ds);
    REQUIRE(h.rows() == 1);
    REQUIRE(h.cols() == 4);
    REQUIRE(y.rows() == 1);
    REQUIRE(y.cols() == 10);
    for (Index j = 0; j < 10; ++j) REQUIRE(y(0, j) == (j == 3 ? 1.0 : -1.0));

    // all-zero image: row is 1 / (1 + exp(delta_j))
    for (Index j = 0; j < 4; ++j) REQUIRE(h(0, j) == Catch::Approx(1.0 / (1.0 + std::exp(m.biases(j)))).margin(1e-15));

    // batch row equals a one-off feature_map bit for bit
    REQUIRE(h.row(0).transpose() == feature_map(m, img));

    ImageDataset bad = ds;
    bad.labels = {11};
    REQUIRE_THROWS_AS(build_training(m, bad), ArgumentError);
}

TEST_CASE("qr training with a zero target gives zero weights") {
    const ImageDataset ds = make_blobs(40, 4, 2, 5);
    ElmModel m = init_hidden(6, 4, 7);
    auto [h, y] = build_training(m, ds);
    (void)y;
    const Matrix x = qr_solve(h, Matrix::Zero(40, 2));
    REQUIRE(max_abs(x) < 1e-12);
}

TEST_CASE("qr baseline satisfies the normal equations per column") {
    const ImageDataset ds = make_blobs(120, 6, 2, 9);
    const ElmModel base = init_hidden(12, 6, 13);
    const TrainOutcome out = train(base, ds, TrainMethod::QrBaseline);
    const auto [h, y] = build_training(base, ds);
    const Matrix resid = h.transpose() * (h * *out.model.out_weights - y);
    REQUIRE(max_abs(resid) <= 1e-8 * max_abs(Matrix(h.transpose() * y)));
}

TEST_CASE("separable blobs train to high accuracy") {
    const ImageDataset train_set = make_blobs(400, 8, 2, 21);
    const ImageDataset test_set = make_blobs(200, 8, 2, 22);
    const ElmModel base = init_hidden(20, 8, 23);
    const TrainOutcome qr = train(base, train_set, TrainMethod::QrBaseline);
    REQUIRE(accuracy(qr.model, train_set) >= 0.95);
    REQUIRE(accuracy(qr.model, test_set) >= accuracy(qr.model, train_set) - 0.1);
}

TEST_CASE("sqn training lands near the qr baseline") {
    const ImageDataset ds = make_blobs(500, 6, 2, 31);
    const ElmModel base = init_hidden(16, 6, 33);
    const TrainOutcome qr = train(base, ds, TrainMethod::QrBaseline);
    ElmTrainConfig cfg;
    cfg.ell = 25;
    const TrainOutcome sqn = train(base, ds, TrainMethod::Sqn, 35, cfg);
    REQUIRE(sqn.report.has_value());
    const double rel = (*sqn.model.out_weights - *qr.model.out_weights).norm() / qr.model.out_weights->norm();
    REQUIRE(rel <= 0.5);
    REQUIRE(accuracy(sqn.model, ds) >= accuracy(qr.model, ds) - 0.05);
}

TEST_CASE("classify picks the dominant aligned class and reports state errors") {
    ElmModel m = init_hidden(3, 2, 41);
    Vector xi(2);
    xi << 0.5, 0.5;
    REQUIRE_THROWS_AS(classify(m, xi), StateError);
    REQUIRE_THROWS_AS(accuracy(m, tiny_dataset()), StateError);

    // one-hot output columns aligned with one feature each: the argmax follows h
    m.out_weights = Matrix::Identity(3, 3);
    m.n_classes = 3;
    const Vector h = feature_map(m, xi);
    Index expect = 0;
    h.maxCoeff(&expect);
    REQUIRE(classify(m, xi) == int(expect));
}

TEST_CASE("classify breaks ties toward the smaller class index") {
    ElmModel m;
    m.d_weights = Matrix::Zero(2, 2);
    m.biases = Vector::Zero(2);
    Matrix w(2, 3);
    w << 1, 1, 0, 1, 1, 0; // classes 0 and 1 score identically, class 2 less
    m.out_weights = w;
    m.n_classes = 3;
    Vector xi(2);
    xi << 0.1, 0.9;
    REQUIRE(classify(m, xi) == 0);
}

TEST_CASE("model container round trips through disk") {
    const ImageDataset ds = make_blobs(60, 5, 2, 43);
    const ElmModel base = init_hidden(8, 5, 47);
    const TrainOutcome out = train(base, ds, TrainMethod::QrBaseline);
    TempFile f("model.elm");
    save_model(out.model, f.path);
    const ElmModel back = load_model(f.path);
    REQUIRE(back.d_weights == out.model.d_weights);
    REQUIRE(back.biases == out.model.biases);
    REQUIRE(back.trained());
    REQUIRE(*back.out_weights == *out.model.out_weights);
    REQUIRE(back.n_classes == 2);

    // untrained models round trip too
    TempFile g("raw.elm");
    save_model(base, g.path);
    REQUIRE_FALSE(load_model(g.path).trained());
}

TEST_CASE("model loader rejects a bad magic") {
    TempFile f("broken.elm");
    std::ofstream(f.path, std::ios::binary) << "NOPE................";
    REQUIRE_THROWS_AS(load_model(f.path), ParseError);
}
