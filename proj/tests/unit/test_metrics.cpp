#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "../support.hpp"
#include "hlab/errors.hpp"
#include "hlab/metrics.hpp"
#include "hlab/scene.hpp"

using namespace hlab;

namespace {

Image filled(int h, int w, float r, float g, float b) {
    Image img(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            img.at(y, x, 0) = r;
            img.at(y, x, 1) = g;
            img.at(y, x, 2) = b;
        }
    }
    return img;
}

std::vector<Image> rolled_sequence(const Image& base, int views, int step) {
    std::vector<Image> out;
    for (int n = 0; n < views; ++n) out.push_back(testing::roll_x(base, step * n));
    return out;
}

}  // namespace

TEST_CASE("psnr") {
    Stream rng(1, "psnr");
    const auto a = testing::random_image(16, 16, rng);
    CHECK(psnr(a, a) == 99.0);
    CHECK(psnr(filled(4, 4, 0, 0, 0), filled(4, 4, 1, 1, 1)) == doctest::Approx(0.0).epsilon(1e-12));
    for (int i = 0; i < 100; ++i) {
        const auto x = testing::random_image(16, 16, rng), y = testing::random_image(16, 16, rng);
        CHECK(std::abs(psnr(x, y) - testing::psnr_oracle(x, y)) < 1e-9);
    }
    CHECK_THROWS_AS(psnr(a, Image(8, 8)), ShapeError);
}

TEST_CASE("ssim") {
    Stream rng(2, "ssim");
    const auto a = testing::random_image(16, 16, rng);
    CHECK(ssim(a, a) == 1.0);
    Image inv = a;
    for (auto& v : inv.values) v = 1.0f - v;
    CHECK(ssim(a, inv) < 1.0);
    for (int i = 0; i < 100; ++i) {
        const auto x = testing::random_image(16, 16, rng), y = testing::random_image(16, 16, rng);
        CHECK(std::abs(ssim(x, y) - testing::ssim_oracle(x, y)) < 1e-9);
    }
    CHECK_THROWS_AS(ssim(Image(4, 4), Image(4, 4)), ShapeError);
}

TEST_CASE("block_flow") {
    Stream rng(3, "flow");
    const auto a = testing::random_image(16, 16, rng);
    const auto zero = block_flow(a, a);
    for (std::size_t i = 0; i < zero.dx.size(); ++i) {
        CHECK(zero.dx[i] == 0.0f);
        CHECK(zero.dy[i] == 0.0f);
    }
    const auto flat = block_flow(filled(16, 16, 0.3f, 0.3f, 0.3f), filled(16, 16, 0.3f, 0.3f, 0.3f));
    for (std::size_t i = 0; i < flat.dx.size(); ++i) CHECK((flat.dx[i] == 0.0f && flat.dy[i] == 0.0f));

    int good = 0, total = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const auto img = testing::random_image(16, 16, rng);
        const auto f = block_flow(img, testing::roll_x(img, 2));
        for (std::size_t i = 0; i < f.dx.size(); i += 4) {
            ++total;
            good += f.dx[i] == 2.0f && f.dy[i] == 0.0f;
        }
    }
    CHECK(good >= 0.9 * total);
    CHECK_THROWS_AS(block_flow(a, a, 17, 4), ShapeError);
    CHECK_NOTHROW(block_flow(a, a, 3, 4));
}

TEST_CASE("e_flow") {
    Stream rng(4, "eflow");
    const auto base = testing::random_image(16, 16, rng);
    // 16 views so both 2 and 3 px steps wrap around the 16 px width.
    const auto gt = ViewSet::from_views(rolled_sequence(base, 16, 2));
    const auto gen = ViewSet::from_views(rolled_sequence(base, 16, 3));
    CHECK(e_flow(gt, gt) == 0.0);
    CHECK(e_flow(gt, gen) == 1.0);

    auto rot = [](const ViewSet& v, int k) {
        std::vector<Image> out;
        for (std::size_t n = 0; n < v.size(); ++n) out.push_back(v.views[(n + k) % v.size()]);
        return ViewSet::from_views(out);
    };
    const auto noisy = ViewSet::from_views([&] {
        std::vector<Image> v;
        for (int n = 0; n < 8; ++n) v.push_back(testing::random_image(16, 16, rng));
        return v;
    }());
    const auto ref = ViewSet::from_views(rolled_sequence(base, 8, 2));
    CHECK(e_flow(rot(ref, 3), rot(noisy, 3)) == doctest::Approx(e_flow(ref, noisy)).epsilon(1e-12));
}

TEST_CASE("toy encoder") {
    const auto enc = toy_encoder();
    Stream rng(5, "enc");
    const auto a = testing::random_image(16, 16, rng);
    const auto e1 = embed(enc, a), e2 = embed(enc, a);
    CHECK(e1.v == e2.v);
    CHECK(e1.v.size() == enc.dims);
    CHECK(std::abs(e1.dot(e1) - 1.0) < 1e-6);

    // Histogram bins are disjoint; pooled luma is constant.
    const double lr = 0.299, lb = 0.114;
    const double expect = 16 * lr * lb / (std::sqrt(1 + 16 * lr * lr) * std::sqrt(1 + 16 * lb * lb));
    const double got = cosine(embed(enc, filled(16, 16, 1, 0, 0)), embed(enc, filled(16, 16, 0, 0, 1)));
    CHECK(got == doctest::Approx(expect).epsilon(1e-12));
    CHECK(got < 0.9);
    CHECK_THROWS_AS(normalize_features(std::vector<double>(5, 0.0)), DegenerateError);
}

TEST_CASE("class prototypes") {
    const auto enc = toy_encoder();
    Stream rng(6, "proto");
    const auto a = testing::random_image(16, 16, rng), b = testing::random_image(16, 16, rng);
    const auto ea = embed(enc, a);
    const auto pa = class_prototype(enc, {a});
    for (std::size_t i = 0; i < ea.v.size(); ++i) CHECK(pa.v[i] == doctest::Approx(ea.v[i]).epsilon(1e-12));
    const auto p2 = class_prototype(enc, {a, b});
    const auto p4 = class_prototype(enc, {a, b, a, b});
    for (std::size_t i = 0; i < p2.v.size(); ++i) CHECK(p4.v[i] == doctest::Approx(p2.v[i]).epsilon(1e-12));

    const auto stripes = class_prototype(enc, class_exemplars(SceneClass::stripes, 32));
    int closer = 0;
    const int probes = 40;
    // Front-facing views only; back views show nothing but the palette color.
    const int front[] = {7, 0, 1};
    for (int i = 0; i < probes; ++i) {
        const int n = front[i % 3];
        const auto s = render_view(gen_scene(50000 + i, SceneClass::stripes), n);
        const auto c = render_view(gen_scene(60000 + i, SceneClass::checker), n);
        closer += cosine(stripes, embed(enc, s)) > cosine(stripes, embed(enc, c));
    }
    MESSAGE("stripes prototype closer on " << closer << "/" << probes);
    CHECK(closer >= 0.9 * probes);
}

TEST_CASE("diversity") {
    Embedding e{{1, 0, 0}}, o{{0, 1, 0}}, neg{{-1, 0, 0}};
    CHECK(diversity(e, {e, e, e}) == 0.0);
    CHECK(diversity(e, {o, o}) == 1.0);
    CHECK(diversity(e, {neg}) == 2.0);
}

TEST_CASE("semantic statistics") {
    const auto flat = semantic_stats({0.5, 0.5, 0.5});
    CHECK(flat.variance == 0.0);
    const auto two = semantic_stats({0.9, 0.7});
    CHECK(two.mean == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(two.variance == doctest::Approx(0.01).epsilon(1e-9));

    Stream rng(7, "svar");
    for (int i = 0; i < 100; ++i) {
        std::vector<double> s(8);
        for (auto& v : s) v = rng.uniform() * 2 - 1;
        double m = 0.0;
        for (double v : s) m += v;
        m /= 8;
        double q = 0.0;
        for (double v : s) q += (v - m) * (v - m);
        const auto st = semantic_stats(s);
        CHECK(std::abs(st.mean - m) < 1e-12);
        CHECK(std::abs(st.variance - q / 8) < 1e-12);
    }
}

TEST_CASE("cd score") {
    SemanticStats st;
    st.variance = 0.01;
    CHECK(cd_score(1.0, st) == doctest::Approx(100.0).epsilon(1e-12));
    CHECK(cd_score(0.0, st) == 0.0);
    st.variance = 0.0;
    CHECK_THROWS_AS(cd_score(1.0, st), DegenerateError);
}

TEST_CASE("cd report averages instances") {
    const auto enc = toy_encoder();
    const auto proto = class_prototype(enc, class_exemplars(SceneClass::blob, 16));
    Stream rng(8, "cdr");
    auto random_set = [&] {
        std::vector<Image> v;
        for (int n = 0; n < 8; ++n) v.push_back(testing::random_image(16, 16, rng));
        return ViewSet::from_views(v);
    };
    const auto ref = testing::random_image(16, 16, rng);
    const auto one = random_set();
    const auto single = cd_report(enc, ref, {one}, proto);
    const double own = cd_score(diversity(enc, ref, one), semantic_variance(enc, proto, one));
    CHECK(single.cd == doctest::Approx(own).epsilon(1e-12));
    CHECK(cd_report(enc, ref, {one, one, one, one}, proto).cd == doctest::Approx(own).epsilon(1e-12));

    std::vector<ViewSet> four{random_set(), random_set(), random_set(), random_set()};
    double acc = 0.0;
    for (const auto& vs : four) acc += cd_score(diversity(enc, ref, vs), semantic_variance(enc, proto, vs));
    CHECK(cd_report(enc, ref, four, proto).cd == doctest::Approx(acc / 4).epsilon(1e-12));

    // A constant set has zero semantic variance and is excluded.
    const auto flat = ViewSet::from_views(std::vector<Image>(8, filled(16, 16, 0.2f, 0.4f, 0.6f)));
    const auto mixed = cd_report(enc, ref, {flat, one}, proto);
    CHECK(mixed.excluded == 1);
    CHECK(mixed.cd == doctest::Approx(own).epsilon(1e-12));
    CHECK_THROWS_AS(cd_report(enc, ref, {flat, flat}, proto), DegenerateError);
}
