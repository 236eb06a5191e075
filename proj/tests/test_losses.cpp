// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
#include <doctest.h>

#include <cmath>

#include "morphvol/embedder.hpp"
#include "morphvol/experiments.hpp"
#include "morphvol/losses.hpp"

using namespace morphvol;
using ad::Mat;
using ad::Var;

namespace {

Var image(int w, int h, std::uint64_t seed) {
    Rng rng(seed);
    Mat m(static_cast<std::size_t>(w * h), 3);
    for (double& v : m.data) v = rng.uniform();
    return Var::constant(m);
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("texture, landmark and illumination terms") {
    const Var a = Var::constant(Mat(2, 3, {0, 0, 0, 1, 1, 1})), b = Var::constant(Mat(2, 3, 0.5));
    CHECK(loss_tex(a, b).item() == doctest::Approx(0.25));
    Mat la(68, 3), lb(68, 3);
    la(0, 0) = 3.0, la(0, 1) = 4.0, la(5, 2) = 1.0;
    std::vector<double> w(68, 1.0);
    w[5] = 100.0;
    CHECK(loss_lmk(Var::constant(la), Var::constant(lb), w).item() == doctest::Approx(105.0));
    CHECK(loss_ill(Var::constant(Mat(1, 2, {3.0, 0.0})), Var::constant(Mat(1, 2, {0.0, 4.0}))).item() == doctest::Approx(5.0));
}

TEST_CASE("landmark weights emphasize the brow and mouth set") {
    const FaceBasis b = make_synthetic_basis();
    const auto w = landmark_weights(b, 100.0);
    REQUIRE(w.size() == 68);
    for (int i : b.emphasized_landmarks) CHECK(w[static_cast<std::size_t>(i)] == 100.0);
    CHECK(std::count(w.begin(), w.end(), 1.0) == static_cast<long>(68 - b.emphasized_landmarks.size()));
}

TEST_CASE("cross entropy renormalizes by alpha") {
    // Two pixels with alpha 0.5 and 1.0.
    const Var s = Var::constant(Mat(2, 2, {0.1, 0.4, 0.75, 0.25}));
    const std::vector<int> labels{1, 0};
    CHECK(loss_ce(s, labels).item() == doctest::Approx(-(std::log(0.8) + std::log(0.75)) / 2.0));
    CHECK_THROWS_AS(loss_ce(s, std::vector<int>{2, 0}), std::invalid_argument);
}

TEST_CASE("identity loss is zero for identical images and bounded otherwise") {
    const FeatureEmbedder e = FeatureEmbedder::make(1);
    const Var a = image(16, 16, 1), b = image(16, 16, 2);
    CHECK(std::abs(loss_id(a, a, 16, 16, e).item()) < 1e-14);
    const double d = loss_id(a, b, 16, 16, e).item();
    CHECK(d > 0.0);
    CHECK(d <= 2.0);
    Flags flags;
    CHECK(loss_id(Var::constant(Mat(256, 3, 0.0)), a, 16, 16, e, &flags).item() == 1.0);
    CHECK_FALSE(flags.empty());
}

TEST_CASE("hinge adversarial terms and R1") {
    const Var real = Var::constant(Mat(2, 1, {2.0, 0.0})), fake = Var::constant(Mat(2, 1, {-2.0, 0.5}));
    CHECK(hinge_d_loss(real, fake).item() == doctest::Approx(0.5 + 0.75));
    CHECK(hinge_g_loss(fake).item() == doctest::Approx(0.75));
    CHECK(r1_penalty(Var::constant(Mat(2, 2, {1.0, 2.0, 3.0, 0.0}))).item() == doctest::Approx(7.0));
}

TEST_CASE("discriminator input gradient matches finite differences") {
    Rng rng(3);
    const nn::TinyDiscriminator d = nn::TinyDiscriminator::make(4, 6, rng);
    Mat x(2, 4);
    for (double& v : x.data) v = rng.normal();
    const Mat g = d.input_gradient(Var::constant(x)).value();
    const double h = 1e-6;
    for (std::size_t c = 0; c < 4; ++c) {
        Mat xp = x, xm = x;
        xp(1, c) += h, xm(1, c) -= h;
        const double num = (d.score(Var::constant(xp)).value()(1, 0) - d.score(Var::constant(xm)).value()(1, 0)) / (2 * h);
        CHECK(g(1, c) == doctest::Approx(num).epsilon(1e-7));
    }
}

TEST_CASE("masked background loss vanishes when backgrounds agree") {
    const Var a = image(4, 4, 3);
    const Var m = Var::constant(Mat(16, 1, 1.0));
    CHECK(loss_dis_kappa(a, a, m, m).item() == 0.0);
    const Var zero = Var::constant(Mat(16, 1, 0.0));
    CHECK(loss_dis_kappa(a, image(4, 4, 4), zero, zero).item() == 0.0);
}

TEST_CASE("lip loss ignores pixel order inside the mask") {
    const FeatureEmbedder e = FeatureEmbedder::make(2);
    const int W = 8, H = 8;
    std::vector<double> mask(64, 0.0);
    for (int i = 0; i < 64; ++i) mask[static_cast<std::size_t>(i)] = (i / 8 >= 2 && i / 8 < 6) ? 1.0 : 0.0;
    Mat a = image(W, H, 5).value(), b = image(W, H, 6).value();
    const double base = loss_lip(Var::constant(a), Var::constant(b), W, H, mask, mask, e).item();
    CHECK(base > 0.0);
    CHECK(loss_lip(Var::constant(a), Var::constant(a), W, H, mask, mask, e).item() == doctest::Approx(0.0).epsilon(1e-12));
    Flags flags;
    const std::vector<double> empty(64, 0.0);
    CHECK(loss_lip(Var::constant(a), Var::constant(b), W, H, empty, mask, e, &flags).item() == 0.0);
    CHECK_FALSE(flags.empty());
}

TEST_CASE("masked statistics are order free") {
    Mat f(4, 1, {1.0, 2.0, 3.0, 10.0});
    const std::vector<double> m{1.0, 1.0, 1.0, 0.0};
    const MaskedStats s = masked_stats(Var::constant(f), m);
    CHECK(s.mean.item() == doctest::Approx(2.0));
    CHECK(s.variance.item() == doctest::Approx(2.0 / 3.0));
    Mat g(4, 1, {3.0, 1.0, 2.0, 10.0});
    CHECK(masked_stats(Var::constant(g), m).variance.item() == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("weighted sums: total equals the weighted terms exactly") {
    const LossGraph g = weighted_sum({{"a", Var::scalar(0.1)}, {"b", Var::scalar(0.7)}, {"c", Var::scalar(3.0)}},
                                     {{"a", 10.0}, {"b", 0.3}, {"c", 1e-3}});
    double expect = 0.0;
    for (const auto& [k, v] : g.report.terms) expect += g.report.weights.at(k) * v;
    CHECK(g.report.total == expect);
    CHECK(g.total.item() == g.report.total);
    CHECK_THROWS(weighted_sum({{"a", Var::scalar(1.0)}}, {}));
    const auto j = g.report.to_json();
    CHECK(j["total"].get<double>() == g.report.total);
}

TEST_CASE("imitative and disentanglement groups use the documented weights") {
    ImitativeTerms t{Var::scalar(1), Var::scalar(2), Var::scalar(3), Var::scalar(4), Var::scalar(5)};
    CHECK(loss_imitative(t).report.total == doctest::Approx(10 + 20 + 30 + 4000 + 5));
    DisBetaTerms b{Var::scalar(1), Var::scalar(1), Var::scalar(1)};
    CHECK(loss_dis_beta(b).report.total == doctest::Approx(250));
    CHECK(loss_dis_total(Var::scalar(1), Var::scalar(2), Var::scalar(3)).report.total == doctest::Approx(6));
}

TEST_CASE("tex_beta compares unwarped off the face") {
    const Var a = image(4, 4, 7);
    Flow2D f{4, 4, std::vector<double>(32, 0.0), std::vector<std::uint8_t>(16, 0)};
    CHECK(loss_tex_beta(a, a, f).item() == 0.0);
}

TEST_CASE("gradient suite passes at the default step") {
    for (const auto& e : gradient_suite()) {
        CAPTURE(e.name);
        CHECK(e.max_rel_error < 1e-4);
        CHECK(e.skipped * 5 < e.coords + e.skipped);
    }
}

TEST_CASE("micro_train descends on a quadratic") {
    Mat x(1, 2, {3.0, -4.0});
    std::vector<nn::ParamRef> params{{"x", &x}};
    TrainOptions o;
    o.steps = 50;
    o.lr = 0.1;
    const auto reports = micro_train(params, [](const std::vector<Var>& v, int) {
        return weighted_sum({{"q", ad::sum(ad::square(v[0]))}}, {{"q", 1.0}});
    }, o);
    CHECK(reports.front().total == doctest::Approx(25.0));
    // Plain descent scales x by 0.8 per step.
    CHECK(x.data[0] == doctest::Approx(3.0 * std::pow(0.8, 50)).epsilon(1e-12));
}

}
