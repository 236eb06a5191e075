// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
#include <doctest.h>

#include <cmath>

#include "morphvol/autodiff.hpp"
#include "morphvol/losses.hpp"

using namespace morphvol;
using ad::Mat;
using ad::Var;

namespace {

Mat seeded(std::size_t r, std::size_t c, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    Mat m(r, c);
    for (double& v : m.data) v = rng.normal(0.0, scale);
    return m;
}

double check(const LossFn& f, const std::vector<Mat>& params) { return gradcheck(f, params, 1e-4, 0, 0, 0.0).max_rel_error; }

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("values of elementwise and reduction ops") {
    const Var a = Var::constant(Mat(2, 2, {1.0, 2.0, 3.0, 4.0}));
    CHECK(ad::sum(a).item() == 10.0);
    CHECK(ad::mean(a).item() == 2.5);
    const Mat rs = ad::row_sum(a).value();
    CHECK(rs.data == std::vector<double>{3.0, 7.0});
    const Mat cs = ad::col_sum(a).value();
    CHECK(cs.data == std::vector<double>{4.0, 6.0});
    const Mat mm = ad::matmul(a, a).value();
    CHECK(mm.data == std::vector<double>{7.0, 10.0, 15.0, 22.0});
    CHECK(ad::row_norm(Var::constant(Mat(1, 2, {3.0, 4.0}))).item() == 5.0);
}

TEST_CASE("broadcasting follows size-1 dimensions") {
    const Var a = Var::constant(Mat(2, 3, 1.0));
    const Var row = Var::constant(Mat(1, 3, {1.0, 2.0, 3.0}));
    const Var col = Var::constant(Mat(2, 1, {10.0, 20.0}));
    CHECK((a + row).value().data == std::vector<double>{2, 3, 4, 2, 3, 4});
    CHECK((a * col).value().data == std::vector<double>{10, 10, 10, 20, 20, 20});
}

TEST_CASE("exclusive segment cumsum") {
    const Var x = Var::constant(Mat(6, 1, {1, 2, 3, 4, 5, 6}));
    CHECK(ad::exclusive_segment_cumsum(x, 3).value().data == std::vector<double>{0, 1, 3, 0, 4, 9});
    CHECK(ad::segment_sum(x, 3).value().data == std::vector<double>{6, 15});
}

TEST_CASE("softmax rows sum to one and are shift invariant") {
    const Mat x = seeded(5, 4, 1, 3.0);
    Mat shifted = x;
    for (double& v : shifted.data) v += 100.0;
    const Mat p = ad::softmax_rows(Var::constant(x)).value();
    const Mat q = ad::softmax_rows(Var::constant(shifted)).value();
    for (std::size_t r = 0; r < 5; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < 4; ++c) {
            s += p(r, c);
            CHECK(p(r, c) == doctest::Approx(q(r, c)).epsilon(1e-12));
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
    }
}

TEST_CASE("gradients of smooth ops match finite differences") {
    const std::vector<Mat> p{seeded(3, 4, 2), seeded(4, 2, 3), seeded(3, 2, 4, 0.5)};
    CHECK(check([](const std::vector<Var>& v) { return ad::sum(ad::tanh(ad::matmul(v[0], v[1])) * v[2]); }, p) < 1e-8);
    CHECK(check([](const std::vector<Var>& v) { return ad::sum(ad::softmax_rows(v[0]) * ad::sigmoid(v[0])); }, p) < 1e-8);
    CHECK(check([](const std::vector<Var>& v) { return ad::sum(ad::row_norm(v[0]) * ad::exp(ad::slice_cols(v[2], 0, 1))); }, p) < 1e-8);
    CHECK(check([](const std::vector<Var>& v) {
              const Var parts[] = {v[2], v[0]}, flipped[] = {v[0], v[2]};
              return ad::mean(ad::square(ad::concat_cols(parts)) / (1.0 + ad::softplus(ad::concat_cols(flipped))));
          },
                p) < 1e-8);
    CHECK(check([](const std::vector<Var>& v) {
              return ad::sum(ad::exclusive_segment_cumsum(ad::reshape(v[0], 6, 2), 3) * ad::log(1.0 + ad::square(ad::reshape(ad::transpose(v[0]), 6, 2))));
          },
                p) < 1e-8);
}

TEST_CASE("row_gather and conv3x3 gradients") {
    auto taps = std::make_shared<ad::RowTaps>();
    taps->out_rows = 2;
    taps->taps = 2;
    taps->index = {0, 3, 2, 2};
    taps->weight = {0.25, 0.75, 1.0, -0.5};
    const Mat x(4, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
    const Mat g = ad::row_gather(Var::constant(x), taps).value();
    CHECK(g(0, 0) == 0.25 * 1 + 0.75 * 10);
    CHECK(g(1, 2) == 0.5 * 9);
    CHECK(check([&](const std::vector<Var>& v) { return ad::sum(ad::square(ad::row_gather(v[0], taps))); }, {x}) < 1e-8);

    const auto kernel = std::make_shared<const Mat>(seeded(9 * 2, 3, 5));
    CHECK(check([&](const std::vector<Var>& v) { return ad::sum(ad::tanh(ad::conv3x3(v[0], 3, 4, kernel))); },
                {seeded(12, 2, 6)}) < 1e-8);
}

TEST_CASE("gradients accumulate over shared subexpressions") {
    const Var x = Var::parameter(Mat::scalar(3.0));
    const Var y = x * x + x;
    ad::backward(y);
    CHECK(x.grad().data[0] == 7.0);
}

TEST_CASE("clamp_min passes gradient only above the floor") {
    const Var x = Var::parameter(Mat(1, 3, {-1.0, 0.5, 2.0}));
    ad::backward(ad::sum(ad::clamp_min(x, 0.0)));
    CHECK(x.grad().data == std::vector<double>{0.0, 1.0, 1.0});
}

TEST_CASE("gradcheck flags a wrong gradient") {
    // detach hides x from the tape, so the analytic gradient misses a term.
    const LossFn wrong = [](const std::vector<Var>& v) { return ad::sum(v[0] * ad::detach(v[0])); };
    CHECK(check(wrong, {seeded(2, 2, 7)}) > 0.4);
}

}
