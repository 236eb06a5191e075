// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
#include <doctest.h>

#include <cmath>

#include "morphvol/evaluation.hpp"
#include "morphvol/experiments.hpp"

using namespace morphvol;

TEST_SUITE("evaluation") {

TEST_CASE("DS: doubled expression variance") {
    const std::map<std::string, double> ref{{"alpha", 1.0}, {"beta", 1.0}, {"gamma", 1.0}};
    const auto ds = ds_score({{"alpha", 1.0}, {"beta", 2.0}, {"gamma", 1.0}}, ref);
    CHECK(ds.at("beta") == 4.0);
    CHECK(ds.at("alpha") == 0.5 * 1.0);
    CHECK(ds.at("gamma") == 0.5);
}

TEST_CASE("DS is invariant to a common variance scale") {
    const std::map<std::string, double> var{{"alpha", 0.3}, {"beta", 1.7}, {"gamma", 0.05}, {"pose", 2.2}};
    const std::map<std::string, double> ref{{"alpha", 0.9}, {"beta", 1.1}, {"gamma", 0.4}, {"pose", 1.0}};
    const auto base = ds_score(var, ref);
    for (double k : {1e-3, 0.5, 7.0, 1e4}) {
        std::map<std::string, double> scaled;
        for (const auto& [n, v] : var) scaled[n] = k * v;
        const auto s = ds_score(scaled, ref);
        for (const auto& [n, v] : base) CHECK(std::abs(s.at(n) - v) <= 1e-12 * v);
    }
    CHECK_THROWS(ds_score({{"a", 1.0}}, {{"a", 1.0}}));
    CHECK_THROWS(ds_score({{"a", 1.0}, {"b", 0.0}}, {{"a", 1.0}, {"b", 1.0}}));
}

TEST_CASE("control accuracy averages per-item block distances") {
    ControlParams a, b;
    b.beta[0] = 0.64;
    b.pose.yaw = 0.3;
    b.gamma[1] = -2.7;
    FitResult f;
    f.beta = a.beta;
    f.gamma = a.gamma;
    const std::vector<ControlParams> in{b};
    const std::vector<FitResult> fits{f};
    const ControlAccuracy l1 = control_accuracy(in, fits, Distance::l1);
    CHECK(l1.aed == doctest::Approx(0.64 / 64));
    CHECK(l1.apd == doctest::Approx(0.1));
    CHECK(l1.aid == doctest::Approx(0.1));
    const ControlAccuracy l2 = control_accuracy(in, fits, Distance::l2);
    CHECK(l2.aed == doctest::Approx(0.64));
    CHECK(l2.apd == doctest::Approx(0.3));
}

TEST_CASE("noiseless fitting recovers the generating coefficients") {
    const FaceBasis b = make_synthetic_basis();
    const FitRoundTrip r = fitting_round_trip(b, 5, 17);
    CHECK(r.max_abs_error < 1e-6);
    CHECK(r.accuracy.aed < 1e-6);
    CHECK(r.accuracy.apd < 1e-6);
    CHECK(r.accuracy.aid < 1e-6);
}

TEST_CASE("sample variance") {
    const std::vector<double> x{1.0, 2.0, 3.0, 4.0};
    CHECK(variance(x) == doctest::Approx(5.0 / 3.0));
    CHECK_THROWS(variance(std::vector<double>{1.0}));
}

TEST_CASE("temporal variance over masked pixels") {
    std::vector<Image> frames{Image(2, 1, 3, 0.0), Image(2, 1, 3, 0.0)};
    frames[1].at(0, 0, 0) = 1.0;
    frames[1].at(1, 0, 0) = 4.0;
    const std::vector<std::uint8_t> first{1, 0}, both{1, 1};
    CHECK(temporal_variance(frames, first) == doctest::Approx(0.5 / 3.0));
    CHECK(temporal_variance(frames, both) == doctest::Approx((0.5 + 8.0) / 6.0));
}

TEST_CASE("identity similarity of an image with itself") {
    const FeatureEmbedder e = FeatureEmbedder::make(3);
    Image a(16, 16, 3);
    Rng rng(1);
    for (double& v : a.data) v = rng.uniform();
    CHECK(identity_similarity(a, a, e) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(identity_similarity(a, Image(16, 16, 3, 0.0), e) == 0.0);
}

}
