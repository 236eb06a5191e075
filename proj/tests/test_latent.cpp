// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
#include <doctest.h>

#include <cmath>

#include "morphvol/latent.hpp"

using namespace morphvol;

TEST_SUITE("latent") {

TEST_CASE("KL to the standard normal") {
    const std::vector<double> zero(4, 0.0);
    CHECK(kl_to_standard_normal(zero, zero) == 0.0);
    // Single dimension: 0.5 (e^lv + mu^2 - 1 - lv).
    const std::vector<double> mu{1.5}, lv{std::log(2.0)};
    CHECK(kl_to_standard_normal(mu, lv) == doctest::Approx(0.5 * (2.0 + 2.25 - 1.0 - std::log(2.0))));
    const ad::Var kl = kl_to_standard_normal(ad::Var::constant(ad::Mat(1, 1, mu)), ad::Var::constant(ad::Mat(1, 1, lv)));
    CHECK(kl.item() == doctest::Approx(kl_to_standard_normal(mu, lv)).epsilon(1e-15));
}

TEST_CASE("reparameterization") {
    const std::vector<double> mu{1.0, -2.0}, lv{0.0, std::log(4.0)}, eps{0.5, 1.0};
    const auto z = reparameterize(mu, lv, eps);
    CHECK(z[0] == doctest::Approx(1.5));
    CHECK(z[1] == doctest::Approx(0.0));
}

TEST_CASE("VAE shapes and sampling") {
    Rng rng(1);
    const VaeModel v = make_vae(10, 3, 8, rng);
    CHECK(v.encoder.out_dim() == 6);
    CHECK(v.decoder.in_dim() == 3);
    CHECK(v.coeff_dim() == 10);
    CHECK(decode(v, std::vector<double>(3, 0.0)).size() == 10);
    Rng a(9), b(9);
    const ControlVaes vaes = make_control_vaes(rng);
    CHECK(sample_control(vaes, a, 16) == sample_control(vaes, b, 16));
    CHECK(sample_control(vaes, a, 16).epsilon.size() == 16);
}

TEST_CASE("VAE training lowers the loss") {
    Rng rng(2);
    VaeModel v = make_vae(6, 2, 16, rng);
    ad::Mat data(32, 6);
    for (std::size_t r = 0; r < 32; ++r) {
        const double s = rng.normal();
        for (std::size_t c = 0; c < 6; ++c) data(r, c) = s * (c + 1) * 0.2;
    }
    const auto losses = train_vae(v, data, 300, 5e-3, rng);
    CHECK(losses.back() < 0.5 * losses.front());
}

TEST_CASE("VAE loss total is the weighted sum of its terms") {
    Rng rng(3);
    const VaeModel v = make_vae(4, 2, 6, rng);
    const ad::Mat batch(3, 4, 0.7);
    Rng noise(4);
    const LossReport r = vae_loss(v, batch, noise);
    CHECK(r.total == doctest::Approx(r.terms.at("recon") + v.kl_weight * r.terms.at("kl")).epsilon(1e-14));
}

}
