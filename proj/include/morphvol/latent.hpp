// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
// Coefficient VAEs (identity, expression, illumination) and the mapping
// network from the semantic control vector to the generator code w.
#pragma once

#include <span>
#include <vector>

#include "morphvol/autodiff.hpp"
#include "morphvol/loss_report.hpp"
#include "morphvol/nn.hpp"
#include "morphvol/types.hpp"

namespace morphvol {

struct VaeModel {
    nn::Mlp encoder;  // coeff_dim -> 2 * latent_dim ([mu, logvar])
    nn::Mlp decoder;  // latent_dim -> coeff_dim
    std::size_t latent_dim = 0;
    double kl_weight = 1e-3;

    std::size_t coeff_dim() const { return decoder.out_dim(); }
    void validate() const;
};

VaeModel make_vae(std::size_t coeff_dim, std::size_t latent_dim, std::size_t hidden_dim, Rng& rng);

/// z = mu + exp(0.5 logvar) * noise
std::vector<double> reparameterize(std::span<const double> mu, std::span<const double> logvar,
                                   std::span<const double> noise);
ad::Var reparameterize(const ad::Var& mu, const ad::Var& logvar, const ad::Var& noise);

/// 0.5 * sum(exp(logvar) + mu^2 - 1 - logvar)
double kl_to_standard_normal(std::span<const double> mu, std::span<const double> logvar);
/// Row-wise KL, B x 1.
ad::Var kl_to_standard_normal(const ad::Var& mu, const ad::Var& logvar);

struct VaeLossOptions {
    double adv_weight = 0.0;
    /// Critic on decoded coefficients; the adversarial term is 0 without one.
    const nn::TinyDiscriminator* critic = nullptr;
};

/// Terms: recon = mean over the batch of ||x - x_hat||^2, kl = mean row KL,
/// adv = generator hinge loss of the critic on the reconstructions.
/// Weights: recon 1, kl = model.kl_weight, adv = opts.adv_weight.
LossGraph vae_loss(const VaeModel& model, const nn::MlpVars& encoder, const nn::MlpVars& decoder,
                   const ad::Mat& batch, Rng& rng, const VaeLossOptions& opts = {});
LossReport vae_loss(const VaeModel& model, const ad::Mat& batch, Rng& rng, const VaeLossOptions& opts = {});

/// Plain gradient descent on vae_loss over the full batch; returns per-step totals.
std::vector<double> train_vae(VaeModel& model, const ad::Mat& data, int steps, double lr, Rng& rng,
                              const VaeLossOptions& opts = {});

std::vector<double> decode(const VaeModel& model, std::span<const double> z);

struct ControlVaes {
    VaeModel identity;      // 160 = [alpha, delta]
    VaeModel expression;    // 64
    VaeModel illumination;  // 27
};

ControlVaes make_control_vaes(Rng& rng, std::size_t id_latent = 32, std::size_t exp_latent = 16,
                              std::size_t ill_latent = 8, std::size_t hidden = 64);

/// Draws z ~ N(0, I) per attribute, decodes, and draws epsilon ~ N(0, I).
ControlParams sample_control(const ControlVaes& vaes, Rng& rng, std::size_t epsilon_dim);

struct MappingNetwork {
    nn::Mlp mlp;
    std::size_t out_rows = 4;
    std::size_t out_cols = 64;

    std::size_t in_dim() const { return mlp.in_dim(); }
    std::size_t out_dim() const { return out_rows * out_cols; }
    void validate() const;
};

/// `layers` fully connected layers, leaky ReLU between them, hidden width = output size.
MappingNetwork make_mapping_network(std::size_t in_dim, std::size_t out_rows, std::size_t out_cols,
                                    std::size_t layers, Rng& rng);

/// z (1 x in_dim) -> w (1 x out_rows*out_cols), row-major [out_rows][out_cols].
ad::Var map_to_w(const nn::MlpVars& net, const ad::Var& z);
std::vector<double> map_to_w(const MappingNetwork& net, std::span<const double> z);

}  // namespace morphvol
