// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
#include "morphvol/latent.hpp"

#include <cmath>
#include <stdexcept>

#include "morphvol/losses.hpp"

namespace morphvol {

namespace {

void same_size(std::size_t a, std::size_t b, const char* what) {
    if (a != b) throw std::invalid_argument(std::string(what) + ": length mismatch");
}

ad::Var row_of(std::span<const double> v) { return ad::Var::constant(ad::Mat(1, v.size(), {v.begin(), v.end()})); }

}  // namespace

void VaeModel::validate() const {
    if (encoder.layers.empty() || decoder.layers.empty()) throw std::invalid_argument("VaeModel: empty network");
    if (encoder.out_dim() != 2 * latent_dim) throw std::invalid_argument("VaeModel: encoder output must be 2 * latent_dim");
    if (decoder.in_dim() != latent_dim) throw std::invalid_argument("VaeModel: decoder input must be latent_dim");
    if (encoder.in_dim() != decoder.out_dim()) throw std::invalid_argument("VaeModel: encoder input != decoder output");
    for (const auto* m : {&encoder, &decoder})
        for (const auto& l : m->layers)
            for (const auto* mat : {&l.weight, &l.bias})
                for (double x : mat->data)
                    if (!std::isfinite(x)) throw std::invalid_argument("VaeModel: non-finite weight");
}

VaeModel make_vae(std::size_t coeff_dim, std::size_t latent_dim, std::size_t hidden_dim, Rng& rng) {
    VaeModel m;
    m.latent_dim = latent_dim;
    m.encoder = nn::make_mlp({coeff_dim, hidden_dim, 2 * latent_dim}, nn::Activation::relu, rng, 0.5);
    m.decoder = nn::make_mlp({latent_dim, hidden_dim, coeff_dim}, nn::Activation::relu, rng, 0.5);
    return m;
}

std::vector<double> reparameterize(std::span<const double> mu, std::span<const double> logvar,
                                   std::span<const double> noise) {
    same_size(mu.size(), logvar.size(), "reparameterize");
    same_size(mu.size(), noise.size(), "reparameterize");
    std::vector<double> z(mu.size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = mu[i] + std::exp(0.5 * logvar[i]) * noise[i];
    return z;
}

ad::Var reparameterize(const ad::Var& mu, const ad::Var& logvar, const ad::Var& noise) {
    return mu + ad::exp(logvar * 0.5) * noise;
}

double kl_to_standard_normal(std::span<const double> mu, std::span<const double> logvar) {
    same_size(mu.size(), logvar.size(), "kl_to_standard_normal");
    double s = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) s += std::exp(logvar[i]) + mu[i] * mu[i] - 1.0 - logvar[i];
    return 0.5 * s;
}

ad::Var kl_to_standard_normal(const ad::Var& mu, const ad::Var& logvar) {
    return ad::row_sum(ad::exp(logvar) + ad::square(mu) - 1.0 - logvar) * 0.5;
}

LossGraph vae_loss(const VaeModel& model, const nn::MlpVars& encoder, const nn::MlpVars& decoder,
                   const ad::Mat& batch, Rng& rng, const VaeLossOptions& opts) {
    if (batch.rows == 0) throw std::invalid_argument("vae_loss: empty batch");
    if (batch.cols != model.coeff_dim()) throw std::invalid_argument("vae_loss: batch width != coefficient dim");
    const ad::Var x = ad::Var::constant(batch);
    const ad::Var stats = nn::forward(encoder, x);
    const ad::Var mu = ad::slice_cols(stats, 0, model.latent_dim);
    const ad::Var logvar = ad::slice_cols(stats, model.latent_dim, 2 * model.latent_dim);
    ad::Mat noise(batch.rows, model.latent_dim);
    for (double& e : noise.data) e = rng.normal();
    const ad::Var z = reparameterize(mu, logvar, ad::Var::constant(noise));
    const ad::Var recon_x = nn::forward(decoder, z);
    const double inv_b = 1.0 / static_cast<double>(batch.rows);
    std::map<std::string, ad::Var> terms;
    terms["recon"] = ad::sum(ad::square(x - recon_x)) * inv_b;
    terms["kl"] = ad::sum(kl_to_standard_normal(mu, logvar)) * inv_b;
    terms["adv"] = opts.critic ? hinge_g_loss(opts.critic->score(recon_x)) : ad::Var::scalar(0.0);
    return weighted_sum(terms, {{"recon", 1.0}, {"kl", model.kl_weight}, {"adv", opts.adv_weight}});
}

LossReport vae_loss(const VaeModel& model, const ad::Mat& batch, Rng& rng, const VaeLossOptions& opts) {
    return vae_loss(model, nn::bind(model.encoder, false), nn::bind(model.decoder, false), batch, rng, opts).report;
}

std::vector<double> train_vae(VaeModel& model, const ad::Mat& data, int steps, double lr, Rng& rng,
                              const VaeLossOptions& opts) {
    std::vector<double> history;
    for (int s = 0; s < steps; ++s) {
        const nn::MlpVars enc = nn::bind(model.encoder, true);
        const nn::MlpVars dec = nn::bind(model.decoder, true);
        const LossGraph g = vae_loss(model, enc, dec, data, rng, opts);
        ad::backward(g.total);
        std::vector<nn::ParamRef> refs;
        nn::collect(model.encoder, "enc", refs);
        nn::collect(model.decoder, "dec", refs);
        std::vector<ad::Var> vars;
        nn::collect_vars(enc, vars);
        nn::collect_vars(dec, vars);
        std::vector<ad::Mat> grads;
        for (const auto& v : vars) grads.push_back(v.grad());
        nn::sgd_step(refs, grads, lr);
        history.push_back(g.report.total);
    }
    return history;
}

std::vector<double> decode(const VaeModel& model, std::span<const double> z) {
    if (z.size() != model.latent_dim) throw std::invalid_argument("decode: latent size mismatch");
    return nn::forward(nn::bind(model.decoder, false), row_of(z)).value().data;
}

ControlVaes make_control_vaes(Rng& rng, std::size_t id_latent, std::size_t exp_latent, std::size_t ill_latent,
                              std::size_t hidden) {
    ControlVaes v;
    v.identity = make_vae(kIdDim + kAlbedoDim, id_latent, hidden, rng);
    v.expression = make_vae(kExpDim, exp_latent, hidden, rng);
    v.illumination = make_vae(kGammaDim, ill_latent, hidden, rng);
    return v;
}

ControlParams sample_control(const ControlVaes& vaes, Rng& rng, std::size_t epsilon_dim) {
    auto draw = [&rng](std::size_t n) {
        std::vector<double> z(n);
        for (double& e : z) e = rng.normal();
        return z;
    };
    ControlParams p;
    const auto kappa = decode(vaes.identity, draw(vaes.identity.latent_dim));
    if (kappa.size() != kIdDim + kAlbedoDim) throw std::invalid_argument("sample_control: identity decoder must emit 160 values");
    p.alpha.assign(kappa.begin(), kappa.begin() + kIdDim);
    p.delta.assign(kappa.begin() + kIdDim, kappa.end());
    p.beta = decode(vaes.expression, draw(vaes.expression.latent_dim));
    p.gamma = decode(vaes.illumination, draw(vaes.illumination.latent_dim));
    if (p.beta.size() != kExpDim || p.gamma.size() != kGammaDim)
        throw std::invalid_argument("sample_control: decoder output dimensions must be 64 and 27");
    p.epsilon = draw(epsilon_dim);
    return p;
}

void MappingNetwork::validate() const {
    if (mlp.layers.empty()) throw std::invalid_argument("MappingNetwork: no layers");
    for (std::size_t i = 0; i + 1 < mlp.layers.size(); ++i)
        if (mlp.layers[i].out_dim() != mlp.layers[i + 1].in_dim())
            throw std::invalid_argument("MappingNetwork: layer widths do not chain");
    if (mlp.out_dim() != out_dim()) throw std::invalid_argument("MappingNetwork: output width != out_rows * out_cols");
}

MappingNetwork make_mapping_network(std::size_t in_dim, std::size_t out_rows, std::size_t out_cols,
                                    std::size_t layers, Rng& rng) {
    if (layers == 0) throw std::invalid_argument("make_mapping_network: need at least one layer");
    MappingNetwork net;
    net.out_rows = out_rows;
    net.out_cols = out_cols;
    std::vector<std::size_t> widths{in_dim};
    for (std::size_t i = 0; i < layers; ++i) widths.push_back(out_rows * out_cols);
    net.mlp = nn::make_mlp(widths, nn::Activation::leaky_relu, rng);
    return net;
}

ad::Var map_to_w(const nn::MlpVars& net, const ad::Var& z) {
    if (net.layers.empty()) throw std::invalid_argument("map_to_w: empty network");
    if (z.cols() != net.layers.front().weight.rows())
        throw std::invalid_argument("map_to_w: input has " + std::to_string(z.cols()) + " values, network expects " +
                                    std::to_string(net.layers.front().weight.rows()));
    return nn::forward(net, z);
}

std::vector<double> map_to_w(const MappingNetwork& net, std::span<const double> z) {
    return map_to_w(nn::bind(net.mlp, false), row_of(z)).value().data;
}

}  // namespace morphvol
