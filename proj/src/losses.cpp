// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
#include "morphvol/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace morphvol {

namespace {

void same_shape(const ad::Var& a, const ad::Var& b, const char* what) {
    if (!a.value().same_shape(b.value()))
        throw std::invalid_argument(std::string(what) + ": shape " + ad::shape_str(a.value()) + " vs " + ad::shape_str(b.value()));
}

void flag(Flags* flags, std::string msg) {
    if (flags) flags->push_back(std::move(msg));
}

ad::Var column(std::span<const double> v) { return ad::Var::constant(ad::Mat(v.size(), 1, {v.begin(), v.end()})); }

}  // namespace

ad::Var loss_tex(const ad::Var& image, const ad::Var& guidance) {
    same_shape(image, guidance, "loss_tex");
    return ad::mean(ad::square(image - guidance));
}

ad::Var embed(const FeatureEmbedder& e, const ad::Var& image, int width, int height, Flags* flags) {
    const ad::Var raw = e.raw(image, width, height);
    const ad::Var n = ad::sqrt(ad::sum(ad::square(raw)));
    if (n.item() == 0.0) {
        flag(flags, "zero embedding");
        return raw;
    }
    return raw / n;
}

ad::Var loss_id(const ad::Var& image, const ad::Var& guidance, int width, int height, const FeatureEmbedder& e, Flags* flags) {
    same_shape(image, guidance, "loss_id");
    Flags local;
    const ad::Var a = embed(e, image, width, height, &local);
    const ad::Var b = embed(e, guidance, width, height, &local);
    if (!local.empty()) {
        flag(flags, "loss_id: zero embedding, loss defined as 1");
        return ad::Var::scalar(1.0);
    }
    return 1.0 - ad::sum(a * b);
}

ad::Var loss_lmk(const ad::Var& lmk_image, const ad::Var& lmk_guidance, std::span<const double> weights) {
    same_shape(lmk_image, lmk_guidance, "loss_lmk");
    if (weights.size() != lmk_image.rows()) throw std::invalid_argument("loss_lmk: one weight per landmark");
    return ad::sum(ad::row_norm(lmk_image - lmk_guidance) * column(weights));
}

std::vector<double> landmark_weights(const FaceBasis& basis, double emphasized) {
    std::vector<double> w(basis.landmark_idx.size(), 1.0);
    for (int i : basis.emphasized_landmarks) {
        if (i < 0 || static_cast<std::size_t>(i) >= w.size()) throw std::invalid_argument("landmark_weights: index out of range");
        w[i] = emphasized;
    }
    return w;
}

ad::Var loss_ill(const ad::Var& gamma, const ad::Var& gamma_rec) {
    if (gamma.value().size() != gamma_rec.value().size()) throw std::invalid_argument("loss_ill: size mismatch");
    const std::size_t n = gamma.value().size();
    return ad::row_norm(ad::reshape(gamma, 1, n) - ad::reshape(gamma_rec, 1, n));
}

ad::Var loss_ce(const ad::Var& semantic, std::span<const int> labels) {
    const std::size_t N = semantic.rows(), K = semantic.cols();
    if (labels.size() != N) throw std::invalid_argument("loss_ce: one label per pixel");
    for (double v : semantic.value().data)
        if (!(v >= 0.0)) throw std::invalid_argument("loss_ce: rendered masses must be nonnegative");
    ad::Mat onehot(N, K);
    for (std::size_t i = 0; i < N; ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= K) throw std::invalid_argument("loss_ce: label out of range");
        onehot(i, static_cast<std::size_t>(labels[i])) = 1.0;
    }
    const ad::Var alpha = ad::clamp_min(ad::row_sum(semantic), kCeFloor);
    const ad::Var logp = ad::log(ad::clamp_min(semantic / alpha, kCeFloor));
    return ad::sum(ad::Var::constant(std::move(onehot)) * logp) * (-1.0 / static_cast<double>(N));
}

LossGraph loss_imitative(const ImitativeTerms& t, const ImitativeWeights& w) {
    return weighted_sum({{"tex", t.tex}, {"id", t.id}, {"lmk", t.lmk}, {"ill", t.ill}, {"ce", t.ce}},
                        {{"tex", w.tex}, {"id", w.id}, {"lmk", w.lmk}, {"ill", w.ill}, {"ce", w.ce}});
}

ad::Var hinge_d_loss(const ad::Var& real_scores, const ad::Var& fake_scores) {
    return ad::mean(ad::relu(1.0 - real_scores)) + ad::mean(ad::relu(1.0 + fake_scores));
}

ad::Var hinge_g_loss(const ad::Var& fake_scores) { return -ad::mean(fake_scores); }

ad::Var r1_penalty(const ad::Var& grad) { return ad::mean(ad::row_sum(ad::square(grad))); }

ad::Var discriminator_loss(const nn::TinyDiscriminator& d, const ad::Var& real, const ad::Var& fake, double r1_weight) {
    return hinge_d_loss(d.score(real), d.score(fake)) + r1_penalty(d.input_gradient(real)) * r1_weight;
}

ad::Var loss_dis_kappa(const ad::Var& image, const ad::Var& image_kappa, const ad::Var& bg_mask, const ad::Var& bg_mask_kappa) {
    same_shape(image, image_kappa, "loss_dis_kappa");
    same_shape(bg_mask, bg_mask_kappa, "loss_dis_kappa masks");
    if (bg_mask.rows() != image.rows() || bg_mask.cols() != 1)
        throw std::invalid_argument("loss_dis_kappa: masks must be (H*W) x 1");
    return ad::mean(ad::square(image_kappa * bg_mask_kappa - image * bg_mask));
}

ad::Var loss_dis_gamma(const ad::Var& image_gamma, const ad::Var& image, int width, int height, const FeatureEmbedder& e,
                       const FaceRegressor& reg, std::span<const double> lmk_weights, Flags* flags) {
    return loss_id(image_gamma, image, width, height, e, flags) +
           loss_lmk(reg.landmarks(image_gamma), reg.landmarks(image), lmk_weights);
}

ad::Var loss_tex_beta(const ad::Var& image_beta, const ad::Var& image, const Flow2D& flow) {
    same_shape(image_beta, image, "loss_tex_beta");
    return ad::mean(ad::square(image_beta - warp(image, flow)));
}

ad::Var loss_lip(const ad::Var& image_beta, const ad::Var& image, int width, int height, std::span<const double> lip_mask_beta,
                 std::span<const double> lip_mask, const FeatureEmbedder& e, Flags* flags) {
    same_shape(image_beta, image, "loss_lip");
    const std::size_t n = static_cast<std::size_t>(width) * height;
    if (lip_mask_beta.size() != n || lip_mask.size() != n) throw std::invalid_argument("loss_lip: masks must have W*H entries");
    auto total = [](std::span<const double> m) {
        double s = 0.0;
        for (double v : m) s += v;
        return s;
    };
    if (!(total(lip_mask_beta) > 0.0) || !(total(lip_mask) > 0.0)) {
        flag(flags, "loss_lip: empty lip mask, loss defined as 0");
        return ad::Var::scalar(0.0);
    }
    const StyleFeatures fb = e.style(image_beta, width, height);
    const StyleFeatures fa = e.style(image, width, height);
    auto stage = [](const ad::Var& xb, const ad::Var& xa, std::span<const double> mb, std::span<const double> ma) {
        const MaskedStats sb = masked_stats(xb, mb);
        const MaskedStats sa = masked_stats(xa, ma);
        return ad::row_norm(sb.mean - sa.mean) + ad::row_norm(sb.variance - sa.variance);
    };
    ad::Var out = stage(fb.phi1, fa.phi1, lip_mask_beta, lip_mask);
    const auto pb = avgpool2(lip_mask_beta, width, height);
    const auto pa = avgpool2(lip_mask, width, height);
    if (total(pb) > 0.0 && total(pa) > 0.0) {
        out = out + stage(fb.phi2, fa.phi2, pb, pa);
    } else {
        flag(flags, "loss_lip: lip mask vanishes after pooling, second stage skipped");
    }
    return out;
}

LossGraph loss_dis_beta(const DisBetaTerms& t, const DisBetaWeights& w) {
    return weighted_sum({{"id", t.id}, {"tex", t.tex}, {"lip", t.lip}}, {{"id", w.id}, {"tex", w.tex}, {"lip", w.lip}});
}

LossGraph loss_dis_total(const ad::Var& kappa, const ad::Var& gamma, const ad::Var& beta_total) {
    return weighted_sum({{"kappa", kappa}, {"gamma", gamma}, {"beta", beta_total}}, {{"kappa", 1.0}, {"gamma", 1.0}, {"beta", 1.0}});
}

LossGraph inversion_objective(const InversionInputs& in, const FeatureEmbedder& e, const FaceRegressor& reg,
                              std::span<const double> lmk_weights, const InversionWeights& w) {
    same_shape(in.w, in.w_mean, "inversion_objective w");
    Flags flags;
    std::map<std::string, ad::Var> terms;
    terms["pixel"] = loss_tex(in.image, in.target);
    terms["lmk"] = loss_lmk(reg.landmarks(in.image), reg.landmarks(in.target), lmk_weights);
    terms["id"] = loss_id(in.image, in.target, in.width, in.height, e, &flags);
    terms["reg"] = ad::row_norm(ad::reshape(in.w - in.w_mean, 1, in.w.value().size()));
    LossGraph g = weighted_sum(terms, {{"pixel", w.pixel}, {"lmk", w.lmk}, {"id", w.id}, {"reg", w.reg}});
    g.report.flags = std::move(flags);
    return g;
}

GradcheckResult gradcheck(const LossFn& f, const std::vector<ad::Mat>& params, double h, std::size_t max_coords,
                          std::uint64_t seed, double kink_tolerance) {
    if (!(h > 0.0)) throw std::invalid_argument("gradcheck: step must be positive");
    std::vector<ad::Var> vars;
    for (const auto& p : params) vars.push_back(ad::Var::parameter(p));
    const ad::Var out = f(vars);
    if (out.value().size() != 1) throw std::invalid_argument("gradcheck: loss must be a scalar");
    ad::backward(out);

    GradcheckResult res;
    res.per_param.assign(params.size(), 0.0);
    Rng rng(seed);
    for (std::size_t b = 0; b < params.size(); ++b) {
        const ad::Mat analytic = vars[b].grad();
        std::vector<std::size_t> coords(params[b].size());
        for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
        if (max_coords > 0 && coords.size() > max_coords) {
            for (std::size_t i = 0; i < max_coords; ++i) {
                const std::size_t j = i + static_cast<std::size_t>(rng.uniform() * static_cast<double>(coords.size() - i));
                std::swap(coords[i], coords[std::min(j, coords.size() - 1)]);
            }
            coords.resize(max_coords);
        }
        std::vector<double> errs(coords.size(), 0.0);
        const long nc = static_cast<long>(coords.size());
#pragma omp parallel for schedule(dynamic) num_threads(ad::num_threads())
        for (long ci = 0; ci < nc; ++ci) {
            const std::size_t c = coords[static_cast<std::size_t>(ci)];
            auto eval = [&](double offset) {
                std::vector<ad::Var> in;
                for (std::size_t k = 0; k < params.size(); ++k) {
                    ad::Mat m = params[k];
                    if (k == b) m.data[c] += offset;
                    in.push_back(ad::Var::constant(std::move(m)));
                }
                return f(in).item();
            };
            auto stencil = [&](double s) { return (8.0 * (eval(s) - eval(-s)) - (eval(2.0 * s) - eval(-2.0 * s))) / (12.0 * s); };
            const double numeric = stencil(h);
            const double a = analytic.data[c];
            const double scale = std::max({std::abs(a), std::abs(numeric), 1e-8});
            // A kink inside the stencil makes the two step sizes disagree.
            if (kink_tolerance > 0.0 && std::abs(stencil(0.5 * h) - numeric) > kink_tolerance * scale) {
                errs[static_cast<std::size_t>(ci)] = -1.0;
                continue;
            }
            errs[static_cast<std::size_t>(ci)] = std::abs(a - numeric) / scale;
        }
        for (double e : errs) {
            if (e < 0.0) {
                ++res.coords_skipped;
                continue;
            }
            res.per_param[b] = std::max(res.per_param[b], e);
        }
        res.max_rel_error = std::max(res.max_rel_error, res.per_param[b]);
        res.coords_checked += coords.size() - static_cast<std::size_t>(std::count(errs.begin(), errs.end(), -1.0));
    }
    return res;
}

std::vector<LossReport> micro_train(std::vector<nn::ParamRef> params, const StagedObjective& objective, const TrainOptions& opt) {
    if (opt.steps < 0) throw std::invalid_argument("micro_train: steps must be >= 0");
    std::vector<LossReport> history;
    history.reserve(static_cast<std::size_t>(opt.steps));
    nn::Adam adam(opt.lr);
    for (int s = 0; s < opt.steps; ++s) {
        const int stage = opt.stage_switch >= 0 && s >= opt.stage_switch ? 1 : 0;
        std::vector<ad::Var> vars;
        for (const auto& p : params) vars.push_back(ad::Var::parameter(*p.value));
        const LossGraph g = objective(vars, stage);
        ad::backward(g.total);
        std::vector<ad::Mat> grads;
        for (const auto& v : vars) grads.push_back(v.grad());
        if (opt.adam)
            adam.step(params, grads);
        else
            nn::sgd_step(params, grads, opt.lr);
        history.push_back(g.report);
    }
    return history;
}

}  // namespace morphvol
