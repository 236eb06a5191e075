// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
#include "morphvol/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "morphvol/embedder.hpp"
#include "morphvol/losses.hpp"
#include "morphvol/raster.hpp"
#include "morphvol/regressor.hpp"

namespace morphvol {

namespace {

ad::Mat random_mat(std::size_t r, std::size_t c, double std, Rng& rng) {
    ad::Mat m(r, c);
    for (double& v : m.data) v = rng.normal(0.0, std);
    return m;
}

ad::Mat clamped(const Image& img) {
    ad::Mat m = image_to_mat(img);
    for (double& v : m.data) v = std::clamp(v, 0.0, 1.0);
    return m;
}

Camera square_camera(int size) {
    CameraConfig cc;
    cc.width = size;
    cc.height = size;
    return camera_for_pose(Pose{}, cc);
}

ControlParams random_face(Rng& rng, double alpha_std, double beta_std, double gamma_std) {
    ControlParams p;
    for (double& v : p.alpha) v = rng.normal(0.0, alpha_std);
    for (double& v : p.beta) v = rng.normal(0.0, beta_std);
    p.gamma = ambient_gamma();
    for (double& v : p.gamma) v += rng.normal(0.0, gamma_std);
    return p;
}

// Four-ray scene for the gradient suite.
struct MicroScene {
    static constexpr int kSize = 2;
    static constexpr int kRes = 4;
    static constexpr int kChannels = 3;
    static constexpr double kBound = 1.0;

    FieldDecoder decoder;
    Camera cam;
    RayBatch batch;
    std::vector<ad::Mat> params;  // planes, shared.weight, appearance.weight, semantic.weight

    explicit MicroScene(Rng& rng) {
        decoder = make_field_decoder(kChannels, 4, kDefaultClassCount, rng);
        cam = square_camera(kSize);
        params = {random_mat(3 * kRes * kRes, kChannels, 0.8, rng), decoder.shared.weight, decoder.appearance.weight,
                  decoder.semantic.weight};
        RenderOptions ro;
        ro.coarse_samples = 6;
        ro.fine_samples = 6;
        TriPlanes planes(kRes, kChannels, kBound);
        planes.data = params[0];
        batch = plan_rays(TriPlaneField(planes, decoder), cam, ro);
    }

    RenderGraph render(const std::vector<ad::Var>& v, double plane_offset = 0.0) const {
        DecoderVars dv = bind(decoder, false);
        dv.shared.weight = v[1];
        dv.appearance.weight = v[2];
        dv.semantic.weight = v[3];
        const ad::Var planes = plane_offset == 0.0 ? v[0] : v[0] + plane_offset;
        const TriPlaneField field(planes, kRes, kBound, dv);
        return render_batch(field, batch);
    }
};

}  // namespace

std::vector<GradcheckEntry> gradient_suite(std::uint64_t seed, double h) {
    Rng rng(seed);
    const MicroScene scene(rng);
    constexpr int n = MicroScene::kSize;
    const FaceBasis basis = make_synthetic_basis();
    const FaceRegressor reg = train_face_regressor(basis, scene.cam, n, n);
    const FeatureEmbedder emb = FeatureEmbedder::make(seed + 1);
    const auto lmk_w = landmark_weights(basis);
    const nn::TinyDiscriminator disc = nn::TinyDiscriminator::make(n * n * 3, 6, rng);

    ad::Mat guidance = random_mat(n * n, 3, 0.2, rng);
    for (double& v : guidance.data) v = std::clamp(v + 0.5, 0.0, 1.0);
    const ad::Var g_const = ad::Var::constant(guidance);
    const ad::Mat lmk_target = reg.landmarks(g_const).value();
    const ad::Mat gamma_target = reg.gamma(g_const).value();
    const ad::Mat real = random_mat(1, n * n * 3, 0.3, rng);
    const std::vector<int> labels{0, 1, 3, 4};
    Flow2D flow;
    flow.width = n;
    flow.height = n;
    flow.flow = {0.3, -0.2, 0.0, 0.0, -0.4, 0.25, 0.1, 0.35};
    flow.valid = {1, 0, 1, 1};
    const std::vector<double> lip_a{1.0, 0.0, 1.0, 1.0};
    const std::vector<double> lip_b{1.0, 1.0, 0.0, 1.0};
    const ad::Mat w_mean = random_mat(1, MicroScene::kChannels, 0.5, rng);

    auto flat = [](const ad::Var& img) { return ad::reshape(img, 1, img.rows() * img.cols()); };
    auto imitative_terms = [&](const RenderGraph& g) {
        ImitativeTerms t;
        t.tex = loss_tex(g.rgb, g_const);
        t.id = loss_id(g.rgb, g_const, n, n, emb);
        t.lmk = loss_lmk(reg.landmarks(g.rgb), ad::Var::constant(lmk_target), lmk_w);
        t.ill = loss_ill(reg.gamma(g.rgb), ad::Var::constant(gamma_target));
        t.ce = loss_ce(g.semantic, labels);
        return t;
    };
    auto bg_mask = [](const RenderGraph& g) { return 1.0 - g.alpha; };
    auto dis_beta = [&](const RenderGraph& a, const RenderGraph& b) {
        DisBetaTerms t;
        t.id = loss_id(b.rgb, a.rgb, n, n, emb);
        t.tex = loss_tex_beta(b.rgb, a.rgb, flow);
        t.lip = loss_lip(b.rgb, a.rgb, n, n, lip_b, lip_a, emb);
        return loss_dis_beta(t).total;
    };

    std::vector<std::pair<std::string, LossFn>> suite{
        {"tex", [&](const std::vector<ad::Var>& v) { return loss_tex(scene.render(v).rgb, g_const); }},
        {"id", [&](const std::vector<ad::Var>& v) { return loss_id(scene.render(v).rgb, g_const, n, n, emb); }},
        {"lmk",
         [&](const std::vector<ad::Var>& v) {
             return loss_lmk(reg.landmarks(scene.render(v).rgb), ad::Var::constant(lmk_target), lmk_w);
         }},
        {"ill",
         [&](const std::vector<ad::Var>& v) {
             return loss_ill(reg.gamma(scene.render(v).rgb), ad::Var::constant(gamma_target));
         }},
        {"ce", [&](const std::vector<ad::Var>& v) { return loss_ce(scene.render(v).semantic, labels); }},
        {"imitative", [&](const std::vector<ad::Var>& v) { return loss_imitative(imitative_terms(scene.render(v))).total; }},
        {"hinge_g", [&](const std::vector<ad::Var>& v) { return hinge_g_loss(disc.score(flat(scene.render(v).rgb))); }},
        {"hinge_d",
         [&](const std::vector<ad::Var>& v) {
             return hinge_d_loss(disc.score(ad::Var::constant(real)), disc.score(flat(scene.render(v).rgb)));
         }},
        {"r1", [&](const std::vector<ad::Var>& v) { return r1_penalty(disc.input_gradient(flat(scene.render(v).rgb))); }},
        {"discriminator",
         [&](const std::vector<ad::Var>& v) {
             return discriminator_loss(disc, flat(scene.render(v).rgb), ad::Var::constant(real), 10.0);
         }},
        {"dis_kappa",
         [&](const std::vector<ad::Var>& v) {
             const RenderGraph a = scene.render(v), b = scene.render(v, 0.3);
             return loss_dis_kappa(a.rgb, b.rgb, bg_mask(a), bg_mask(b));
         }},
        {"dis_gamma",
         [&](const std::vector<ad::Var>& v) {
             return loss_dis_gamma(scene.render(v, -0.2).rgb, scene.render(v).rgb, n, n, emb, reg, lmk_w);
         }},
        {"tex_beta",
         [&](const std::vector<ad::Var>& v) { return loss_tex_beta(scene.render(v, 0.25).rgb, scene.render(v).rgb, flow); }},
        {"lip",
         [&](const std::vector<ad::Var>& v) {
             return loss_lip(scene.render(v, 0.25).rgb, scene.render(v).rgb, n, n, lip_b, lip_a, emb);
         }},
        {"dis_beta", [&](const std::vector<ad::Var>& v) { return dis_beta(scene.render(v), scene.render(v, 0.25)); }},
        {"dis_total",
         [&](const std::vector<ad::Var>& v) {
             const RenderGraph a = scene.render(v), k = scene.render(v, 0.3), g = scene.render(v, -0.2),
                               b = scene.render(v, 0.25);
             return loss_dis_total(loss_dis_kappa(a.rgb, k.rgb, bg_mask(a), bg_mask(k)),
                                   loss_dis_gamma(g.rgb, a.rgb, n, n, emb, reg, lmk_w), dis_beta(a, b))
                 .total;
         }},
        {"inversion",
         [&](const std::vector<ad::Var>& v) {
             InversionInputs in;
             in.image = scene.render(v).rgb;
             in.target = g_const;
             in.width = n;
             in.height = n;
             in.w = ad::slice_rows(v[0], 0, 1);
             in.w_mean = ad::Var::constant(w_mean);
             return inversion_objective(in, emb, reg, lmk_w).total;
         }},
    };

    std::vector<GradcheckEntry> out;
    for (const auto& [name, fn] : suite) {
        const GradcheckResult r = gradcheck(fn, scene.params, h);
        out.push_back({name, r.max_rel_error, r.coords_checked, r.coords_skipped});
    }

    // The control VAE objective is checked on its own encoder and decoder.
    Rng vrng(seed + 2);
    VaeModel vae = make_vae(6, 2, 5, vrng);
    const ad::Mat batch = random_mat(3, 6, 1.0, vrng);
    std::vector<ad::Mat> vparams;
    for (const auto& l : vae.encoder.layers) vparams.insert(vparams.end(), {l.weight, l.bias});
    for (const auto& l : vae.decoder.layers) vparams.insert(vparams.end(), {l.weight, l.bias});
    const std::size_t enc_layers = vae.encoder.layers.size();
    const LossFn vae_fn = [&](const std::vector<ad::Var>& v) {
        nn::MlpVars enc{{}, vae.encoder.hidden}, dec{{}, vae.decoder.hidden};
        for (std::size_t i = 0; i < enc_layers; ++i) enc.layers.push_back({v[2 * i], v[2 * i + 1]});
        for (std::size_t i = enc_layers; 2 * i < v.size(); ++i) dec.layers.push_back({v[2 * i], v[2 * i + 1]});
        Rng noise(seed + 3);
        return vae_loss(vae, enc, dec, batch, noise).total;
    };
    const GradcheckResult vr = gradcheck(vae_fn, vparams, h);
    out.push_back({"vae", vr.max_rel_error, vr.coords_checked, vr.coords_skipped});
    return out;
}

MicroImitativeResult micro_imitative(const MicroImitativeOptions& opt) {
    if (opt.size < 2) throw std::invalid_argument("micro_imitative: size must be >= 2");
    Rng rng(opt.seed);
    const FaceBasis basis = make_synthetic_basis();
    const Camera cam = square_camera(opt.size);
    const ControlParams target = random_face(rng, 0.5, 0.5, 0.1);
    const RasterBuffers buf = rasterize(build_face_mesh(basis, target), cam, opt.size, opt.size);
    const ad::Var guidance = ad::Var::constant(clamped(buf.image));
    const FaceRegressor reg = train_face_regressor(basis, cam, opt.size, opt.size);
    const ad::Var lmk_target = ad::Var::constant(reg.landmarks(guidance).value());
    const ad::Var gamma_target = ad::Var::constant(reg.gamma(guidance).value());
    const FeatureEmbedder emb = FeatureEmbedder::make(opt.seed + 1);
    const auto lmk_w = landmark_weights(basis);

    GeneratorConfig gc;
    gc.resolution = opt.plane_resolution;
    gc.channels = opt.plane_channels;
    gc.hidden = opt.generator_hidden;
    TriPlaneGenerator gen = make_triplane_generator(opt.w_dim, gc, rng);
    FieldDecoder dec = make_field_decoder(static_cast<std::size_t>(opt.plane_channels), opt.decoder_hidden,
                                          kDefaultClassCount, rng);
    const ad::Var w = ad::Var::constant(random_mat(1, opt.w_dim, 1.0, rng));
    const Vec3 dir = PortraitModel::view_direction(cam);

    std::vector<nn::ParamRef> params;
    nn::collect(gen.hidden, "generator.hidden", params);
    nn::collect(gen.output, "generator.output", params);
    nn::collect(dec.shared, "decoder.shared", params);
    nn::collect(dec.appearance, "decoder.appearance", params);
    nn::collect(dec.semantic, "decoder.semantic", params);

    RenderOptions ro;
    ro.coarse_samples = opt.coarse;
    ro.fine_samples = opt.fine;
    const ImitativeWeights weights;
    const StagedObjective objective = [&](const std::vector<ad::Var>& v, int) {
        const GeneratorVars gv{{v[0], v[1]}, {v[2], v[3]}};
        const DecoderVars dv{{v[4], v[5]}, {v[6], v[7]}, {v[8], v[9]}, dec.view_conditioned, dec.view_pe_order};
        const TriPlaneField field(generate_triplanes(gen, gv, w, dir), gen.resolution, gen.bound, dv);
        const RenderGraph g = render_batch(field, plan_rays(field, cam, ro));
        ImitativeTerms t;
        t.tex = loss_tex(g.rgb, guidance);
        t.id = loss_id(g.rgb, guidance, opt.size, opt.size, emb);
        t.lmk = loss_lmk(reg.landmarks(g.rgb), lmk_target, lmk_w);
        t.ill = loss_ill(reg.gamma(g.rgb), gamma_target);
        t.ce = loss_ce(g.semantic, buf.labels);
        return loss_imitative(t, weights);
    };
    TrainOptions to;
    to.steps = opt.steps;
    to.lr = opt.lr;
    to.adam = opt.adam;
    MicroImitativeResult r;
    r.reports = micro_train(params, objective, to);
    std::vector<ad::Var> final_vars;
    for (const auto& p : params) final_vars.push_back(ad::Var::constant(*p.value));
    r.last = objective(final_vars, 0).report;
    r.initial = r.reports.empty() ? r.last.total : r.reports.front().total;
    r.final = r.last.total;
    return r;
}

InversionResult invert(const PortraitModel& model, const ControlParams& target, const InversionOptions& opt) {
    if (opt.steps < 0 || opt.size < 2) throw std::invalid_argument("invert: need steps >= 0 and size >= 2");
    target.validate(model.epsilon_dim());
    const Camera cam = model.camera_for(target.pose, opt.size, opt.size);
    const RenderOptions ro = model.render_options(true, opt.seed);
    const ad::Var tgt = ad::Var::constant(model.render(target, cam, ro).rgb);
    const FaceRegressor reg = train_face_regressor(model.basis, model.camera_for(Pose{}, opt.size, opt.size), opt.size, opt.size);
    const FeatureEmbedder emb = FeatureEmbedder::make(model.config.seed + 1);
    const auto lmk_w = landmark_weights(model.basis);
    const nn::MlpVars mv = nn::bind(model.mapping.mlp, false);
    const GeneratorVars gv = bind(model.generator, false);
    const DecoderVars dv = bind(model.decoder, false);
    const ad::Var w_mean = ad::Var::constant(ad::Mat(1, model.w_mean.size(), model.w_mean));
    const Vec3 dir = PortraitModel::view_direction(cam);

    InversionResult r;
    r.z_true = target.latent_vector();
    Rng rng(opt.seed);
    std::vector<double> delta(r.z_true.size());
    double norm = 0.0;
    for (double& d : delta) {
        d = rng.normal();
        norm += d * d;
    }
    norm = std::sqrt(norm);
    r.z_init = r.z_true;
    for (std::size_t i = 0; i < delta.size(); ++i) r.z_init[i] += opt.perturbation * delta[i] / norm;
    r.z = r.z_init;

    auto evaluate = [&](const ad::Var& z) {
        const ad::Var w = map_to_w(mv, z);
        const TriPlaneField field(generate_triplanes(model.generator, gv, w, dir), model.generator.resolution,
                                  model.generator.bound, dv);
        const RenderGraph g = render_batch(field, plan_rays(field, cam, ro));
        InversionInputs in;
        in.image = g.rgb;
        in.target = tgt;
        in.width = opt.size;
        in.height = opt.size;
        in.w = w;
        in.w_mean = w_mean;
        return inversion_objective(in, emb, reg, lmk_w, model.config.loss_weights.inversion);
    };
    auto z_error = [&](const std::vector<double>& z) {
        double s = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i) s += (z[i] - r.z_true[i]) * (z[i] - r.z_true[i]);
        return std::sqrt(s);
    };

    nn::Adam adam(opt.lr);
    for (int step = 0; step < opt.steps; ++step) {
        const ad::Var z = ad::Var::parameter(ad::Mat(1, r.z.size(), r.z));
        const LossGraph g = evaluate(z);
        if (step == 0) r.initial = g.report;
        ad::backward(g.total);
        adam.step(r.z, z.grad().data);
    }
    r.final = evaluate(ad::Var::constant(ad::Mat(1, r.z.size(), r.z))).report;
    if (opt.steps == 0) r.initial = r.final;
    r.steps = opt.steps;
    r.pixel_initial = r.initial.terms.at("pixel");
    r.pixel_final = r.final.terms.at("pixel");
    r.z_error_initial = z_error(r.z_init);
    r.z_error_final = z_error(r.z);
    return r;
}

FitRoundTrip fitting_round_trip(const FaceBasis& basis, int draws, std::uint64_t seed) {
    if (draws < 1) throw std::invalid_argument("fitting_round_trip: need at least one draw");
    Rng rng(seed);
    FitRoundTrip out;
    out.draws = draws;
    std::vector<ControlParams> inputs;
    std::vector<FitResult> fits;
    for (int n = 0; n < draws; ++n) {
        ControlParams p = random_face(rng, 1.0, 1.0, 0.3);
        p.pose.yaw = rng.uniform(-0.5, 0.5);
        p.pose.pitch = rng.uniform(-0.3, 0.3);
        p.pose.roll = rng.uniform(-0.2, 0.2);
        p.pose.t = {rng.normal(0.0, 0.05), rng.normal(0.0, 0.05), rng.normal(0.0, 0.05)};
        const FaceMesh mesh = build_face_mesh(basis, p);
        FitResult f = fit_coefficients(mesh.landmarks3d, &mesh.colors, basis);
        double e = std::max({std::abs(f.pose.yaw - p.pose.yaw), std::abs(f.pose.pitch - p.pose.pitch),
                             std::abs(f.pose.roll - p.pose.roll)});
        for (std::size_t i = 0; i < kIdDim; ++i) e = std::max(e, std::abs(f.alpha[i] - p.alpha[i]));
        for (std::size_t i = 0; i < kExpDim; ++i) e = std::max(e, std::abs(f.beta[i] - p.beta[i]));
        for (std::size_t i = 0; i < kGammaDim; ++i) e = std::max(e, std::abs(f.gamma[i] - p.gamma[i]));
        out.max_abs_error = std::max(out.max_abs_error, e);
        out.flags.insert(out.flags.end(), f.flags.begin(), f.flags.end());
        inputs.push_back(std::move(p));
        fits.push_back(std::move(f));
    }
    out.accuracy = control_accuracy(inputs, fits);
    return out;
}

double temporal_variance(std::span<const Image> frames, std::span<const std::uint8_t> mask) {
    if (frames.size() < 2) throw std::invalid_argument("temporal_variance: need at least two frames");
    const Image& f0 = frames.front();
    for (const auto& f : frames)
        if (!f.same_shape(f0)) throw std::invalid_argument("temporal_variance: frame shapes differ");
    if (mask.size() != f0.pixels()) throw std::invalid_argument("temporal_variance: mask size mismatch");
    const double n = static_cast<double>(frames.size());
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t px = 0; px < mask.size(); ++px) {
        if (!mask[px]) continue;
        for (int c = 0; c < f0.channels; ++c) {
            const std::size_t i = px * static_cast<std::size_t>(f0.channels) + static_cast<std::size_t>(c);
            double mean = 0.0;
            for (const auto& f : frames) mean += f.data[i] / n;
            double s2 = 0.0;
            for (const auto& f : frames) s2 += (f.data[i] - mean) * (f.data[i] - mean);
            total += s2 / (n - 1.0);
            ++count;
        }
    }
    return count ? total / static_cast<double>(count) : 0.0;
}

BlendDrive blend_drive(const PortraitModel& model, std::span<const ControlParams> frames, std::span<const double> neutral_beta,
                       int size, const RenderOptions& opt) {
    if (frames.size() < 2) throw std::invalid_argument("blend_drive: need at least two frames");
    const Camera raster_cam = model.camera_for(Pose{}, size, size);
    std::vector<std::uint8_t> background(static_cast<std::size_t>(size) * size, 1);
    std::vector<Image> plain, blended;
    for (const auto& p : frames) {
        const RasterBuffers buf = rasterize(build_face_mesh(model.basis, p), raster_cam, size, size);
        for (std::size_t i = 0; i < background.size(); ++i)
            if (buf.labels[i] != kBackground) background[i] = 0;
        const Camera cam = model.camera_for(p.pose, size, size);
        plain.push_back(model.render(p, cam, opt).rgb_image());
        blended.push_back(model.render_blended(p, neutral_beta, cam, opt).rgb_image());
    }
    BlendDrive d;
    d.background_pixels = static_cast<std::size_t>(std::count(background.begin(), background.end(), 1));
    d.variance_plain = temporal_variance(plain, background);
    d.variance_blended = temporal_variance(blended, background);
    return d;
}

}  // namespace morphvol
