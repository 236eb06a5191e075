// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
#include "morphvol/scene.hpp"

#include <algorithm>
#include <stdexcept>

#include "morphvol/io.hpp"
#include "morphvol/losses.hpp"
#include "morphvol/raster.hpp"

namespace morphvol {

ControlParams neutral_params(std::size_t epsilon_dim) {
    ControlParams p;
    p.gamma = ambient_gamma();
    p.epsilon.assign(epsilon_dim, 0.0);
    return p;
}

PortraitModel PortraitModel::create(const SceneConfig& cfg) {
    cfg.validate();
    FaceBasis basis = cfg.basis == "synthetic" ? make_synthetic_basis() : basis_from_tensors(read_tensors(cfg.basis));
    PortraitModel m = initialize(cfg, std::move(basis));
    if (!cfg.weights.empty()) m.load_weights(cfg.weights);
    return m;
}

PortraitModel PortraitModel::initialize(const SceneConfig& cfg, FaceBasis basis) {
    basis.validate();
    if (static_cast<std::size_t>(basis.class_count) > cfg.classes.size())
        throw std::invalid_argument("PortraitModel: basis uses more semantic classes than the config declares");
    PortraitModel m;
    m.config = cfg;
    m.basis = std::move(basis);
    Rng rng(cfg.seed);
    const auto& mc = cfg.model;
    m.vaes = make_control_vaes(rng);
    const std::size_t z_dim = kIdDim + kAlbedoDim + kExpDim + kGammaDim + mc.epsilon_dim;
    m.mapping = make_mapping_network(z_dim, mc.w_rows, mc.w_cols, mc.mapping_layers, rng);
    GeneratorConfig gc;
    gc.resolution = mc.plane_resolution;
    gc.channels = mc.plane_channels;
    gc.bound = mc.bound;
    gc.hidden = mc.generator_hidden;
    gc.pose_conditioned = mc.pose_conditioned;
    m.generator = make_triplane_generator(m.mapping.out_dim(), gc, rng);
    m.decoder = make_field_decoder(static_cast<std::size_t>(mc.plane_channels), mc.decoder_hidden, cfg.classes.size(), rng,
                                   mc.view_conditioned);

    Rng draws(mix_seed(cfg.seed, 0x77));
    m.w_mean.assign(m.mapping.out_dim(), 0.0);
    const int n = 64;
    for (int i = 0; i < n; ++i) {
        const auto w = m.w_for(sample_control(m.vaes, draws, mc.epsilon_dim));
        for (std::size_t k = 0; k < w.size(); ++k) m.w_mean[k] += w[k] / n;
    }
    m.validate();
    return m;
}

void PortraitModel::validate() const {
    config.validate();
    mapping.validate();
    generator.validate();
    decoder.validate();
    if (generator.w_dim() != mapping.out_dim()) throw std::invalid_argument("PortraitModel: generator and mapping disagree on w");
    if (decoder.feature_dim() != static_cast<std::size_t>(generator.channels))
        throw std::invalid_argument("PortraitModel: decoder input width != plane channels");
    if (decoder.class_count() != config.classes.size())
        throw std::invalid_argument("PortraitModel: decoder class count != configured classes");
    if (w_mean.size() != mapping.out_dim()) throw std::invalid_argument("PortraitModel: w_mean has the wrong size");
}

std::vector<double> PortraitModel::w_for(const ControlParams& p) const {
    p.validate(epsilon_dim());
    return map_to_w(mapping, p.latent_vector());
}

Camera PortraitModel::camera_for(const Pose& pose, int width, int height) const {
    CameraConfig cc = config.camera;
    if (width > 0) cc.width = width;
    if (height > 0) cc.height = height;
    return camera_for_pose(pose, cc);
}

Vec3 PortraitModel::view_direction(const Camera& cam) { return normalized(cam.position - cam.target); }

TriPlanes PortraitModel::planes_for(std::span<const double> w, const Camera& cam) const {
    return generate_triplanes(generator, w, view_direction(cam));
}

std::shared_ptr<const TriPlaneField> PortraitModel::field_for(const ControlParams& p, const Camera& cam) const {
    return std::make_shared<TriPlaneField>(planes_for(w_for(p), cam), decoder);
}

std::shared_ptr<const BlendedField> PortraitModel::blended_field_for(const ControlParams& p,
                                                                     std::span<const double> neutral_beta,
                                                                     const Camera& cam, std::optional<double> forced) const {
    ControlParams neutral = p;
    neutral.beta.assign(neutral_beta.begin(), neutral_beta.end());
    return std::make_shared<BlendedField>(field_for(p, cam), field_for(neutral, cam), face_classes(), forced);
}

RenderOptions PortraitModel::render_options(bool deterministic, std::uint64_t seed) const {
    RenderOptions o;
    o.coarse_samples = config.sampling.coarse;
    o.fine_samples = config.sampling.fine;
    o.deterministic = deterministic;
    o.seed = seed;
    return o;
}

RenderOutput PortraitModel::render(const ControlParams& p, const Camera& cam, const RenderOptions& opt) const {
    return render_image(*field_for(p, cam), cam, opt);
}

RenderOutput PortraitModel::render_blended(const ControlParams& p, std::span<const double> neutral_beta, const Camera& cam,
                                           const RenderOptions& opt, std::optional<double> forced) const {
    return render_image(*blended_field_for(p, neutral_beta, cam, forced), cam, opt);
}

std::vector<nn::ParamRef> PortraitModel::parameters() {
    std::vector<nn::ParamRef> out;
    nn::collect(vaes.identity.encoder, "vae.identity.encoder", out);
    nn::collect(vaes.identity.decoder, "vae.identity.decoder", out);
    nn::collect(vaes.expression.encoder, "vae.expression.encoder", out);
    nn::collect(vaes.expression.decoder, "vae.expression.decoder", out);
    nn::collect(vaes.illumination.encoder, "vae.illumination.encoder", out);
    nn::collect(vaes.illumination.decoder, "vae.illumination.decoder", out);
    nn::collect(mapping.mlp, "mapping", out);
    nn::collect(generator.hidden, "generator.hidden", out);
    nn::collect(generator.output, "generator.output", out);
    nn::collect(decoder.shared, "decoder.shared", out);
    nn::collect(decoder.appearance, "decoder.appearance", out);
    nn::collect(decoder.semantic, "decoder.semantic", out);
    return out;
}

void PortraitModel::save_weights(const std::filesystem::path& path) {
    std::vector<Tensor> ts;
    for (const auto& p : parameters()) ts.push_back(tensor_from_mat(p.name, *p.value));
    ts.push_back(Tensor{"w_mean", DType::f64, {w_mean.size()}, w_mean});
    write_tensors(path, ts);
}

void PortraitModel::load_weights(const std::filesystem::path& path) {
    const auto ts = read_tensors(path);
    for (auto& p : parameters()) {
        const Tensor& t = find_tensor(ts, p.name);
        if (t.shape.size() != 2 || t.shape[0] != p.value->rows || t.shape[1] != p.value->cols)
            throw std::runtime_error("weights: '" + p.name + "' shape does not match the configured model");
        p.value->data = t.data;
    }
    const Tensor& wm = find_tensor(ts, "w_mean");
    if (wm.data.size() != w_mean.size()) throw std::runtime_error("weights: 'w_mean' size does not match the configured model");
    w_mean = wm.data;
    validate();
}

std::vector<ControlParams> prior_subjects(const PortraitModel& model, const PriorFitOptions& opt) {
    Rng rng(opt.seed);
    std::vector<ControlParams> out;
    for (int s = 0; s < opt.subjects; ++s) {
        ControlParams p = neutral_params(model.epsilon_dim());
        for (double& v : p.alpha) v = rng.normal(0.0, opt.alpha_std);
        // The first draw keeps the neutral expression.
        if (s > 0)
            for (double& v : p.beta) v = rng.normal(0.0, opt.beta_std);
        out.push_back(p);
    }
    return out;
}

std::vector<LossReport> fit_prior(PortraitModel& model, const PriorFitOptions& opt) {
    if (opt.steps < 0 || opt.size < 1 || opt.subjects < 1) throw std::invalid_argument("fit_prior: bad options");
    const auto subjects = prior_subjects(model, opt);
    const Camera cam = model.camera_for(Pose{}, opt.size, opt.size);

    struct Target {
        std::vector<double> w;
        ad::Mat image;
        std::vector<int> labels;
    };
    std::vector<Target> targets;
    for (const auto& p : subjects) {
        const RasterBuffers buf = rasterize(build_face_mesh(model.basis, p), cam, opt.size, opt.size);
        ad::Mat img = image_to_mat(buf.image);
        for (double& v : img.data) v = std::clamp(v, 0.0, 1.0);
        targets.push_back({model.w_for(p), std::move(img), buf.labels});
    }

    std::vector<nn::ParamRef> params;
    nn::collect(model.generator.hidden, "generator.hidden", params);
    nn::collect(model.generator.output, "generator.output", params);
    nn::collect(model.decoder.shared, "decoder.shared", params);
    nn::collect(model.decoder.appearance, "decoder.appearance", params);
    nn::collect(model.decoder.semantic, "decoder.semantic", params);

    const auto& iw = model.config.loss_weights.imitative;
    const std::map<std::string, double> weights{{"tex", iw.tex}, {"ce", iw.ce}, {"bg", opt.background_weight}};
    nn::Adam adam(opt.lr);
    std::vector<LossReport> reports;
    const Vec3 dir = PortraitModel::view_direction(cam);
    for (int step = 0; step < opt.steps; ++step) {
        const Target& tg = targets[static_cast<std::size_t>(step) % targets.size()];
        const GeneratorVars gv = bind(model.generator, true);
        const DecoderVars dv = bind(model.decoder, true);
        const ad::Var planes = generate_triplanes(model.generator, gv, ad::Var::constant(ad::Mat(1, tg.w.size(), tg.w)), dir);
        const TriPlaneField field(planes, model.generator.resolution, model.generator.bound, dv);
        RenderOptions ro = model.render_options(false, mix_seed(opt.seed, static_cast<std::uint64_t>(step)));
        const RayBatch batch = plan_rays(field, cam, ro);
        const FieldEval ev = field.eval(batch.positions, batch.dirs);
        const RenderGraph g = integrate(ev, batch);
        ad::Mat on_bg(batch.rays * batch.samples, 1);
        double count = 0.0;
        for (std::size_t r = 0; r < batch.rays; ++r)
            if (tg.labels[r] == kBackground) {
                for (std::size_t s = 0; s < batch.samples; ++s) on_bg.data[r * batch.samples + s] = 1.0;
                count += static_cast<double>(batch.samples);
            }
        const ad::Var p_bg = ad::slice_cols(ev.probs, kBackground, kBackground + 1);
        const ad::Var bg = count > 0.0 ? -ad::sum(ad::Var::constant(on_bg) * ad::log(ad::clamp_min(p_bg, kCeFloor))) * (1.0 / count)
                                       : ad::Var::scalar(0.0);
        const LossGraph lg = weighted_sum(
            {{"tex", loss_tex(g.rgb, ad::Var::constant(tg.image))}, {"ce", loss_ce(g.semantic, tg.labels)}, {"bg", bg}},
            weights);
        ad::backward(lg.total);
        std::vector<ad::Var> vars;
        nn::collect_vars(gv.hidden, vars);
        nn::collect_vars(gv.output, vars);
        nn::collect_vars(dv.shared, vars);
        nn::collect_vars(dv.appearance, vars);
        nn::collect_vars(dv.semantic, vars);
        std::vector<ad::Mat> grads;
        for (const auto& v : vars) grads.push_back(v.grad());
        reports.push_back(lg.report);
        adam.step(params, grads);
    }
    return reports;
}

}  // namespace morphvol
