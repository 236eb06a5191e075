// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
#include "morphvol/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace morphvol {

RaySamples make_samples(std::vector<double> t, double far, std::optional<double> start) {
    RaySamples s;
    s.start = std::min(start.value_or(t.empty() ? far : t.front()), t.empty() ? far : t.front());
    s.t = std::move(t);
    s.deltas.resize(s.t.size());
    for (std::size_t i = 0; i < s.t.size(); ++i) {
        const double end = i + 1 < s.t.size() ? 0.5 * (s.t[i] + s.t[i + 1]) : far;
        s.deltas[i] = std::max(0.0, end - interval_begin(s, i));
    }
    return s;
}

double interval_begin(const RaySamples& s, std::size_t i) { return i == 0 ? s.start : 0.5 * (s.t[i - 1] + s.t[i]); }

RaySamples stratified_samples(double near, double far, int n, Rng* rng) {
    if (n < 1) throw std::invalid_argument("stratified_samples: n must be >= 1");
    if (!(near < far)) throw std::invalid_argument("stratified_samples: near must be < far");
    const double bin = (far - near) / n;
    std::vector<double> t(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double u = rng ? rng->uniform() : 0.5;
        t[i] = near + (i + u) * bin;
    }
    return make_samples(std::move(t), far, near);
}

RaySamples inverse_cdf_samples(const RaySamples& coarse, std::span<const double> weights, int n, Rng* rng) {
    if (weights.size() != coarse.t.size()) throw std::invalid_argument("inverse_cdf_samples: one weight per coarse sample");
    if (n < 0) throw std::invalid_argument("inverse_cdf_samples: n must be >= 0");
    std::vector<double> cdf(weights.size() + 1, 0.0);
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (!(weights[i] >= 0.0)) throw std::invalid_argument("inverse_cdf_samples: weights must be nonnegative");
        cdf[i + 1] = cdf[i] + weights[i];
    }
    RaySamples out;
    const double total = cdf.back();
    if (!(total > 0.0)) {
        out.fallback = true;
        return out;
    }
    out.t.reserve(static_cast<std::size_t>(n));
    std::size_t bin = 0;
    for (int j = 0; j < n; ++j) {
        const double u = (j + (rng ? rng->uniform() : 0.5)) / n * total;
        while (bin + 1 < weights.size() && cdf[bin + 1] <= u) ++bin;
        while (weights[bin] == 0.0 && bin + 1 < weights.size()) ++bin;
        const double f = std::clamp((u - cdf[bin]) / weights[bin], 0.0, 1.0);
        out.t.push_back(interval_begin(coarse, bin) + f * coarse.deltas[bin]);
    }
    std::sort(out.t.begin(), out.t.end());
    return out;
}

RaySamples importance_samples(const RaySamples& coarse, std::span<const double> weights, int n, double far, Rng* rng) {
    RaySamples fine = inverse_cdf_samples(coarse, weights, n, rng);
    bool fallback = false;
    if (fine.fallback) {
        fallback = true;
        fine = n > 0 && !coarse.t.empty() ? stratified_samples(interval_begin(coarse, 0), far, n, rng) : RaySamples{};
    }
    std::vector<double> t = coarse.t;
    t.insert(t.end(), fine.t.begin(), fine.t.end());
    std::sort(t.begin(), t.end());
    RaySamples out = make_samples(std::move(t), far, coarse.start);
    out.fallback = fallback;
    return out;
}

namespace {

void softmax_into(std::span<const double> logits, std::span<double> out) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : logits) mx = std::max(mx, v);
    double s = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) s += out[k] = std::exp(logits[k] - mx);
    for (double& v : out) v /= s;
}

}  // namespace

RayIntegral integrate_ray(std::span<const double> colors, std::span<const double> sigmas, std::span<const double> logits,
                          std::span<const double> deltas, std::span<const double> t) {
    const std::size_t N = sigmas.size();
    if (colors.size() != 3 * N || deltas.size() != N) throw std::invalid_argument("integrate_ray: inconsistent shapes");
    if (N > 0 && logits.size() % N != 0) throw std::invalid_argument("integrate_ray: logits must be N x K");
    if (!t.empty() && t.size() != N) throw std::invalid_argument("integrate_ray: t must have N entries");
    const std::size_t K = N ? logits.size() / N : 0;
    RayIntegral r;
    r.semantic.assign(K, 0.0);
    r.transmittance.resize(N);
    r.weights.resize(N);
    std::vector<double> p(K);
    double optical = 0.0;
    double depth = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        if (!(sigmas[i] >= 0.0)) throw std::invalid_argument("integrate_ray: negative sigma at sample " + std::to_string(i));
        const double sd = sigmas[i] * deltas[i];
        const double a = 1.0 - std::exp(-sd);
        const double T = std::exp(-optical);
        optical += sd;
        const double w = T * a;
        r.transmittance[i] = T;
        r.weights[i] = w;
        for (int c = 0; c < 3; ++c) r.color[c] += w * colors[3 * i + c];
        if (K) {
            softmax_into(logits.subspan(i * K, K), p);
            for (std::size_t k = 0; k < K; ++k) r.semantic[k] += w * p[k];
        }
        r.alpha += w;
        if (!t.empty()) depth += w * t[i];
    }
    r.depth = depth / std::max(r.alpha, kDepthEpsilon);
    return r;
}

TriPlaneField::TriPlaneField(ad::Var planes, int resolution, double bound, DecoderVars decoder)
    : planes_(std::move(planes)), resolution_(resolution), bound_(bound), decoder_(std::move(decoder)) {
    if (planes_.rows() != 3 * static_cast<std::size_t>(resolution) * resolution)
        throw std::invalid_argument("TriPlaneField: plane rows do not match resolution");
    if (planes_.cols() != decoder_.shared.weight.rows())
        throw std::invalid_argument("TriPlaneField: plane channels do not match decoder input");
}

TriPlaneField::TriPlaneField(const TriPlanes& planes, const FieldDecoder& decoder)
    : TriPlaneField(ad::Var::constant(planes.data), planes.resolution, planes.bound, bind(decoder, false)) {}

std::size_t TriPlaneField::class_count() const { return decoder_.semantic.weight.cols(); }

DecodedBatch TriPlaneField::decode_points(const ad::Mat& positions, const ad::Mat& dirs) const {
    const ad::Var feat = ad::row_gather(planes_, aggregate_taps(positions, resolution_, bound_));
    return decode(decoder_, feat, &dirs);
}

FieldEval TriPlaneField::eval(const ad::Mat& positions, const ad::Mat& dirs) const {
    const DecodedBatch b = decode_points(positions, dirs);
    return {b.rgb, b.sigma, ad::softmax_rows(b.logits)};
}

ad::Var TriPlaneField::logits(const ad::Mat& positions, const ad::Mat& dirs) const {
    return decode_points(positions, dirs).logits;
}

ConstantField::ConstantField(double sigma, std::array<double, 3> color, std::vector<double> probs)
    : sigma_(sigma), color_(color), probs_(std::move(probs)) {
    if (!(sigma >= 0.0)) throw std::invalid_argument("ConstantField: sigma must be >= 0");
    if (probs_.empty()) throw std::invalid_argument("ConstantField: need class probabilities");
}

FieldEval ConstantField::eval(const ad::Mat& positions, const ad::Mat&) const {
    const std::size_t M = positions.rows;
    ad::Mat rgb(M, 3), sigma(M, 1), probs(M, probs_.size());
    for (std::size_t m = 0; m < M; ++m) {
        for (int c = 0; c < 3; ++c) rgb(m, c) = color_[c];
        sigma(m, 0) = sigma_;
        for (std::size_t k = 0; k < probs_.size(); ++k) probs(m, k) = probs_[k];
    }
    return {ad::Var::constant(std::move(rgb)), ad::Var::constant(std::move(sigma)), ad::Var::constant(std::move(probs))};
}

ShapeField::ShapeField(Kind kind, Vec3 center, Vec3 half_extent, double sigma, std::array<double, 3> color,
                       std::size_t classes, int inside_class)
    : kind_(kind), center_(center), half_(half_extent), sigma_(sigma), color_(color), classes_(classes),
      inside_class_(inside_class) {
    if (classes_ < 1 || inside_class_ < 0 || static_cast<std::size_t>(inside_class_) >= classes_)
        throw std::invalid_argument("ShapeField: inside class out of range");
}

bool ShapeField::contains(const Vec3& p) const {
    const Vec3 d = p - center_;
    if (kind_ == Kind::sphere) return dot(d, d) <= half_[0] * half_[0];
    return std::abs(d[0]) <= half_[0] && std::abs(d[1]) <= half_[1] && std::abs(d[2]) <= half_[2];
}

FieldEval ShapeField::eval(const ad::Mat& positions, const ad::Mat&) const {
    const std::size_t M = positions.rows;
    ad::Mat rgb(M, 3), sigma(M, 1), probs(M, classes_);
    for (std::size_t m = 0; m < M; ++m) {
        const bool in = contains({positions(m, 0), positions(m, 1), positions(m, 2)});
        for (int c = 0; c < 3; ++c) rgb(m, c) = color_[c];
        sigma(m, 0) = in ? sigma_ : 0.0;
        probs(m, in ? static_cast<std::size_t>(inside_class_) : 0) = 1.0;
    }
    return {ad::Var::constant(std::move(rgb)), ad::Var::constant(std::move(sigma)), ad::Var::constant(std::move(probs))};
}

double face_weight(std::span<const double> logits, std::span<const int> face_classes) {
    std::vector<double> p(logits.size());
    softmax_into(logits, p);
    double w = 0.0;
    for (int k : face_classes) {
        if (k < 0 || static_cast<std::size_t>(k) >= p.size()) throw std::invalid_argument("face_weight: class out of range");
        w += p[k];
    }
    return std::clamp(w, 0.0, 1.0);
}

ad::Var face_weight(const ad::Var& probs, std::span<const int> face_classes) {
    ad::Mat sel(probs.cols(), 1);
    for (int k : face_classes) {
        if (k < 0 || static_cast<std::size_t>(k) >= probs.cols()) throw std::invalid_argument("face_weight: class out of range");
        sel(k, 0) = 1.0;
    }
    return ad::matmul(probs, ad::Var::constant(std::move(sel)));
}

FieldEval blend_fields(const FieldEval& dyn, const FieldEval& stat, std::span<const int> face_classes,
                       std::optional<double> forced_weight) {
    if (!dyn.rgb.value().same_shape(stat.rgb.value()) || !dyn.probs.value().same_shape(stat.probs.value()))
        throw std::invalid_argument("blend_fields: dynamic and static evaluations differ in shape");
    if (forced_weight) {
        const ad::Var w = ad::Var::constant(ad::Mat(dyn.sigma.rows(), 1, std::vector<double>(dyn.sigma.rows(), *forced_weight)));
        const ad::Var rest = 1.0 - w;
        return {w * dyn.rgb + rest * stat.rgb, w * dyn.sigma + rest * stat.sigma, w * dyn.probs + rest * stat.probs};
    }
    // s + w (d - s) keeps identical fields bit-identical.
    const ad::Var w = face_weight(dyn.probs, face_classes);
    return {stat.rgb + w * (dyn.rgb - stat.rgb), stat.sigma + w * (dyn.sigma - stat.sigma),
            stat.probs + w * (dyn.probs - stat.probs)};
}

BlendedField::BlendedField(std::shared_ptr<const RadianceField> dynamic, std::shared_ptr<const RadianceField> stat,
                           std::vector<int> face_classes, std::optional<double> forced_weight)
    : dynamic_(std::move(dynamic)), static_(std::move(stat)), face_classes_(std::move(face_classes)), forced_(forced_weight) {
    if (!dynamic_ || !static_) throw std::invalid_argument("BlendedField: null field");
    if (dynamic_->class_count() != static_->class_count())
        throw std::invalid_argument("BlendedField: fields disagree on class count");
}

FieldEval BlendedField::eval(const ad::Mat& positions, const ad::Mat& dirs) const {
    return blend_fields(dynamic_->eval(positions, dirs), static_->eval(positions, dirs), face_classes_, forced_);
}

namespace {

std::vector<std::size_t> all_pixels(const Camera& cam) {
    std::vector<std::size_t> p(static_cast<std::size_t>(cam.width) * cam.height);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = i;
    return p;
}

}  // namespace

RayBatch plan_rays(const RadianceField& field, const Camera& cam, std::span<const std::size_t> pixels,
                   const RenderOptions& opt) {
    cam.validate();
    if (opt.coarse_samples < 1 || opt.fine_samples < 0) throw std::invalid_argument("plan_rays: bad sample counts");
    const std::size_t R = pixels.size();
    const std::size_t Nc = static_cast<std::size_t>(opt.coarse_samples);
    const std::size_t N = Nc + static_cast<std::size_t>(opt.fine_samples);
    std::vector<Ray> rays(R);
    std::vector<RaySamples> coarse(R);
    std::vector<Rng> rngs;
    rngs.reserve(R);
    for (std::size_t r = 0; r < R; ++r) {
        const std::size_t px = pixels[r];
        if (px >= static_cast<std::size_t>(cam.width) * cam.height) throw std::invalid_argument("plan_rays: pixel out of range");
        rays[r] = camera_ray(cam, static_cast<int>(px % cam.width), static_cast<int>(px / cam.width));
        rngs.emplace_back(mix_seed(opt.seed, px));
        coarse[r] = stratified_samples(cam.near, cam.far, opt.coarse_samples, opt.deterministic ? nullptr : &rngs[r]);
    }

    std::vector<RaySamples> final_samples = coarse;
    RayBatch b;
    b.rays = R;
    b.samples = N;
    b.fallback.assign(R, 0);
    if (opt.fine_samples > 0 && R > 0) {
        ad::Mat pos(R * Nc, 3), dirs(R * Nc, 3);
        for (std::size_t r = 0; r < R; ++r) {
            for (std::size_t i = 0; i < Nc; ++i) {
                const Vec3 p = rays[r].origin + coarse[r].t[i] * rays[r].direction;
                const std::size_t m = r * Nc + i;
                pos(m, 0) = p[0], pos(m, 1) = p[1], pos(m, 2) = p[2];
                dirs(m, 0) = rays[r].direction[0], dirs(m, 1) = rays[r].direction[1], dirs(m, 2) = rays[r].direction[2];
            }
        }
        const ad::Mat sigma = field.eval(pos, dirs).sigma.value();
        const long RR = static_cast<long>(R);
#pragma omp parallel for schedule(static) num_threads(ad::num_threads())
        for (long rl = 0; rl < RR; ++rl) {
            const std::size_t r = static_cast<std::size_t>(rl);
            std::vector<double> w(Nc);
            double optical = 0.0;
            for (std::size_t i = 0; i < Nc; ++i) {
                const double sd = std::max(0.0, sigma(r * Nc + i, 0)) * coarse[r].deltas[i];
                w[i] = std::exp(-optical) * (1.0 - std::exp(-sd));
                optical += sd;
            }
            final_samples[r] = importance_samples(coarse[r], w, opt.fine_samples, cam.far,
                                                  opt.deterministic ? nullptr : &rngs[r]);
            b.fallback[r] = final_samples[r].fallback ? 1 : 0;
        }
    }

    b.positions = ad::Mat(R * N, 3);
    b.dirs = ad::Mat(R * N, 3);
    b.deltas = ad::Mat(R * N, 1);
    b.t.resize(R * N);
    for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t i = 0; i < N; ++i) {
            const std::size_t m = r * N + i;
            const double t = final_samples[r].t[i];
            const Vec3 p = rays[r].origin + t * rays[r].direction;
            b.positions(m, 0) = p[0], b.positions(m, 1) = p[1], b.positions(m, 2) = p[2];
            b.dirs(m, 0) = rays[r].direction[0], b.dirs(m, 1) = rays[r].direction[1], b.dirs(m, 2) = rays[r].direction[2];
            b.deltas(m, 0) = final_samples[r].deltas[i];
            b.t[m] = t;
        }
    }
    return b;
}

RayBatch plan_rays(const RadianceField& field, const Camera& cam, const RenderOptions& opt) {
    const auto px = all_pixels(cam);
    return plan_rays(field, cam, px, opt);
}

RenderGraph integrate(const FieldEval& eval, const RayBatch& batch) {
    const std::size_t M = batch.rays * batch.samples;
    if (eval.sigma.rows() != M || eval.rgb.rows() != M || eval.probs.rows() != M)
        throw std::invalid_argument("integrate: field evaluation does not match the ray batch");
    for (double s : eval.sigma.value().data)
        if (!(s >= 0.0)) throw std::invalid_argument("integrate: negative sigma");
    const ad::Var sd = eval.sigma * ad::Var::constant(batch.deltas);
    const ad::Var a = 1.0 - ad::exp(-sd);
    const ad::Var T = ad::exp(-ad::exclusive_segment_cumsum(sd, batch.samples));
    const ad::Var w = T * a;
    RenderGraph g;
    g.rgb = ad::segment_sum(w * eval.rgb, batch.samples);
    g.semantic = ad::segment_sum(w * eval.probs, batch.samples);
    g.alpha = ad::segment_sum(w, batch.samples);
    g.depth = ad::Mat(batch.rays, 1);
    const auto& wv = w.value().data;
    for (std::size_t r = 0; r < batch.rays; ++r) {
        double acc = 0.0;
        for (std::size_t i = 0; i < batch.samples; ++i) acc += wv[r * batch.samples + i] * batch.t[r * batch.samples + i];
        g.depth(r, 0) = acc / std::max(g.alpha.value()(r, 0), kDepthEpsilon);
    }
    return g;
}

RenderGraph render_batch(const RadianceField& field, const RayBatch& batch) {
    return integrate(field.eval(batch.positions, batch.dirs), batch);
}

Image RenderOutput::rgb_image() const { return mat_to_image(rgb, width, height); }

std::vector<int> RenderOutput::semantic_labels() const {
    std::vector<int> out(semantic.rows, 0);
    for (std::size_t i = 0; i < semantic.rows; ++i) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < semantic.cols; ++k)
            if (semantic(i, k) > semantic(i, best)) best = k;
        out[i] = static_cast<int>(best);
    }
    return out;
}

RenderOutput render_image(const RadianceField& field, const Camera& cam, const RenderOptions& opt) {
    cam.validate();
    RenderOutput out;
    out.width = cam.width;
    out.height = cam.height;
    out.classes = field.class_count();
    const std::size_t P = static_cast<std::size_t>(cam.width) * cam.height;
    out.rgb = ad::Mat(P, 3);
    out.semantic = ad::Mat(P, out.classes);
    out.alpha = ad::Mat(P, 1);
    out.depth = ad::Mat(P, 1);
    const std::size_t chunk = std::max<std::size_t>(opt.chunk_rays, 1);
    const auto pixels = all_pixels(cam);
    for (std::size_t begin = 0; begin < P; begin += chunk) {
        const std::size_t end = std::min(P, begin + chunk);
        const std::span<const std::size_t> px(pixels.data() + begin, end - begin);
        const RayBatch b = plan_rays(field, cam, px, opt);
        const RenderGraph g = render_batch(field, b);
        for (std::size_t r = 0; r < px.size(); ++r) {
            const std::size_t i = begin + r;
            for (int c = 0; c < 3; ++c) out.rgb(i, c) = g.rgb.value()(r, c);
            for (std::size_t k = 0; k < out.classes; ++k) out.semantic(i, k) = g.semantic.value()(r, k);
            out.alpha(i, 0) = g.alpha.value()(r, 0);
            out.depth(i, 0) = g.depth(r, 0);
            out.fallback_rays += b.fallback[r];
        }
    }
    return out;
}

Image replace_background(const RenderOutput& out, const Image& bg) {
    if (bg.width != out.width || bg.height != out.height || bg.channels != 3)
        throw std::invalid_argument("replace_background: background must be W x H x 3");
    Image img(out.width, out.height, 3);
    for (std::size_t i = 0; i < bg.pixels(); ++i) {
        const double a = out.alpha(i, 0);
        for (int c = 0; c < 3; ++c) {
            const double fg = out.rgb(i, c);
            img.data[i * 3 + c] = a == 1.0 ? fg : fg + (1.0 - a) * bg.data[i * 3 + c];
        }
    }
    return img;
}

ad::Var replace_background(const ad::Var& rgb, const ad::Var& alpha, const ad::Var& bg) {
    if (!rgb.value().same_shape(bg.value()) || alpha.rows() != rgb.rows() || alpha.cols() != 1)
        throw std::invalid_argument("replace_background: shape mismatch");
    return rgb + (1.0 - alpha) * bg;
}

}  // namespace morphvol
