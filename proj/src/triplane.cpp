// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
#include "morphvol/triplane.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace morphvol {

std::vector<double> positional_encoding(std::span<const double> x, int k_max) {
    if (k_max < 0) throw std::invalid_argument("positional_encoding: k_max must be >= 0");
    std::vector<double> out;
    out.reserve(encoded_size(x.size(), k_max));
    for (double v : x) {
        out.push_back(v);
        for (int k = 0; k < k_max; ++k) {
            const double a = std::ldexp(1.0, k) * std::numbers::pi * v;
            out.push_back(std::sin(a));
            out.push_back(std::cos(a));
        }
    }
    return out;
}

std::array<PlaneUV, 3> project_point(const Vec3& p, double bound) {
    auto m = [bound](double c) { return std::clamp((c / bound + 1.0) * 0.5, 0.0, 1.0); };
    return {PlaneUV{m(p[0]), m(p[1])}, PlaneUV{m(p[0]), m(p[2])}, PlaneUV{m(p[1]), m(p[2])}};
}

TriPlanes::TriPlanes(int res, int ch, double b) : resolution(res), channels(ch), bound(b) {
    validate();
    data = ad::Mat(3 * static_cast<std::size_t>(res) * res, static_cast<std::size_t>(ch));
}

void TriPlanes::validate() const {
    if (resolution < 1 || channels < 1) throw std::invalid_argument("TriPlanes: resolution and channels must be positive");
    if (!(bound > 0.0)) throw std::invalid_argument("TriPlanes: bound must be positive");
    if (!data.data.empty()) {
        if (data.rows != 3 * static_cast<std::size_t>(resolution) * resolution || data.cols != static_cast<std::size_t>(channels))
            throw std::invalid_argument("TriPlanes: data shape " + ad::shape_str(data) + " does not match config");
        for (double v : data.data)
            if (!std::isfinite(v)) throw std::invalid_argument("TriPlanes: non-finite value");
    }
}

namespace {

struct Bilinear {
    int i0, i1, j0, j1;
    double w00, w10, w01, w11;
};

Bilinear bilinear(int P, PlaneUV uv) {
    const double x = std::clamp(uv.u, 0.0, 1.0) * (P - 1);
    const double y = std::clamp(uv.v, 0.0, 1.0) * (P - 1);
    const int i0 = std::min(static_cast<int>(std::floor(x)), std::max(P - 2, 0));
    const int j0 = std::min(static_cast<int>(std::floor(y)), std::max(P - 2, 0));
    const int i1 = std::min(i0 + 1, P - 1);
    const int j1 = std::min(j0 + 1, P - 1);
    const double fx = x - i0;
    const double fy = y - j0;
    return {i0, i1, j0, j1, (1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
}

}  // namespace

std::vector<double> sample_plane(const TriPlanes& planes, int plane, PlaneUV uv) {
    if (plane < 0 || plane > 2) throw std::invalid_argument("sample_plane: plane index must be 0, 1 or 2");
    const Bilinear b = bilinear(planes.resolution, uv);
    const std::size_t C = static_cast<std::size_t>(planes.channels);
    std::vector<double> out(C, 0.0);
    const std::pair<std::size_t, double> taps[4] = {{planes.row(plane, b.i0, b.j0), b.w00},
                                                    {planes.row(plane, b.i1, b.j0), b.w10},
                                                    {planes.row(plane, b.i0, b.j1), b.w01},
                                                    {planes.row(plane, b.i1, b.j1), b.w11}};
    for (const auto& [r, w] : taps)
        for (std::size_t c = 0; c < C; ++c) out[c] += w * planes.data(r, c);
    return out;
}

std::vector<double> aggregate_feature(const Vec3& p, const TriPlanes& planes) {
    const auto uv = project_point(p, planes.bound);
    std::vector<double> out(static_cast<std::size_t>(planes.channels), 0.0);
    for (int k = 0; k < 3; ++k) {
        const auto f = sample_plane(planes, k, uv[k]);
        for (std::size_t c = 0; c < out.size(); ++c) out[c] += f[c];
    }
    return out;
}

std::shared_ptr<const ad::RowTaps> aggregate_taps(const ad::Mat& points, int P, double bound) {
    if (points.cols != 3) throw std::invalid_argument("aggregate_taps: points must be M x 3");
    auto taps = std::make_shared<ad::RowTaps>();
    const std::size_t M = points.rows;
    taps->out_rows = M;
    taps->taps = 12;
    taps->index.resize(M * 12);
    taps->weight.resize(M * 12);
    const std::size_t PP = static_cast<std::size_t>(P) * P;
    for (std::size_t m = 0; m < M; ++m) {
        const auto uv = project_point({points(m, 0), points(m, 1), points(m, 2)}, bound);
        for (int k = 0; k < 3; ++k) {
            const Bilinear b = bilinear(P, uv[k]);
            const std::size_t base = k * PP;
            const std::size_t o = m * 12 + 4 * k;
            taps->index[o + 0] = static_cast<std::uint32_t>(base + b.j0 * P + b.i0);
            taps->index[o + 1] = static_cast<std::uint32_t>(base + b.j0 * P + b.i1);
            taps->index[o + 2] = static_cast<std::uint32_t>(base + b.j1 * P + b.i0);
            taps->index[o + 3] = static_cast<std::uint32_t>(base + b.j1 * P + b.i1);
            taps->weight[o + 0] = b.w00;
            taps->weight[o + 1] = b.w10;
            taps->weight[o + 2] = b.w01;
            taps->weight[o + 3] = b.w11;
        }
    }
    return taps;
}

void FieldDecoder::validate() const {
    if (shared.out_dim() == 0) throw std::invalid_argument("FieldDecoder: empty shared layer");
    if (appearance.in_dim() != shared.out_dim() + view_dim())
        throw std::invalid_argument("FieldDecoder: appearance head input must be hidden + view encoding");
    if (appearance.out_dim() != 4) throw std::invalid_argument("FieldDecoder: appearance head must emit 4 values");
    if (semantic.in_dim() != shared.out_dim()) throw std::invalid_argument("FieldDecoder: semantic head input must be hidden");
    if (semantic.out_dim() < 1) throw std::invalid_argument("FieldDecoder: need at least one class");
}

FieldDecoder make_field_decoder(std::size_t channels, std::size_t hidden, std::size_t classes, Rng& rng,
                                bool view_conditioned, int view_pe_order) {
    FieldDecoder d;
    d.view_conditioned = view_conditioned;
    d.view_pe_order = view_pe_order;
    d.shared = nn::make_dense(channels, hidden, rng, std::sqrt(2.0));
    d.appearance = nn::make_dense(hidden + d.view_dim(), 4, rng);
    d.semantic = nn::make_dense(hidden, classes, rng);
    return d;
}

DecoderVars bind(const FieldDecoder& d, bool trainable) {
    return {nn::bind(d.shared, trainable), nn::bind(d.appearance, trainable), nn::bind(d.semantic, trainable),
            d.view_conditioned, d.view_pe_order};
}

DecodedBatch decode(const DecoderVars& dec, const ad::Var& features, const ad::Mat* dirs) {
    if (features.cols() != dec.shared.weight.rows())
        throw std::invalid_argument("decode: feature dim " + std::to_string(features.cols()) + " != decoder input " +
                                    std::to_string(dec.shared.weight.rows()));
    const ad::Var h = ad::relu(nn::forward(dec.shared, features));
    ad::Var app_in = h;
    if (dec.view_conditioned) {
        if (!dirs || dirs->rows != features.rows() || dirs->cols != 3)
            throw std::invalid_argument("decode: view-conditioned decoder needs M x 3 directions");
        const std::size_t D = encoded_size(3, dec.view_pe_order);
        ad::Mat enc(dirs->rows, D);
        for (std::size_t m = 0; m < dirs->rows; ++m) {
            const double d[3] = {(*dirs)(m, 0), (*dirs)(m, 1), (*dirs)(m, 2)};
            const auto e = positional_encoding(d, dec.view_pe_order);
            std::copy(e.begin(), e.end(), enc.data.begin() + m * D);
        }
        const ad::Var parts[2] = {h, ad::Var::constant(std::move(enc))};
        app_in = ad::concat_cols(parts);
    }
    const ad::Var app = nn::forward(dec.appearance, app_in);
    DecodedBatch out;
    out.rgb = ad::sigmoid(ad::slice_cols(app, 0, 3));
    out.sigma = ad::softplus(ad::slice_cols(app, 3, 4));
    out.logits = nn::forward(dec.semantic, h);
    return out;
}

PointSample decode(const FieldDecoder& dec, std::span<const double> feature, const Vec3* dir) {
    if (feature.size() != dec.feature_dim()) throw std::invalid_argument("decode: feature dim mismatch");
    const ad::Var f = ad::Var::constant(ad::Mat(1, feature.size(), {feature.begin(), feature.end()}));
    ad::Mat dm;
    if (dir) dm = ad::Mat(1, 3, {(*dir)[0], (*dir)[1], (*dir)[2]});
    const DecodedBatch b = decode(bind(dec, false), f, dir ? &dm : nullptr);
    PointSample s;
    for (int c = 0; c < 3; ++c) s.color[c] = b.rgb.value().data[c];
    s.sigma = b.sigma.item();
    s.logits = b.logits.value().data;
    return s;
}

void TriPlaneGenerator::validate() const {
    TriPlanes(resolution, channels, bound).validate();
    if (hidden.in_dim() < pose_dim()) throw std::invalid_argument("TriPlaneGenerator: hidden layer narrower than pose encoding");
    if (output.in_dim() != hidden.out_dim()) throw std::invalid_argument("TriPlaneGenerator: layer widths do not chain");
    if (output.out_dim() != plane_values())
        throw std::invalid_argument("TriPlaneGenerator: output width must be 3 * P * P * C");
}

TriPlaneGenerator make_triplane_generator(std::size_t w_dim, const GeneratorConfig& cfg, Rng& rng) {
    TriPlaneGenerator g;
    g.resolution = cfg.resolution;
    g.channels = cfg.channels;
    g.bound = cfg.bound;
    g.pose_conditioned = cfg.pose_conditioned;
    g.pose_pe_order = cfg.pose_pe_order;
    g.hidden = nn::make_dense(w_dim + g.pose_dim(), cfg.hidden, rng, std::sqrt(2.0));
    g.output = nn::make_dense(cfg.hidden, g.plane_values(), rng);
    g.validate();
    return g;
}

GeneratorVars bind(const TriPlaneGenerator& g, bool trainable) {
    return {nn::bind(g.hidden, trainable), nn::bind(g.output, trainable)};
}

ad::Var generate_triplanes(const TriPlaneGenerator& g, const GeneratorVars& vars, const ad::Var& w, const Vec3& d) {
    if (w.rows() != 1 || w.cols() != g.w_dim())
        throw std::invalid_argument("generate_triplanes: w has shape " + ad::shape_str(w.value()) + ", expected 1 x " +
                                    std::to_string(g.w_dim()));
    ad::Var in = w;
    if (g.pose_conditioned) {
        const double dv[3] = {d[0], d[1], d[2]};
        const auto e = positional_encoding(dv, g.pose_pe_order);
        const ad::Var parts[2] = {w, ad::Var::constant(ad::Mat(1, e.size(), e))};
        in = ad::concat_cols(parts);
    }
    const ad::Var h = nn::activate(nn::forward(vars.hidden, in), g.activation);
    const ad::Var flat = nn::forward(vars.output, h);
    return ad::reshape(flat, 3 * static_cast<std::size_t>(g.resolution) * g.resolution, static_cast<std::size_t>(g.channels));
}

TriPlanes generate_triplanes(const TriPlaneGenerator& g, std::span<const double> w, const Vec3& d) {
    const ad::Var wv = ad::Var::constant(ad::Mat(1, w.size(), {w.begin(), w.end()}));
    TriPlanes t(g.resolution, g.channels, g.bound);
    t.data = generate_triplanes(g, bind(g, false), wv, d).value();
    return t;
}

PointSample field_at(const TriPlaneGenerator& g, const FieldDecoder& dec, std::span<const double> w, const Vec3& d,
                     const Vec3& p) {
    const TriPlanes planes = generate_triplanes(g, w, d);
    const auto f = aggregate_feature(p, planes);
    return decode(dec, f, &d);
}

}  // namespace morphvol
