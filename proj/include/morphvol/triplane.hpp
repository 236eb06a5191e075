// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
// Tri-plane features: generation from (w, d), point projection, bilinear
// lookup, sum aggregation, and the two-head decoder.
#pragma once

#include <array>
#include <memory>
#include <span>
#include <vector>

#include "morphvol/autodiff.hpp"
#include "morphvol/nn.hpp"
#include "morphvol/types.hpp"

namespace morphvol {

/// Per component: x, sin(2^0 pi x), cos(2^0 pi x), ..., sin(2^(k-1) pi x), cos(2^(k-1) pi x).
std::vector<double> positional_encoding(std::span<const double> x, int k_max);
inline std::size_t encoded_size(std::size_t m, int k_max) { return m * (2 * static_cast<std::size_t>(k_max) + 1); }

struct PlaneUV {
    double u = 0.5;
    double v = 0.5;
};

/// Plane order is xy, xz, yz with uv = (x, y), (x, z), (y, z).
std::array<PlaneUV, 3> project_point(const Vec3& p, double bound);

/// The three planes stacked as rows of one (3*P*P) x C matrix.
/// Texel (i, j) of plane k lives at row k*P*P + j*P + i; u runs along i, v along j.
struct TriPlanes {
    int resolution = 32;
    int channels = 16;
    double bound = 1.0;
    ad::Mat data;

    TriPlanes() = default;
    TriPlanes(int resolution, int channels, double bound);

    std::size_t row(int plane, int i, int j) const {
        return static_cast<std::size_t>(plane) * resolution * resolution + static_cast<std::size_t>(j) * resolution + i;
    }
    void validate() const;
};

/// Align-corners bilinear lookup on one plane.
std::vector<double> sample_plane(const TriPlanes& planes, int plane, PlaneUV uv);
std::vector<double> aggregate_feature(const Vec3& p, const TriPlanes& planes);

/// 12 taps per point (4 per plane) so that row_gather(planes, taps) is the aggregated feature.
std::shared_ptr<const ad::RowTaps> aggregate_taps(const ad::Mat& points, int resolution, double bound);

struct FieldDecoder {
    nn::Dense shared;      // C -> hidden, ReLU
    nn::Dense appearance;  // hidden (+ encoded d) -> 3 color + 1 density
    nn::Dense semantic;    // hidden -> K logits
    bool view_conditioned = false;
    int view_pe_order = 4;

    std::size_t feature_dim() const { return shared.in_dim(); }
    std::size_t class_count() const { return semantic.out_dim(); }
    std::size_t view_dim() const { return view_conditioned ? encoded_size(3, view_pe_order) : 0; }
    void validate() const;
};

FieldDecoder make_field_decoder(std::size_t channels, std::size_t hidden, std::size_t classes, Rng& rng,
                                bool view_conditioned = false, int view_pe_order = 4);

struct DecoderVars {
    nn::DenseVars shared, appearance, semantic;
    bool view_conditioned = false;
    int view_pe_order = 4;
};

DecoderVars bind(const FieldDecoder& d, bool trainable);

struct DecodedBatch {
    ad::Var rgb;     // M x 3 in [0, 1]
    ad::Var sigma;   // M x 1, >= 0
    ad::Var logits;  // M x K
};

/// `dirs` (M x 3) is only read when the decoder is view conditioned.
DecodedBatch decode(const DecoderVars& dec, const ad::Var& features, const ad::Mat* dirs = nullptr);

struct PointSample {
    std::array<double, 3> color{};
    double sigma = 0.0;
    std::vector<double> logits;
};

PointSample decode(const FieldDecoder& dec, std::span<const double> feature, const Vec3* dir = nullptr);

struct TriPlaneGenerator {
    nn::Dense hidden;  // [w, encoded d] -> hidden
    nn::Dense output;  // hidden -> 3 * P * P * C
    nn::Activation activation = nn::Activation::leaky_relu;
    int resolution = 32;
    int channels = 16;
    double bound = 1.0;
    bool pose_conditioned = true;
    int pose_pe_order = 2;

    std::size_t w_dim() const { return hidden.in_dim() - pose_dim(); }
    std::size_t pose_dim() const { return pose_conditioned ? encoded_size(3, pose_pe_order) : 0; }
    std::size_t plane_values() const { return 3 * static_cast<std::size_t>(resolution) * resolution * channels; }
    void validate() const;
};

struct GeneratorConfig {
    int resolution = 32;
    int channels = 16;
    double bound = 1.0;
    std::size_t hidden = 64;
    bool pose_conditioned = true;
    int pose_pe_order = 2;
};

TriPlaneGenerator make_triplane_generator(std::size_t w_dim, const GeneratorConfig& cfg, Rng& rng);

struct GeneratorVars {
    nn::DenseVars hidden, output;
};

GeneratorVars bind(const TriPlaneGenerator& g, bool trainable);

/// w is 1 x w_dim; returns the (3*P*P) x C plane matrix.
ad::Var generate_triplanes(const TriPlaneGenerator& g, const GeneratorVars& vars, const ad::Var& w, const Vec3& d);
TriPlanes generate_triplanes(const TriPlaneGenerator& g, std::span<const double> w, const Vec3& d);

PointSample field_at(const TriPlaneGenerator& g, const FieldDecoder& dec, std::span<const double> w, const Vec3& d,
                     const Vec3& p);

}  // namespace morphvol
