// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
// Volume rendering: ray sampling, quadrature of color / semantics / alpha /
// depth, explicit volume blending and background replacement.
#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "morphvol/autodiff.hpp"
#include "morphvol/camera.hpp"
#include "morphvol/raster.hpp"
#include "morphvol/triplane.hpp"
#include "morphvol/types.hpp"

namespace morphvol {

/// Sample i stands for the cell between the midpoints to its neighbours (the
/// first one reaches back to `start`, the last one on to far), so the deltas
/// tile [start, far].
struct RaySamples {
    std::vector<double> t;       // ascending in [start, far]
    std::vector<double> deltas;  // interval lengths
    double start = 0.0;
    bool fallback = false;       // importance pass fell back to stratified
};

/// `start` defaults to t.front().
RaySamples make_samples(std::vector<double> t, double far, std::optional<double> start = std::nullopt);
/// Lower end of the interval sample i stands for.
double interval_begin(const RaySamples& s, std::size_t i);

/// One uniform draw per equal bin; bin midpoints when `rng` is null.
RaySamples stratified_samples(double near, double far, int n, Rng* rng);

/// Inverse-CDF draws from the piecewise-constant pdf with weight[i] on
/// sample i's interval. Evenly spaced quantiles when `rng` is null.
/// Returns only the new samples, sorted; empty with fallback=true when all weights are 0.
RaySamples inverse_cdf_samples(const RaySamples& coarse, std::span<const double> weights, int n, Rng* rng);

/// Coarse and fine samples merged and sorted. All-zero weights fall back to
/// fresh stratified samples (flagged).
RaySamples importance_samples(const RaySamples& coarse, std::span<const double> weights, int n, double far, Rng* rng);

struct RayIntegral {
    std::array<double, 3> color{};
    std::vector<double> semantic;
    double alpha = 0.0;
    double depth = 0.0;
    std::vector<double> transmittance;
    std::vector<double> weights;
};

inline constexpr double kDepthEpsilon = 1e-10;

/// colors N x 3, logits N x K (row-major). Negative sigma -> invalid_argument.
/// `t` is optional and only used for depth (zeros when empty).
RayIntegral integrate_ray(std::span<const double> colors, std::span<const double> sigmas, std::span<const double> logits,
                          std::span<const double> deltas, std::span<const double> t = {});

/// Per-point field values for a batch of M query points.
struct FieldEval {
    ad::Var rgb;    // M x 3
    ad::Var sigma;  // M x 1
    ad::Var probs;  // M x K, rows sum to 1
};

class RadianceField {
public:
    virtual ~RadianceField() = default;
    virtual std::size_t class_count() const = 0;
    /// positions and dirs are M x 3.
    virtual FieldEval eval(const ad::Mat& positions, const ad::Mat& dirs) const = 0;
};

/// Tri-plane features decoded per point. Planes and decoder may carry gradients.
class TriPlaneField final : public RadianceField {
public:
    TriPlaneField(ad::Var planes, int resolution, double bound, DecoderVars decoder);
    TriPlaneField(const TriPlanes& planes, const FieldDecoder& decoder);

    std::size_t class_count() const override;
    FieldEval eval(const ad::Mat& positions, const ad::Mat& dirs) const override;
    /// Raw semantic logits, M x K.
    ad::Var logits(const ad::Mat& positions, const ad::Mat& dirs) const;

    const ad::Var& planes() const { return planes_; }

private:
    DecodedBatch decode_points(const ad::Mat& positions, const ad::Mat& dirs) const;

    ad::Var planes_;
    int resolution_;
    double bound_;
    DecoderVars decoder_;
};

/// Procedural fields for tests and demos.
class ConstantField final : public RadianceField {
public:
    ConstantField(double sigma, std::array<double, 3> color, std::vector<double> probs);
    std::size_t class_count() const override { return probs_.size(); }
    FieldEval eval(const ad::Mat& positions, const ad::Mat& dirs) const override;

private:
    double sigma_;
    std::array<double, 3> color_;
    std::vector<double> probs_;
};

/// Density `sigma` inside an axis-aligned box or a sphere, zero outside.
class ShapeField final : public RadianceField {
public:
    enum class Kind { box, sphere };
    ShapeField(Kind kind, Vec3 center, Vec3 half_extent, double sigma, std::array<double, 3> color, std::size_t classes,
               int inside_class);
    std::size_t class_count() const override { return classes_; }
    FieldEval eval(const ad::Mat& positions, const ad::Mat& dirs) const override;
    bool contains(const Vec3& p) const;

private:
    Kind kind_;
    Vec3 center_, half_;
    double sigma_;
    std::array<double, 3> color_;
    std::size_t classes_;
    int inside_class_;
};

/// Sum of softmax probabilities over the face classes.
double face_weight(std::span<const double> logits, std::span<const int> face_classes);
ad::Var face_weight(const ad::Var& probs, std::span<const int> face_classes);

inline const std::vector<int>& default_face_classes() {
    static const std::vector<int> c{1, 3, 4};  // skin, lips, eyes-brows
    return c;
}

/// Per point: w = face_weight(dynamic), composite = w * dynamic + (1 - w) * static
/// for color, density and class probabilities. A forced weight replaces w.
FieldEval blend_fields(const FieldEval& dynamic, const FieldEval& stat, std::span<const int> face_classes,
                       std::optional<double> forced_weight = std::nullopt);

class BlendedField final : public RadianceField {
public:
    BlendedField(std::shared_ptr<const RadianceField> dynamic, std::shared_ptr<const RadianceField> stat,
                 std::vector<int> face_classes, std::optional<double> forced_weight = std::nullopt);
    std::size_t class_count() const override { return dynamic_->class_count(); }
    FieldEval eval(const ad::Mat& positions, const ad::Mat& dirs) const override;

private:
    std::shared_ptr<const RadianceField> dynamic_, static_;
    std::vector<int> face_classes_;
    std::optional<double> forced_;
};

struct RenderOptions {
    int coarse_samples = 48;
    int fine_samples = 48;
    bool deterministic = true;
    std::uint64_t seed = 0;
    std::size_t chunk_rays = 1024;
};

/// Sample positions for a set of rays, fixed before the field is evaluated
/// with gradients, so gradients never flow through sample placement.
struct RayBatch {
    std::size_t rays = 0;
    std::size_t samples = 0;  // per ray
    ad::Mat positions;        // (rays * samples) x 3
    ad::Mat dirs;             // (rays * samples) x 3
    ad::Mat deltas;           // (rays * samples) x 1
    std::vector<double> t;    // rays * samples
    std::vector<std::uint8_t> fallback;  // per ray
};

/// Rays through the given pixel indices (row-major, y * W + x). Runs the coarse
/// pass on a detached evaluation of `field`.
RayBatch plan_rays(const RadianceField& field, const Camera& cam, std::span<const std::size_t> pixels,
                   const RenderOptions& opt);
RayBatch plan_rays(const RadianceField& field, const Camera& cam, const RenderOptions& opt);

struct RenderGraph {
    ad::Var rgb;       // rays x 3
    ad::Var semantic;  // rays x K
    ad::Var alpha;     // rays x 1
    ad::Mat depth;     // rays x 1
};

RenderGraph integrate(const FieldEval& eval, const RayBatch& batch);
RenderGraph render_batch(const RadianceField& field, const RayBatch& batch);

struct RenderOutput {
    int width = 0;
    int height = 0;
    std::size_t classes = 0;
    ad::Mat rgb;       // (H*W) x 3
    ad::Mat semantic;  // (H*W) x K
    ad::Mat alpha;     // (H*W) x 1
    ad::Mat depth;     // (H*W) x 1
    std::size_t fallback_rays = 0;

    Image rgb_image() const;
    /// argmax class per pixel
    std::vector<int> semantic_labels() const;
};

/// Whole-image render in ray chunks, no gradients retained.
RenderOutput render_image(const RadianceField& field, const Camera& cam, const RenderOptions& opt = {});

/// rgb + (1 - alpha) * bg per pixel.
Image replace_background(const RenderOutput& out, const Image& bg);
ad::Var replace_background(const ad::Var& rgb, const ad::Var& alpha, const ad::Var& bg);

}  // namespace morphvol
