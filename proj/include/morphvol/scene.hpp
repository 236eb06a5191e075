// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
// The portrait model: face prior, control VAEs, mapping network, tri-plane
// generator and field decoder, wired to a SceneConfig.
#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include "morphvol/config.hpp"
#include "morphvol/face_model.hpp"
#include "morphvol/latent.hpp"
#include "morphvol/loss_report.hpp"
#include "morphvol/nn.hpp"
#include "morphvol/render.hpp"
#include "morphvol/triplane.hpp"

namespace morphvol {

/// alpha = delta = beta = epsilon = 0, ambient gamma, identity pose.
ControlParams neutral_params(std::size_t epsilon_dim);

struct PortraitModel {
    SceneConfig config;
    FaceBasis basis;
    ControlVaes vaes;
    MappingNetwork mapping;
    TriPlaneGenerator generator;
    FieldDecoder decoder;
    std::vector<double> w_mean;  // mean mapped latent over seeded draws

    /// Loads the basis, then either the weight file or seeded initial weights.
    static PortraitModel create(const SceneConfig& cfg);
    static PortraitModel initialize(const SceneConfig& cfg, FaceBasis basis);

    std::size_t epsilon_dim() const { return config.model.epsilon_dim; }
    std::vector<int> face_classes() const { return config.face_class_ids(); }

    std::vector<double> w_for(const ControlParams& p) const;
    /// Camera for a head pose at the configured size, or width x height when given.
    Camera camera_for(const Pose& pose, int width = 0, int height = 0) const;
    /// Unit conditioning direction for the generator: from the target to the camera.
    static Vec3 view_direction(const Camera& cam);
    TriPlanes planes_for(std::span<const double> w, const Camera& cam) const;
    std::shared_ptr<const TriPlaneField> field_for(const ControlParams& p, const Camera& cam) const;
    /// Composite of field(p) and field(p with beta = neutral_beta).
    std::shared_ptr<const BlendedField> blended_field_for(const ControlParams& p, std::span<const double> neutral_beta,
                                                          const Camera& cam, std::optional<double> forced = std::nullopt) const;

    RenderOptions render_options(bool deterministic, std::uint64_t seed) const;
    RenderOutput render(const ControlParams& p, const Camera& cam, const RenderOptions& opt) const;
    RenderOutput render_blended(const ControlParams& p, std::span<const double> neutral_beta, const Camera& cam,
                                const RenderOptions& opt, std::optional<double> forced = std::nullopt) const;

    std::vector<nn::ParamRef> parameters();
    void save_weights(const std::filesystem::path& path);
    void load_weights(const std::filesystem::path& path);
    void validate() const;
};

struct PriorFitOptions {
    int steps = 200;
    double lr = 3e-3;
    int size = 16;          // square render size used for fitting
    int subjects = 4;       // seeded parameter draws per step cycle
    double beta_std = 1.5;  // spread of the expression draws
    double alpha_std = 0.5;
    std::uint64_t seed = 5;
    /// Weight of the pointwise background term: mean -log p_background over
    /// every sample on a ray whose raster label is background.
    double background_weight = 1.0;
};

/// Adam on the generator and decoder so the field imitates rasterized 3DMM
/// renders: tex * mean((I - R)^2) + ce * L_ce(S, raster labels) + the
/// background term, tex and ce from the imitative loss weights. One report per step.
std::vector<LossReport> fit_prior(PortraitModel& model, const PriorFitOptions& opt);

/// The seeded parameter draws fit_prior cycles through.
std::vector<ControlParams> prior_subjects(const PortraitModel& model, const PriorFitOptions& opt);

}  // namespace morphvol
