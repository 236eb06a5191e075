// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
// Imitative, adversarial, disentanglement and inversion objectives, the
// finite-difference gradient checker and a plain gradient-descent loop.
//
// Images are (H*W) x 3 Vars, landmarks 68 x 3, coefficient vectors 1 x n.
// Pixel losses reduce by the mean, landmark losses by the sum.
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "morphvol/autodiff.hpp"
#include "morphvol/embedder.hpp"
#include "morphvol/face_model.hpp"
#include "morphvol/loss_report.hpp"
#include "morphvol/nn.hpp"
#include "morphvol/raster.hpp"
#include "morphvol/regressor.hpp"

namespace morphvol {

using Flags = std::vector<std::string>;

/// mean((I - R')^2)
ad::Var loss_tex(const ad::Var& image, const ad::Var& guidance);

/// Unit-norm embedding, 1 x dim. A zero embedding is returned as-is and flagged.
ad::Var embed(const FeatureEmbedder& e, const ad::Var& image, int width, int height, Flags* flags = nullptr);

/// 1 - <F(I), F(R')>. A zero embedding on either side gives 1 (flagged).
ad::Var loss_id(const ad::Var& image, const ad::Var& guidance, int width, int height, const FeatureEmbedder& e,
                Flags* flags = nullptr);

/// sum_i w_i ||lI_i - lR_i||
ad::Var loss_lmk(const ad::Var& lmk_image, const ad::Var& lmk_guidance, std::span<const double> weights);

/// 1 for ordinary landmarks, `emphasized` for the brow and mouth set of the basis.
std::vector<double> landmark_weights(const FaceBasis& basis, double emphasized = 100.0);

/// ||gamma - gamma_rec||_2
ad::Var loss_ill(const ad::Var& gamma, const ad::Var& gamma_rec);

inline constexpr double kCeFloor = 1e-6;

/// Cross entropy of the alpha-renormalized rendered semantics (H*W) x K
/// against integer labels; alpha is the row sum, floored at kCeFloor, and so
/// is the renormalized probability inside the log.
ad::Var loss_ce(const ad::Var& semantic, std::span<const int> labels);

struct ImitativeWeights {
    double tex = 10.0;
    double id = 10.0;
    double lmk = 10.0;
    double ill = 1e3;
    double ce = 1.0;
};

struct ImitativeTerms {
    ad::Var tex, id, lmk, ill, ce;
};

LossGraph loss_imitative(const ImitativeTerms& terms, const ImitativeWeights& w = {});

/// -E[min(0, -1 + D(x))] - E[min(0, -1 - D(G(z)))]
ad::Var hinge_d_loss(const ad::Var& real_scores, const ad::Var& fake_scores);
/// -E[D(G(z))]
ad::Var hinge_g_loss(const ad::Var& fake_scores);
/// E over the batch of ||grad_x D||^2; `grad` is B x D.
ad::Var r1_penalty(const ad::Var& grad);
/// Hinge discriminator loss plus r1_weight * R1 on the real inputs.
ad::Var discriminator_loss(const nn::TinyDiscriminator& d, const ad::Var& real, const ad::Var& fake, double r1_weight);

/// mean((I_k * M_k - I * M)^2) over all pixels and channels; masks are (H*W) x 1 background weights.
ad::Var loss_dis_kappa(const ad::Var& image, const ad::Var& image_kappa, const ad::Var& bg_mask, const ad::Var& bg_mask_kappa);

/// loss_id(I_g, I) + loss_lmk(landmarks(I_g), landmarks(I))
ad::Var loss_dis_gamma(const ad::Var& image_gamma, const ad::Var& image, int width, int height, const FeatureEmbedder& e,
                       const FaceRegressor& reg, std::span<const double> lmk_weights, Flags* flags = nullptr);

/// mean((I_b - warp(I, flow))^2); the flow is zero off the face, so those pixels compare unwarped.
ad::Var loss_tex_beta(const ad::Var& image_beta, const ad::Var& image, const Flow2D& flow);

/// sum over the two feature stages of ||mean_b - mean|| + ||var_b - var|| inside the lip masks.
/// An empty mask on either side gives 0 (flagged).
ad::Var loss_lip(const ad::Var& image_beta, const ad::Var& image, int width, int height, std::span<const double> lip_mask_beta,
                 std::span<const double> lip_mask, const FeatureEmbedder& e, Flags* flags = nullptr);

struct DisBetaWeights {
    double id = 100.0;
    double tex = 50.0;  // named lambda_flow in the training details
    double lip = 100.0;
};

struct DisBetaTerms {
    ad::Var id, tex, lip;
};

LossGraph loss_dis_beta(const DisBetaTerms& terms, const DisBetaWeights& w = {});

/// L_dis = L_kappa + L_gamma + L_beta (unit weights on the three groups).
LossGraph loss_dis_total(const ad::Var& kappa, const ad::Var& gamma, const ad::Var& beta_total);

struct InversionWeights {
    double pixel = 1.0;
    double lmk = 1e-3;
    double id = 0.1;
    double reg = 1e-4;
};

struct InversionInputs {
    ad::Var image;   // current render
    ad::Var target;  // target render (constant)
    int width = 0, height = 0;
    ad::Var w;       // 1 x n
    ad::Var w_mean;  // 1 x n
};

/// Terms pixel (mean squared error), lmk, id and reg = ||w - w_mean||_2.
LossGraph inversion_objective(const InversionInputs& in, const FeatureEmbedder& e, const FaceRegressor& reg,
                              std::span<const double> lmk_weights, const InversionWeights& w = {});

using LossFn = std::function<ad::Var(const std::vector<ad::Var>&)>;

struct GradcheckResult {
    double max_rel_error = 0.0;
    std::vector<double> per_param;  // max relative error per parameter block
    std::size_t coords_checked = 0;
    std::size_t coords_skipped = 0;  // stencil straddles a non-differentiable point
};

/// Fourth-order central differences with step h on every coordinate (or a seeded subset of
/// `max_coords` per block when nonzero); relative error uses max(|a|, |n|, 1e-8).
/// Coordinates whose estimates at h and h/2 differ by more than `kink_tolerance`
/// (relative) sit on a kink and are skipped; 0 disables the test.
GradcheckResult gradcheck(const LossFn& f, const std::vector<ad::Mat>& params, double h = 1e-4, std::size_t max_coords = 0,
                          std::uint64_t seed = 0, double kink_tolerance = 1e-6);

using StagedObjective = std::function<LossGraph(const std::vector<ad::Var>& params, int stage)>;

struct TrainOptions {
    int steps = 100;
    double lr = 1e-2;
    int stage_switch = -1;  // step at which stage 1 starts; < 0 keeps stage 0
    bool adam = false;      // Adam instead of p -= lr * g
};

/// Gradient descent over `params`; one LossReport per step, evaluated before the update.
std::vector<LossReport> micro_train(std::vector<nn::ParamRef> params, const StagedObjective& objective,
                                    const TrainOptions& opt);

}  // namespace morphvol
