// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
// Image -> 3DMM coefficient regressor used as the differentiable reconstruction
// network inside the losses. It is a ridge regression fitted to rasterized
// renders of the synthetic basis, so it is linear in the image.
#pragma once

#include <cstdint>

#include "morphvol/autodiff.hpp"
#include "morphvol/camera.hpp"
#include "morphvol/face_model.hpp"

namespace morphvol {

struct FaceRegressor {
    int width = 0;
    int height = 0;
    ad::Mat image_mean;     // 1 x (W*H*3)
    ad::Mat to_landmarks;   // (W*H*3) x 204, rows of the flattened image
    ad::Mat landmark_bias;  // 1 x 204
    ad::Mat to_gamma;       // (W*H*3) x 27
    ad::Mat gamma_bias;     // 1 x 27

    /// 68 x 3, linear in the (H*W) x 3 image.
    ad::Var landmarks(const ad::Var& image) const;
    /// 1 x 27
    ad::Var gamma(const ad::Var& image) const;
};

struct RegressorConfig {
    int samples = 160;
    double ridge = 1e-3;
    double alpha_std = 1.0;
    double beta_std = 1.0;
    double delta_std = 0.5;
    double gamma_std = 0.3;
    std::uint64_t seed = 11;
};

/// Fits the regressor on frontal renders (pose zero) seen through `cam` at W x H.
FaceRegressor train_face_regressor(const FaceBasis& basis, const Camera& cam, int width, int height,
                                   const RegressorConfig& cfg = {});

}  // namespace morphvol
