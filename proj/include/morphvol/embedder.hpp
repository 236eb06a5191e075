// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic stand-ins for the pretrained perception networks: a seeded
// random-projection face embedding and two fixed convolution stages.
#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "morphvol/autodiff.hpp"

namespace morphvol {

/// Taps resampling a W x H image to `out_w` x `out_h` (bilinear, align corners).
std::shared_ptr<const ad::RowTaps> resample_taps(int width, int height, int out_w, int out_h);

/// 2 x 2 average pooling; output size max(1, W / 2) x max(1, H / 2).
std::shared_ptr<const ad::RowTaps> avgpool2_taps(int width, int height);
std::vector<double> avgpool2(std::span<const double> mask, int width, int height);

struct StyleFeatures {
    ad::Var phi1;  // (H*W) x channels
    ad::Var phi2;  // (H/2 * W/2) x channels
    int width1 = 0, height1 = 0;
    int width2 = 0, height2 = 0;
};

struct MaskedStats {
    ad::Var mean;      // 1 x C
    ad::Var variance;  // 1 x C
};

/// Masked spatial mean and (population) variance of an N x C feature map.
/// The mask weights must have a positive sum.
MaskedStats masked_stats(const ad::Var& features, std::span<const double> mask);

struct FeatureEmbedder {
    int grid = 8;
    std::size_t dim = 128;
    std::size_t style_channels = 8;
    ad::Mat projection;                 // (grid * grid * 3) x dim
    std::shared_ptr<const ad::Mat> phi1_kernel;  // (9 * 3) x style_channels
    std::shared_ptr<const ad::Mat> phi2_kernel;  // (9 * style_channels) x style_channels

    static FeatureEmbedder make(std::uint64_t seed, int grid = 8, std::size_t dim = 128, std::size_t style_channels = 8);

    /// Unnormalized embedding, 1 x dim. `image` is (H*W) x 3.
    ad::Var raw(const ad::Var& image, int width, int height) const;
    StyleFeatures style(const ad::Var& image, int width, int height) const;
};

}  // namespace morphvol
