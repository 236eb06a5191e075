// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
// Five-landmark alignment preprocessing.
#pragma once

#include <Eigen/Dense>

#include "morphvol/types.hpp"

namespace morphvol {

using Landmarks2D = Eigen::Matrix<double, 5, 2, Eigen::RowMajor>;
using Affine2x3 = Eigen::Matrix<double, 2, 3, Eigen::RowMajor>;

/// Least-squares similarity (uniform scale, rotation, translation) taking src
/// onto dst. Throws std::invalid_argument when src is collinear or degenerate.
Affine2x3 align_similarity(const Landmarks2D& src, const Landmarks2D& dst);

struct SimilarityParts {
    double scale = 1.0;
    double angle = 0.0;  // radians, counter-clockwise
    Eigen::Vector2d offset = Eigen::Vector2d::Zero();
};
SimilarityParts decompose_similarity(const Affine2x3& m);
Affine2x3 compose_similarity(const SimilarityParts& p);

Landmarks2D apply_similarity(const Affine2x3& m, const Landmarks2D& pts);

ControlParams canonicalize_translation(const ControlParams& params, const Vec3& canonical_t);

}  // namespace morphvol
