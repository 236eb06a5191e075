// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
#include "morphvol/align.hpp"

#include <cmath>
#include <stdexcept>

namespace morphvol {

Affine2x3 align_similarity(const Landmarks2D& src, const Landmarks2D& dst) {
    if (!src.allFinite() || !dst.allFinite()) throw std::invalid_argument("align_similarity: non-finite landmarks");
    const Eigen::RowVector2d ms = src.colwise().mean();
    const Eigen::RowVector2d md = dst.colwise().mean();
    const Eigen::Matrix<double, 5, 2> s = src.rowwise() - ms;
    const Eigen::Matrix<double, 5, 2> d = dst.rowwise() - md;
    const double var_s = s.squaredNorm();
    // Collinear points leave the 2x2 scatter matrix rank one.
    const Eigen::Matrix2d scatter = s.transpose() * s;
    if (var_s <= 0.0 || scatter.determinant() <= 1e-12 * var_s * var_s)
        throw std::invalid_argument("align_similarity: source landmarks are collinear or coincident");

    // Closed form for 2-D: with a = sum(s.d), b = sum(s x d), R = rot(atan2(b, a)).
    double a = 0.0, b = 0.0;
    for (int i = 0; i < 5; ++i) {
        a += s(i, 0) * d(i, 0) + s(i, 1) * d(i, 1);
        b += s(i, 0) * d(i, 1) - s(i, 1) * d(i, 0);
    }
    const double norm = std::hypot(a, b);
    if (norm == 0.0) throw std::invalid_argument("align_similarity: destination landmarks are degenerate");
    const double scale = norm / var_s;
    const double c = a / norm, sn = b / norm;
    Eigen::Matrix2d r;
    r << c, -sn, sn, c;
    Affine2x3 m;
    m.leftCols<2>() = scale * r;
    m.col(2) = md.transpose() - scale * r * ms.transpose();
    return m;
}

SimilarityParts decompose_similarity(const Affine2x3& m) {
    SimilarityParts p;
    p.scale = std::hypot(m(0, 0), m(1, 0));
    p.angle = std::atan2(m(1, 0), m(0, 0));
    p.offset = m.col(2);
    return p;
}

Affine2x3 compose_similarity(const SimilarityParts& p) {
    Affine2x3 m;
    const double c = std::cos(p.angle), s = std::sin(p.angle);
    m << p.scale * c, -p.scale * s, p.offset.x(), p.scale * s, p.scale * c, p.offset.y();
    return m;
}

Landmarks2D apply_similarity(const Affine2x3& m, const Landmarks2D& pts) {
    Landmarks2D out;
    for (int i = 0; i < 5; ++i) out.row(i) = (m.leftCols<2>() * pts.row(i).transpose() + m.col(2)).transpose();
    return out;
}

ControlParams canonicalize_translation(const ControlParams& params, const Vec3& canonical_t) {
    ControlParams out = params;
    out.pose.t = canonical_t;
    return out;
}

}  // namespace morphvol
