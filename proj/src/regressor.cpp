// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
#include "morphvol/regressor.hpp"

#include <stdexcept>

#include <Eigen/Dense>

#include "morphvol/raster.hpp"

namespace morphvol {

namespace {

ad::Var centered(const FaceRegressor& r, const ad::Var& image) {
    const std::size_t d = static_cast<std::size_t>(r.width) * r.height * 3;
    if (image.rows() * image.cols() != d) throw std::invalid_argument("FaceRegressor: image size does not match");
    return ad::reshape(image, 1, d) - ad::Var::constant(r.image_mean);
}

ad::Mat to_mat(const Eigen::MatrixXd& m) {
    ad::Mat out(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) out(i, j) = m(i, j);
    return out;
}

}  // namespace

ad::Var FaceRegressor::landmarks(const ad::Var& image) const {
    const ad::Var flat = ad::matmul(centered(*this, image), ad::Var::constant(to_landmarks)) + ad::Var::constant(landmark_bias);
    return ad::reshape(flat, kLandmarks, 3);
}

ad::Var FaceRegressor::gamma(const ad::Var& image) const {
    return ad::matmul(centered(*this, image), ad::Var::constant(to_gamma)) + ad::Var::constant(gamma_bias);
}

FaceRegressor train_face_regressor(const FaceBasis& basis, const Camera& cam, int width, int height,
                                   const RegressorConfig& cfg) {
    if (cfg.samples < 2) throw std::invalid_argument("train_face_regressor: need at least two samples");
    const Eigen::Index n = cfg.samples;
    const Eigen::Index d = static_cast<Eigen::Index>(width) * height * 3;
    Eigen::MatrixXd X(n, d), Yl(n, kLandmarks * 3), Yg(n, kGammaDim);
    Rng rng(cfg.seed);
    const auto base_gamma = ambient_gamma();
    for (Eigen::Index s = 0; s < n; ++s) {
        ControlParams p;
        for (double& v : p.alpha) v = rng.normal(0.0, cfg.alpha_std);
        for (double& v : p.beta) v = rng.normal(0.0, cfg.beta_std);
        for (double& v : p.delta) v = rng.normal(0.0, cfg.delta_std);
        for (std::size_t k = 0; k < p.gamma.size(); ++k) p.gamma[k] = base_gamma[k] + rng.normal(0.0, cfg.gamma_std);
        const FaceMesh mesh = build_face_mesh(basis, p);
        const RasterBuffers buf = rasterize(mesh, cam, width, height);
        for (Eigen::Index j = 0; j < d; ++j) X(s, j) = buf.image.data[static_cast<std::size_t>(j)];
        for (Eigen::Index l = 0; l < static_cast<Eigen::Index>(kLandmarks); ++l)
            for (int c = 0; c < 3; ++c) Yl(s, 3 * l + c) = mesh.landmarks3d(l, c);
        for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(kGammaDim); ++k) Yg(s, k) = p.gamma[static_cast<std::size_t>(k)];
    }
    const Eigen::RowVectorXd xm = X.colwise().mean();
    const Eigen::RowVectorXd lm = Yl.colwise().mean();
    const Eigen::RowVectorXd gm = Yg.colwise().mean();
    const Eigen::MatrixXd Xc = X.rowwise() - xm;
    Eigen::MatrixXd K = Xc * Xc.transpose();
    const double scale = K.trace() / static_cast<double>(n);
    K.diagonal().array() += cfg.ridge * (scale > 0.0 ? scale : 1.0);
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(K);
    const Eigen::MatrixXd Al = Xc.transpose() * ldlt.solve(Yl.rowwise() - lm);
    const Eigen::MatrixXd Ag = Xc.transpose() * ldlt.solve(Yg.rowwise() - gm);

    FaceRegressor r;
    r.width = width;
    r.height = height;
    r.image_mean = to_mat(xm);
    r.to_landmarks = to_mat(Al);
    r.landmark_bias = to_mat(lm);
    r.to_gamma = to_mat(Ag);
    r.gamma_bias = to_mat(gm);
    return r;
}

}  // namespace morphvol
