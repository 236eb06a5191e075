// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
#include "morphvol/evaluation.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "morphvol/losses.hpp"
#include "morphvol/raster.hpp"

namespace morphvol {

namespace {

constexpr int kPoseParams = 6;

Eigen::Matrix3d rx(double a, bool d) {
    const double c = std::cos(a), s = std::sin(a);
    Eigen::Matrix3d m;
    if (d) m << 0, 0, 0, 0, -s, -c, 0, c, -s;
    else m << 1, 0, 0, 0, c, -s, 0, s, c;
    return m;
}

Eigen::Matrix3d ry(double a, bool d) {
    const double c = std::cos(a), s = std::sin(a);
    Eigen::Matrix3d m;
    if (d) m << -s, 0, c, 0, 0, 0, -c, 0, -s;
    else m << c, 0, s, 0, 1, 0, -s, 0, c;
    return m;
}

Eigen::Matrix3d rz(double a, bool d) {
    const double c = std::cos(a), s = std::sin(a);
    Eigen::Matrix3d m;
    if (d) m << -s, -c, 0, c, -s, 0, 0, 0, 0;
    else m << c, -s, 0, s, c, 0, 0, 0, 1;
    return m;
}

struct LandmarkModel {
    Eigen::MatrixXd mean;  // 204 x 1, unposed landmark coordinates
    Eigen::MatrixXd basis; // 204 x 144, [id | exp]
};

LandmarkModel landmark_model(const FaceBasis& b) {
    const Eigen::Index L = static_cast<Eigen::Index>(b.landmark_idx.size());
    const Eigen::Index ka = b.id_basis.cols(), kb = b.exp_basis.cols();
    LandmarkModel m;
    m.mean.resize(3 * L, 1);
    m.basis.resize(3 * L, ka + kb);
    for (Eigen::Index l = 0; l < L; ++l) {
        const int v = b.landmark_idx[static_cast<std::size_t>(l)];
        for (int c = 0; c < 3; ++c) {
            m.mean(3 * l + c, 0) = b.mean_shape(v, c);
            m.basis.block(3 * l + c, 0, 1, ka) = b.id_basis.row(3 * v + c);
            m.basis.block(3 * l + c, ka, 1, kb) = b.exp_basis.row(3 * v + c);
        }
    }
    return m;
}

struct State {
    Eigen::VectorXd coeffs;  // alpha, beta
    double yaw = 0, pitch = 0, roll = 0;
    Eigen::Vector3d t = Eigen::Vector3d::Zero();
};

Eigen::VectorXd residual(const LandmarkModel& m, const State& s, const Eigen::VectorXd& obs) {
    const Eigen::Matrix3d R = rz(s.roll, false) * ry(s.yaw, false) * rx(s.pitch, false);
    const Eigen::VectorXd shape = m.mean.col(0) + m.basis * s.coeffs;
    Eigen::VectorXd r(obs.size());
    for (Eigen::Index l = 0; l < obs.size() / 3; ++l)
        r.segment<3>(3 * l) = R * shape.segment<3>(3 * l) + s.t - obs.segment<3>(3 * l);
    return r;
}

Eigen::MatrixXd jacobian(const LandmarkModel& m, const State& s) {
    const Eigen::Index n = m.basis.rows(), k = m.basis.cols();
    const Eigen::Matrix3d Rz = rz(s.roll, false), Ry = ry(s.yaw, false), Rx = rx(s.pitch, false);
    const Eigen::Matrix3d R = Rz * Ry * Rx;
    const Eigen::Matrix3d dyaw = Rz * ry(s.yaw, true) * Rx;
    const Eigen::Matrix3d dpitch = Rz * Ry * rx(s.pitch, true);
    const Eigen::Matrix3d droll = rz(s.roll, true) * Ry * Rx;
    const Eigen::VectorXd shape = m.mean.col(0) + m.basis * s.coeffs;
    Eigen::MatrixXd J(n, k + kPoseParams);
    for (Eigen::Index l = 0; l < n / 3; ++l) {
        J.block(3 * l, 0, 3, k) = R * m.basis.middleRows(3 * l, 3);
        const Eigen::Vector3d p = shape.segment<3>(3 * l);
        J.block<3, 1>(3 * l, k + 0) = dyaw * p;
        J.block<3, 1>(3 * l, k + 1) = dpitch * p;
        J.block<3, 1>(3 * l, k + 2) = droll * p;
        J.block<3, 3>(3 * l, k + 3) = Eigen::Matrix3d::Identity();
    }
    return J;
}

void apply_step(State& s, const Eigen::VectorXd& d) {
    const Eigen::Index k = s.coeffs.size();
    s.coeffs += d.head(k);
    s.yaw += d(k);
    s.pitch += d(k + 1);
    s.roll += d(k + 2);
    s.t += d.segment<3>(k + 3);
}

double cost(const Eigen::VectorXd& r, const State& s, double ridge) { return r.squaredNorm() + ridge * s.coeffs.squaredNorm(); }

}  // namespace

FitResult fit_coefficients(const Points& landmarks, const Points* lit_colors, const FaceBasis& basis, const FitOptions& opt) {
    basis.validate();
    const Eigen::Index L = static_cast<Eigen::Index>(basis.landmark_idx.size());
    if (landmarks.rows() != L) throw std::invalid_argument("fit_coefficients: expected one observed point per landmark");
    if (lit_colors && static_cast<std::size_t>(lit_colors->rows()) != basis.vertex_count())
        throw std::invalid_argument("fit_coefficients: lit colors must have one row per vertex");
    if (opt.delta.size() != static_cast<std::size_t>(basis.alb_basis.cols()))
        throw std::invalid_argument("fit_coefficients: albedo coefficient size mismatch");

    FitResult out;
    const LandmarkModel lm = landmark_model(basis);
    Eigen::VectorXd obs(3 * L);
    for (Eigen::Index l = 0; l < L; ++l)
        for (int c = 0; c < 3; ++c) obs(3 * l + c) = landmarks(l, c);

    // Similarity Procrustes against the mean landmarks for the initial pose.
    Eigen::Matrix3Xd src(3, L), dst(3, L);
    for (Eigen::Index l = 0; l < L; ++l) {
        src.col(l) = lm.mean.block<3, 1>(3 * l, 0);
        dst.col(l) = obs.segment<3>(3 * l);
    }
    const Eigen::Matrix4d T = Eigen::umeyama(src, dst, true);
    const Eigen::Matrix3d sR = T.topLeftCorner<3, 3>();
    const double scale = std::cbrt(sR.determinant());
    const Pose p0 = pose_from_rotation(sR / scale, {T(0, 3), T(1, 3), T(2, 3)});

    State s;
    s.coeffs = Eigen::VectorXd::Zero(lm.basis.cols());
    s.yaw = p0.yaw, s.pitch = p0.pitch, s.roll = p0.roll;
    s.t = Eigen::Vector3d(p0.t[0], p0.t[1], p0.t[2]);

    const Eigen::Index k = lm.basis.cols();
    const Eigen::Index np = k + kPoseParams;
    double ridge = opt.ridge;
    {
        const Eigen::MatrixXd J = jacobian(lm, s);
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J.transpose() * J);
        const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
        if (!(lo > 1e-14 * hi)) {
            out.flags.push_back("fit_coefficients: rank-deficient landmark system, ridge applied");
            ridge = std::max(ridge, 1e-8 * hi);
        }
    }
    Eigen::VectorXd reg = Eigen::VectorXd::Zero(np);
    reg.head(k).setConstant(ridge);

    Eigen::VectorXd r = residual(lm, s, obs);
    double c = cost(r, s, ridge);
    double mu = 1e-6;
    int it = 0;
    for (; it < opt.max_iterations; ++it) {
        const Eigen::MatrixXd J = jacobian(lm, s);
        Eigen::MatrixXd A = J.transpose() * J;
        A.diagonal() += reg;
        Eigen::VectorXd g = J.transpose() * r;
        g.head(k) += ridge * s.coeffs;
        bool accepted = false;
        for (int tries = 0; tries < 30 && !accepted; ++tries) {
            Eigen::MatrixXd Ad = A;
            Ad.diagonal().array() += mu * (1.0 + A.diagonal().array());
            const Eigen::VectorXd d = -Ad.ldlt().solve(g);
            State trial = s;
            apply_step(trial, d);
            const Eigen::VectorXd rt = residual(lm, trial, obs);
            const double ct = cost(rt, trial, ridge);
            if (ct <= c) {
                const double step = d.norm();
                s = trial;
                r = rt;
                c = ct;
                mu = std::max(mu * 0.1, 1e-15);
                accepted = true;
                if (step < opt.tolerance * (1.0 + s.coeffs.norm())) it = opt.max_iterations;
            } else {
                mu *= 10.0;
            }
        }
        if (!accepted) break;
    }
    out.iterations = std::min(it, opt.max_iterations);
    out.landmark_residual = r.norm();
    out.alpha.assign(s.coeffs.data(), s.coeffs.data() + basis.id_basis.cols());
    out.beta.assign(s.coeffs.data() + basis.id_basis.cols(), s.coeffs.data() + k);
    out.pose.yaw = s.yaw, out.pose.pitch = s.pitch, out.pose.roll = s.roll;
    out.pose.t = {s.t(0), s.t(1), s.t(2)};

    if (lit_colors) {
        ControlParams p;
        p.alpha = out.alpha;
        p.beta = out.beta;
        p.delta = opt.delta;
        p.gamma.assign(kGammaDim, 0.0);
        p.pose = out.pose;
        const FaceMesh mesh = build_face_mesh(basis, p);
        const Points albedo = albedo_from_coeffs(basis, opt.delta);
        const Eigen::Index V = mesh.normals.rows();
        Eigen::MatrixXd H(V, kShBands);
        for (Eigen::Index i = 0; i < V; ++i) {
            const auto h = sh_basis({mesh.normals(i, 0), mesh.normals(i, 1), mesh.normals(i, 2)});
            for (std::size_t b = 0; b < kShBands; ++b) H(i, static_cast<Eigen::Index>(b)) = h[b];
        }
        for (int ch = 0; ch < 3; ++ch) {
            const Eigen::MatrixXd A = albedo.col(ch).asDiagonal() * H;
            const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
            if (qr.rank() < A.cols()) out.flags.push_back("fit_coefficients: rank-deficient lighting system, channel " + std::to_string(ch));
            const Eigen::VectorXd g = qr.solve(lit_colors->col(ch));
            for (std::size_t b = 0; b < kShBands; ++b) out.gamma[3 * b + ch] = g(static_cast<Eigen::Index>(b));
        }
        const Points lit = illuminate(albedo, mesh.normals, out.gamma);
        out.color_residual = (lit - *lit_colors).norm();
    }
    return out;
}

std::map<std::string, double> ds_score(const std::map<std::string, double>& variances,
                                       const std::map<std::string, double>& reference) {
    if (variances.size() < 2) throw std::invalid_argument("ds_score: need at least two attributes");
    std::map<std::string, double> s;
    for (const auto& [name, v] : variances) {
        const auto r = reference.find(name);
        if (r == reference.end()) throw std::invalid_argument("ds_score: no reference variance for '" + name + "'");
        if (!(v > 0.0) || !(r->second > 0.0)) throw std::invalid_argument("ds_score: variances must be positive ('" + name + "')");
        s[name] = v / r->second;
    }
    std::map<std::string, double> out;
    for (const auto& [i, si] : s) {
        double d = 1.0;
        for (const auto& [j, sj] : s)
            if (j != i) d *= si / sj;
        out[i] = d;
    }
    return out;
}

namespace {

double distance(std::span<const double> a, std::span<const double> b, Distance m) {
    if (a.size() != b.size() || a.empty()) throw std::invalid_argument("control_accuracy: block size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += m == Distance::l1 ? std::abs(a[i] - b[i]) : (a[i] - b[i]) * (a[i] - b[i]);
    return m == Distance::l1 ? acc / static_cast<double>(a.size()) : std::sqrt(acc);
}

}  // namespace

ControlAccuracy control_accuracy(std::span<const ControlParams> inputs, std::span<const FitResult> fits, Distance metric) {
    if (inputs.size() != fits.size()) throw std::invalid_argument("control_accuracy: lists must be aligned");
    if (inputs.empty()) throw std::invalid_argument("control_accuracy: empty lists");
    ControlAccuracy acc;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const double pin[3] = {inputs[i].pose.yaw, inputs[i].pose.pitch, inputs[i].pose.roll};
        const double pfit[3] = {fits[i].pose.yaw, fits[i].pose.pitch, fits[i].pose.roll};
        acc.aed += distance(inputs[i].beta, fits[i].beta, metric);
        acc.apd += distance(pin, pfit, metric);
        acc.aid += distance(inputs[i].gamma, fits[i].gamma, metric);
    }
    const double n = static_cast<double>(inputs.size());
    acc.aed /= n, acc.apd /= n, acc.aid /= n;
    return acc;
}

double identity_similarity(const Image& a, const Image& b, const FeatureEmbedder& e) {
    if (!a.same_shape(b) || a.channels != 3) throw std::invalid_argument("identity_similarity: images must match and be RGB");
    Flags flags;
    const ad::Var ea = embed(e, ad::Var::constant(image_to_mat(a)), a.width, a.height, &flags);
    const ad::Var eb = embed(e, ad::Var::constant(image_to_mat(b)), b.width, b.height, &flags);
    if (!flags.empty()) return 0.0;
    double dot = 0.0;
    for (std::size_t i = 0; i < ea.value().size(); ++i) dot += ea.value().data[i] * eb.value().data[i];
    return std::clamp(dot, -1.0, 1.0);
}

double variance(std::span<const double> xs) {
    if (xs.size() < 2) throw std::invalid_argument("variance: need at least two values");
    double m = 0.0;
    for (double x : xs) m += x;
    m /= static_cast<double>(xs.size());
    double v = 0.0;
    for (double x : xs) v += (x - m) * (x - m);
    return v / static_cast<double>(xs.size() - 1);
}

}  // namespace morphvol
