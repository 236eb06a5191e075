// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
#include "morphvol/face_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>
#include <string>

namespace morphvol {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;

[[noreturn]] void invalid(const std::string& what) { throw std::invalid_argument(what); }

void check_coeffs(std::span<const double> v, Eigen::Index cols, const char* name) {
    if (static_cast<Eigen::Index>(v.size()) != cols) {
        invalid(std::string(name) + ": expected " + std::to_string(cols) + " coefficients, got " + std::to_string(v.size()));
    }
}

Points reshape_points(const Eigen::VectorXd& flat) {
    Points p(flat.size() / 3, 3);
    std::copy(flat.data(), flat.data() + flat.size(), p.data());
    return p;
}

Eigen::VectorXd flatten(const Points& p) { return Eigen::Map<const Eigen::VectorXd>(p.data(), p.size()); }

// Spherical angles of a vertex on the generating sphere: theta from +y, phi from +z toward +x.
struct SphereCoord {
    double theta;
    double phi;
};

Vec3 sphere_dir(double theta, double phi) {
    return {std::sin(theta) * std::sin(phi), std::cos(theta), std::sin(theta) * std::cos(phi)};
}

int classify_region(double theta_deg, double phi_deg) {
    const double aphi = std::abs(phi_deg);
    if (theta_deg > 150.0) return kClothes;
    if (aphi > 80.0 || theta_deg < 45.0) return kHair;
    if (theta_deg >= 68.0 && theta_deg <= 90.0 && aphi >= 8.0 && aphi <= 42.0) return kEyesBrows;
    if (theta_deg >= 110.0 && theta_deg <= 126.0 && aphi < 28.0) return kLips;
    return kSkin;
}

Vec3 region_albedo(int label) {
    switch (label) {
        case kSkin: return {0.78, 0.58, 0.47};
        case kHair: return {0.22, 0.16, 0.11};
        case kLips: return {0.72, 0.32, 0.33};
        case kEyesBrows: return {0.28, 0.20, 0.15};
        case kClothes: return {0.22, 0.32, 0.58};
        default: return {0.5, 0.5, 0.5};
    }
}

// 68-point layout in (theta, phi) degrees on the generating sphere.
std::vector<SphereCoord> landmark_targets() {
    std::vector<SphereCoord> t;
    for (int i = 0; i < 17; ++i) {  // jaw
        const double u = -1.0 + 2.0 * i / 16.0;
        t.push_back({145.0 - 50.0 * u * u, 70.0 * u});
    }
    for (int side = -1; side <= 1; side += 2) {  // brows
        for (int i = 0; i < 5; ++i) {
            const double u = i / 4.0;
            const double phi = side < 0 ? -42.0 + 32.0 * u : 10.0 + 32.0 * u;
            t.push_back({72.0 - 4.0 * std::sin(u * kPi), phi});
        }
    }
    for (int i = 0; i < 4; ++i) t.push_back({80.0 + 25.0 * i / 3.0, 0.0});  // nose bridge
    for (int i = 0; i < 5; ++i) t.push_back({108.0, -12.0 + 6.0 * i});      // nostrils
    for (int side = -1; side <= 1; side += 2) {                           // eyes
        for (int i = 0; i < 6; ++i) {
            const double a = kPi - 2.0 * kPi * i / 6.0;
            t.push_back({86.0 - 6.0 * std::sin(a), side * 25.0 + 9.0 * std::cos(a)});
        }
    }
    for (int i = 0; i < 12; ++i) {  // outer lip
        const double a = kPi - 2.0 * kPi * i / 12.0;
        t.push_back({120.0 - 7.0 * std::sin(a), 25.0 * std::cos(a)});
    }
    for (int i = 0; i < 8; ++i) {  // inner lip
        const double a = kPi - 2.0 * kPi * i / 8.0;
        t.push_back({120.0 - 3.0 * std::sin(a), 15.0 * std::cos(a)});
    }
    return t;
}

std::vector<std::vector<int>> vertex_neighbors(std::size_t v, std::span<const Triangle> tris) {
    std::vector<std::set<int>> adj(v);
    for (const auto& t : tris) {
        for (int k = 0; k < 3; ++k) {
            adj[t[k]].insert(t[(k + 1) % 3]);
            adj[t[k]].insert(t[(k + 2) % 3]);
        }
    }
    std::vector<std::vector<int>> out(v);
    for (std::size_t i = 0; i < v; ++i) out[i].assign(adj[i].begin(), adj[i].end());
    return out;
}

// Random smooth, spatially weighted, orthonormalized columns scaled by a decaying spectrum.
Eigen::MatrixXd make_basis_block(Rng& rng, std::size_t v, int cols, const std::vector<std::vector<int>>& nbrs,
                                 const std::vector<double>& vertex_weight, int passes, double scale, double decay) {
    Eigen::MatrixXd g(3 * v, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < g.rows(); ++r) g(r, c) = rng.normal();
    for (int pass = 0; pass < passes; ++pass) {
        Eigen::MatrixXd s = g;
        for (std::size_t i = 0; i < v; ++i) {
            if (nbrs[i].empty()) continue;
            for (int a = 0; a < 3; ++a) {
                Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(cols);
                for (int n : nbrs[i]) acc += g.row(3 * n + a);
                s.row(3 * i + a) = 0.5 * g.row(3 * i + a) + 0.5 * acc / static_cast<double>(nbrs[i].size());
            }
        }
        g = std::move(s);
    }
    for (std::size_t i = 0; i < v; ++i) g.middleRows(3 * i, 3) *= vertex_weight[i];
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(g.rows(), cols);
    for (int c = 0; c < cols; ++c) q.col(c) *= scale * std::pow(decay, c);
    return q;
}

}  // namespace

void FaceBasis::validate() const {
    const auto v = static_cast<Eigen::Index>(vertex_count());
    if (v <= 0) invalid("FaceBasis: no vertices");
    if (mean_albedo.rows() != v) invalid("FaceBasis: mean_albedo row count != V");
    if (id_basis.rows() != 3 * v || id_basis.cols() != static_cast<Eigen::Index>(kIdDim))
        invalid("FaceBasis: id_basis must be 3V x 80");
    if (exp_basis.rows() != 3 * v || exp_basis.cols() != static_cast<Eigen::Index>(kExpDim))
        invalid("FaceBasis: exp_basis must be 3V x 64");
    if (alb_basis.rows() != 3 * v || alb_basis.cols() != static_cast<Eigen::Index>(kAlbedoDim))
        invalid("FaceBasis: alb_basis must be 3V x 80");
    if (triangles.empty()) invalid("FaceBasis: no triangles");
    for (const auto& t : triangles)
        for (int i : t)
            if (i < 0 || i >= v) invalid("FaceBasis: triangle index out of range");
    if (landmark_idx.size() != kLandmarks) invalid("FaceBasis: expected 68 landmark indices");
    for (int i : landmark_idx)
        if (i < 0 || i >= v) invalid("FaceBasis: landmark index out of range");
    if (region_label.size() != static_cast<std::size_t>(v)) invalid("FaceBasis: region_label size != V");
    for (int l : region_label)
        if (l < 0 || l >= class_count) invalid("FaceBasis: region label out of range");
    for (int l : emphasized_landmarks)
        if (l < 0 || l >= static_cast<int>(kLandmarks)) invalid("FaceBasis: emphasized landmark out of range");
}

FaceBasis make_synthetic_basis(const SyntheticBasisConfig& cfg) {
    if (cfg.rings < 3 || cfg.segments < 8) invalid("synthetic basis: need rings >= 3 and segments >= 8");
    const int R = cfg.rings;
    const int S = cfg.segments;
    const std::size_t v = static_cast<std::size_t>(R) * S;
    FaceBasis b;
    b.mean_shape.resize(static_cast<Eigen::Index>(v), 3);
    b.mean_albedo.resize(static_cast<Eigen::Index>(v), 3);
    b.region_label.resize(v);
    std::vector<SphereCoord> coords(v);
    const Vec3 axes{0.85 * cfg.radius, 1.1 * cfg.radius, 0.95 * cfg.radius};
    for (int r = 0; r < R; ++r) {
        for (int s = 0; s < S; ++s) {
            const std::size_t i = static_cast<std::size_t>(r) * S + s;
            const double theta = kPi * (r + 0.5) / R;
            const double phi = 2.0 * kPi * s / S;
            const double phi_wrapped = phi > kPi ? phi - 2.0 * kPi : phi;
            coords[i] = {theta, phi_wrapped};
            const Vec3 d = sphere_dir(theta, phi);
            b.mean_shape.row(static_cast<Eigen::Index>(i)) << axes[0] * d[0], axes[1] * d[1], axes[2] * d[2];
            const int label = classify_region(theta / kDeg, phi_wrapped / kDeg);
            b.region_label[i] = label;
            const Vec3 a = region_albedo(label);
            b.mean_albedo.row(static_cast<Eigen::Index>(i)) << a[0], a[1], a[2];
        }
    }
    auto idx = [S](int r, int s) { return r * S + ((s % S) + S) % S; };
    auto add_oriented = [&b](int i0, int i1, int i2) {
        const Eigen::Vector3d p0 = b.mean_shape.row(i0).transpose();
        const Eigen::Vector3d p1 = b.mean_shape.row(i1).transpose();
        const Eigen::Vector3d p2 = b.mean_shape.row(i2).transpose();
        const Eigen::Vector3d n = (p1 - p0).cross(p2 - p0);
        const Eigen::Vector3d c = (p0 + p1 + p2) / 3.0;
        if (n.dot(c) >= 0.0) {
            b.triangles.push_back({i0, i1, i2});
        } else {
            b.triangles.push_back({i0, i2, i1});
        }
    };
    for (int r = 0; r + 1 < R; ++r) {
        for (int s = 0; s < S; ++s) {
            add_oriented(idx(r, s), idx(r + 1, s), idx(r + 1, s + 1));
            add_oriented(idx(r, s), idx(r + 1, s + 1), idx(r, s + 1));
        }
    }
    for (int s = 1; s + 1 < S; ++s) {  // caps close the open poles
        add_oriented(idx(0, 0), idx(0, s), idx(0, s + 1));
        add_oriented(idx(R - 1, 0), idx(R - 1, s), idx(R - 1, s + 1));
    }

    // Landmarks: nearest unused vertex to each target direction.
    std::vector<bool> used(v, false);
    for (const auto& t : landmark_targets()) {
        const Vec3 d = sphere_dir(t.theta * kDeg, t.phi * kDeg);
        int best = -1;
        double best_d = 1e300;
        for (std::size_t i = 0; i < v; ++i) {
            if (used[i]) continue;
            const Vec3 e = sphere_dir(coords[i].theta, coords[i].phi);
            const double dist = norm(e - d);
            if (dist < best_d) {
                best_d = dist;
                best = static_cast<int>(i);
            }
        }
        used[best] = true;
        b.landmark_idx.push_back(best);
    }
    for (int i = 17; i <= 26; ++i) b.emphasized_landmarks.push_back(i);
    for (int i = 48; i <= 67; ++i) b.emphasized_landmarks.push_back(i);

    const auto nbrs = vertex_neighbors(v, b.triangles);
    std::vector<double> uniform_w(v, 1.0);
    std::vector<double> face_w(v);
    for (std::size_t i = 0; i < v; ++i) {
        const double th = coords[i].theta / kDeg;
        const double ph = coords[i].phi / kDeg;
        const double front = std::max(0.0, std::cos(ph * kDeg * 0.9));
        face_w[i] = 0.15 + front * std::exp(-std::pow((th - 105.0) / 40.0, 2.0));
    }
    Rng rng(cfg.seed);
    b.id_basis = make_basis_block(rng, v, kIdDim, nbrs, uniform_w, cfg.smoothing_passes, cfg.id_scale, cfg.spectrum_decay);
    b.exp_basis = make_basis_block(rng, v, kExpDim, nbrs, face_w, cfg.smoothing_passes, cfg.exp_scale, cfg.spectrum_decay);
    b.alb_basis = make_basis_block(rng, v, kAlbedoDim, nbrs, uniform_w, cfg.smoothing_passes + 1, cfg.albedo_scale, cfg.spectrum_decay);
    b.validate();
    return b;
}

Points shape_from_coeffs(const FaceBasis& basis, std::span<const double> alpha, std::span<const double> beta) {
    check_coeffs(alpha, basis.id_basis.cols(), "shape_from_coeffs alpha");
    check_coeffs(beta, basis.exp_basis.cols(), "shape_from_coeffs beta");
    const Eigen::Map<const Eigen::VectorXd> a(alpha.data(), static_cast<Eigen::Index>(alpha.size()));
    const Eigen::Map<const Eigen::VectorXd> e(beta.data(), static_cast<Eigen::Index>(beta.size()));
    return reshape_points(flatten(basis.mean_shape) + basis.id_basis * a + basis.exp_basis * e);
}

Points albedo_from_coeffs(const FaceBasis& basis, std::span<const double> delta) {
    check_coeffs(delta, basis.alb_basis.cols(), "albedo_from_coeffs delta");
    const Eigen::Map<const Eigen::VectorXd> d(delta.data(), static_cast<Eigen::Index>(delta.size()));
    return reshape_points(flatten(basis.mean_albedo) + basis.alb_basis * d);
}

VertexNormals vertex_normals(const Points& vertices, std::span<const Triangle> triangles) {
    const Eigen::Index v = vertices.rows();
    VertexNormals out;
    out.normals = Points::Zero(v, 3);
    for (const auto& t : triangles) {
        for (int i : t)
            if (i < 0 || i >= v) invalid("vertex_normals: triangle index out of range");
        const Eigen::Vector3d p0 = vertices.row(t[0]).transpose();
        const Eigen::Vector3d p1 = vertices.row(t[1]).transpose();
        const Eigen::Vector3d p2 = vertices.row(t[2]).transpose();
        // Cross product length is twice the area: area weighting for free.
        const Eigen::Vector3d n = (p1 - p0).cross(p2 - p0);
        for (int i : t) out.normals.row(i) += n.transpose();
    }
    for (Eigen::Index i = 0; i < v; ++i) {
        const double len = out.normals.row(i).norm();
        if (len > 1e-300) {
            out.normals.row(i) /= len;
        } else {
            out.normals.row(i).setZero();
            out.isolated.push_back(static_cast<int>(i));
        }
    }
    return out;
}

std::array<double, 9> sh_basis(const Vec3& normal) {
    const Vec3 n = normalized(normal);
    const double x = n[0], y = n[1], z = n[2];
    return {kShC0,
            kShC1 * y,
            kShC1 * z,
            kShC1 * x,
            kShC2 * x * y,
            kShC2 * y * z,
            kShC3 * (3.0 * z * z - 1.0),
            kShC2 * x * z,
            kShC4 * (x * x - y * y)};
}

Points illuminate(const Points& colors, const Points& normals, std::span<const double> gamma) {
    if (gamma.size() != kGammaDim) invalid("illuminate: gamma must have 27 entries");
    if (colors.rows() != normals.rows()) invalid("illuminate: colors/normals row mismatch");
    Points lit(colors.rows(), 3);
    for (Eigen::Index i = 0; i < colors.rows(); ++i) {
        const auto h = sh_basis({normals(i, 0), normals(i, 1), normals(i, 2)});
        for (int c = 0; c < 3; ++c) {
            double shade = 0.0;
            for (std::size_t bnd = 0; bnd < kShBands; ++bnd) shade += gamma[3 * bnd + c] * h[bnd];
            lit(i, c) = colors(i, c) * shade;
        }
    }
    return lit;
}

std::vector<double> ambient_gamma(double level) {
    std::vector<double> g(kGammaDim, 0.0);
    for (int c = 0; c < 3; ++c) g[c] = level / kShC0;
    return g;
}

Eigen::Matrix3d rotation_matrix(const Pose& pose) {
    const Eigen::Matrix3d rz = Eigen::AngleAxisd(pose.roll, Eigen::Vector3d::UnitZ()).toRotationMatrix();
    const Eigen::Matrix3d ry = Eigen::AngleAxisd(pose.yaw, Eigen::Vector3d::UnitY()).toRotationMatrix();
    const Eigen::Matrix3d rx = Eigen::AngleAxisd(pose.pitch, Eigen::Vector3d::UnitX()).toRotationMatrix();
    return rz * ry * rx;
}

Pose pose_from_rotation(const Eigen::Matrix3d& r, const Vec3& t) {
    Pose p;
    p.yaw = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
    p.pitch = std::atan2(r(2, 1), r(2, 2));
    p.roll = std::atan2(r(1, 0), r(0, 0));
    p.t = t;
    return p;
}

Points apply_pose(const Points& vertices, const Pose& pose) {
    const Eigen::Matrix3d r = rotation_matrix(pose);
    Points out = vertices * r.transpose();
    out.rowwise() += Eigen::RowVector3d(pose.t[0], pose.t[1], pose.t[2]);
    return out;
}

FaceMesh build_face_mesh(const FaceBasis& basis, const ControlParams& params) {
    FaceMesh m;
    m.vertices = apply_pose(shape_from_coeffs(basis, params.alpha, params.beta), params.pose);
    m.triangles = basis.triangles;
    m.normals = vertex_normals(m.vertices, m.triangles).normals;
    m.colors = illuminate(albedo_from_coeffs(basis, params.delta), m.normals, params.gamma);
    m.landmarks3d.resize(static_cast<Eigen::Index>(basis.landmark_idx.size()), 3);
    for (std::size_t i = 0; i < basis.landmark_idx.size(); ++i)
        m.landmarks3d.row(static_cast<Eigen::Index>(i)) = m.vertices.row(basis.landmark_idx[i]);
    m.labels = basis.region_label;
    return m;
}

Points clamp_colors(const Points& colors) { return colors.cwiseMax(0.0).cwiseMin(1.0); }

}  // namespace morphvol
