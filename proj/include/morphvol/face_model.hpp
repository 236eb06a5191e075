// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
// Affine morphable face model: coefficient-to-mesh math, spherical-harmonics
// shading and pose.
#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "morphvol/types.hpp"

namespace morphvol {

/// V x 3 row-major point/color/normal arrays; row v is vertex v.
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Triangle = std::array<int, 3>;

enum SemanticClass : int {
    kBackground = 0,
    kSkin = 1,
    kHair = 2,
    kLips = 3,
    kEyesBrows = 4,
    kClothes = 5,
};
inline constexpr int kDefaultClassCount = 6;

/// Basis columns are stacked per vertex: row 3*v + axis.
struct FaceBasis {
    Points mean_shape;
    Points mean_albedo;
    Eigen::MatrixXd id_basis;   // 3V x 80
    Eigen::MatrixXd exp_basis;  // 3V x 64
    Eigen::MatrixXd alb_basis;  // 3V x 80
    std::vector<Triangle> triangles;
    std::vector<int> landmark_idx;  // 68 vertex indices
    std::vector<int> region_label;  // V class ids in [0, class_count)
    int class_count = kDefaultClassCount;
    // Landmarks that receive the heavy weight in the landmark loss (brows, mouth).
    std::vector<int> emphasized_landmarks;

    std::size_t vertex_count() const { return static_cast<std::size_t>(mean_shape.rows()); }
    /// Throws std::invalid_argument when any shape or index invariant is broken.
    void validate() const;
};

struct SyntheticBasisConfig {
    int rings = 16;
    int segments = 32;
    double radius = 0.45;
    std::uint64_t seed = 7;
    double id_scale = 1.0;
    double exp_scale = 1.2;
    double albedo_scale = 2.0;
    double spectrum_decay = 0.96;
    int smoothing_passes = 2;
};

/// Deterministic stand-in basis: an ellipsoidal head (rings x segments
/// vertices, face toward +z) with seeded orthonormal, spectrally decaying
/// basis columns, region labels and a 68-point landmark layout.
FaceBasis make_synthetic_basis(const SyntheticBasisConfig& cfg = {});

struct FaceMesh {
    Points vertices;
    Points colors;
    Points normals;
    std::vector<Triangle> triangles;
    Points landmarks3d;
    std::vector<int> labels;
};

Points shape_from_coeffs(const FaceBasis& basis, std::span<const double> alpha, std::span<const double> beta);
/// Unclamped albedo; clamp only for display.
Points albedo_from_coeffs(const FaceBasis& basis, std::span<const double> delta);

struct VertexNormals {
    Points normals;
    /// Vertices with no incident non-degenerate triangle; their normal is zero.
    std::vector<int> isolated;
};
/// Area-weighted accumulation of face normals (counter-clockwise winding).
VertexNormals vertex_normals(const Points& vertices, std::span<const Triangle> triangles);

inline constexpr double kShC0 = 0.28209479;  // 1 / (2 sqrt(pi))
inline constexpr double kShC1 = 0.48860251;  // sqrt(3 / (4 pi))
inline constexpr double kShC2 = 1.09254843;  // sqrt(15 / (4 pi))
inline constexpr double kShC3 = 0.31539157;  // sqrt(5 / (16 pi))
inline constexpr double kShC4 = 0.54627422;  // sqrt(15 / (16 pi))

/// Real SH basis up to degree 2, ordered
///   H0 = c0, H1 = c1 y, H2 = c1 z, H3 = c1 x,
///   H4 = c2 xy, H5 = c2 yz, H6 = c3 (3z^2 - 1), H7 = c2 xz, H8 = c4 (x^2 - y^2).
/// Non-unit input is normalized first; a zero vector yields only the H0/H6 terms of n = 0.
std::array<double, 9> sh_basis(const Vec3& normal);

/// lit[i, c] = colors[i, c] * sum_b gamma[3 b + c] * H_b(n_i); gamma is 9 bands x 3 channels.
Points illuminate(const Points& colors, const Points& normals, std::span<const double> gamma);

/// R = Rz(roll) * Ry(yaw) * Rx(pitch).
/// Band-0-only lighting giving a uniform shade of `level`.
std::vector<double> ambient_gamma(double level = 0.9);

Eigen::Matrix3d rotation_matrix(const Pose& pose);
/// Recovers the Z*Y*X Euler triple; unique while |yaw| < pi/2.
Pose pose_from_rotation(const Eigen::Matrix3d& r, const Vec3& t);
Points apply_pose(const Points& vertices, const Pose& pose);

/// Full mesh for a control vector: shape, pose, normals, shaded albedo, landmarks.
FaceMesh build_face_mesh(const FaceBasis& basis, const ControlParams& params);

/// Clamps colors to [0, 1] for display.
Points clamp_colors(const Points& colors);

}  // namespace morphvol
