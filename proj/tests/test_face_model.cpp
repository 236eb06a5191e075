// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "morphvol/camera.hpp"
#include "morphvol/face_model.hpp"
#include "morphvol/raster.hpp"

using namespace morphvol;

namespace {

const FaceBasis& basis() {
    static const FaceBasis b = make_synthetic_basis();
    return b;
}

ControlParams draw(std::uint64_t seed) {
    Rng rng(seed);
    ControlParams p;
    for (double& v : p.alpha) v = rng.normal(0.0, 0.5);
    for (double& v : p.beta) v = rng.normal(0.0, 0.5);
    p.gamma = ambient_gamma();
    return p;
}

Camera frontal(int size) {
    CameraConfig cc;
    cc.width = size;
    cc.height = size;
    return camera_for_pose(Pose{}, cc);
}

}  // namespace

TEST_SUITE("face_model") {

TEST_CASE("synthetic basis satisfies its invariants") {
    const FaceBasis& b = basis();
    CHECK_NOTHROW(b.validate());
    CHECK(b.id_basis.cols() == 80);
    CHECK(b.exp_basis.cols() == 64);
    CHECK(b.alb_basis.cols() == 80);
    CHECK(b.landmark_idx.size() == 68);
    CHECK(b.id_basis.rows() == static_cast<Eigen::Index>(3 * b.vertex_count()));
    FaceBasis broken = b;
    broken.triangles[0][1] = static_cast<int>(b.vertex_count());
    CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
}

TEST_CASE("shape is affine in the coefficients") {
    const FaceBasis& b = basis();
    const ControlParams p = draw(1);
    const Points s = shape_from_coeffs(b, p.alpha, p.beta);
    const Eigen::Map<const Eigen::VectorXd> a(p.alpha.data(), 80), e(p.beta.data(), 64);
    const Eigen::VectorXd flat = b.id_basis * a + b.exp_basis * e;
    double err = 0.0;
    for (Eigen::Index v = 0; v < s.rows(); ++v)
        for (int k = 0; k < 3; ++k) err = std::max(err, std::abs(s(v, k) - b.mean_shape(v, k) - flat(3 * v + k)));
    CHECK(err < 1e-12);
}

TEST_CASE("SH basis values on the axes") {
    const auto h = sh_basis({0.0, 0.0, 1.0});
    CHECK(h[0] == doctest::Approx(kShC0));
    CHECK(h[2] == doctest::Approx(kShC1));
    CHECK(h[1] == 0.0);
    CHECK(h[3] == 0.0);
    CHECK(h[6] == doctest::Approx(2.0 * kShC3));
    const auto hx = sh_basis({2.0, 0.0, 0.0});
    CHECK(hx[3] == doctest::Approx(kShC1));
    CHECK(hx[8] == doctest::Approx(kShC4));
    CHECK(hx[6] == doctest::Approx(-kShC3));
}

TEST_CASE("ambient lighting shades uniformly") {
    Points colors(2, 3), normals(2, 3);
    colors << 0.5, 0.5, 0.5, 1.0, 0.2, 0.0;
    normals << 0.0, 0.0, 1.0, 1.0, 0.0, 0.0;
    const Points lit = illuminate(colors, normals, ambient_gamma(0.9));
    CHECK(lit(0, 0) == doctest::Approx(0.45));
    CHECK(lit(1, 1) == doctest::Approx(0.18));
}

TEST_CASE("rotation matrices are orthonormal and Euler angles round trip") {
    Rng rng(2);
    for (int i = 0; i < 20; ++i) {
        Pose p;
        p.yaw = rng.uniform(-1.4, 1.4);
        p.pitch = rng.uniform(-1.0, 1.0);
        p.roll = rng.uniform(-1.0, 1.0);
        const Eigen::Matrix3d r = rotation_matrix(p);
        CHECK((r.transpose() * r - Eigen::Matrix3d::Identity()).norm() < 1e-13);
        CHECK(r.determinant() == doctest::Approx(1.0));
        const Pose q = pose_from_rotation(r, {0.0, 0.0, 0.0});
        CHECK(q.yaw == doctest::Approx(p.yaw).epsilon(1e-12));
        CHECK(q.pitch == doctest::Approx(p.pitch).epsilon(1e-12));
        CHECK(q.roll == doctest::Approx(p.roll).epsilon(1e-12));
    }
}

TEST_CASE("yaw turns +z toward +x") {
    Pose p;
    p.yaw = std::numbers::pi / 2;
    const Eigen::Vector3d v = rotation_matrix(p) * Eigen::Vector3d(0, 0, 1);
    CHECK(v.x() == doctest::Approx(1.0));
    CHECK(std::abs(v.z()) < 1e-15);
}

TEST_CASE("mesh: unit normals and landmarks gathered from vertices") {
    const FaceMesh m = build_face_mesh(basis(), draw(3));
    const VertexNormals vn = vertex_normals(m.vertices, m.triangles);
    for (Eigen::Index v = 0; v < m.normals.rows(); ++v)
        if (std::find(vn.isolated.begin(), vn.isolated.end(), v) == vn.isolated.end())
            CHECK(m.normals.row(v).norm() == doctest::Approx(1.0).epsilon(1e-6));
    for (std::size_t l = 0; l < 68; ++l)
        CHECK((m.landmarks3d.row(static_cast<Eigen::Index>(l)) - m.vertices.row(basis().landmark_idx[l])).norm() == 0.0);
}

TEST_CASE("rasterizer: coverage, barycentrics and labels are consistent") {
    const FaceMesh mesh = build_face_mesh(basis(), draw(4));
    const RasterBuffers buf = rasterize(mesh, frontal(32), 32, 32);
    std::size_t covered = 0;
    for (std::size_t i = 0; i < buf.tri_id.size(); ++i) {
        const bool hit = buf.tri_id[i] != RasterBuffers::kNoTriangle;
        CHECK(buf.face_mask[i] == (hit ? 1 : 0));
        if (hit) {
            ++covered;
            CHECK(buf.bary[3 * i] + buf.bary[3 * i + 1] + buf.bary[3 * i + 2] == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(buf.labels[i] != kBackground);
        } else {
            CHECK(buf.labels[i] == kBackground);
            CHECK(std::isinf(buf.depth[i]));
        }
    }
    CHECK(covered > 100);
    CHECK(buf.face_mask[16 * 32 + 16] == 1);
    CHECK(buf.face_mask[0] == 0);
}

TEST_CASE("project inverts camera_ray") {
    const Camera cam = orbit_camera(0.3, -0.2, CameraConfig{});
    for (int px : {0, 17, 63})
        for (int py : {5, 40}) {
            const Ray r = camera_ray(cam, px, py);
            const auto proj = project(cam, r.origin + r.direction * 2.0);
            REQUIRE(proj.has_value());
            CHECK(proj->u == doctest::Approx(px + 0.5).epsilon(1e-10));
            CHECK(proj->v == doctest::Approx(py + 0.5).epsilon(1e-10));
        }
    CHECK_FALSE(project(cam, cam.position - cam.forward()).has_value());
}

TEST_CASE("orbit camera sits on the sphere") {
    const Camera cam = orbit_camera(0.7, 0.4, CameraConfig{});
    CHECK(norm(cam.position) == doctest::Approx(2.7).epsilon(1e-12));
    CHECK(cam.near < cam.far);
}

TEST_CASE("posed camera matches rasterizing the posed mesh") {
    ControlParams p = draw(5);
    p.pose.yaw = 0.3;
    p.pose.pitch = -0.1;
    const FaceMesh canonical = build_face_mesh(basis(), [&] {
        ControlParams q = p;
        q.pose = Pose{};
        return q;
    }());
    const FaceMesh posed = build_face_mesh(basis(), p);
    CameraConfig cc;
    cc.width = cc.height = 24;
    const RasterBuffers a = rasterize(canonical, camera_for_pose(p.pose, cc), 24, 24);
    const RasterBuffers b = rasterize(posed, camera_for_pose(Pose{}, cc), 24, 24);
    std::size_t differ = 0;
    for (std::size_t i = 0; i < a.labels.size(); ++i) differ += a.face_mask[i] != b.face_mask[i];
    CHECK(differ <= 4);
}

TEST_CASE("flow between identical meshes is zero and warping by it is the identity") {
    const FaceMesh mesh = build_face_mesh(basis(), draw(6));
    const Camera cam = frontal(16);
    const RasterBuffers buf = rasterize(mesh, cam, 16, 16);
    const Flow2D f = flow_2d(buf, mesh, cam);
    for (double v : f.flow) CHECK(std::abs(v) < 1e-9);
    const Image w = warp(buf.image, f);
    for (std::size_t i = 0; i < w.data.size(); ++i) CHECK(w.data[i] == doctest::Approx(buf.image.data[i]).epsilon(1e-9));
}

TEST_CASE("warp by a whole-pixel shift") {
    Image img(4, 1, 1);
    for (int x = 0; x < 4; ++x) img.at(x, 0, 0) = x;
    Flow2D f{4, 1, std::vector<double>(8, 0.0), std::vector<std::uint8_t>(4, 1)};
    for (int x = 0; x < 4; ++x) f.flow[2 * x] = 1.0;
    const Image w = warp(img, f);
    CHECK(w.data == std::vector<double>{1, 2, 3, 3});
}

TEST_CASE("guidance blend keeps the render on the face and the image elsewhere") {
    const Image r(2, 1, 3, 0.2), g(2, 1, 3, 0.7);
    const Image out = blend_guidance(r, g, std::vector<std::uint8_t>{1, 0});
    CHECK(out.at(0, 0, 0) == doctest::Approx(0.2));
    CHECK(out.at(1, 0, 0) == doctest::Approx(0.9));
}

}
