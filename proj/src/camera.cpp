// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
#include "morphvol/camera.hpp"

#include <cmath>
#include <numbers>

#include "morphvol/face_model.hpp"

namespace morphvol {

void Camera::validate() const {
    const double r = radius();
    if (!(r > 0.0) || !std::isfinite(r)) throw std::invalid_argument("camera: position coincides with target");
    if (!(near > 0.0 && near < far)) throw std::invalid_argument("camera: need 0 < near < far");
    if (!(fov_y > 0.0 && fov_y < std::numbers::pi)) throw std::invalid_argument("camera: fov must lie in (0, pi)");
    if (width < 1 || height < 1) throw std::invalid_argument("camera: image size must be >= 1");
    if (norm(cross(forward(), up)) < 1e-12) throw std::invalid_argument("camera: up vector parallel to view direction");
}

Vec3 Camera::forward() const { return normalized(target - position); }
Vec3 Camera::right() const { return normalized(cross(forward(), up)); }
Vec3 Camera::true_up() const { return cross(right(), forward()); }

Camera Camera::resized(int w, int h) const {
    Camera c = *this;
    c.width = w;
    c.height = h;
    return c;
}

Camera orbit_camera(double yaw, double pitch, const CameraConfig& cfg) {
    Camera c;
    c.position = {cfg.radius * std::sin(yaw) * std::cos(pitch), cfg.radius * std::sin(pitch),
                  cfg.radius * std::cos(yaw) * std::cos(pitch)};
    c.target = {0.0, 0.0, 0.0};
    c.up = {0.0, 1.0, 0.0};
    if (std::abs(std::cos(pitch)) < 1e-9) c.up = {0.0, 0.0, pitch > 0 ? -1.0 : 1.0};
    c.fov_y = cfg.fov_y;
    c.width = cfg.width;
    c.height = cfg.height;
    c.near = cfg.near_scale * cfg.radius;
    c.far = cfg.far_scale * cfg.radius;
    c.validate();
    return c;
}

Camera camera_for_pose(const Pose& pose, const CameraConfig& cfg) {
    // World point R p + t seen from a frontal camera at (0, 0, r) equals canonical
    // point p seen from a camera at R^T((0, 0, r) - t) with up R^T (0, 1, 0).
    const Eigen::Matrix3d rt = rotation_matrix(pose).transpose();
    const Eigen::Vector3d t(pose.t[0], pose.t[1], pose.t[2]);
    const Eigen::Vector3d pos = rt * (Eigen::Vector3d(0.0, 0.0, cfg.radius) - t);
    const Eigen::Vector3d tgt = rt * (-t);
    const Eigen::Vector3d up = rt * Eigen::Vector3d::UnitY();
    Camera c;
    c.position = {pos.x(), pos.y(), pos.z()};
    c.target = {tgt.x(), tgt.y(), tgt.z()};
    c.up = {up.x(), up.y(), up.z()};
    c.fov_y = cfg.fov_y;
    c.width = cfg.width;
    c.height = cfg.height;
    c.near = cfg.near_scale * cfg.radius;
    c.far = cfg.far_scale * cfg.radius;
    c.validate();
    return c;
}

Ray camera_ray(const Camera& cam, int px, int py) {
    const double th = std::tan(0.5 * cam.fov_y);
    const double x = (2.0 * (px + 0.5) / cam.width - 1.0) * th * cam.aspect();
    const double y = (1.0 - 2.0 * (py + 0.5) / cam.height) * th;
    const Vec3 d = cam.forward() + x * cam.right() + y * cam.true_up();
    return {cam.position, normalized(d)};
}

std::optional<Projection> project(const Camera& cam, const Vec3& p) {
    const Vec3 q = p - cam.position;
    const double z = dot(q, cam.forward());
    if (!(z > 0.0)) return std::nullopt;
    const double th = std::tan(0.5 * cam.fov_y);
    const double xn = dot(q, cam.right()) / (z * th * cam.aspect());
    const double yn = dot(q, cam.true_up()) / (z * th);
    return Projection{(xn + 1.0) * 0.5 * cam.width, (1.0 - yn) * 0.5 * cam.height, z};
}

Camera sample_camera(const CameraDistribution& dist, const CameraConfig& cfg, Rng& rng) {
    auto truncated = [&rng, &dist](double mean, double sd) {
        if (sd <= 0.0) return mean;
        for (;;) {
            const double x = rng.normal();
            if (std::abs(x) <= dist.truncation) return mean + sd * x;
        }
    };
    const double yaw = truncated(dist.yaw_mean, dist.yaw_std);
    const double pitch = truncated(dist.pitch_mean, dist.pitch_std);
    return orbit_camera(yaw, pitch, cfg);
}

}  // namespace morphvol
