// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <optional>

#include "morphvol/types.hpp"

namespace morphvol {

struct CameraConfig {
    double radius = 2.7;
    double fov_y = 0.4;  // radians
    double near_scale = 0.3;
    double far_scale = 1.7;
    int width = 64;
    int height = 64;
};

/// Pinhole camera looking at `target`. Pixel (px, py) has its center at
/// continuous image coordinates (px + 0.5, py + 0.5); y grows downward.
struct Camera {
    Vec3 position{0.0, 0.0, 2.7};
    Vec3 target{0.0, 0.0, 0.0};
    Vec3 up{0.0, 1.0, 0.0};
    double fov_y = 0.4;
    int width = 64;
    int height = 64;
    double near = 0.81;
    double far = 4.59;

    /// Throws std::invalid_argument on a degenerate camera.
    void validate() const;

    Vec3 forward() const;
    Vec3 right() const;
    Vec3 true_up() const;
    double aspect() const { return static_cast<double>(width) / height; }
    /// Distance from position to target.
    double radius() const { return norm(target - position); }

    Camera resized(int w, int h) const;
};

struct Ray {
    Vec3 origin;
    Vec3 direction;
};

/// Camera on the radius-r sphere at (yaw, pitch), yaw about +y, pitch toward +y.
/// yaw = pitch = 0 puts the camera on +z.
Camera orbit_camera(double yaw, double pitch, const CameraConfig& cfg);

/// Camera that sees the canonical head exactly as a frontal camera sees the
/// head transformed by `pose` (rotation and translation moved to the camera).
Camera camera_for_pose(const Pose& pose, const CameraConfig& cfg);

/// Ray through the center of pixel (px, py).
Ray camera_ray(const Camera& cam, int px, int py);

struct Projection {
    double u;      // continuous pixel x
    double v;      // continuous pixel y
    double depth;  // distance along the forward axis
};
/// Empty when the point is not in front of the camera.
std::optional<Projection> project(const Camera& cam, const Vec3& p);

/// Truncated normal yaw/pitch distribution for training-time cameras.
struct CameraDistribution {
    double yaw_mean = 0.0;
    double yaw_std = 0.3;
    double pitch_mean = 0.0;
    double pitch_std = 0.15;
    double truncation = 3.0;  // in standard deviations
};

Camera sample_camera(const CameraDistribution& dist, const CameraConfig& cfg, Rng& rng);

}  // namespace morphvol
