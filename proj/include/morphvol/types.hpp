// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace morphvol {

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(const Vec3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }
inline Vec3 operator*(double s, const Vec3& a) { return a * s; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(const Vec3& a) {
    const double n = norm(a);
    return n > 0.0 ? a * (1.0 / n) : Vec3{0.0, 0.0, 0.0};
}

/// Row-major interleaved image: data[(y * width + x) * channels + c].
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

    std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }
    double& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    double at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    bool same_shape(const Image& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
};

/// Head pose. Rotation is intrinsic Z*Y*X Euler: R = Rz(roll) * Ry(yaw) * Rx(pitch).
struct Pose {
    double yaw = 0.0;
    double pitch = 0.0;
    double roll = 0.0;
    Vec3 t{0.0, 0.0, 0.0};

    bool operator==(const Pose&) const = default;
};

inline constexpr std::size_t kIdDim = 80;
inline constexpr std::size_t kAlbedoDim = 80;
inline constexpr std::size_t kExpDim = 64;
inline constexpr std::size_t kShBands = 9;
inline constexpr std::size_t kGammaDim = 27;
inline constexpr std::size_t kLandmarks = 68;
inline constexpr std::size_t kDefaultEpsilonDim = 64;

/// The semantic control vector: identity (alpha, delta), expression (beta),
/// illumination (gamma, 9 SH bands x 3 channels, band-major), noise (epsilon) and pose.
struct ControlParams {
    std::vector<double> alpha = std::vector<double>(kIdDim, 0.0);
    std::vector<double> delta = std::vector<double>(kAlbedoDim, 0.0);
    std::vector<double> beta = std::vector<double>(kExpDim, 0.0);
    std::vector<double> gamma = std::vector<double>(kGammaDim, 0.0);
    std::vector<double> epsilon = std::vector<double>(kDefaultEpsilonDim, 0.0);
    Pose pose;

    bool operator==(const ControlParams&) const = default;

    /// Throws std::invalid_argument if any block has the wrong size or a
    /// non-finite entry.
    void validate(std::size_t epsilon_dim) const;

    /// [alpha, delta, beta, gamma, epsilon]; the input to the mapping network.
    std::vector<double> latent_vector() const;
    static ControlParams from_latent_vector(const std::vector<double>& z, const Pose& pose);
};

/// Deterministic generator with portable uniform and normal draws.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();
    /// Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Standard normal via Box-Muller.
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Stateless 64-bit mixer used to derive independent streams, e.g. per pixel.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace morphvol
