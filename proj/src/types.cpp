// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
#include "morphvol/types.hpp"

#include <numbers>

namespace morphvol {

namespace {

void check_block(const std::vector<double>& v, std::size_t n, const char* name) {
    if (v.size() != n) {
        throw std::invalid_argument(std::string("ControlParams.") + name + ": expected " + std::to_string(n) +
                                    " values, got " + std::to_string(v.size()));
    }
    for (double x : v) {
        if (!std::isfinite(x)) throw std::invalid_argument(std::string("ControlParams.") + name + ": non-finite value");
    }
}

}  // namespace

void ControlParams::validate(std::size_t epsilon_dim) const {
    check_block(alpha, kIdDim, "alpha");
    check_block(delta, kAlbedoDim, "delta");
    check_block(beta, kExpDim, "beta");
    check_block(gamma, kGammaDim, "gamma");
    check_block(epsilon, epsilon_dim, "epsilon");
    for (double x : {pose.yaw, pose.pitch, pose.roll, pose.t[0], pose.t[1], pose.t[2]}) {
        if (!std::isfinite(x)) throw std::invalid_argument("ControlParams.pose: non-finite value");
    }
}

std::vector<double> ControlParams::latent_vector() const {
    std::vector<double> z;
    z.reserve(alpha.size() + delta.size() + beta.size() + gamma.size() + epsilon.size());
    for (const auto* block : {&alpha, &delta, &beta, &gamma, &epsilon}) z.insert(z.end(), block->begin(), block->end());
    return z;
}

ControlParams ControlParams::from_latent_vector(const std::vector<double>& z, const Pose& pose) {
    const std::size_t fixed = kIdDim + kAlbedoDim + kExpDim + kGammaDim;
    if (z.size() < fixed) throw std::invalid_argument("latent vector shorter than the fixed control blocks");
    ControlParams p;
    auto it = z.begin();
    auto take = [&it](std::vector<double>& dst, std::size_t n) {
        dst.assign(it, it + static_cast<std::ptrdiff_t>(n));
        it += static_cast<std::ptrdiff_t>(n);
    };
    take(p.alpha, kIdDim);
    take(p.delta, kAlbedoDim);
    take(p.beta, kExpDim);
    take(p.gamma, kGammaDim);
    take(p.epsilon, z.size() - fixed);
    p.pose = pose;
    return p;
}

std::uint64_t Rng::next_u64() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(th);
    has_spare_ = true;
    return r * std::cos(th);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    Rng r(seed ^ (stream * 0xD1B54A32D192ED03ULL + 0x632BE59BD9B4E019ULL));
    return r.next_u64();
}

}  // namespace morphvol
