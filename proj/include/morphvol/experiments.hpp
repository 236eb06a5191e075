// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end procedures shared by the CLI and the acceptance runner:
// the gradient suite, micro imitative training, latent inversion, the
// fitting round trip and the blended expression drive.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "morphvol/evaluation.hpp"
#include "morphvol/loss_report.hpp"
#include "morphvol/render.hpp"
#include "morphvol/scene.hpp"

namespace morphvol {

struct GradcheckEntry {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t coords = 0;
    std::size_t skipped = 0;
};

/// Finite-difference check of every loss, each built on a 2x2 (four ray)
/// render of a small tri-plane field: planes and decoder weights are the
/// parameters, sample positions are planned once and held fixed.
std::vector<GradcheckEntry> gradient_suite(std::uint64_t seed = 3, double h = 1e-4);

struct MicroImitativeOptions {
    int steps = 500;
    double lr = 2e-3;
    int size = 16;
    int plane_resolution = 8;
    int plane_channels = 4;
    std::size_t w_dim = 16;
    std::size_t generator_hidden = 16;
    std::size_t decoder_hidden = 16;
    int coarse = 16;
    int fine = 16;
    bool adam = true;  // plain gradient descent when false
    std::uint64_t seed = 1;
};

struct MicroImitativeResult {
    std::vector<LossReport> reports;  // one per step, before the update
    LossReport last;                  // after the final update
    double initial = 0.0;
    double final = 0.0;
    double drop() const { return initial > 0.0 ? 1.0 - final / initial : 0.0; }
};

/// Gradient steps on L_imi for one seeded guidance target.
MicroImitativeResult micro_imitative(const MicroImitativeOptions& opt);

struct InversionOptions {
    int steps = 300;
    double lr = 5e-4;
    double perturbation = 0.1;  // norm of the initial offset from the true latent
    int size = 16;
    std::uint64_t seed = 1;
};

struct InversionResult {
    std::vector<double> z_true, z_init, z;
    LossReport initial, final;
    double pixel_initial = 0.0;  // mean squared pixel error at the start
    double pixel_final = 0.0;
    double z_error_initial = 0.0;  // ||z - z_true||
    double z_error_final = 0.0;
    int steps = 0;
};

/// Renders the target from `target`, then runs Adam on a perturbed latent
/// through mapping, generator and renderer against inversion_objective.
InversionResult invert(const PortraitModel& model, const ControlParams& target, const InversionOptions& opt);

struct FitRoundTrip {
    int draws = 0;
    double max_abs_error = 0.0;  // over alpha, beta, gamma and pose angles
    ControlAccuracy accuracy;
    std::vector<std::string> flags;
};

/// Seeded draws rendered to exact landmarks and lit colors, then refit.
FitRoundTrip fitting_round_trip(const FaceBasis& basis, int draws, std::uint64_t seed);

struct BlendDrive {
    std::size_t background_pixels = 0;
    double variance_plain = 0.0;
    double variance_blended = 0.0;
};

/// Renders every frame plainly and blended against `neutral_beta`;
/// background pixels are those the rasterized prior labels background in
/// every frame. Variances are per channel over frames, averaged.
BlendDrive blend_drive(const PortraitModel& model, std::span<const ControlParams> frames,
                       std::span<const double> neutral_beta, int size, const RenderOptions& opt);

/// Mean over pixels and channels of the per-pixel sample variance across frames.
double temporal_variance(std::span<const Image> frames, std::span<const std::uint8_t> mask);

}  // namespace morphvol
