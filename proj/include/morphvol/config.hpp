// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
// Scene configuration. Every key is optional; unknown keys are rejected at
// every nesting level. Relative paths resolve against the config file.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "morphvol/camera.hpp"
#include "morphvol/losses.hpp"
#include "morphvol/types.hpp"

namespace morphvol {

struct ModelConfig {
    std::size_t epsilon_dim = kDefaultEpsilonDim;
    std::size_t w_rows = 4;
    std::size_t w_cols = 64;
    std::size_t mapping_layers = 8;
    int plane_resolution = 32;
    int plane_channels = 16;
    double bound = 1.0;
    std::size_t generator_hidden = 64;
    std::size_t decoder_hidden = 32;
    bool pose_conditioned = true;
    bool view_conditioned = false;
};

struct SamplingConfig {
    int coarse = 48;
    int fine = 48;
};

struct LossWeights {
    ImitativeWeights imitative;
    DisBetaWeights dis_beta;
    InversionWeights inversion;
};

struct SceneConfig {
    std::string basis = "synthetic";  // "synthetic" or a tensor container path
    std::string weights;              // empty: weights drawn from `seed`
    CameraConfig camera;
    SamplingConfig sampling;
    LossWeights loss_weights;
    std::uint64_t seed = 1;
    std::vector<std::string> classes{"background", "skin", "hair", "lips", "eyes-brows", "clothes"};
    std::vector<std::string> face_classes{"skin", "lips", "eyes-brows"};
    ModelConfig model;
    Vec3 canonical_translation{0.0, 0.0, 0.0};

    /// Indices of face_classes within classes.
    std::vector<int> face_class_ids() const;
    void validate() const;
};

SceneConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
SceneConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const SceneConfig& c);

}  // namespace morphvol
