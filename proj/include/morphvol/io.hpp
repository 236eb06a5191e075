// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
// File formats: the NTC1 tensor container, PPM / PNG images, ControlParams JSON.
//
// NTC1 layout: "NTC1" | u32 LE header length | JSON header | payload.
// Header: {"entries": [{"name", "dtype": "f32"|"f64", "shape", "offset", "byteLen"}]},
// offsets relative to the start of the payload. All numbers little endian.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "morphvol/autodiff.hpp"
#include "morphvol/face_model.hpp"
#include "morphvol/types.hpp"

namespace morphvol {

enum class DType { f32, f64 };

struct Tensor {
    std::string name;
    DType dtype = DType::f64;
    std::vector<std::uint64_t> shape;
    std::vector<double> data;  // f32 entries are rounded to float on write

    std::uint64_t element_count() const;
};

std::string encode_tensors(const std::vector<Tensor>& tensors);
std::vector<Tensor> decode_tensors(const std::string& bytes);
void write_tensors(const std::filesystem::path& path, const std::vector<Tensor>& tensors);
std::vector<Tensor> read_tensors(const std::filesystem::path& path);

const Tensor& find_tensor(const std::vector<Tensor>& ts, const std::string& name);
Tensor tensor_from_mat(const std::string& name, const ad::Mat& m, DType dtype = DType::f64);
ad::Mat mat_from_tensor(const Tensor& t);

std::vector<Tensor> basis_to_tensors(const FaceBasis& b);
FaceBasis basis_from_tensors(const std::vector<Tensor>& ts);

/// 8-bit quantization: round(clamp(v, 0, 1) * 255).
std::uint8_t quantize(double v);
std::string encode_ppm(const Image& img);
Image decode_ppm(const std::string& bytes);
void write_ppm(const std::filesystem::path& path, const Image& img);
Image read_ppm(const std::filesystem::path& path);

std::string encode_png(const Image& img);
void write_png(const std::filesystem::path& path, const Image& img);

/// One palette color per class id.
Image label_image(const std::vector<int>& labels, int width, int height);

/// Writes PPM or PNG depending on the extension (.ppm / .png).
void write_image(const std::filesystem::path& path, const Image& img);

nlohmann::json params_to_json(const ControlParams& p);
/// Strict: all blocks required, unknown keys rejected, sizes checked.
ControlParams params_from_json(const nlohmann::json& j, std::size_t epsilon_dim);
/// Overlays a partial document (any subset of blocks / pose fields) onto `base`.
ControlParams merge_params(const ControlParams& base, const nlohmann::json& fragment, std::size_t epsilon_dim);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace morphvol
