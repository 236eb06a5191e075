// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
// Software z-buffer rasterizer for the morphable face mesh, the 2D expression
// flow between two meshes of equal topology, and backward image warping.
#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "morphvol/autodiff.hpp"
#include "morphvol/camera.hpp"
#include "morphvol/face_model.hpp"

namespace morphvol {

struct RasterBuffers {
    static constexpr int kNoTriangle = -1;

    int width = 0;
    int height = 0;
    Image image;                      // 3 channels
    std::vector<std::uint8_t> face_mask;  // 1 where a triangle covers the pixel
    std::vector<int> labels;          // semantic class per pixel
    std::vector<int> tri_id;          // covering triangle or kNoTriangle
    std::vector<double> bary;         // 3 perspective-correct weights per pixel
    std::vector<double> depth;        // camera-space depth, +inf for background
    std::uint64_t topology = 0;       // fingerprint of the source triangle list
    std::size_t source_vertices = 0;

    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
};

struct RasterOptions {
    Vec3 clear_color{0.0, 0.0, 0.0};
    int background_label = kBackground;
};

std::uint64_t topology_fingerprint(const std::vector<Triangle>& triangles, std::size_t vertex_count);

/// Perspective z-buffer scan conversion with the top-left fill rule and no
/// antialiasing. Triangles with any vertex at or behind the near plane are
/// skipped. Colors are interpolated unclamped. The label of a covered pixel is
/// the label of the vertex with the largest barycentric weight.
RasterBuffers rasterize(const FaceMesh& mesh, const Camera& cam, int width, int height, const RasterOptions& opt = {});

struct Flow2D {
    int width = 0;
    int height = 0;
    std::vector<double> flow;          // (dx, dy) per pixel
    std::vector<std::uint8_t> valid;   // 1 on face pixels with a valid reprojection
};

/// For every face pixel of `buf_a`, the surface point (triangle, barycentrics)
/// is re-evaluated on `mesh_b` and projected: flow = proj_b - pixel center.
/// Non-face pixels get zero flow and validity 0.
Flow2D flow_2d(const RasterBuffers& buf_a, const FaceMesh& mesh_b, const Camera& cam);

/// Bilinear taps for out(x, y) = image(x + fx, y + fy), sample positions
/// clamped to the image border.
std::shared_ptr<const ad::RowTaps> warp_taps(int width, int height, const std::vector<double>& flow);

Image warp(const Image& image, const Flow2D& flow);
ad::Var warp(const ad::Var& image_rows, const Flow2D& flow);

/// R' = R + I * (1 - B).
Image blend_guidance(const Image& render, const Image& generated, const std::vector<double>& face_mask);
Image blend_guidance(const Image& render, const Image& generated, const std::vector<std::uint8_t>& face_mask);

/// (H*W) x C matrix view of an image and back.
ad::Mat image_to_mat(const Image& img);
Image mat_to_image(const ad::Mat& m, int width, int height);

}  // namespace morphvol
