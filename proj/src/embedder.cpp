// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
#include "morphvol/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "morphvol/types.hpp"

namespace morphvol {

std::shared_ptr<const ad::RowTaps> resample_taps(int width, int height, int out_w, int out_h) {
    if (width < 1 || height < 1 || out_w < 1 || out_h < 1) throw std::invalid_argument("resample_taps: empty image");
    auto taps = std::make_shared<ad::RowTaps>();
    taps->out_rows = static_cast<std::size_t>(out_w) * out_h;
    taps->taps = 4;
    taps->index.resize(taps->out_rows * 4);
    taps->weight.resize(taps->out_rows * 4);
    auto coord = [](int i, int n_out, int n_in) { return n_out > 1 ? static_cast<double>(i) * (n_in - 1) / (n_out - 1) : 0.5 * (n_in - 1); };
    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            const double sx = coord(x, out_w, width);
            const double sy = coord(y, out_h, height);
            const int x0 = std::min(static_cast<int>(std::floor(sx)), std::max(width - 2, 0));
            const int y0 = std::min(static_cast<int>(std::floor(sy)), std::max(height - 2, 0));
            const int x1 = std::min(x0 + 1, width - 1);
            const int y1 = std::min(y0 + 1, height - 1);
            const double fx = sx - x0, fy = sy - y0;
            const std::size_t o = (static_cast<std::size_t>(y) * out_w + x) * 4;
            taps->index[o + 0] = static_cast<std::uint32_t>(y0 * width + x0);
            taps->index[o + 1] = static_cast<std::uint32_t>(y0 * width + x1);
            taps->index[o + 2] = static_cast<std::uint32_t>(y1 * width + x0);
            taps->index[o + 3] = static_cast<std::uint32_t>(y1 * width + x1);
            taps->weight[o + 0] = (1 - fx) * (1 - fy);
            taps->weight[o + 1] = fx * (1 - fy);
            taps->weight[o + 2] = (1 - fx) * fy;
            taps->weight[o + 3] = fx * fy;
        }
    }
    return taps;
}

std::shared_ptr<const ad::RowTaps> avgpool2_taps(int width, int height) {
    if (width < 1 || height < 1) throw std::invalid_argument("avgpool2: empty image");
    const int w2 = std::max(1, width / 2), h2 = std::max(1, height / 2);
    auto taps = std::make_shared<ad::RowTaps>();
    taps->out_rows = static_cast<std::size_t>(w2) * h2;
    taps->taps = 4;
    taps->index.resize(taps->out_rows * 4);
    taps->weight.resize(taps->out_rows * 4, 0.25);
    for (int y = 0; y < h2; ++y) {
        for (int x = 0; x < w2; ++x) {
            const std::size_t o = (static_cast<std::size_t>(y) * w2 + x) * 4;
            int k = 0;
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                    const int sx = std::min(2 * x + dx, width - 1), sy = std::min(2 * y + dy, height - 1);
                    taps->index[o + k++] = static_cast<std::uint32_t>(sy * width + sx);
                }
        }
    }
    return taps;
}

std::vector<double> avgpool2(std::span<const double> mask, int width, int height) {
    if (mask.size() != static_cast<std::size_t>(width) * height) throw std::invalid_argument("avgpool2: mask size");
    const auto taps = avgpool2_taps(width, height);
    std::vector<double> out(taps->out_rows, 0.0);
    for (std::size_t i = 0; i < out.size(); ++i)
        for (std::size_t k = 0; k < 4; ++k) out[i] += taps->weight[i * 4 + k] * mask[taps->index[i * 4 + k]];
    return out;
}

MaskedStats masked_stats(const ad::Var& features, std::span<const double> mask) {
    if (mask.size() != features.rows()) throw std::invalid_argument("masked_stats: mask size != feature rows");
    double total = 0.0;
    for (double m : mask) total += m;
    if (!(total > 0.0)) throw std::invalid_argument("masked_stats: empty mask");
    const ad::Var m = ad::Var::constant(ad::Mat(mask.size(), 1, {mask.begin(), mask.end()}));
    const ad::Var mean = ad::col_sum(m * features) * (1.0 / total);
    const ad::Var var = ad::col_sum(m * ad::square(features - mean)) * (1.0 / total);
    return {mean, var};
}

FeatureEmbedder FeatureEmbedder::make(std::uint64_t seed, int grid, std::size_t dim, std::size_t style_channels) {
    if (grid < 1 || dim < 1 || style_channels < 1) throw std::invalid_argument("FeatureEmbedder: bad sizes");
    Rng rng(seed);
    FeatureEmbedder e;
    e.grid = grid;
    e.dim = dim;
    e.style_channels = style_channels;
    const std::size_t in = static_cast<std::size_t>(grid) * grid * 3;
    e.projection = ad::Mat(in, dim);
    const double s = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& v : e.projection.data) v = rng.normal() * s;
    auto k1 = std::make_shared<ad::Mat>(27, style_channels);
    for (double& v : k1->data) v = rng.normal() / std::sqrt(27.0);
    auto k2 = std::make_shared<ad::Mat>(9 * style_channels, style_channels);
    for (double& v : k2->data) v = rng.normal() / std::sqrt(9.0 * style_channels);
    e.phi1_kernel = std::move(k1);
    e.phi2_kernel = std::move(k2);
    return e;
}

ad::Var FeatureEmbedder::raw(const ad::Var& image, int width, int height) const {
    if (image.rows() != static_cast<std::size_t>(width) * height || image.cols() != 3)
        throw std::invalid_argument("FeatureEmbedder: image must be (W*H) x 3");
    const ad::Var small = ad::row_gather(image, resample_taps(width, height, grid, grid));
    const ad::Var flat = ad::reshape(small, 1, small.rows() * 3);
    return ad::matmul(flat, ad::Var::constant(projection));
}

StyleFeatures FeatureEmbedder::style(const ad::Var& image, int width, int height) const {
    if (image.rows() != static_cast<std::size_t>(width) * height || image.cols() != 3)
        throw std::invalid_argument("FeatureEmbedder: image must be (W*H) x 3");
    StyleFeatures f;
    f.width1 = width;
    f.height1 = height;
    f.phi1 = ad::relu(ad::conv3x3(image, height, width, phi1_kernel));
    f.width2 = std::max(1, width / 2);
    f.height2 = std::max(1, height / 2);
    const ad::Var pooled = ad::row_gather(f.phi1, avgpool2_taps(width, height));
    f.phi2 = ad::relu(ad::conv3x3(pooled, f.height2, f.width2, phi2_kernel));
    return f;
}

}  // namespace morphvol
