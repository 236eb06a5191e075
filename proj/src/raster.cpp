// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
#include "morphvol/raster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace morphvol {

namespace {

struct ScreenVertex {
    double u, v, z;
    bool ok;
};

double edge(double ax, double ay, double bx, double by, double px, double py) {
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

// Inside is edge > 0; the inward normal is (-(by - ay), bx - ax). Left edges
// have an inward normal pointing +x, top edges (horizontal) one pointing +y.
bool top_left(double ax, double ay, double bx, double by) {
    const double nx = -(by - ay);
    const double ny = bx - ax;
    return nx > 0.0 || (nx == 0.0 && ny > 0.0);
}

}  // namespace

std::uint64_t topology_fingerprint(const std::vector<Triangle>& triangles, std::size_t vertex_count) {
    std::uint64_t h = 1469598103934665603ULL ^ vertex_count;
    for (const auto& t : triangles) {
        for (int i : t) {
            h ^= static_cast<std::uint64_t>(i) + 0x9E3779B97F4A7C15ULL;
            h *= 1099511628211ULL;
        }
    }
    return h;
}

RasterBuffers rasterize(const FaceMesh& mesh, const Camera& cam, int width, int height, const RasterOptions& opt) {
    if (width < 1 || height < 1) throw std::invalid_argument("rasterize: width and height must be >= 1");
    const Camera c = cam.resized(width, height);
    c.validate();
    RasterBuffers buf;
    buf.width = width;
    buf.height = height;
    const std::size_t n = static_cast<std::size_t>(width) * height;
    buf.image = Image(width, height, 3);
    for (std::size_t i = 0; i < n; ++i)
        for (int ch = 0; ch < 3; ++ch) buf.image.data[i * 3 + ch] = opt.clear_color[ch];
    buf.face_mask.assign(n, 0);
    buf.labels.assign(n, opt.background_label);
    buf.tri_id.assign(n, RasterBuffers::kNoTriangle);
    buf.bary.assign(n * 3, 0.0);
    buf.depth.assign(n, std::numeric_limits<double>::infinity());
    buf.topology = topology_fingerprint(mesh.triangles, static_cast<std::size_t>(mesh.vertices.rows()));
    buf.source_vertices = static_cast<std::size_t>(mesh.vertices.rows());

    std::vector<ScreenVertex> sv(static_cast<std::size_t>(mesh.vertices.rows()));
    for (Eigen::Index i = 0; i < mesh.vertices.rows(); ++i) {
        const auto p = project(c, {mesh.vertices(i, 0), mesh.vertices(i, 1), mesh.vertices(i, 2)});
        sv[i] = p && p->depth > c.near ? ScreenVertex{p->u, p->v, p->depth, true} : ScreenVertex{0, 0, 0, false};
    }
    const bool has_colors = mesh.colors.rows() == mesh.vertices.rows();
    const bool has_labels = mesh.labels.size() == static_cast<std::size_t>(mesh.vertices.rows());

    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        int idx[3] = {mesh.triangles[t][0], mesh.triangles[t][1], mesh.triangles[t][2]};
        if (!sv[idx[0]].ok || !sv[idx[1]].ok || !sv[idx[2]].ok) continue;
        double area = edge(sv[idx[0]].u, sv[idx[0]].v, sv[idx[1]].u, sv[idx[1]].v, sv[idx[2]].u, sv[idx[2]].v);
        if (area == 0.0) continue;
        if (area < 0.0) {
            std::swap(idx[1], idx[2]);
            area = -area;
        }
        const ScreenVertex& a = sv[idx[0]];
        const ScreenVertex& b = sv[idx[1]];
        const ScreenVertex& d = sv[idx[2]];
        const int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.u, b.u, d.u}) - 0.5)));
        const int x1 = std::min(width - 1, static_cast<int>(std::ceil(std::max({a.u, b.u, d.u}) - 0.5)));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.v, b.v, d.v}) - 0.5)));
        const int y1 = std::min(height - 1, static_cast<int>(std::ceil(std::max({a.v, b.v, d.v}) - 0.5)));
        const bool tl0 = top_left(b.u, b.v, d.u, d.v);
        const bool tl1 = top_left(d.u, d.v, a.u, a.v);
        const bool tl2 = top_left(a.u, a.v, b.u, b.v);
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const double px = x + 0.5;
                const double py = y + 0.5;
                const double w0 = edge(b.u, b.v, d.u, d.v, px, py);
                const double w1 = edge(d.u, d.v, a.u, a.v, px, py);
                const double w2 = edge(a.u, a.v, b.u, b.v, px, py);
                if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
                if ((w0 == 0.0 && !tl0) || (w1 == 0.0 && !tl1) || (w2 == 0.0 && !tl2)) continue;
                // Perspective-correct weights.
                const double q0 = w0 / area / a.z;
                const double q1 = w1 / area / b.z;
                const double q2 = w2 / area / d.z;
                const double qs = q0 + q1 + q2;
                const double z = 1.0 / qs;
                const std::size_t pi = buf.index(x, y);
                if (!(z < buf.depth[pi])) continue;
                const double bw[3] = {q0 / qs, q1 / qs, q2 / qs};
                buf.depth[pi] = z;
                buf.tri_id[pi] = static_cast<int>(t);
                buf.face_mask[pi] = 1;
                // Barycentrics are stored against the triangle's original vertex order.
                for (int k = 0; k < 3; ++k) {
                    const int slot = idx[k] == mesh.triangles[t][0] ? 0 : (idx[k] == mesh.triangles[t][1] ? 1 : 2);
                    buf.bary[pi * 3 + slot] = bw[k];
                }
                for (int ch = 0; ch < 3; ++ch) {
                    double col = 0.0;
                    if (has_colors)
                        for (int k = 0; k < 3; ++k) col += bw[k] * mesh.colors(idx[k], ch);
                    buf.image.data[pi * 3 + ch] = col;
                }
                if (has_labels) {
                    const int best = static_cast<int>(std::max_element(bw, bw + 3) - bw);
                    buf.labels[pi] = mesh.labels[idx[best]];
                }
            }
        }
    }
    return buf;
}

Flow2D flow_2d(const RasterBuffers& buf_a, const FaceMesh& mesh_b, const Camera& cam) {
    if (buf_a.topology != topology_fingerprint(mesh_b.triangles, static_cast<std::size_t>(mesh_b.vertices.rows())) ||
        buf_a.source_vertices != static_cast<std::size_t>(mesh_b.vertices.rows())) {
        throw std::invalid_argument("flow_2d: mesh topology differs from the rasterized mesh");
    }
    const Camera c = cam.resized(buf_a.width, buf_a.height);
    Flow2D out;
    out.width = buf_a.width;
    out.height = buf_a.height;
    const std::size_t n = static_cast<std::size_t>(out.width) * out.height;
    out.flow.assign(n * 2, 0.0);
    out.valid.assign(n, 0);
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            const std::size_t pi = buf_a.index(x, y);
            const int t = buf_a.tri_id[pi];
            if (t == RasterBuffers::kNoTriangle) continue;
            Vec3 p{0.0, 0.0, 0.0};
            for (int k = 0; k < 3; ++k) {
                const int vi = mesh_b.triangles[t][k];
                const double w = buf_a.bary[pi * 3 + k];
                p = p + w * Vec3{mesh_b.vertices(vi, 0), mesh_b.vertices(vi, 1), mesh_b.vertices(vi, 2)};
            }
            const auto proj = project(c, p);
            if (!proj) continue;
            out.flow[pi * 2] = proj->u - (x + 0.5);
            out.flow[pi * 2 + 1] = proj->v - (y + 0.5);
            out.valid[pi] = 1;
        }
    }
    return out;
}

std::shared_ptr<const ad::RowTaps> warp_taps(int width, int height, const std::vector<double>& flow) {
    const std::size_t n = static_cast<std::size_t>(width) * height;
    if (flow.size() != n * 2) throw std::invalid_argument("warp: flow size does not match image");
    auto taps = std::make_shared<ad::RowTaps>();
    taps->out_rows = n;
    taps->taps = 4;
    taps->index.resize(n * 4);
    taps->weight.resize(n * 4);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * width + x;
            const double sx = std::clamp(x + flow[i * 2], 0.0, static_cast<double>(width - 1));
            const double sy = std::clamp(y + flow[i * 2 + 1], 0.0, static_cast<double>(height - 1));
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const int x1 = std::min(x0 + 1, width - 1);
            const int y1 = std::min(y0 + 1, height - 1);
            const double fx = sx - x0;
            const double fy = sy - y0;
            const std::uint32_t ids[4] = {static_cast<std::uint32_t>(y0 * width + x0), static_cast<std::uint32_t>(y0 * width + x1),
                                          static_cast<std::uint32_t>(y1 * width + x0), static_cast<std::uint32_t>(y1 * width + x1)};
            const double ws[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
            for (int k = 0; k < 4; ++k) {
                taps->index[i * 4 + k] = ids[k];
                taps->weight[i * 4 + k] = ws[k];
            }
        }
    }
    return taps;
}

Image warp(const Image& image, const Flow2D& flow) {
    if (image.width != flow.width || image.height != flow.height) throw std::invalid_argument("warp: shape mismatch");
    const auto taps = warp_taps(image.width, image.height, flow.flow);
    Image out(image.width, image.height, image.channels);
    const std::size_t C = static_cast<std::size_t>(image.channels);
    for (std::size_t i = 0; i < taps->out_rows; ++i) {
        for (std::size_t c = 0; c < C; ++c) {
            double acc = 0.0;
            for (std::size_t k = 0; k < 4; ++k) {
                const double w = taps->weight[i * 4 + k];
                if (w == 0.0) continue;
                acc += w * image.data[taps->index[i * 4 + k] * C + c];
            }
            out.data[i * C + c] = acc;
        }
    }
    return out;
}

ad::Var warp(const ad::Var& image_rows, const Flow2D& flow) {
    if (image_rows.rows() != static_cast<std::size_t>(flow.width) * flow.height)
        throw std::invalid_argument("warp: shape mismatch");
    return ad::row_gather(image_rows, warp_taps(flow.width, flow.height, flow.flow));
}

Image blend_guidance(const Image& render, const Image& generated, const std::vector<double>& face_mask) {
    if (!render.same_shape(generated) || face_mask.size() != render.pixels())
        throw std::invalid_argument("blend_guidance: shape mismatch");
    Image out = render;
    const int C = render.channels;
    for (std::size_t i = 0; i < render.pixels(); ++i)
        for (int c = 0; c < C; ++c)
            out.data[i * C + c] = render.data[i * C + c] + generated.data[i * C + c] * (1.0 - face_mask[i]);
    return out;
}

Image blend_guidance(const Image& render, const Image& generated, const std::vector<std::uint8_t>& face_mask) {
    return blend_guidance(render, generated, std::vector<double>(face_mask.begin(), face_mask.end()));
}

ad::Mat image_to_mat(const Image& img) {
    return ad::Mat(img.pixels(), static_cast<std::size_t>(img.channels), img.data);
}

Image mat_to_image(const ad::Mat& m, int width, int height) {
    if (m.rows != static_cast<std::size_t>(width) * height) throw std::invalid_argument("mat_to_image: row count != W*H");
    Image img(width, height, static_cast<int>(m.cols));
    img.data = m.data;
    return img;
}

}  // namespace morphvol
