// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode differentiation over dense row-major matrices.
//
// Every value in the engine that needs a gradient is a 2D matrix (rows x cols).
// Images are stored as (H*W) x C, point batches as M x D, scalars as 1 x 1.
// Operations record a backward closure only when one of their inputs requires
// a gradient, so the same code path serves inference and training.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace morphvol::ad {

struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
    Mat(std::size_t r, std::size_t c, std::vector<double> values);

    static Mat scalar(double v) { return Mat(1, 1, v); }

    std::size_t size() const { return data.size(); }
    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

std::string shape_str(const Mat& m);

namespace detail {
struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    Mat& grad_buffer();
};
}  // namespace detail

class Var {
public:
    Var() = default;

    static Var constant(Mat m);
    static Var parameter(Mat m);
    static Var scalar(double v) { return constant(Mat::scalar(v)); }

    bool defined() const { return node_ != nullptr; }
    const Mat& value() const { return node_->value; }
    // Zero matrix of the value's shape if no gradient reached this node.
    Mat grad() const;
    std::size_t rows() const { return node_->value.rows; }
    std::size_t cols() const { return node_->value.cols; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    double item() const;

    // Internal: used by op implementations.
    const std::shared_ptr<detail::Node>& node() const { return node_; }
    static Var from_node(std::shared_ptr<detail::Node> n) {
        Var v;
        v.node_ = std::move(n);
        return v;
    }

private:
    std::shared_ptr<detail::Node> node_;
};

// Seeds d(root)/d(root) = 1 and propagates to every reachable node.
// Gradients accumulate; call on a fresh graph.
void backward(const Var& root);

Var detach(const Var& x);

// Elementwise arithmetic. Operands broadcast when a dimension is 1.
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
Var operator*(const Var& a, double s);
Var operator*(double s, const Var& a);
Var operator+(const Var& a, double s);
Var operator+(double s, const Var& a);
Var operator-(const Var& a, double s);
Var operator-(double s, const Var& a);

Var exp(const Var& x);
Var log(const Var& x);
Var sqrt(const Var& x);
Var square(const Var& x);
Var relu(const Var& x);
Var leaky_relu(const Var& x, double slope);
Var sigmoid(const Var& x);
Var softplus(const Var& x);
Var tanh(const Var& x);
// max(x, floor) elementwise; gradient passes only where x > floor.
Var clamp_min(const Var& x, double floor);

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& x);

Var sum(const Var& x);
Var mean(const Var& x);
// R x C -> 1 x C
Var col_sum(const Var& x);
// R x C -> R x 1
Var row_sum(const Var& x);
// Euclidean norm of each row, R x 1. The gradient at a zero row is zero.
Var row_norm(const Var& x);

// Rows are grouped in consecutive blocks of `group` rows.
// segment_sum: R x C -> (R/group) x C.
Var segment_sum(const Var& x, std::size_t group);
// Within each block: out[i] = sum_{j < i} x[j] (first row of every block is 0).
Var exclusive_segment_cumsum(const Var& x, std::size_t group);

Var softmax_rows(const Var& x);

Var slice_cols(const Var& x, std::size_t begin, std::size_t end);
Var slice_rows(const Var& x, std::size_t begin, std::size_t end);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var reshape(const Var& x, std::size_t rows, std::size_t cols);

// Fixed sparse row mixing: out[i, c] = sum_t weight[i*taps + t] * x[index[i*taps + t], c].
struct RowTaps {
    std::size_t out_rows = 0;
    std::size_t taps = 0;
    std::vector<std::uint32_t> index;
    std::vector<double> weight;
};
Var row_gather(const Var& x, std::shared_ptr<const RowTaps> taps);

// 3x3 "same" convolution of an (H*W) x Cin image with a fixed kernel laid out
// as (9*Cin) x Cout, tap-major (ky, kx, cin). Zero padding.
Var conv3x3(const Var& x, std::size_t height, std::size_t width, std::shared_ptr<const Mat> kernel);

// Sets the default number of worker threads used by the heavier ops.
void set_num_threads(int n);
int num_threads();

}  // namespace morphvol::ad
