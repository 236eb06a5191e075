// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
// Dense layers, MLPs and first-order optimizers over ad::Mat parameters.
#pragma once

#include <string>
#include <vector>

#include "morphvol/autodiff.hpp"
#include "morphvol/types.hpp"

namespace morphvol::nn {

/// y = x W + b with W stored in_dim x out_dim and b as 1 x out_dim.
struct Dense {
    ad::Mat weight;
    ad::Mat bias;

    std::size_t in_dim() const { return weight.rows; }
    std::size_t out_dim() const { return weight.cols; }
};

/// Uniform(-s, s) weights with s = gain * sqrt(3 / in_dim), zero bias.
Dense make_dense(std::size_t in, std::size_t out, Rng& rng, double gain = 1.0);

enum class Activation { none, relu, leaky_relu, tanh };

ad::Var activate(const ad::Var& x, Activation act);

/// Graph-side view of a Dense layer: either constants or trainable leaves.
struct DenseVars {
    ad::Var weight;
    ad::Var bias;
};
DenseVars bind(const Dense& d, bool trainable);
ad::Var forward(const DenseVars& d, const ad::Var& x);

/// Hidden layers use `hidden`, the last layer is linear.
struct Mlp {
    std::vector<Dense> layers;
    Activation hidden = Activation::relu;

    std::size_t in_dim() const { return layers.front().in_dim(); }
    std::size_t out_dim() const { return layers.back().out_dim(); }
};

Mlp make_mlp(const std::vector<std::size_t>& widths, Activation hidden, Rng& rng, double gain = 1.0);

struct MlpVars {
    std::vector<DenseVars> layers;
    Activation hidden = Activation::relu;
};
MlpVars bind(const Mlp& m, bool trainable);
ad::Var forward(const MlpVars& m, const ad::Var& x);

/// A flat list of (name, parameter matrix) for optimizers and serialization.
struct ParamRef {
    std::string name;
    ad::Mat* value;
};
void collect(Dense& d, const std::string& prefix, std::vector<ParamRef>& out);
void collect(Mlp& m, const std::string& prefix, std::vector<ParamRef>& out);
/// Pairs every trainable DenseVars leaf with its storage.
void collect_vars(const DenseVars& d, std::vector<ad::Var>& out);
void collect_vars(const MlpVars& m, std::vector<ad::Var>& out);

/// Plain gradient descent: p -= lr * g.
void sgd_step(std::vector<ParamRef>& params, const std::vector<ad::Mat>& grads, double lr);

class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}
    void step(std::vector<ParamRef>& params, const std::vector<ad::Mat>& grads);
    void step(std::vector<double>& params, const std::vector<double>& grads);

private:
    double lr_, b1_, b2_, eps_;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

/// Small critic D(x) = v . tanh(x U + c) + b with an analytic input gradient
/// expressed as a graph, so penalties on it stay differentiable.
struct TinyDiscriminator {
    Dense hidden;  // U, c
    Dense head;    // v (hidden x 1), b

    static TinyDiscriminator make(std::size_t in_dim, std::size_t hidden_dim, Rng& rng);
    /// x: B x in_dim -> B x 1 scores.
    ad::Var score(const ad::Var& x) const;
    /// d score / d x per row, B x in_dim.
    ad::Var input_gradient(const ad::Var& x) const;
};

}  // namespace morphvol::nn
