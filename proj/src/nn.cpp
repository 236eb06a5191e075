// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
#include "morphvol/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace morphvol::nn {

Dense make_dense(std::size_t in, std::size_t out, Rng& rng, double gain) {
    Dense d;
    d.weight = ad::Mat(in, out);
    d.bias = ad::Mat(1, out);
    const double s = gain * std::sqrt(3.0 / static_cast<double>(std::max<std::size_t>(in, 1)));
    for (double& w : d.weight.data) w = rng.uniform(-s, s);
    return d;
}

ad::Var activate(const ad::Var& x, Activation act) {
    switch (act) {
        case Activation::none: return x;
        case Activation::relu: return ad::relu(x);
        case Activation::leaky_relu: return ad::leaky_relu(x, 0.2);
        case Activation::tanh: return ad::tanh(x);
    }
    return x;
}

DenseVars bind(const Dense& d, bool trainable) {
    if (trainable) return {ad::Var::parameter(d.weight), ad::Var::parameter(d.bias)};
    return {ad::Var::constant(d.weight), ad::Var::constant(d.bias)};
}

ad::Var forward(const DenseVars& d, const ad::Var& x) { return ad::matmul(x, d.weight) + d.bias; }

Mlp make_mlp(const std::vector<std::size_t>& widths, Activation hidden, Rng& rng, double gain) {
    if (widths.size() < 2) throw std::invalid_argument("make_mlp: need at least input and output widths");
    Mlp m;
    m.hidden = hidden;
    const double hidden_gain = hidden == Activation::relu || hidden == Activation::leaky_relu ? std::sqrt(2.0) : 1.0;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        const bool last = i + 2 == widths.size();
        m.layers.push_back(make_dense(widths[i], widths[i + 1], rng, last ? gain : hidden_gain));
    }
    return m;
}

MlpVars bind(const Mlp& m, bool trainable) {
    MlpVars v;
    v.hidden = m.hidden;
    for (const auto& l : m.layers) v.layers.push_back(bind(l, trainable));
    return v;
}

ad::Var forward(const MlpVars& m, const ad::Var& x) {
    ad::Var h = x;
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        if (h.cols() != m.layers[i].weight.rows())
            throw std::invalid_argument("mlp forward: input width " + std::to_string(h.cols()) + " != layer input " +
                                        std::to_string(m.layers[i].weight.rows()));
        h = forward(m.layers[i], h);
        if (i + 1 < m.layers.size()) h = activate(h, m.hidden);
    }
    return h;
}

void collect(Dense& d, const std::string& prefix, std::vector<ParamRef>& out) {
    out.push_back({prefix + ".weight", &d.weight});
    out.push_back({prefix + ".bias", &d.bias});
}

void collect(Mlp& m, const std::string& prefix, std::vector<ParamRef>& out) {
    for (std::size_t i = 0; i < m.layers.size(); ++i) collect(m.layers[i], prefix + "." + std::to_string(i), out);
}

void collect_vars(const DenseVars& d, std::vector<ad::Var>& out) {
    out.push_back(d.weight);
    out.push_back(d.bias);
}

void collect_vars(const MlpVars& m, std::vector<ad::Var>& out) {
    for (const auto& l : m.layers) collect_vars(l, out);
}

void sgd_step(std::vector<ParamRef>& params, const std::vector<ad::Mat>& grads, double lr) {
    if (params.size() != grads.size()) throw std::invalid_argument("sgd_step: parameter/gradient count mismatch");
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = params[k].value->data;
        const auto& g = grads[k].data;
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
    }
}

void Adam::step(std::vector<ParamRef>& params, const std::vector<ad::Mat>& grads) {
    if (params.size() != grads.size()) throw std::invalid_argument("Adam: parameter/gradient count mismatch");
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.emplace_back(p.value->size(), 0.0);
            v_.emplace_back(p.value->size(), 0.0);
        }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = params[k].value->data;
        const auto& g = grads[k].data;
        for (std::size_t i = 0; i < p.size(); ++i) {
            m_[k][i] = b1_ * m_[k][i] + (1.0 - b1_) * g[i];
            v_[k][i] = b2_ * v_[k][i] + (1.0 - b2_) * g[i] * g[i];
            p[i] -= lr_ * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + eps_);
        }
    }
}

void Adam::step(std::vector<double>& params, const std::vector<double>& grads) {
    ad::Mat pm(1, params.size(), params);
    std::vector<ParamRef> refs{{"x", &pm}};
    step(refs, {ad::Mat(1, grads.size(), grads)});
    params = pm.data;
}

TinyDiscriminator TinyDiscriminator::make(std::size_t in_dim, std::size_t hidden_dim, Rng& rng) {
    TinyDiscriminator d;
    d.hidden = make_dense(in_dim, hidden_dim, rng);
    d.head = make_dense(hidden_dim, 1, rng);
    return d;
}

ad::Var TinyDiscriminator::score(const ad::Var& x) const {
    const ad::Var h = ad::tanh(ad::matmul(x, ad::Var::constant(hidden.weight)) + ad::Var::constant(hidden.bias));
    return ad::matmul(h, ad::Var::constant(head.weight)) + ad::Var::constant(head.bias);
}

ad::Var TinyDiscriminator::input_gradient(const ad::Var& x) const {
    const ad::Var h = ad::tanh(ad::matmul(x, ad::Var::constant(hidden.weight)) + ad::Var::constant(hidden.bias));
    // d/dx [v . tanh(xU + c)] = (v^T * (1 - h^2)) U^T
    const ad::Var v_row = ad::Var::constant(ad::Mat(1, head.weight.rows, head.weight.data));
    const ad::Var slope = (1.0 - ad::square(h)) * v_row;
    return ad::matmul(slope, ad::transpose(ad::Var::constant(hidden.weight)));
}

}  // namespace morphvol::nn
