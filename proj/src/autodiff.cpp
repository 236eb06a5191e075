// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
#include "morphvol/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace morphvol::ad {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

int g_threads = 1;

[[noreturn]] void fail(const std::string& what) { throw std::invalid_argument(what); }

// Creates the output node. Parents and the backward closure are attached only
// when some input participates in differentiation.
Var make_result(Mat value, std::vector<NodePtr> parents, std::function<void(Node&)> bw) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    bool grad = false;
    for (const auto& p : parents) grad = grad || p->requires_grad;
    if (grad) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backward = std::move(bw);
    }
    return Var::from_node(std::move(n));
}

struct Broadcast {
    std::size_t rows, cols;
    std::size_t ar, ac, br, bc;

    std::size_t ia(std::size_t i, std::size_t j) const { return (ar == 1 ? 0 : i) * ac + (ac == 1 ? 0 : j); }
    std::size_t ib(std::size_t i, std::size_t j) const { return (br == 1 ? 0 : i) * bc + (bc == 1 ? 0 : j); }
};

Broadcast broadcast_shape(const Mat& a, const Mat& b, const char* op) {
    auto dim = [&](std::size_t x, std::size_t y) {
        if (x == y || y == 1) return x;
        if (x == 1) return y;
        fail(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    };
    return Broadcast{dim(a.rows, b.rows), dim(a.cols, b.cols), a.rows, a.cols, b.rows, b.cols};
}

enum class BinOp { add, sub, mul, div };

Var binary(const Var& a, const Var& b, BinOp op) {
    const Mat& av = a.value();
    const Mat& bv = b.value();
    const Broadcast bc = broadcast_shape(av, bv, "binary op");
    Mat out(bc.rows, bc.cols);
    for (std::size_t i = 0; i < bc.rows; ++i) {
        for (std::size_t j = 0; j < bc.cols; ++j) {
            const double x = av.data[bc.ia(i, j)];
            const double y = bv.data[bc.ib(i, j)];
            double r = 0.0;
            switch (op) {
                case BinOp::add: r = x + y; break;
                case BinOp::sub: r = x - y; break;
                case BinOp::mul: r = x * y; break;
                case BinOp::div: r = x / y; break;
            }
            out.data[i * bc.cols + j] = r;
        }
    }
    auto an = a.node();
    auto bn = b.node();
    return make_result(std::move(out), {an, bn}, [an, bn, bc, op](Node& self) {
        const Mat& g = self.grad;
        if (an->requires_grad) {
            Mat& ga = an->grad_buffer();
            for (std::size_t i = 0; i < bc.rows; ++i) {
                for (std::size_t j = 0; j < bc.cols; ++j) {
                    const double gij = g.data[i * bc.cols + j];
                    double d = gij;
                    if (op == BinOp::mul) d = gij * bn->value.data[bc.ib(i, j)];
                    if (op == BinOp::div) d = gij / bn->value.data[bc.ib(i, j)];
                    ga.data[bc.ia(i, j)] += d;
                }
            }
        }
        if (bn->requires_grad) {
            Mat& gb = bn->grad_buffer();
            for (std::size_t i = 0; i < bc.rows; ++i) {
                for (std::size_t j = 0; j < bc.cols; ++j) {
                    const double gij = g.data[i * bc.cols + j];
                    double d = gij;
                    if (op == BinOp::sub) d = -gij;
                    if (op == BinOp::mul) d = gij * an->value.data[bc.ia(i, j)];
                    if (op == BinOp::div) {
                        const double y = bn->value.data[bc.ib(i, j)];
                        d = -gij * an->value.data[bc.ia(i, j)] / (y * y);
                    }
                    gb.data[bc.ib(i, j)] += d;
                }
            }
        }
    });
}

// Elementwise map where the derivative is expressed from input x and output y.
template <class F, class D>
Var unary(const Var& x, F f, D dfdx) {
    const Mat& xv = x.value();
    Mat out(xv.rows, xv.cols);
    for (std::size_t i = 0; i < xv.size(); ++i) out.data[i] = f(xv.data[i]);
    auto xn = x.node();
    auto res = make_result(std::move(out), {xn}, nullptr);
    if (res.requires_grad()) {
        res.node()->backward = [xn, dfdx](Node& self) {
            Mat& gx = xn->grad_buffer();
            for (std::size_t i = 0; i < gx.size(); ++i) {
                gx.data[i] += self.grad.data[i] * dfdx(xn->value.data[i], self.value.data[i]);
            }
        };
    }
    return res;
}

}  // namespace

Mat::Mat(std::size_t r, std::size_t c, std::vector<double> values) : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != r * c) fail("Mat: " + std::to_string(data.size()) + " values for shape " + std::to_string(r) + "x" + std::to_string(c));
}

std::string shape_str(const Mat& m) { return std::to_string(m.rows) + "x" + std::to_string(m.cols); }

Mat& detail::Node::grad_buffer() {
    if (!grad.same_shape(value)) grad = Mat(value.rows, value.cols);
    return grad;
}

Var Var::constant(Mat m) {
    auto n = std::make_shared<Node>();
    n->value = std::move(m);
    return from_node(std::move(n));
}

Var Var::parameter(Mat m) {
    auto n = std::make_shared<Node>();
    n->value = std::move(m);
    n->requires_grad = true;
    return from_node(std::move(n));
}

Mat Var::grad() const {
    if (node_->grad.same_shape(node_->value)) return node_->grad;
    return Mat(node_->value.rows, node_->value.cols);
}

double Var::item() const {
    if (node_->value.size() != 1) fail("item() on " + shape_str(node_->value));
    return node_->value.data[0];
}

void backward(const Var& root) {
    if (!root.defined() || root.value().size() != 1) fail("backward: root must be a 1x1 value");
    if (!root.requires_grad()) return;
    // Iterative post-order DFS for a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    root.node()->grad_buffer().data[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward) {
            n->grad_buffer();
            n->backward(*n);
        }
    }
}

Var detach(const Var& x) { return Var::constant(x.value()); }

Var operator+(const Var& a, const Var& b) { return binary(a, b, BinOp::add); }
Var operator-(const Var& a, const Var& b) { return binary(a, b, BinOp::sub); }
Var operator*(const Var& a, const Var& b) { return binary(a, b, BinOp::mul); }
Var operator/(const Var& a, const Var& b) { return binary(a, b, BinOp::div); }
Var operator-(const Var& a) {
    return unary(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}
Var operator*(const Var& a, double s) {
    return unary(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}
Var operator*(double s, const Var& a) { return a * s; }
Var operator+(const Var& a, double s) {
    return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}
Var operator+(double s, const Var& a) { return a + s; }
Var operator-(const Var& a, double s) { return a + (-s); }
Var operator-(double s, const Var& a) {
    return unary(a, [s](double x) { return s - x; }, [](double, double) { return -1.0; });
}

Var exp(const Var& x) {
    return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}
Var log(const Var& x) {
    return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}
Var sqrt(const Var& x) {
    return unary(
        x, [](double v) { return std::sqrt(v); }, [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}
Var square(const Var& x) {
    return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}
Var relu(const Var& x) {
    return unary(
        x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}
Var leaky_relu(const Var& x, double slope) {
    return unary(
        x, [slope](double v) { return v > 0.0 ? v : slope * v; },
        [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}
Var sigmoid(const Var& x) {
    return unary(
        x,
        [](double v) {
            if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}
Var softplus(const Var& x) {
    return unary(
        x, [](double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
        [](double v, double) {
            if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
            const double e = std::exp(v);
            return e / (1.0 + e);
        });
}
Var tanh(const Var& x) {
    return unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}
Var clamp_min(const Var& x, double floor) {
    return unary(
        x, [floor](double v) { return v > floor ? v : floor; },
        [floor](double v, double) { return v > floor ? 1.0 : 0.0; });
}

Var matmul(const Var& a, const Var& b) {
    const Mat& A = a.value();
    const Mat& B = b.value();
    if (A.cols != B.rows) fail("matmul: " + shape_str(A) + " * " + shape_str(B));
    const std::size_t m = A.rows, k = A.cols, n = B.cols;
    Mat C(m, n);
#pragma omp parallel for schedule(static) num_threads(g_threads) if (m * k * n > 32768)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
        double* crow = &C.data[i * n];
        const double* arow = &A.data[i * k];
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = arow[p];
            if (aip == 0.0) continue;
            const double* brow = &B.data[p * n];
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
    auto an = a.node();
    auto bn = b.node();
    return make_result(std::move(C), {an, bn}, [an, bn, m, k, n](Node& self) {
        const Mat& G = self.grad;
        if (an->requires_grad) {
            Mat& GA = an->grad_buffer();
            const Mat& Bv = bn->value;
#pragma omp parallel for schedule(static) num_threads(g_threads) if (m * k * n > 32768)
            for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
                const double* grow = &G.data[i * n];
                for (std::size_t p = 0; p < k; ++p) {
                    const double* brow = &Bv.data[p * n];
                    double s = 0.0;
                    for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
                    GA.data[i * k + p] += s;
                }
            }
        }
        if (bn->requires_grad) {
            Mat& GB = bn->grad_buffer();
            const Mat& Av = an->value;
            // GB[p, :] += sum_i A[i, p] * G[i, :]; each p owned by one iteration.
#pragma omp parallel for schedule(static) num_threads(g_threads) if (m * k * n > 32768)
            for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(k); ++p) {
                double* gbrow = &GB.data[p * n];
                for (std::size_t i = 0; i < m; ++i) {
                    const double aip = Av.data[i * k + p];
                    if (aip == 0.0) continue;
                    const double* grow = &G.data[i * n];
                    for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
                }
            }
        }
    });
}

Var transpose(const Var& x) {
    const Mat& X = x.value();
    Mat out(X.cols, X.rows);
    for (std::size_t i = 0; i < X.rows; ++i)
        for (std::size_t j = 0; j < X.cols; ++j) out(j, i) = X(i, j);
    auto xn = x.node();
    return make_result(std::move(out), {xn}, [xn](Node& self) {
        Mat& gx = xn->grad_buffer();
        for (std::size_t i = 0; i < gx.rows; ++i)
            for (std::size_t j = 0; j < gx.cols; ++j) gx(i, j) += self.grad(j, i);
    });
}

Var sum(const Var& x) {
    double s = 0.0;
    for (double v : x.value().data) s += v;
    auto xn = x.node();
    return make_result(Mat::scalar(s), {xn}, [xn](Node& self) {
        Mat& gx = xn->grad_buffer();
        const double g = self.grad.data[0];
        for (double& v : gx.data) v += g;
    });
}

Var mean(const Var& x) {
    const double n = static_cast<double>(x.value().size());
    if (n == 0) fail("mean of empty matrix");
    return sum(x) * (1.0 / n);
}

Var col_sum(const Var& x) {
    const Mat& X = x.value();
    Mat out(1, X.cols);
    for (std::size_t i = 0; i < X.rows; ++i)
        for (std::size_t j = 0; j < X.cols; ++j) out.data[j] += X(i, j);
    auto xn = x.node();
    return make_result(std::move(out), {xn}, [xn](Node& self) {
        Mat& gx = xn->grad_buffer();
        for (std::size_t i = 0; i < gx.rows; ++i)
            for (std::size_t j = 0; j < gx.cols; ++j) gx(i, j) += self.grad.data[j];
    });
}

Var row_sum(const Var& x) {
    const Mat& X = x.value();
    Mat out(X.rows, 1);
    for (std::size_t i = 0; i < X.rows; ++i)
        for (std::size_t j = 0; j < X.cols; ++j) out.data[i] += X(i, j);
    auto xn = x.node();
    return make_result(std::move(out), {xn}, [xn](Node& self) {
        Mat& gx = xn->grad_buffer();
        for (std::size_t i = 0; i < gx.rows; ++i)
            for (std::size_t j = 0; j < gx.cols; ++j) gx(i, j) += self.grad.data[i];
    });
}

Var row_norm(const Var& x) {
    const Mat& X = x.value();
    Mat out(X.rows, 1);
    for (std::size_t i = 0; i < X.rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < X.cols; ++j) s += X(i, j) * X(i, j);
        out.data[i] = std::sqrt(s);
    }
    auto xn = x.node();
    return make_result(std::move(out), {xn}, [xn](Node& self) {
        Mat& gx = xn->grad_buffer();
        for (std::size_t i = 0; i < gx.rows; ++i) {
            const double nrm = self.value.data[i];
            if (nrm == 0.0) continue;
            const double g = self.grad.data[i] / nrm;
            for (std::size_t j = 0; j < gx.cols; ++j) gx(i, j) += g * xn->value(i, j);
        }
    });
}

Var segment_sum(const Var& x, std::size_t group) {
    const Mat& X = x.value();
    if (group == 0 || X.rows % group != 0) fail("segment_sum: rows " + std::to_string(X.rows) + " not divisible by " + std::to_string(group));
    const std::size_t segs = X.rows / group;
    Mat out(segs, X.cols);
    for (std::size_t s = 0; s < segs; ++s)
        for (std::size_t r = 0; r < group; ++r)
            for (std::size_t j = 0; j < X.cols; ++j) out(s, j) += X(s * group + r, j);
    auto xn = x.node();
    return make_result(std::move(out), {xn}, [xn, group](Node& self) {
        Mat& gx = xn->grad_buffer();
        for (std::size_t i = 0; i < gx.rows; ++i)
            for (std::size_t j = 0; j < gx.cols; ++j) gx(i, j) += self.grad(i / group, j);
    });
}

Var exclusive_segment_cumsum(const Var& x, std::size_t group) {
    const Mat& X = x.value();
    if (group == 0 || X.rows % group != 0) fail("exclusive_segment_cumsum: bad group");
    Mat out(X.rows, X.cols);
    for (std::size_t s = 0; s < X.rows / group; ++s) {
        for (std::size_t j = 0; j < X.cols; ++j) {
            double acc = 0.0;
            for (std::size_t r = 0; r < group; ++r) {
                const std::size_t i = s * group + r;
                out(i, j) = acc;
                acc += X(i, j);
            }
        }
    }
    auto xn = x.node();
    return make_result(std::move(out), {xn}, [xn, group](Node& self) {
        // d out[i] / d x[k] = 1 for k < i in the same block: reverse suffix sums.
        Mat& gx = xn->grad_buffer();
        for (std::size_t s = 0; s < gx.rows / group; ++s) {
            for (std::size_t j = 0; j < gx.cols; ++j) {
                double acc = 0.0;
                for (std::size_t r = group; r-- > 0;) {
                    const std::size_t i = s * group + r;
                    gx(i, j) += acc;
                    acc += self.grad(i, j);
                }
            }
        }
    });
}

Var softmax_rows(const Var& x) {
    const Mat& X = x.value();
    Mat out(X.rows, X.cols);
    for (std::size_t i = 0; i < X.rows; ++i) {
        double mx = X(i, 0);
        for (std::size_t j = 1; j < X.cols; ++j) mx = std::max(mx, X(i, j));
        double z = 0.0;
        for (std::size_t j = 0; j < X.cols; ++j) {
            out(i, j) = std::exp(X(i, j) - mx);
            z += out(i, j);
        }
        for (std::size_t j = 0; j < X.cols; ++j) out(i, j) /= z;
    }
    auto xn = x.node();
    return make_result(std::move(out), {xn}, [xn](Node& self) {
        Mat& gx = xn->grad_buffer();
        const Mat& y = self.value;
        for (std::size_t i = 0; i < y.rows; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < y.cols; ++j) dot += self.grad(i, j) * y(i, j);
            for (std::size_t j = 0; j < y.cols; ++j) gx(i, j) += y(i, j) * (self.grad(i, j) - dot);
        }
    });
}

Var slice_cols(const Var& x, std::size_t begin, std::size_t end) {
    const Mat& X = x.value();
    if (begin > end || end > X.cols) fail("slice_cols out of range");
    const std::size_t w = end - begin;
    Mat out(X.rows, w);
    for (std::size_t i = 0; i < X.rows; ++i)
        for (std::size_t j = 0; j < w; ++j) out(i, j) = X(i, begin + j);
    auto xn = x.node();
    return make_result(std::move(out), {xn}, [xn, begin, w](Node& self) {
        Mat& gx = xn->grad_buffer();
        for (std::size_t i = 0; i < gx.rows; ++i)
            for (std::size_t j = 0; j < w; ++j) gx(i, begin + j) += self.grad(i, j);
    });
}

Var slice_rows(const Var& x, std::size_t begin, std::size_t end) {
    const Mat& X = x.value();
    if (begin > end || end > X.rows) fail("slice_rows out of range");
    Mat out(end - begin, X.cols,
            std::vector<double>(X.data.begin() + begin * X.cols, X.data.begin() + end * X.cols));
    auto xn = x.node();
    return make_result(std::move(out), {xn}, [xn, begin](Node& self) {
        Mat& gx = xn->grad_buffer();
        for (std::size_t i = 0; i < self.grad.size(); ++i) gx.data[begin * gx.cols + i] += self.grad.data[i];
    });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) fail("concat_cols: no parts");
    const std::size_t rows = parts[0].rows();
    std::size_t cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows) fail("concat_cols: row mismatch");
        cols += p.cols();
    }
    Mat out(rows, cols);
    std::vector<NodePtr> nodes;
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const auto& p : parts) {
        const Mat& P = p.value();
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < P.cols; ++j) out(i, off + j) = P(i, j);
        nodes.push_back(p.node());
        offsets.push_back(off);
        off += P.cols;
    }
    auto captured = nodes;
    return make_result(std::move(out), std::move(nodes), [captured, offsets](Node& self) {
        for (std::size_t k = 0; k < captured.size(); ++k) {
            if (!captured[k]->requires_grad) continue;
            Mat& g = captured[k]->grad_buffer();
            for (std::size_t i = 0; i < g.rows; ++i)
                for (std::size_t j = 0; j < g.cols; ++j) g(i, j) += self.grad(i, offsets[k] + j);
        }
    });
}

Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) fail("concat_rows: no parts");
    const std::size_t cols = parts[0].cols();
    std::vector<double> data;
    std::vector<NodePtr> nodes;
    std::vector<std::size_t> offsets;
    std::size_t rows = 0;
    for (const auto& p : parts) {
        if (p.cols() != cols) fail("concat_rows: column mismatch");
        offsets.push_back(data.size());
        data.insert(data.end(), p.value().data.begin(), p.value().data.end());
        nodes.push_back(p.node());
        rows += p.rows();
    }
    auto captured = nodes;
    return make_result(Mat(rows, cols, std::move(data)), std::move(nodes), [captured, offsets](Node& self) {
        for (std::size_t k = 0; k < captured.size(); ++k) {
            if (!captured[k]->requires_grad) continue;
            Mat& g = captured[k]->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += self.grad.data[offsets[k] + i];
        }
    });
}

Var reshape(const Var& x, std::size_t rows, std::size_t cols) {
    if (rows * cols != x.value().size()) fail("reshape: size mismatch " + shape_str(x.value()));
    auto xn = x.node();
    return make_result(Mat(rows, cols, x.value().data), {xn}, [xn](Node& self) {
        Mat& g = xn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += self.grad.data[i];
    });
}

Var row_gather(const Var& x, std::shared_ptr<const RowTaps> taps) {
    const Mat& X = x.value();
    const RowTaps& t = *taps;
    if (t.index.size() != t.out_rows * t.taps || t.weight.size() != t.index.size()) fail("row_gather: malformed taps");
    for (std::size_t k = 0; k < t.index.size(); ++k) {
        if (t.weight[k] != 0.0 && t.index[k] >= X.rows) fail("row_gather: index out of range");
    }
    const std::size_t C = X.cols;
    Mat out(t.out_rows, C);
#pragma omp parallel for schedule(static) num_threads(g_threads) if (t.out_rows * C > 65536)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(t.out_rows); ++i) {
        double* orow = &out.data[i * C];
        for (std::size_t k = 0; k < t.taps; ++k) {
            const double w = t.weight[i * t.taps + k];
            if (w == 0.0) continue;
            const std::uint32_t src = t.index[i * t.taps + k];
            const double* xrow = &X.data[src * C];
            for (std::size_t c = 0; c < C; ++c) orow[c] += w * xrow[c];
        }
    }
    auto xn = x.node();
    return make_result(std::move(out), {xn}, [xn, taps, C](Node& self) {
        Mat& gx = xn->grad_buffer();
        const RowTaps& t = *taps;
        for (std::size_t i = 0; i < t.out_rows; ++i) {
            const double* grow = &self.grad.data[i * C];
            for (std::size_t k = 0; k < t.taps; ++k) {
                const double w = t.weight[i * t.taps + k];
                if (w == 0.0) continue;
                double* gxrow = &gx.data[t.index[i * t.taps + k] * C];
                for (std::size_t c = 0; c < C; ++c) gxrow[c] += w * grow[c];
            }
        }
    });
}

Var conv3x3(const Var& x, std::size_t height, std::size_t width, std::shared_ptr<const Mat> kernel) {
    const Mat& X = x.value();
    const Mat& K = *kernel;
    const std::size_t cin = X.cols;
    if (X.rows != height * width) fail("conv3x3: image rows != H*W");
    if (K.rows != 9 * cin) fail("conv3x3: kernel rows must be 9*Cin");
    const std::size_t cout = K.cols;
    Mat out(X.rows, cout);
    auto for_each_tap = [height, width](std::size_t y, std::size_t x, auto&& fn) {
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                const long sy = static_cast<long>(y) + dy;
                const long sx = static_cast<long>(x) + dx;
                if (sy < 0 || sx < 0 || sy >= static_cast<long>(height) || sx >= static_cast<long>(width)) continue;
                const std::size_t tap = static_cast<std::size_t>((dy + 1) * 3 + (dx + 1));
                fn(tap, static_cast<std::size_t>(sy) * width + static_cast<std::size_t>(sx));
            }
        }
    };
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t xx = 0; xx < width; ++xx) {
            double* orow = &out.data[(y * width + xx) * cout];
            for_each_tap(y, xx, [&](std::size_t tap, std::size_t src) {
                for (std::size_t ci = 0; ci < cin; ++ci) {
                    const double v = X.data[src * cin + ci];
                    const double* krow = &K.data[(tap * cin + ci) * cout];
                    for (std::size_t co = 0; co < cout; ++co) orow[co] += v * krow[co];
                }
            });
        }
    }
    auto xn = x.node();
    return make_result(std::move(out), {xn}, [xn, kernel, height, width, cin, cout, for_each_tap](Node& self) {
        Mat& gx = xn->grad_buffer();
        const Mat& K = *kernel;
        for (std::size_t y = 0; y < height; ++y) {
            for (std::size_t xx = 0; xx < width; ++xx) {
                const double* grow = &self.grad.data[(y * width + xx) * cout];
                for_each_tap(y, xx, [&](std::size_t tap, std::size_t src) {
                    for (std::size_t ci = 0; ci < cin; ++ci) {
                        const double* krow = &K.data[(tap * cin + ci) * cout];
                        double s = 0.0;
                        for (std::size_t co = 0; co < cout; ++co) s += krow[co] * grow[co];
                        gx.data[src * cin + ci] += s;
                    }
                });
            }
        }
    });
}

void set_num_threads(int n) { g_threads = std::max(1, n); }
int num_threads() { return g_threads; }

}  // namespace morphvol::ad
