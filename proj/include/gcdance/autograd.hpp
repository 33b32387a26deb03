#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "gcdance/common.hpp"
#include "gcdance/tensor.hpp"

namespace gcdance::ag {

class Graph;

// Handle to a node in a Graph. Cheap to copy; valid for the graph's lifetime.
struct Var {
    Graph* g = nullptr;
    int id = -1;
};

// Reverse-mode tape over Tensor values. Nodes are created eagerly (forward
// values computed at construction), so creation order is a topological order.
// backward() may be called repeatedly from different scalar roots over the
// same tape; gradients are zeroed at the start of every call. Node storage is
// a deque so references returned by value()/grad() stay valid while further
// ops are appended.
class Graph {
public:
    struct Node {
        Tensor value;
        Tensor grad;  // allocated on first backward that reaches this node
        std::vector<int> parents;
        std::function<void(Graph&, int)> back;  // accumulate into parents' grads
        const char* op = "";
        std::string label;
        bool grad_ready = false;  // grad buffer zeroed for the current backward
    };

    Var leaf(Tensor value, std::string label = {}) {
        return add_node(std::move(value), {}, nullptr, "leaf", std::move(label));
    }

    Var constant(Tensor value) { return add_node(std::move(value), {}, nullptr, "const", {}); }

    Var add_node(Tensor value, std::vector<int> parents, std::function<void(Graph&, int)> back,
                 const char* op, std::string label = {}) {
        if (!value.all_finite())
            fail(errc::numeric, std::string("autograd: non-finite value out of op '") + op +
                                    "'" + (label.empty() ? "" : " at " + label));
        Node n;
        n.value = std::move(value);
        n.parents = std::move(parents);
        n.back = std::move(back);
        n.op = op;
        n.label = std::move(label);
        nodes_.push_back(std::move(n));
        return Var{this, static_cast<int>(nodes_.size()) - 1};
    }

    const Tensor& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
    const Tensor& value_of(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }

    // True iff gradient flowed to this node during the most recent backward.
    bool has_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].grad_ready; }

    // Gradient from the most recent backward; exact zeros for nodes the root
    // does not reach (per-task gradient extraction relies on this).
    Tensor grad(Var v) const {
        const Node& n = nodes_[static_cast<std::size_t>(v.id)];
        if (!n.grad_ready) return Tensor::zeros(n.value.dims());
        return n.grad;
    }

    // Write the gradient (or zeros) into a flat buffer of n.value.size().
    void copy_grad(Var v, double* dst) const {
        const Node& n = nodes_[static_cast<std::size_t>(v.id)];
        if (!n.grad_ready) {
            std::fill(dst, dst + n.value.size(), 0.0);
        } else {
            std::copy(n.grad.data(), n.grad.data() + n.grad.size(), dst);
        }
    }

    // Gradient buffer of a parent, zero-initialized for the current backward.
    Tensor& grad_buffer(int id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.grad_ready) {
            if (!n.grad.same_shape(n.value)) n.grad = Tensor::zeros(n.value.dims());
            else n.grad.fill(0.0);
            n.grad_ready = true;
        }
        return n.grad;
    }

    std::size_t node_count() const { return nodes_.size(); }
    const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

    void backward(Var root) {
        require(root.g == this && root.id >= 0, errc::numeric, "autograd: foreign root");
        Node& rn = nodes_[static_cast<std::size_t>(root.id)];
        require(rn.value.size() == 1, errc::numeric,
                "autograd: backward root must be scalar, got " + rn.value.shape_str());

        // Reachability from the root; creation order is topological.
        std::vector<char> reach(nodes_.size(), 0);
        reach[static_cast<std::size_t>(root.id)] = 1;
        for (int i = root.id; i >= 0; --i) {
            if (!reach[static_cast<std::size_t>(i)]) continue;
            for (int p : nodes_[static_cast<std::size_t>(i)].parents)
                reach[static_cast<std::size_t>(p)] = 1;
        }
        for (std::size_t i = 0; i < nodes_.size(); ++i) nodes_[i].grad_ready = false;

        grad_buffer(root.id)[0] = 1.0;
        for (int i = root.id; i >= 0; --i) {
            Node& n = nodes_[static_cast<std::size_t>(i)];
            if (!reach[static_cast<std::size_t>(i)] || !n.back) continue;
            if (!n.grad_ready) continue;  // reachable but no gradient flowed here
            if (!n.grad.all_finite())
                fail(errc::numeric, std::string("autograd: NaN gradient at op '") + n.op + "'" +
                                        (n.label.empty() ? "" : " at " + n.label));
            n.back(*this, i);
        }
    }

private:
    std::deque<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Broadcast classification for binary elementwise ops.
// Supported: identical shapes; scalar rhs; rank-1 rhs matching the last dim;
// rhs with middle dim 1 against rank-3 lhs (per-sample row broadcast) or
// rank-2 rhs [1, w] against rank-2 lhs [k, w]; rank-2 rhs [k, w] matching the
// trailing dims of a rank-3 lhs (shared across the batch).
// ---------------------------------------------------------------------------
enum class Bcast { same, scalar, last_dim, row, matrix };

inline Bcast classify_broadcast(const Tensor& a, const Tensor& b, const char* op) {
    if (a.same_shape(b)) return Bcast::same;
    if (b.rank() == 0) return Bcast::scalar;
    if (b.rank() == 1 && a.rank() >= 1 && b.dim(0) == a.cols()) return Bcast::last_dim;
    if (a.rank() == 3 && b.rank() == 3 && b.dim(0) == a.dim(0) && b.dim(1) == 1 &&
        b.dim(2) == a.dim(2))
        return Bcast::row;
    if (a.rank() == 2 && b.rank() == 2 && b.dim(0) == 1 && b.dim(1) == a.dim(1))
        return Bcast::row;
    if (a.rank() == 3 && b.rank() == 2 && b.dim(0) == a.dim(1) && b.dim(1) == a.dim(2))
        return Bcast::matrix;
    fail(errc::numeric, std::string("autograd: shape mismatch in '") + op + "': " +
                            a.shape_str() + " vs " + b.shape_str());
}

namespace detail {

// Map flat output index -> flat rhs index under a broadcast pattern.
struct BcastIndex {
    Bcast kind;
    std::int64_t cols;      // last-dim width of lhs
    std::int64_t row_span;  // k*w for rank-3 row broadcast
    std::int64_t operator()(std::int64_t i) const {
        switch (kind) {
            case Bcast::same: return i;
            case Bcast::scalar: return 0;
            case Bcast::last_dim: return i % cols;
            case Bcast::row: {
                std::int64_t b = i / row_span;
                return b * cols + (i % cols);
            }
            case Bcast::matrix: return i % row_span;
        }
        return 0;
    }
};

inline BcastIndex bcast_index(const Tensor& a, Bcast kind) {
    BcastIndex bi;
    bi.kind = kind;
    bi.cols = a.cols();
    bi.row_span = a.rank() == 3 ? a.dim(1) * a.dim(2) : a.size();
    return bi;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary ops
// ---------------------------------------------------------------------------

inline Var binary_elementwise(Var a, Var b, const char* opname,
                              double (*fwd)(double, double),
                              void (*bwd)(double ga, double av, double bv, double& da, double& db),
                              std::string label = {}) {
    Graph& g = *a.g;
    require(a.g == b.g, errc::numeric, "autograd: mixed graphs");
    const Tensor& av = g.value(a);
    const Tensor& bv = g.value(b);
    Bcast kind = classify_broadcast(av, bv, opname);
    auto idx = detail::bcast_index(av, kind);

    Tensor out = Tensor::zeros(av.dims());
    for (std::int64_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[idx(i)]);

    int pa = a.id, pb = b.id;
    auto back = [pa, pb, idx, bwd](Graph& gr, int self) {
        const Tensor& go = gr.node(self).grad;
        const Tensor& av2 = gr.value_of(pa);
        const Tensor& bv2 = gr.value_of(pb);
        Tensor& da = gr.grad_buffer(pa);
        Tensor& db = gr.grad_buffer(pb);
        for (std::int64_t i = 0; i < av2.size(); ++i) {
            std::int64_t j = idx(i);
            double dda = 0.0, ddb = 0.0;
            bwd(go[i], av2[i], bv2[j], dda, ddb);
            da[i] += dda;
            db[j] += ddb;
        }
    };
    return g.add_node(std::move(out), {pa, pb}, back, opname, std::move(label));
}

inline Var add(Var a, Var b) {
    return binary_elementwise(
        a, b, "add", [](double x, double y) { return x + y; },
        [](double ga, double, double, double& da, double& db) {
            da = ga;
            db = ga;
        });
}

inline Var sub(Var a, Var b) {
    return binary_elementwise(
        a, b, "sub", [](double x, double y) { return x - y; },
        [](double ga, double, double, double& da, double& db) {
            da = ga;
            db = -ga;
        });
}

inline Var mul(Var a, Var b) {
    return binary_elementwise(
        a, b, "mul", [](double x, double y) { return x * y; },
        [](double ga, double av, double bv, double& da, double& db) {
            da = ga * bv;
            db = ga * av;
        });
}

inline Var div(Var a, Var b) {
    return binary_elementwise(
        a, b, "div", [](double x, double y) { return x / y; },
        [](double ga, double av, double bv, double& da, double& db) {
            da = ga / bv;
            db = -ga * av / (bv * bv);
        });
}

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

// ---------------------------------------------------------------------------
// Elementwise unary ops
// ---------------------------------------------------------------------------

inline Var unary_elementwise(Var a, const char* opname, double (*fwd)(double),
                             double (*dfdx)(double x, double y), std::string label = {}) {
    Graph& g = *a.g;
    const Tensor& av = g.value(a);
    Tensor out = Tensor::zeros(av.dims());
    for (std::int64_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);

    int pa = a.id;
    auto back = [pa, dfdx](Graph& gr, int self) {
        const Tensor& go = gr.node(self).grad;
        const Tensor& y = gr.node(self).value;
        const Tensor& x = gr.value_of(pa);
        Tensor& da = gr.grad_buffer(pa);
        for (std::int64_t i = 0; i < x.size(); ++i) da[i] += go[i] * dfdx(x[i], y[i]);
    };
    return g.add_node(std::move(out), {pa}, back, opname, std::move(label));
}

inline Var exp(Var a) {
    return unary_elementwise(
        a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Var log(Var a) {
    return unary_elementwise(
        a, "log", [](double x) { return std::log(x); },
        [](double x, double) { return 1.0 / x; });
}

inline Var tanh(Var a) {
    return unary_elementwise(
        a, "tanh", [](double x) { return std::tanh(x); },
        [](double, double y) { return 1.0 - y * y; });
}

// gelu, tanh approximation:
//   0.5 x (1 + tanh(c0 (x + c1 x^3))), c0 = sqrt(2/pi), c1 = 0.044715
inline constexpr double kGeluC0 = 0.79788456080286535588;
inline constexpr double kGeluC1 = 0.044715;

inline Var gelu(Var a) {
    return unary_elementwise(
        a, "gelu",
        [](double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC0 * (x + kGeluC1 * x * x * x))); },
        [](double x, double) {
            double t = std::tanh(kGeluC0 * (x + kGeluC1 * x * x * x));
            return 0.5 * (1.0 + t) +
                   0.5 * x * (1.0 - t * t) * kGeluC0 * (1.0 + 3.0 * kGeluC1 * x * x);
        });
}

// Gradient passes through inside [lo, hi], is zero outside.
inline Var clamp(Var a, double lo, double hi) {
    Graph& g = *a.g;
    const Tensor& av = g.value(a);
    Tensor out = Tensor::zeros(av.dims());
    for (std::int64_t i = 0; i < av.size(); ++i) out[i] = std::min(hi, std::max(lo, av[i]));
    int pa = a.id;
    auto back = [pa, lo, hi](Graph& gr, int self) {
        const Tensor& go = gr.node(self).grad;
        const Tensor& x = gr.value_of(pa);
        Tensor& da = gr.grad_buffer(pa);
        for (std::int64_t i = 0; i < x.size(); ++i)
            if (x[i] > lo && x[i] < hi) da[i] += go[i];
    };
    return g.add_node(std::move(out), {pa}, back, "clamp");
}

inline Var scale(Var a, double c) {
    Graph& g = *a.g;
    const Tensor& av = g.value(a);
    Tensor out = Tensor::zeros(av.dims());
    for (std::int64_t i = 0; i < av.size(); ++i) out[i] = av[i] * c;
    int pa = a.id;
    auto back = [pa, c](Graph& gr, int self) {
        const Tensor& go = gr.node(self).grad;
        Tensor& da = gr.grad_buffer(pa);
        for (std::int64_t i = 0; i < go.size(); ++i) da[i] += go[i] * c;
    };
    return g.add_node(std::move(out), {pa}, back, "scale");
}

inline Var add_scalar(Var a, double c) {
    Graph& g = *a.g;
    const Tensor& av = g.value(a);
    Tensor out = Tensor::zeros(av.dims());
    for (std::int64_t i = 0; i < av.size(); ++i) out[i] = av[i] + c;
    int pa = a.id;
    auto back = [pa](Graph& gr, int self) {
        const Tensor& go = gr.node(self).grad;
        Tensor& da = gr.grad_buffer(pa);
        for (std::int64_t i = 0; i < go.size(); ++i) da[i] += go[i];
    };
    return g.add_node(std::move(out), {pa}, back, "add_scalar");
}

// Stable logistic built from tanh: 0.5 (1 + tanh(x / 2)).
inline Var sigmoid(Var a) { return add_scalar(scale(tanh(scale(a, 0.5)), 0.5), 0.5); }

// ---------------------------------------------------------------------------
// matmul: [m,k]x[k,n]; [B,m,k]x[k,n] (shared rhs); [B,m,k]x[B,k,n] (batched)
// ---------------------------------------------------------------------------

inline Var matmul(Var a, Var b, std::string label = {}) {
    Graph& g = *a.g;
    require(a.g == b.g, errc::numeric, "autograd: mixed graphs");
    const Tensor& av = g.value(a);
    const Tensor& bv = g.value(b);
    const char* opname = "matmul";

    auto bad = [&]() {
        fail(errc::numeric, std::string("autograd: shape mismatch in 'matmul': ") +
                                av.shape_str() + " x " + bv.shape_str());
    };

    Tensor out;
    if (av.rank() == 2 && bv.rank() == 2) {
        if (av.dim(1) != bv.dim(0)) bad();
        out = Tensor::zeros({av.dim(0), bv.dim(1)});
        matmul_buffers(av.data(), bv.data(), out.data(), av.dim(0), av.dim(1), bv.dim(1));
    } else if (av.rank() == 3 && bv.rank() == 2) {
        if (av.dim(2) != bv.dim(0)) bad();
        // collapse [B,m,k] to [B*m,k]
        out = Tensor::zeros({av.dim(0), av.dim(1), bv.dim(1)});
        matmul_buffers(av.data(), bv.data(), out.data(), av.dim(0) * av.dim(1), av.dim(2),
                       bv.dim(1));
    } else if (av.rank() == 3 && bv.rank() == 3) {
        if (av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(1)) bad();
        std::int64_t B = av.dim(0), m = av.dim(1), k = av.dim(2), n = bv.dim(2);
        out = Tensor::zeros({B, m, n});
        for (std::int64_t s = 0; s < B; ++s)
            matmul_buffers(av.data() + s * m * k, bv.data() + s * k * n, out.data() + s * m * n,
                           m, k, n);
    } else {
        bad();
    }

    int pa = a.id, pb = b.id;
    auto back = [pa, pb](Graph& gr, int self) {
        const Tensor& go = gr.node(self).grad;
        const Tensor& av2 = gr.value_of(pa);
        const Tensor& bv2 = gr.value_of(pb);
        Tensor& da = gr.grad_buffer(pa);
        Tensor& db = gr.grad_buffer(pb);
        if (av2.rank() == 2 && bv2.rank() == 2) {
            // dA += G B^T ; dB += A^T G
            matmul_transB_buffers(go.data(), bv2.data(), da.data(), av2.dim(0), bv2.dim(1),
                                  av2.dim(1), true);
            matmul_transA_buffers(av2.data(), go.data(), db.data(), av2.dim(1), av2.dim(0),
                                  bv2.dim(1), true);
        } else if (av2.rank() == 3 && bv2.rank() == 2) {
            std::int64_t rows = av2.dim(0) * av2.dim(1);
            matmul_transB_buffers(go.data(), bv2.data(), da.data(), rows, bv2.dim(1), av2.dim(2),
                                  true);
            matmul_transA_buffers(av2.data(), go.data(), db.data(), av2.dim(2), rows, bv2.dim(1),
                                  true);
        } else {
            std::int64_t B = av2.dim(0), m = av2.dim(1), k = av2.dim(2), n = bv2.dim(2);
            for (std::int64_t s = 0; s < B; ++s) {
                matmul_transB_buffers(go.data() + s * m * n, bv2.data() + s * k * n,
                                      da.data() + s * m * k, m, n, k, true);
                matmul_transA_buffers(av2.data() + s * m * k, go.data() + s * m * n,
                                      db.data() + s * k * n, k, m, n, true);
            }
        }
    };
    return g.add_node(std::move(out), {pa, pb}, back, opname, std::move(label));
}

// ---------------------------------------------------------------------------
// softmax over the last dimension
// ---------------------------------------------------------------------------

inline Var softmax(Var a) {
    Graph& g = *a.g;
    const Tensor& av = g.value(a);
    require(av.rank() >= 1, errc::numeric, "softmax: rank-0 input");
    std::int64_t w = av.cols();
    std::int64_t rows = av.size() / w;
    Tensor out = Tensor::zeros(av.dims());
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* x = av.data() + r * w;
        double* y = out.data() + r * w;
        double mx = x[0];
        for (std::int64_t c = 1; c < w; ++c) mx = std::max(mx, x[c]);
        double sum = 0.0;
        for (std::int64_t c = 0; c < w; ++c) {
            y[c] = std::exp(x[c] - mx);
            sum += y[c];
        }
        for (std::int64_t c = 0; c < w; ++c) y[c] /= sum;
    }
    int pa = a.id;
    auto back = [pa, w, rows](Graph& gr, int self) {
        const Tensor& go = gr.node(self).grad;
        const Tensor& y = gr.node(self).value;
        Tensor& da = gr.grad_buffer(pa);
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* gy = go.data() + r * w;
            const double* yy = y.data() + r * w;
            double dot = 0.0;
            for (std::int64_t c = 0; c < w; ++c) dot += gy[c] * yy[c];
            double* dx = da.data() + r * w;
            for (std::int64_t c = 0; c < w; ++c) dx[c] += yy[c] * (gy[c] - dot);
        }
    };
    return g.add_node(std::move(out), {pa}, back, "softmax");
}

// ---------------------------------------------------------------------------
// layer normalization over the last dimension (no affine; compose gain/bias
// with mul/add). Output rows have mean 0 and variance 1 up to eps.
// ---------------------------------------------------------------------------

inline Var layer_norm(Var a, double eps = 1e-8) {
    Graph& g = *a.g;
    const Tensor& av = g.value(a);
    require(av.rank() >= 1, errc::numeric, "layer_norm: rank-0 input");
    std::int64_t w = av.cols();
    std::int64_t rows = av.size() / w;
    Tensor out = Tensor::zeros(av.dims());
    std::vector<double> inv_sigma(static_cast<std::size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* x = av.data() + r * w;
        double* y = out.data() + r * w;
        double mean = 0.0;
        for (std::int64_t c = 0; c < w; ++c) mean += x[c];
        mean /= static_cast<double>(w);
        double var = 0.0;
        for (std::int64_t c = 0; c < w; ++c) var += (x[c] - mean) * (x[c] - mean);
        var /= static_cast<double>(w);
        double is = 1.0 / std::sqrt(var + eps);
        inv_sigma[static_cast<std::size_t>(r)] = is;
        for (std::int64_t c = 0; c < w; ++c) y[c] = (x[c] - mean) * is;
    }
    int pa = a.id;
    auto back = [pa, w, rows, inv_sigma](Graph& gr, int self) {
        const Tensor& go = gr.node(self).grad;
        const Tensor& y = gr.node(self).value;
        Tensor& da = gr.grad_buffer(pa);
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* gy = go.data() + r * w;
            const double* yy = y.data() + r * w;
            double gmean = 0.0, gydot = 0.0;
            for (std::int64_t c = 0; c < w; ++c) {
                gmean += gy[c];
                gydot += gy[c] * yy[c];
            }
            gmean /= static_cast<double>(w);
            gydot /= static_cast<double>(w);
            double is = inv_sigma[static_cast<std::size_t>(r)];
            double* dx = da.data() + r * w;
            for (std::int64_t c = 0; c < w; ++c)
                dx[c] += is * (gy[c] - gmean - yy[c] * gydot);
        }
    };
    return g.add_node(std::move(out), {pa}, back, "layer_norm");
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

inline Var reduce_sum(Var a) {
    Graph& g = *a.g;
    const Tensor& av = g.value(a);
    double s = 0.0;
    for (std::int64_t i = 0; i < av.size(); ++i) s += av[i];
    int pa = a.id;
    auto back = [pa](Graph& gr, int self) {
        double go = gr.node(self).grad[0];
        Tensor& da = gr.grad_buffer(pa);
        for (std::int64_t i = 0; i < da.size(); ++i) da[i] += go;
    };
    return g.add_node(Tensor::scalar(s), {pa}, back, "reduce_sum");
}

inline Var reduce_mean(Var a) {
    Graph& g = *a.g;
    const Tensor& av = g.value(a);
    double s = 0.0;
    for (std::int64_t i = 0; i < av.size(); ++i) s += av[i];
    double n = static_cast<double>(av.size());
    int pa = a.id;
    auto back = [pa, n](Graph& gr, int self) {
        double go = gr.node(self).grad[0] / n;
        Tensor& da = gr.grad_buffer(pa);
        for (std::int64_t i = 0; i < da.size(); ++i) da[i] += go;
    };
    return g.add_node(Tensor::scalar(s / n), {pa}, back, "reduce_mean");
}

// ---------------------------------------------------------------------------
// structural ops
// ---------------------------------------------------------------------------

// Swap the last two dimensions (rank 2 or 3).
inline Var transpose(Var a) {
    Graph& g = *a.g;
    const Tensor& av = g.value(a);
    require(av.rank() >= 2, errc::numeric, "transpose: need rank >= 2, got " + av.shape_str());
    std::int64_t B = av.batch(), m = av.rows(), n = av.cols();
    Tensor out = av.rank() == 3 ? Tensor::zeros({B, n, m}) : Tensor::zeros({n, m});
    for (std::int64_t s = 0; s < B; ++s)
        for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t j = 0; j < n; ++j)
                out[s * m * n + j * m + i] = av[s * m * n + i * n + j];
    int pa = a.id;
    auto back = [pa, B, m, n](Graph& gr, int self) {
        const Tensor& go = gr.node(self).grad;
        Tensor& da = gr.grad_buffer(pa);
        for (std::int64_t s = 0; s < B; ++s)
            for (std::int64_t j = 0; j < n; ++j)
                for (std::int64_t i = 0; i < m; ++i)
                    da[s * m * n + i * n + j] += go[s * m * n + j * m + i];
    };
    return g.add_node(std::move(out), {pa}, back, "transpose");
}

inline Var reshape(Var a, std::vector<std::int64_t> dims) {
    Graph& g = *a.g;
    const Tensor& av = g.value(a);
    Tensor out = Tensor::zeros(dims);
    require(out.size() == av.size(), errc::numeric,
            "reshape: size mismatch " + av.shape_str() + " -> " + out.shape_str());
    for (std::int64_t i = 0; i < av.size(); ++i) out[i] = av[i];
    int pa = a.id;
    auto back = [pa](Graph& gr, int self) {
        const Tensor& go = gr.node(self).grad;
        Tensor& da = gr.grad_buffer(pa);
        for (std::int64_t i = 0; i < go.size(); ++i) da[i] += go[i];
    };
    return g.add_node(std::move(out), {pa}, back, "reshape");
}

// Concatenate along the last dimension. All leading dims must match.
inline Var concat(const std::vector<Var>& parts) {
    require(!parts.empty(), errc::numeric, "concat: empty");
    Graph& g = *parts[0].g;
    const Tensor& first = g.value(parts[0]);
    std::int64_t lead = first.size() / first.cols();
    std::int64_t total = 0;
    for (const Var& p : parts) {
        const Tensor& pv = g.value(p);
        require(pv.rank() == first.rank() && pv.size() / pv.cols() == lead, errc::numeric,
                "concat: incompatible shapes " + first.shape_str() + " vs " + pv.shape_str());
        total += pv.cols();
    }
    std::vector<std::int64_t> dims = first.dims();
    dims.back() = total;
    Tensor out = Tensor::zeros(dims);
    std::vector<int> parent_ids;
    std::vector<std::int64_t> offsets;
    std::int64_t off = 0;
    for (const Var& p : parts) {
        const Tensor& pv = g.value(p);
        std::int64_t w = pv.cols();
        for (std::int64_t r = 0; r < lead; ++r)
            for (std::int64_t c = 0; c < w; ++c) out[r * total + off + c] = pv[r * w + c];
        parent_ids.push_back(p.id);
        offsets.push_back(off);
        off += w;
    }
    auto back = [parent_ids, offsets, lead, total](Graph& gr, int self) {
        const Tensor& go = gr.node(self).grad;
        for (std::size_t p = 0; p < parent_ids.size(); ++p) {
            Tensor& dp = gr.grad_buffer(parent_ids[p]);
            std::int64_t w = dp.cols();
            std::int64_t off2 = offsets[p];
            for (std::int64_t r = 0; r < lead; ++r)
                for (std::int64_t c = 0; c < w; ++c)
                    dp[r * w + c] += go[r * total + off2 + c];
        }
    };
    return g.add_node(std::move(out), parent_ids, back, "concat");
}

inline Var concat(Var a, Var b) { return concat(std::vector<Var>{a, b}); }

// Half-open slice [start, end) along dimension `dim`.
inline Var slice(Var a, int dim, std::int64_t start, std::int64_t end) {
    Graph& g = *a.g;
    const Tensor& av = g.value(a);
    require(dim >= 0 && dim < av.rank(), errc::numeric, "slice: bad dim");
    require(start >= 0 && start < end && end <= av.dim(dim), errc::numeric,
            "slice: bad range [" + std::to_string(start) + "," + std::to_string(end) + ") of " +
                av.shape_str());
    std::vector<std::int64_t> dims = av.dims();
    dims[static_cast<std::size_t>(dim)] = end - start;
    Tensor out = Tensor::zeros(dims);

    // outer x mid x inner decomposition around the sliced dim
    std::int64_t inner = 1, outer = 1;
    for (int i = dim + 1; i < av.rank(); ++i) inner *= av.dim(i);
    for (int i = 0; i < dim; ++i) outer *= av.dim(i);
    std::int64_t mid = av.dim(dim), nmid = end - start;
    for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t m2 = 0; m2 < nmid; ++m2)
            for (std::int64_t i = 0; i < inner; ++i)
                out[(o * nmid + m2) * inner + i] = av[(o * mid + start + m2) * inner + i];

    int pa = a.id;
    auto back = [pa, outer, inner, mid, nmid, start](Graph& gr, int self) {
        const Tensor& go = gr.node(self).grad;
        Tensor& da = gr.grad_buffer(pa);
        for (std::int64_t o = 0; o < outer; ++o)
            for (std::int64_t m2 = 0; m2 < nmid; ++m2)
                for (std::int64_t i = 0; i < inner; ++i)
                    da[(o * mid + start + m2) * inner + i] += go[(o * nmid + m2) * inner + i];
    };
    return g.add_node(std::move(out), {pa}, back, "slice");
}

// Column gather along the last dimension; indices may repeat. The backward
// pass scatter-adds, so this doubles as a column permutation/duplication op.
inline Var gather_cols(Var a, std::vector<std::int64_t> indices) {
    Graph& g = *a.g;
    const Tensor& av = g.value(a);
    std::int64_t w = av.cols();
    for (std::int64_t ix : indices)
        require(ix >= 0 && ix < w, errc::numeric, "gather_cols: index out of range");
    std::int64_t rows = av.size() / w;
    std::int64_t nw = static_cast<std::int64_t>(indices.size());
    std::vector<std::int64_t> dims = av.dims();
    dims.back() = nw;
    Tensor out = Tensor::zeros(dims);
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t c = 0; c < nw; ++c) out[r * nw + c] = av[r * w + indices[c]];
    int pa = a.id;
    auto back = [pa, indices, rows, w, nw](Graph& gr, int self) {
        const Tensor& go = gr.node(self).grad;
        Tensor& da = gr.grad_buffer(pa);
        for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t c = 0; c < nw; ++c) da[r * w + indices[c]] += go[r * nw + c];
    };
    return g.add_node(std::move(out), {pa}, back, "gather_cols");
}

// Row lookup: table [N, D], ids of length B -> [B, D].
inline Var embedding(Var table, std::vector<std::int64_t> ids) {
    Graph& g = *table.g;
    const Tensor& tv = g.value(table);
    require(tv.rank() == 2, errc::numeric, "embedding: table must be rank 2");
    std::int64_t N = tv.dim(0), D = tv.dim(1);
    for (std::int64_t id : ids)
        require(id >= 0 && id < N, errc::data,
                "embedding: id " + std::to_string(id) + " out of range [0," + std::to_string(N) + ")");
    std::int64_t B = static_cast<std::int64_t>(ids.size());
    Tensor out = Tensor::zeros({B, D});
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t d = 0; d < D; ++d) out[b * D + d] = tv[ids[static_cast<std::size_t>(b)] * D + d];
    int pt = table.id;
    auto back = [pt, ids, D](Graph& gr, int self) {
        const Tensor& go = gr.node(self).grad;
        Tensor& dt = gr.grad_buffer(pt);
        for (std::size_t b = 0; b < ids.size(); ++b)
            for (std::int64_t d = 0; d < D; ++d)
                dt[ids[b] * D + d] += go[static_cast<std::int64_t>(b) * D + d];
    };
    return g.add_node(std::move(out), {pt}, back, "embedding");
}

// ---------------------------------------------------------------------------
// composed helpers
// ---------------------------------------------------------------------------

// Scaled dot-product attention, composed from primitives.
// q: [B,kq,d], k: [B,kk,d], v: [B,kk,dv] -> [B,kq,dv]
inline Var attention(Var q, Var k, Var v) {
    double head_dim = static_cast<double>(q.g->value(q).cols());
    Var scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(head_dim));
    return matmul(softmax(scores), v);
}

inline Var mse(Var a, Var b) {
    Var d = sub(a, b);
    return reduce_mean(mul(d, d));
}

}  // namespace gcdance::ag
