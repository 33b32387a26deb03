#pragma once

#include <cmath>
#include <string>
#include <unordered_map>

#include "gcdance/autograd.hpp"
#include "gcdance/params.hpp"
#include "gcdance/rng.hpp"

namespace gcdance {

// Binds ParameterStore tensors into a Graph as leaves, one leaf per parameter
// per graph, so gradients can be read back by name after backward.
class GraphBinding {
public:
    GraphBinding(ag::Graph& g, ParameterStore& store) : g_(&g), store_(&store) {}

    ag::Var operator()(const std::string& name) {
        auto it = leaves_.find(name);
        if (it != leaves_.end()) return it->second;
        ag::Var v = g_->leaf(store_->at(name), name);
        leaves_[name] = v;
        return v;
    }

    bool bound(const std::string& name) const { return leaves_.count(name) != 0; }
    ag::Var var(const std::string& name) const { return leaves_.at(name); }
    ag::Graph& graph() { return *g_; }
    ParameterStore& store() { return *store_; }

    // Gradient of the last backward w.r.t. the full flattened parameter
    // vector; parameters whose leaves were never bound or reached get zeros.
    void flat_grad(double* dst) const {
        std::size_t off = 0;
        for (std::size_t i = 0; i < store_->count(); ++i) {
            const Tensor& val = store_->value(i);
            auto it = leaves_.find(store_->name(i));
            if (it == leaves_.end()) {
                std::fill(dst + off, dst + off + val.size(), 0.0);
            } else {
                g_->copy_grad(it->second, dst + off);
            }
            off += static_cast<std::size_t>(val.size());
        }
    }

private:
    ag::Graph* g_;
    ParameterStore* store_;
    std::unordered_map<std::string, ag::Var> leaves_;
};

inline void init_linear(ParameterStore& store, const std::string& prefix, std::int64_t in,
                        std::int64_t out, Rng& rng) {
    double stddev = std::sqrt(2.0 / static_cast<double>(in + out));
    store.create(prefix + ".w", Tensor::randn(rng, {in, out}, stddev));
    store.create(prefix + ".b", Tensor::zeros({out}));
}

inline ag::Var linear(GraphBinding& bind, const std::string& prefix, ag::Var x) {
    return ag::add(ag::matmul(x, bind(prefix + ".w"), prefix), bind(prefix + ".b"));
}

// Sinusoidal embedding of an integer timestep, injective over practical T.
inline Tensor timestep_embedding(const std::vector<std::int64_t>& t, std::int64_t dim) {
    Tensor out = Tensor::zeros({static_cast<std::int64_t>(t.size()), dim});
    for (std::size_t b = 0; b < t.size(); ++b)
        for (std::int64_t i = 0; i < dim / 2; ++i) {
            double w = std::exp(-std::log(10000.0) * 2.0 * static_cast<double>(i) /
                                static_cast<double>(dim));
            out.at(static_cast<std::int64_t>(b), 2 * i) = std::sin(static_cast<double>(t[b]) * w);
            out.at(static_cast<std::int64_t>(b), 2 * i + 1) = std::cos(static_cast<double>(t[b]) * w);
        }
    return out;
}

// Fixed sinusoidal positions added to frame features so attention can tell
// frames apart.
inline Tensor positional_encoding(std::int64_t k, std::int64_t dim) {
    Tensor out = Tensor::zeros({k, dim});
    for (std::int64_t p = 0; p < k; ++p)
        for (std::int64_t i = 0; i < dim / 2; ++i) {
            double w = std::exp(-std::log(10000.0) * 2.0 * static_cast<double>(i) /
                                static_cast<double>(dim));
            out.at(p, 2 * i) = std::sin(static_cast<double>(p) * w);
            out.at(p, 2 * i + 1) = std::cos(static_cast<double>(p) * w);
        }
    return out;
}

// Adam with bias correction; moments live beside the parameters and persist
// in training-state checkpoints.
class AdamOptimizer {
public:
    AdamOptimizer(std::int64_t dim, double lr, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps),
          m_(static_cast<std::size_t>(dim), 0.0), v_(static_cast<std::size_t>(dim), 0.0) {}

    void step(std::vector<double>& theta, const std::vector<double>& grad) {
        require(theta.size() == m_.size() && grad.size() == m_.size(), errc::numeric,
                "adam: dimension mismatch");
        ++t_;
        double bc1 = 1.0 - std::pow(beta1_, t_);
        double bc2 = 1.0 - std::pow(beta2_, t_);
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
            v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
            theta[i] -= lr_ * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps_);
        }
    }

    std::vector<double>& m() { return m_; }
    std::vector<double>& v() { return v_; }
    int step_count() const { return t_; }
    void set_step_count(int t) { t_ = t; }

private:
    double lr_, beta1_, beta2_, eps_;
    int t_ = 0;
    std::vector<double> m_, v_;
};

}  // namespace gcdance
