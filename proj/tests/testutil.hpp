#pragma once

#include <algorithm>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "gcdance/autograd.hpp"
#include "gcdance/rng.hpp"
#include "gcdance/tensor.hpp"

namespace testutil {

using gcdance::Rng;
using gcdance::Tensor;
namespace ag = gcdance::ag;

// Builds a scalar-rooted graph from a set of leaf tensors. The builder gets
// the graph plus leaf Vars in input order and returns the scalar root.
using ScalarBuild = std::function<ag::Var(ag::Graph&, const std::vector<ag::Var>&)>;

inline double eval_scalar(const ScalarBuild& build, const std::vector<Tensor>& inputs) {
    ag::Graph g;
    std::vector<ag::Var> leaves;
    leaves.reserve(inputs.size());
    for (const Tensor& t : inputs) leaves.push_back(g.leaf(t));
    return g.value(build(g, leaves)).item();
}

struct FdResult {
    double median_rel = 0.0;
    double max_rel = 0.0;
    double frac_below(double thresh) const {
        if (rels.empty()) return 1.0;
        std::size_t n = 0;
        for (double r : rels)
            if (r < thresh) ++n;
        return static_cast<double>(n) / static_cast<double>(rels.size());
    }
    std::vector<double> rels;
};

// Central finite differences against reverse-mode gradients, over every entry
// of every input. Relative error uses a symmetric denominator so near-zero
// gradients do not blow up on FD roundoff noise.
inline FdResult fd_compare(const ScalarBuild& build, std::vector<Tensor> inputs,
                           double h = 1e-4) {
    ag::Graph g;
    std::vector<ag::Var> leaves;
    for (const Tensor& t : inputs) leaves.push_back(g.leaf(t));
    ag::Var root = build(g, leaves);
    g.backward(root);

    FdResult res;
    for (std::size_t which = 0; which < inputs.size(); ++which) {
        Tensor analytic = g.grad(leaves[which]);
        for (std::int64_t i = 0; i < inputs[which].size(); ++i) {
            double keep = inputs[which][i];
            inputs[which][i] = keep + h;
            double fp = eval_scalar(build, inputs);
            inputs[which][i] = keep - h;
            double fm = eval_scalar(build, inputs);
            inputs[which][i] = keep;
            double fd = (fp - fm) / (2.0 * h);
            double ad = analytic[i];
            double rel = std::abs(ad - fd) / std::max(1e-6, std::abs(ad) + std::abs(fd));
            res.rels.push_back(rel);
        }
    }
    std::vector<double> sorted = res.rels;
    std::sort(sorted.begin(), sorted.end());
    res.median_rel = sorted.empty() ? 0.0 : sorted[sorted.size() / 2];
    res.max_rel = sorted.empty() ? 0.0 : sorted.back();
    return res;
}

// Weighted sum of all entries with fixed pseudo-random weights: turns any
// tensor-valued op into a scalar root that exercises every output entry.
inline ag::Var weighted_sum(ag::Graph& g, ag::Var x, std::uint64_t seed = 17) {
    Rng rng(seed);
    Tensor w = Tensor::zeros(g.value(x).dims());
    for (std::int64_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(0.5, 1.5);
    return ag::reduce_sum(ag::mul(x, g.constant(w)));
}

inline Tensor random_tensor(Rng& rng, std::vector<std::int64_t> dims, double lo = -1.0,
                            double hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(dims));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Unique scratch directory under the system temp root, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        dir_ = std::filesystem::temp_directory_path() /
               ("gcdance_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter++));
        std::filesystem::create_directories(dir_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(dir_, ec);
    }
    const std::filesystem::path& path() const { return dir_; }

private:
    std::filesystem::path dir_;
};

}  // namespace testutil
