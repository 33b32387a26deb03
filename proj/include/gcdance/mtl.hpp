#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "gcdance/common.hpp"

namespace gcdance {

// Per-task parameter gradients: column i holds the gradient of loss i over
// the full flattened parameter vector. Column order is fixed (S, J, V, F, C
// in the full objective). Stored column-major so each task's gradient is
// contiguous.
struct TaskGradients {
    std::int64_t dim = 0;
    std::vector<std::string> task_names;
    std::vector<double> loss_values;
    std::vector<double> columns;  // dim * T, column-major

    int tasks() const { return static_cast<int>(task_names.size()); }
    double* col(int t) { return columns.data() + static_cast<std::int64_t>(t) * dim; }
    const double* col(int t) const { return columns.data() + static_cast<std::int64_t>(t) * dim; }

    void reserve(std::int64_t d, std::vector<std::string> names) {
        dim = d;
        task_names = std::move(names);
        loss_values.assign(task_names.size(), 0.0);
        columns.assign(static_cast<std::size_t>(dim) * task_names.size(), 0.0);
    }

    // Gram matrix G^T G.
    Eigen::MatrixXd gram() const {
        int T = tasks();
        Eigen::MatrixXd m(T, T);
        for (int i = 0; i < T; ++i)
            for (int j = i; j < T; ++j) {
                double acc = 0.0;
                const double* a = col(i);
                const double* b = col(j);
                for (std::int64_t r = 0; r < dim; ++r) acc += a[r] * b[r];
                m(i, j) = acc;
                m(j, i) = acc;
            }
        return m;
    }

    std::vector<double> combine(const std::vector<double>& alpha) const {
        require(static_cast<int>(alpha.size()) == tasks(), errc::numeric,
                "combine: alpha size mismatch");
        std::vector<double> update(static_cast<std::size_t>(dim), 0.0);
        for (int t = 0; t < tasks(); ++t) {
            const double* c = col(t);
            double a = alpha[static_cast<std::size_t>(t)];
            for (std::int64_t r = 0; r < dim; ++r) update[static_cast<std::size_t>(r)] += a * c[r];
        }
        return update;
    }
};

struct AggregationResult {
    std::vector<double> update;  // G alpha, length dim
    std::vector<double> alpha;   // length T
    double residual = 0.0;
    int iterations = 0;
    int rank = 0;
};

// ---------------------------------------------------------------------------
// Nash bargaining aggregation: alpha > 0 solving (G^T G) alpha = 1/alpha.
// Damped Newton on beta = log(alpha) (positivity by construction); the system
// is the stationarity condition of the strictly convex problem
//   min_alpha>0  0.5 alpha^T M alpha - sum_i log(alpha_i).
// Falls back to 500 damped fixed-point iterations if Newton stalls.
// ---------------------------------------------------------------------------

struct NashOptions {
    double tolerance = 1e-8;
    int max_newton_iters = 100;
    int max_fixed_point_iters = 500;
};

inline AggregationResult nash_aggregate(const TaskGradients& g, const NashOptions& opts = {}) {
    int T = g.tasks();
    require(T >= 1, errc::numeric, "nash: no tasks");
    Eigen::MatrixXd M = g.gram();

    // regularize near-singular Gram matrices
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M);
    if (eig.eigenvalues().minCoeff() < 1e-10)
        M += 1e-8 * Eigen::MatrixXd::Identity(T, T);

    Eigen::VectorXd beta(T);
    for (int i = 0; i < T; ++i) {
        double norm = std::sqrt(std::max(M(i, i), 0.0));
        beta(i) = -std::log(std::max(norm, 1e-6));
    }

    auto residual_of = [&](const Eigen::VectorXd& b) {
        Eigen::VectorXd a = b.array().exp();
        Eigen::VectorXd r = M * a - a.cwiseInverse();
        return std::make_pair(r, r.cwiseAbs().maxCoeff());
    };

    auto [res_vec, res_norm] = residual_of(beta);
    int iters = 0;
    for (; iters < opts.max_newton_iters && res_norm >= opts.tolerance; ++iters) {
        Eigen::VectorXd a = beta.array().exp();
        // Jacobian of F(beta) = M e^beta - e^{-beta}: M diag(a) + diag(1/a)
        Eigen::MatrixXd J = M * a.asDiagonal();
        J += Eigen::VectorXd(a.cwiseInverse()).asDiagonal();
        Eigen::VectorXd step = J.partialPivLu().solve(-res_vec);
        double scale = 1.0;
        bool improved = false;
        for (int back = 0; back < 40; ++back) {
            Eigen::VectorXd candidate = beta + scale * step;
            auto [rv, rn] = residual_of(candidate);
            if (rn < res_norm) {
                beta = candidate;
                res_vec = rv;
                res_norm = rn;
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if (!improved) break;
    }

    if (res_norm >= opts.tolerance) {
        // damped fixed point: alpha <- (1-d) alpha + d / (M alpha)
        Eigen::VectorXd a = beta.array().exp();
        for (int it = 0; it < opts.max_fixed_point_iters; ++it, ++iters) {
            Eigen::VectorXd ma = M * a;
            Eigen::VectorXd next = a;
            for (int i = 0; i < T; ++i)
                if (ma(i) > 0.0) next(i) = 0.5 * a(i) + 0.5 / ma(i);
            a = next.cwiseMax(1e-12);
            Eigen::VectorXd r = M * a - a.cwiseInverse();
            res_norm = r.cwiseAbs().maxCoeff();
            if (res_norm < opts.tolerance) break;
        }
        beta = a.array().log();
    }

    require(res_norm < opts.tolerance, errc::numeric,
            "nash: solver did not converge, residual " + std::to_string(res_norm));

    AggregationResult out;
    out.alpha.resize(static_cast<std::size_t>(T));
    Eigen::VectorXd a = beta.array().exp();
    for (int i = 0; i < T; ++i) out.alpha[static_cast<std::size_t>(i)] = a(i);
    out.update = g.combine(out.alpha);
    out.residual = res_norm;
    out.iterations = iters;
    out.rank = T;
    return out;
}

// ---------------------------------------------------------------------------
// Aligned aggregation: replace G by its nearest (scaled) orthonormal matrix.
// M = G^T G = V diag(lambda) V^T; keep eigenvalues above lambda_max * 1e-9;
// B = sqrt(lambda_R) V Sigma^{-1} V^T with Sigma = diag(sqrt(lambda_r)) over
// the retained spectrum and lambda_R the smallest retained eigenvalue;
// alpha = B w; update = G alpha.
// ---------------------------------------------------------------------------

inline AggregationResult aligned_aggregate(const TaskGradients& g,
                                           std::vector<double> w = {}) {
    int T = g.tasks();
    require(T >= 1, errc::numeric, "aligned: no tasks");
    if (w.empty()) w.assign(static_cast<std::size_t>(T), 1.0);
    require(static_cast<int>(w.size()) == T, errc::numeric, "aligned: weight size mismatch");

    Eigen::MatrixXd M = g.gram();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M);
    double lambda_max = eig.eigenvalues().maxCoeff();
    require(lambda_max > 0.0, errc::numeric, "aligned: degenerate gradient system");

    double cutoff = lambda_max * 1e-9;
    std::vector<int> retained;
    for (int i = 0; i < T; ++i)
        if (eig.eigenvalues()(i) > cutoff) retained.push_back(i);
    require(!retained.empty(), errc::numeric, "aligned: degenerate gradient system");

    double lambda_min_retained = eig.eigenvalues()(retained.front());
    for (int i : retained) lambda_min_retained = std::min(lambda_min_retained, eig.eigenvalues()(i));

    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(T, T);
    for (int i : retained) {
        Eigen::VectorXd v = eig.eigenvectors().col(i);
        B += v * v.transpose() / std::sqrt(eig.eigenvalues()(i));
    }
    B *= std::sqrt(lambda_min_retained);

    AggregationResult out;
    out.alpha.resize(static_cast<std::size_t>(T));
    Eigen::Map<const Eigen::VectorXd> wv(w.data(), T);
    Eigen::VectorXd alpha = B * wv;
    for (int i = 0; i < T; ++i) out.alpha[static_cast<std::size_t>(i)] = alpha(i);
    out.update = g.combine(out.alpha);
    out.rank = static_cast<int>(retained.size());
    out.iterations = 1;

    // self-check: (G B)^T (G B) == lambda_R * projector onto the retained
    // eigenspace (an identity at full rank)
    Eigen::MatrixXd gram_hat = B.transpose() * M * B;
    Eigen::MatrixXd proj = Eigen::MatrixXd::Zero(T, T);
    for (int i : retained)
        proj += eig.eigenvectors().col(i) * eig.eigenvectors().col(i).transpose();
    out.residual = (gram_hat - lambda_min_retained * proj).cwiseAbs().maxCoeff();
    return out;
}

}  // namespace gcdance
