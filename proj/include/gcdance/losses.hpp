#pragma once

#include "gcdance/autograd.hpp"
#include "gcdance/motion.hpp"
#include "gcdance/skeleton.hpp"

namespace gcdance {

namespace detail {

inline std::int64_t loss_rows(const Tensor& t) {
    // number of (batch, frame) rows
    return t.rank() == 3 ? t.dim(0) * t.dim(1) : t.dim(0);
}

inline std::int64_t frame_axis(const Tensor& t) { return t.rank() == 3 ? 1 : 0; }

}  // namespace detail

// L_S: mean squared error over all entries and batch.
inline ag::Var loss_simple(ag::Var m_hat, const Tensor& m0) {
    ag::Graph& g = *m_hat.g;
    require(g.value(m_hat).same_shape(m0), errc::numeric, "loss_simple: shape mismatch");
    ag::Var d = ag::sub(m_hat, g.constant(m0));
    return ag::reduce_mean(ag::mul(d, d));
}

// L_J: (1/k) sum_j ||FK(m^j) - FK(m_hat^j)||^2, averaged over the batch.
// Inputs are in raw (unnormalized) motion space.
inline ag::Var loss_joint(ag::Var m_hat, const Tensor& m, const Skeleton& skel) {
    ag::Graph& g = *m_hat.g;
    const Tensor& mh = g.value(m_hat);
    require(mh.same_shape(m), errc::numeric, "loss_joint: shape mismatch");
    require(mh.cols() == skel.frame_dim(), errc::data, "loss_joint: skeleton mismatch");
    Tensor ref_positions = forward_kinematics(m, skel);
    ag::Var pred_positions = fk_positions(m_hat, skel);
    ag::Var d = ag::sub(pred_positions, g.constant(ref_positions));
    double rows = static_cast<double>(detail::loss_rows(m));
    return ag::scale(ag::reduce_sum(ag::mul(d, d)), 1.0 / rows);
}

// L_V: (1/(k-1)) sum_j ||(m^{j+1} - m^j) - (m_hat^{j+1} - m_hat^j)||^2,
// averaged over the batch.
inline ag::Var loss_velocity(ag::Var m_hat, const Tensor& m) {
    ag::Graph& g = *m_hat.g;
    const Tensor& mh = g.value(m_hat);
    require(mh.same_shape(m), errc::numeric, "loss_velocity: shape mismatch");
    int axis = static_cast<int>(detail::frame_axis(m));
    std::int64_t k = m.dim(axis);
    require(k >= 2, errc::data, "loss_velocity: need at least 2 frames");

    ag::Var dpred = ag::sub(ag::slice(m_hat, axis, 1, k), ag::slice(m_hat, axis, 0, k - 1));
    Tensor dref = Tensor::zeros(g.value(dpred).dims());
    {
        std::int64_t D = m.cols();
        std::int64_t B = m.rank() == 3 ? m.dim(0) : 1;
        for (std::int64_t b = 0; b < B; ++b)
            for (std::int64_t j = 0; j + 1 < k; ++j)
                for (std::int64_t c = 0; c < D; ++c)
                    dref[(b * (k - 1) + j) * D + c] =
                        m[(b * k + j + 1) * D + c] - m[(b * k + j) * D + c];
    }
    ag::Var d = ag::sub(dpred, g.constant(dref));
    double pairs = static_cast<double>(detail::loss_rows(m) / k * (k - 1));
    return ag::scale(ag::reduce_sum(ag::mul(d, d)), 1.0 / pairs);
}

// L_F: (1/(k-1)) sum_j ||(FK(m_hat^{j+1}) - FK(m_hat^j))|_{heel,toe} * b_hat^j||^2
// with the predicted contact flags read from m_hat's own contact dims.
inline ag::Var loss_contact(ag::Var m_hat, const Skeleton& skel) {
    ag::Graph& g = *m_hat.g;
    const Tensor& mh = g.value(m_hat);
    require(mh.cols() == skel.frame_dim(), errc::data, "loss_contact: skeleton mismatch");
    int axis = static_cast<int>(detail::frame_axis(mh));
    std::int64_t k = mh.dim(axis);
    require(k >= 2, errc::data, "loss_contact: need at least 2 frames");
    auto markers = skel.contact_markers();

    ag::Var positions = fk_positions(m_hat, skel);
    std::vector<std::int64_t> marker_cols;
    for (int m2 = 0; m2 < 4; ++m2)
        for (int c = 0; c < 3; ++c)
            marker_cols.push_back(markers[static_cast<std::size_t>(m2)] * 3 + c);
    ag::Var marker_pos = ag::gather_cols(positions, marker_cols);  // [.., k, 12]
    ag::Var vel = ag::sub(ag::slice(marker_pos, axis, 1, k), ag::slice(marker_pos, axis, 0, k - 1));

    // predicted flags, one per marker, expanded to xyz
    std::vector<std::int64_t> contact_cols;
    for (int m2 = 0; m2 < 4; ++m2)
        for (int c = 0; c < 3; ++c) contact_cols.push_back(skel.contact_col() + m2);
    ag::Var flags = ag::slice(ag::gather_cols(m_hat, contact_cols), axis, 0, k - 1);

    ag::Var masked = ag::mul(vel, flags);
    double pairs = static_cast<double>(detail::loss_rows(mh) / k * (k - 1));
    return ag::scale(ag::reduce_sum(ag::mul(masked, masked)), 1.0 / pairs);
}

// Fixed-weight aggregation: sum_i w_i L_i.
inline ag::Var aggregate_fixed(const std::vector<ag::Var>& losses,
                               const std::vector<double>& weights) {
    require(!losses.empty(), errc::numeric, "aggregate_fixed: no losses");
    require(losses.size() == weights.size(), errc::numeric,
            "aggregate_fixed: weight count mismatch");
    for (double w : weights)
        require(w >= 0.0, errc::numeric, "aggregate_fixed: negative weight");
    ag::Var acc = ag::scale(losses[0], weights[0]);
    for (std::size_t i = 1; i < losses.size(); ++i)
        acc = ag::add(acc, ag::scale(losses[i], weights[i]));
    return acc;
}

inline double aggregate_fixed_value(const std::vector<double>& losses,
                                    const std::vector<double>& weights) {
    require(losses.size() == weights.size(), errc::numeric,
            "aggregate_fixed: weight count mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < losses.size(); ++i) {
        require(weights[i] >= 0.0, errc::numeric, "aggregate_fixed: negative weight");
        acc += weights[i] * losses[i];
    }
    return acc;
}

}  // namespace gcdance
