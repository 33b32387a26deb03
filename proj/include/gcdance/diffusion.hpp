#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "gcdance/common.hpp"
#include "gcdance/rng.hpp"
#include "gcdance/tensor.hpp"

namespace gcdance {

// ---------------------------------------------------------------------------
// Noise schedule: cosine alpha-bar, clamped so that abar_0 = 1 (within 1e-4),
// abar_{T-1} <= 0.05 (for T >= 2) and the sequence is strictly decreasing.
// ---------------------------------------------------------------------------

struct DiffusionSchedule {
    int timesteps = 0;
    std::vector<double> alpha_bar;

    double abar(int t) const {
        require(t >= 0 && t < timesteps, errc::numeric,
                "schedule: timestep " + std::to_string(t) + " out of range [0," +
                    std::to_string(timesteps) + ")");
        return alpha_bar[static_cast<std::size_t>(t)];
    }
    double sqrt_abar(int t) const { return std::sqrt(abar(t)); }
    double sqrt_one_minus_abar(int t) const { return std::sqrt(1.0 - abar(t)); }
};

inline DiffusionSchedule make_schedule(int timesteps, const std::string& kind = "cosine") {
    require(timesteps >= 1, errc::data, "schedule: T must be >= 1");
    require(kind == "cosine", errc::data, "schedule: unknown kind '" + kind + "'");
    DiffusionSchedule s;
    s.timesteps = timesteps;
    const double shift = 0.008;
    auto f = [&](double u) {
        double c = std::cos((u + shift) / (1.0 + shift) * M_PI / 2.0);
        return c * c;
    };
    double f0 = f(0.0);
    s.alpha_bar.resize(static_cast<std::size_t>(timesteps));
    for (int t = 0; t < timesteps; ++t)
        s.alpha_bar[static_cast<std::size_t>(t)] =
            std::clamp(f(static_cast<double>(t) / timesteps) / f0, 1e-6, 1.0);
    if (timesteps >= 2) {
        auto& ab = s.alpha_bar;
        std::size_t last = static_cast<std::size_t>(timesteps) - 1;
        ab[last] = std::min(ab[last], 0.05);
        for (std::size_t t = 1; t <= last; ++t)
            if (ab[t] >= ab[t - 1]) ab[t] = ab[t - 1] * 0.5;
    }
    return s;
}

// Forward corruption: d_t = sqrt(abar_t) m0 + sqrt(1 - abar_t) eps.
inline Tensor q_sample(const Tensor& m0, int t, const Tensor& eps,
                       const DiffusionSchedule& schedule) {
    require(m0.same_shape(eps), errc::numeric, "q_sample: noise shape mismatch");
    double a = schedule.sqrt_abar(t);
    double b = schedule.sqrt_one_minus_abar(t);
    Tensor out = m0;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a * m0[i] + b * eps[i];
    return out;
}

// ---------------------------------------------------------------------------
// Reverse sampling. The denoiser predicts the clean sample directly; each
// step re-noises the prediction back to t-1 through the forward marginal
// q(m_hat, t-1) (a config switch selects the DDPM posterior instead).
// ---------------------------------------------------------------------------

using DenoiseFn = std::function<Tensor(const Tensor& d_t, int t)>;

struct SamplerOptions {
    bool posterior = false;  // re-noise via the DDPM posterior q(d_{t-1} | d_t, m_hat)
};

namespace detail {

inline Tensor randn_like(Rng& rng, const Tensor& like) {
    Tensor out = Tensor::zeros(like.dims());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = rng.normal();
    return out;
}

}  // namespace detail

// Shared core for sample and sample_inpaint. One generator is seeded per
// call; it draws the initial noise, then per step the re-noising eps followed
// by the inpainting eps' — in that fixed order, whether or not a mask is
// present. sample() is therefore bitwise identical to sample_inpaint() with
// an all-zero mask and the same seed.
inline Tensor diffusion_sample_core(const DenoiseFn& denoise, const DiffusionSchedule& schedule,
                                    const std::vector<std::int64_t>& shape, std::uint64_t seed,
                                    const Tensor* m_known, const Tensor* mask,
                                    const SamplerOptions& opts = {}) {
    if (mask) {
        require(m_known, errc::numeric, "sampler: mask without reference motion");
        require(Tensor::zeros(shape).same_shape(*mask) && m_known->same_shape(*mask),
                errc::numeric, "sampler: mask/reference shape mismatch");
        for (std::int64_t i = 0; i < mask->size(); ++i)
            require((*mask)[i] == 0.0 || (*mask)[i] == 1.0, errc::data,
                    "sampler: mask must be binary");
    }
    Rng rng(seed);
    Tensor d = Tensor::zeros(shape);
    for (std::int64_t i = 0; i < d.size(); ++i) d[i] = rng.normal();

    int T = schedule.timesteps;
    Tensor m_hat;
    for (int t = T - 1; t >= 1; --t) {
        m_hat = denoise(d, t);
        require(m_hat.same_shape(d), errc::numeric, "sampler: denoiser changed the shape");
        require(m_hat.all_finite(), errc::numeric,
                "sampler: non-finite prediction at timestep " + std::to_string(t));
        Tensor eps = detail::randn_like(rng, d);
        if (!opts.posterior) {
            d = q_sample(m_hat, t - 1, eps, schedule);
        } else {
            double ab_t = schedule.abar(t), ab_prev = schedule.abar(t - 1);
            double alpha_t = ab_t / ab_prev;
            double beta_t = 1.0 - alpha_t;
            double mean_x0 = std::sqrt(ab_prev) * beta_t / (1.0 - ab_t);
            double mean_xt = std::sqrt(alpha_t) * (1.0 - ab_prev) / (1.0 - ab_t);
            double var = (1.0 - ab_prev) / (1.0 - ab_t) * beta_t;
            double sd = std::sqrt(std::max(0.0, var));
            Tensor next = Tensor::zeros(shape);
            for (std::int64_t i = 0; i < next.size(); ++i)
                next[i] = mean_x0 * m_hat[i] + mean_xt * d[i] + sd * eps[i];
            d = std::move(next);
        }
        Tensor eps_inpaint = detail::randn_like(rng, d);
        if (mask) {
            Tensor known_noised = q_sample(*m_known, t - 1, eps_inpaint, schedule);
            for (std::int64_t i = 0; i < d.size(); ++i)
                d[i] = (*mask)[i] * known_noised[i] + (1.0 - (*mask)[i]) * d[i];
        }
    }
    m_hat = denoise(d, 0);
    require(m_hat.all_finite(), errc::numeric, "sampler: non-finite prediction at timestep 0");
    if (mask) {
        // final constraint applied with abar = 1: known entries exactly
        for (std::int64_t i = 0; i < m_hat.size(); ++i)
            if ((*mask)[i] == 1.0) m_hat[i] = (*m_known)[i];
    }
    return m_hat;
}

inline Tensor diffusion_sample(const DenoiseFn& denoise, const DiffusionSchedule& schedule,
                               const std::vector<std::int64_t>& shape, std::uint64_t seed,
                               const SamplerOptions& opts = {}) {
    return diffusion_sample_core(denoise, schedule, shape, seed, nullptr, nullptr, opts);
}

inline Tensor diffusion_sample_inpaint(const DenoiseFn& denoise, const DiffusionSchedule& schedule,
                                       const Tensor& m_known, const Tensor& mask,
                                       std::uint64_t seed, const SamplerOptions& opts = {}) {
    return diffusion_sample_core(denoise, schedule, m_known.dims(), seed, &m_known, &mask, opts);
}

// ---------------------------------------------------------------------------
// Long-form stitching: 4-second segments with 2-second overlap. Segment n>=1
// is sampled with its first 2 seconds constrained to the previous segment's
// last 2 seconds; overlapping frames are blended with linearly decaying
// weights (1 -> 0 for the earlier segment), and blended contact flags are
// re-thresholded at 0.5.
// ---------------------------------------------------------------------------

struct StitchResult {
    Tensor frames;       // [total_k, D]
    int segments = 0;
    std::vector<std::int64_t> seam_frames;  // first frame of each overlap region
};

// Weight of the earlier segment at overlap frame i of L: decays linearly from
// 1 at the first overlapped frame to 0 at the last; the later segment gets
// the complement, so the weights sum to 1 everywhere.
inline double stitch_blend_weight(std::int64_t i, std::int64_t overlap) {
    if (overlap <= 1) return 0.0;
    return static_cast<double>(overlap - 1 - i) / static_cast<double>(overlap - 1);
}

inline StitchResult diffusion_stitch_long(const std::function<DenoiseFn(int)>& segment_denoiser,
                                          const DiffusionSchedule& schedule, int fps,
                                          std::int64_t frame_dim, double total_seconds,
                                          std::uint64_t seed, std::int64_t contact_col = -1,
                                          const SamplerOptions& opts = {}) {
    require(total_seconds >= 4.0, errc::data, "stitch: total seconds must be >= 4");
    std::int64_t seg_k = 4 * static_cast<std::int64_t>(fps);
    std::int64_t overlap = 2 * static_cast<std::int64_t>(fps);
    int segments = 1 + static_cast<int>(std::ceil(std::max(0.0, total_seconds - 4.0) / 2.0));
    std::int64_t total_k = seg_k + overlap * (segments - 1);

    StitchResult res;
    res.segments = segments;
    res.frames = Tensor::zeros({total_k, frame_dim});
    Rng base(seed);

    Tensor prev;  // previous segment [seg_k, D]
    for (int n = 0; n < segments; ++n) {
        std::uint64_t seg_seed = base.derive(static_cast<std::uint64_t>(n)).bits();
        Tensor seg;
        if (n == 0) {
            seg = diffusion_sample(segment_denoiser(0), schedule, {seg_k, frame_dim}, seg_seed,
                                   opts);
        } else {
            Tensor known = Tensor::zeros({seg_k, frame_dim});
            Tensor mask = Tensor::zeros({seg_k, frame_dim});
            for (std::int64_t i = 0; i < overlap; ++i)
                for (std::int64_t d = 0; d < frame_dim; ++d) {
                    known.at(i, d) = prev.at(seg_k - overlap + i, d);
                    mask.at(i, d) = 1.0;
                }
            seg = diffusion_sample_inpaint(segment_denoiser(n), schedule, known, mask, seg_seed,
                                           opts);
        }

        std::int64_t start = static_cast<std::int64_t>(n) * overlap;
        if (n == 0) {
            for (std::int64_t i = 0; i < seg_k; ++i)
                for (std::int64_t d = 0; d < frame_dim; ++d) res.frames.at(i, d) = seg.at(i, d);
        } else {
            res.seam_frames.push_back(start);
            // blend the overlap: weight of the already-written content decays
            // linearly 1 -> 0 across the overlap
            for (std::int64_t i = 0; i < overlap; ++i) {
                double w_prev = stitch_blend_weight(i, overlap);
                for (std::int64_t d = 0; d < frame_dim; ++d) {
                    double blended = w_prev * res.frames.at(start + i, d) +
                                     (1.0 - w_prev) * seg.at(i, d);
                    if (contact_col >= 0 && d >= contact_col && d < contact_col + 4)
                        blended = blended >= 0.5 ? 1.0 : 0.0;
                    res.frames.at(start + i, d) = blended;
                }
            }
            for (std::int64_t i = overlap; i < seg_k; ++i)
                for (std::int64_t d = 0; d < frame_dim; ++d)
                    res.frames.at(start + i, d) = seg.at(i, d);
        }
        prev = std::move(seg);
    }
    return res;
}

}  // namespace gcdance
