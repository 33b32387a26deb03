#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gcdance/autograd.hpp"
#include "gcdance/common.hpp"
#include "gcdance/io.hpp"
#include "gcdance/rotation.hpp"
#include "gcdance/skeleton.hpp"
#include "gcdance/tensor.hpp"

namespace gcdance {

// A motion clip: frames[k, D] where D = J*6 + 3 + 4 (6D rotations per joint,
// root translation, foot-contact flags).
struct MotionClip {
    int fps = 30;
    Tensor frames;  // rank 2 [k, D]

    std::int64_t frame_count() const { return frames.dim(0); }
    std::int64_t frame_dim() const { return frames.dim(1); }

    void validate(const Skeleton& skel) const {
        require(frames.rank() == 2, errc::data, "clip: frames must be rank 2");
        require(frame_dim() == skel.frame_dim(), errc::data,
                "clip: frame dim " + std::to_string(frame_dim()) + " does not match skeleton (" +
                    std::to_string(skel.frame_dim()) + ")");
        require(frames.all_finite(), errc::data, "clip: non-finite entries");
        std::int64_t cc = skel.contact_col();
        for (std::int64_t i = 0; i < frame_count(); ++i)
            for (int c = 0; c < 4; ++c) {
                double v = frames.at(i, cc + c);
                require(v >= 0.0 && v <= 1.0, errc::data, "clip: contact flag outside [0,1]");
            }
    }
};

// ---------------------------------------------------------------------------
// GCMO binary motion format
// magic "GCMO", u32 version=1, u32 fps, u32 joint-count, u32 frame-count,
// u32 frame-dim, then frame-count x frame-dim little-endian float32 row-major.
// ---------------------------------------------------------------------------

inline void save_gcmo(const MotionClip& clip, int joint_count, const fs::path& path) {
    ByteWriter w;
    w.bytes("GCMO", 4);
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(clip.fps));
    w.u32(static_cast<std::uint32_t>(joint_count));
    w.u32(static_cast<std::uint32_t>(clip.frame_count()));
    w.u32(static_cast<std::uint32_t>(clip.frame_dim()));
    w.f32_array(clip.frames.data(), static_cast<std::size_t>(clip.frames.size()));
    atomic_write(path, w.str());
}

struct GcmoFile {
    MotionClip clip;
    int joint_count = 0;
};

inline GcmoFile load_gcmo(const fs::path& path) {
    std::string bytes = read_file(path);
    ByteReader r(bytes, path.string());
    r.expect_magic("GCMO", "GCMO");
    std::uint32_t version = r.u32();
    require(version == 1, errc::data, path.string() + ": unsupported GCMO version");
    GcmoFile f;
    f.clip.fps = static_cast<int>(r.u32());
    f.joint_count = static_cast<int>(r.u32());
    std::uint32_t frames = r.u32();
    std::uint32_t dim = r.u32();
    require(frames > 0 && dim > 0, errc::data, path.string() + ": empty GCMO");
    f.clip.frames = Tensor::zeros({frames, dim});
    r.f32_array(f.clip.frames.data(), static_cast<std::size_t>(frames) * dim);
    return f;
}

// ---------------------------------------------------------------------------
// Forward kinematics
// position(child) = position(parent) + R_global(parent) * offset(child);
// the root sits at the frame's translation dims.
// ---------------------------------------------------------------------------

// Single frame: writes J*3 world positions; optionally keeps per-joint global
// rotations for reuse.
inline void fk_frame(const double* frame, const Skeleton& skel, double* positions,
                     Mat3* global_rot = nullptr) {
    int J = skel.joint_count();
    std::vector<Mat3> rg_local;
    Mat3* rg = global_rot;
    if (!rg) {
        rg_local.resize(static_cast<std::size_t>(J));
        rg = rg_local.data();
    }
    std::int64_t tc = skel.trans_col();
    for (int j = 0; j < J; ++j) {
        Mat3 local = rot6d_to_matrix(frame + j * 6);
        int p = skel.parents[static_cast<std::size_t>(j)];
        if (p < 0) {
            rg[j] = local;
            positions[0] = frame[tc];
            positions[1] = frame[tc + 1];
            positions[2] = frame[tc + 2];
        } else {
            rg[j] = mat3_mul(rg[p], local);
            Vec3 delta = mat3_apply(rg[p], skel.offsets[static_cast<std::size_t>(j)]);
            positions[j * 3 + 0] = positions[p * 3 + 0] + delta[0];
            positions[j * 3 + 1] = positions[p * 3 + 1] + delta[1];
            positions[j * 3 + 2] = positions[p * 3 + 2] + delta[2];
        }
    }
}

// Motion rows -> world positions. Accepts [k, D] or [B, k, D]; the output
// replaces the last dimension with J*3.
inline Tensor forward_kinematics(const Tensor& motion, const Skeleton& skel) {
    require(motion.rank() >= 2, errc::data, "fk: motion must be rank 2 or 3");
    require(motion.cols() == skel.frame_dim(), errc::data,
            "fk: frame dim " + std::to_string(motion.cols()) + " does not match skeleton (" +
                std::to_string(skel.frame_dim()) + ")");
    std::int64_t rows = motion.size() / motion.cols();
    std::int64_t J3 = static_cast<std::int64_t>(skel.joint_count()) * 3;
    std::vector<std::int64_t> dims = motion.dims();
    dims.back() = J3;
    Tensor out = Tensor::zeros(dims);
    for (std::int64_t r = 0; r < rows; ++r)
        fk_frame(motion.data() + r * motion.cols(), skel, out.data() + r * J3);
    return out;
}

inline Tensor forward_kinematics(const MotionClip& clip, const Skeleton& skel) {
    clip.validate(skel);
    return forward_kinematics(clip.frames, skel);
}

// Adjoint of one FK frame: scatter dL/d(positions) back to dL/d(frame).
inline void fk_frame_backward(const double* frame, const Skeleton& skel, const double* pos_bar,
                              double* frame_bar) {
    int J = skel.joint_count();
    std::vector<Mat3> rg(static_cast<std::size_t>(J));
    std::vector<Mat3> local(static_cast<std::size_t>(J));
    for (int j = 0; j < J; ++j) {
        local[static_cast<std::size_t>(j)] = rot6d_to_matrix(frame + j * 6);
        int p = skel.parents[static_cast<std::size_t>(j)];
        rg[static_cast<std::size_t>(j)] =
            p < 0 ? local[static_cast<std::size_t>(j)] : mat3_mul(rg[static_cast<std::size_t>(p)], local[static_cast<std::size_t>(j)]);
    }

    std::vector<Vec3> pbar(static_cast<std::size_t>(J));
    std::vector<Mat3> rgbar(static_cast<std::size_t>(J), Mat3{});
    for (int j = 0; j < J; ++j)
        pbar[static_cast<std::size_t>(j)] = {pos_bar[j * 3], pos_bar[j * 3 + 1], pos_bar[j * 3 + 2]};

    for (int j = J - 1; j >= 1; --j) {
        int p = skel.parents[static_cast<std::size_t>(j)];
        const Vec3& off = skel.offsets[static_cast<std::size_t>(j)];
        // position chain: p_j = p_p + Rg_p off_j
        for (int r = 0; r < 3; ++r) {
            pbar[static_cast<std::size_t>(p)][static_cast<std::size_t>(r)] += pbar[static_cast<std::size_t>(j)][static_cast<std::size_t>(r)];
            for (int c = 0; c < 3; ++c)
                rgbar[static_cast<std::size_t>(p)][static_cast<std::size_t>(r * 3 + c)] +=
                    pbar[static_cast<std::size_t>(j)][static_cast<std::size_t>(r)] * off[static_cast<std::size_t>(c)];
        }
        // rotation chain: Rg_j = Rg_p R_j
        const Mat3& gb = rgbar[static_cast<std::size_t>(j)];
        const Mat3& lj = local[static_cast<std::size_t>(j)];
        Mat3& gp = rgbar[static_cast<std::size_t>(p)];
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int m = 0; m < 3; ++m)
                    acc += gb[static_cast<std::size_t>(r * 3 + m)] * lj[static_cast<std::size_t>(c * 3 + m)];
                gp[static_cast<std::size_t>(r * 3 + c)] += acc;  // gb * lj^T
            }
        Mat3 lbar{};
        const Mat3& rgp = rg[static_cast<std::size_t>(p)];
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int m = 0; m < 3; ++m)
                    acc += rgp[static_cast<std::size_t>(m * 3 + r)] * gb[static_cast<std::size_t>(m * 3 + c)];
                lbar[static_cast<std::size_t>(r * 3 + c)] = acc;  // rgp^T * gb
            }
        rot6d_backward(frame + j * 6, lbar, frame_bar + j * 6);
    }
    // root: local rotation == global rotation; translation == root position
    rot6d_backward(frame, rgbar[0], frame_bar);
    std::int64_t tc = skel.trans_col();
    frame_bar[tc] += pbar[0][0];
    frame_bar[tc + 1] += pbar[0][1];
    frame_bar[tc + 2] += pbar[0][2];
}

// FK as a fused autograd op (one node regardless of joint count). The adjoint
// is hand-derived above and pinned by finite differences in the test suite.
inline ag::Var fk_positions(ag::Var motion, const Skeleton& skel) {
    ag::Graph& g = *motion.g;
    const Tensor& mv = g.value(motion);
    Tensor out = forward_kinematics(mv, skel);
    int pm = motion.id;
    auto back = [pm, sk = skel](ag::Graph& gr, int self) {
        const Tensor& go = gr.node(self).grad;
        const Tensor& m = gr.value_of(pm);
        Tensor& dm = gr.grad_buffer(pm);
        std::int64_t D = m.cols();
        std::int64_t J3 = go.cols();
        std::int64_t rows = m.size() / D;
        for (std::int64_t r = 0; r < rows; ++r)
            fk_frame_backward(m.data() + r * D, sk, go.data() + r * J3, dm.data() + r * D);
    };
    return g.add_node(std::move(out), {pm}, back, "fk_positions");
}

// ---------------------------------------------------------------------------
// Foot contacts: flag 1 iff the marker moves slower than v_thresh
// (units/frame, strict) AND sits below h_thresh (strict).
// ---------------------------------------------------------------------------

inline Tensor detect_foot_contacts(const Tensor& positions, const Skeleton& skel,
                                   double v_thresh = 0.01, double h_thresh = 0.05) {
    require(positions.rank() == 2, errc::data, "contacts: positions must be rank 2 [k, J*3]");
    std::int64_t k = positions.dim(0);
    require(k >= 2, errc::data, "contacts: need at least 2 frames for velocity");
    auto markers = skel.contact_markers();
    Tensor flags = Tensor::zeros({k, 4});
    for (std::int64_t i = 0; i < k; ++i) {
        std::int64_t a = i < k - 1 ? i : i - 1;  // last frame reuses the final velocity
        for (int m = 0; m < 4; ++m) {
            std::int64_t col = markers[static_cast<std::size_t>(m)] * 3;
            double dx = positions.at(a + 1, col) - positions.at(a, col);
            double dy = positions.at(a + 1, col + 1) - positions.at(a, col + 1);
            double dz = positions.at(a + 1, col + 2) - positions.at(a, col + 2);
            double speed = std::sqrt(dx * dx + dy * dy + dz * dz);
            double height = positions.at(i, col + 2);
            flags.at(i, m) = (speed < v_thresh && height < h_thresh) ? 1.0 : 0.0;
        }
    }
    return flags;
}

// ---------------------------------------------------------------------------
// Per-channel normalization. Contact flags pass through unnormalized.
// ---------------------------------------------------------------------------

struct NormStats {
    Tensor mean;  // [D]
    Tensor stddev;
    bool valid = false;
};

inline NormStats compute_norm_stats(const std::vector<MotionClip>& clips,
                                    const Skeleton& skel) {
    require(!clips.empty(), errc::data, "norm stats: no clips");
    std::int64_t D = skel.frame_dim();
    NormStats st;
    st.mean = Tensor::zeros({D});
    st.stddev = Tensor::zeros({D});
    std::int64_t n = 0;
    for (const auto& c : clips) {
        require(c.frame_dim() == D, errc::data, "norm stats: dim mismatch");
        for (std::int64_t i = 0; i < c.frame_count(); ++i)
            for (std::int64_t d = 0; d < D; ++d) st.mean[d] += c.frames.at(i, d);
        n += c.frame_count();
    }
    for (std::int64_t d = 0; d < D; ++d) st.mean[d] /= static_cast<double>(n);
    for (const auto& c : clips)
        for (std::int64_t i = 0; i < c.frame_count(); ++i)
            for (std::int64_t d = 0; d < D; ++d) {
                double v = c.frames.at(i, d) - st.mean[d];
                st.stddev[d] += v * v;
            }
    for (std::int64_t d = 0; d < D; ++d)
        st.stddev[d] = std::max(1e-6, std::sqrt(st.stddev[d] / static_cast<double>(n)));
    std::int64_t cc = skel.contact_col();
    for (int c = 0; c < 4; ++c) {
        st.mean[cc + c] = 0.0;
        st.stddev[cc + c] = 1.0;
    }
    st.valid = true;
    return st;
}

inline Tensor normalize_frames(const Tensor& frames, const NormStats& st) {
    require(st.valid, errc::data, "normalize: stats not computed");
    require(frames.cols() == st.mean.size(), errc::data, "normalize: dim mismatch");
    Tensor out = frames;
    std::int64_t D = st.mean.size();
    std::int64_t rows = frames.size() / D;
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t d = 0; d < D; ++d)
            out[r * D + d] = (frames[r * D + d] - st.mean[d]) / st.stddev[d];
    return out;
}

inline Tensor denormalize_frames(const Tensor& frames, const NormStats& st) {
    require(st.valid, errc::data, "denormalize: stats not computed");
    require(frames.cols() == st.mean.size(), errc::data, "denormalize: dim mismatch");
    Tensor out = frames;
    std::int64_t D = st.mean.size();
    std::int64_t rows = frames.size() / D;
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t d = 0; d < D; ++d)
            out[r * D + d] = frames[r * D + d] * st.stddev[d] + st.mean[d];
    return out;
}

inline MotionClip normalize(const MotionClip& clip, const NormStats& st) {
    return {clip.fps, normalize_frames(clip.frames, st)};
}

inline MotionClip denormalize(const MotionClip& clip, const NormStats& st) {
    return {clip.fps, denormalize_frames(clip.frames, st)};
}

}  // namespace gcdance
