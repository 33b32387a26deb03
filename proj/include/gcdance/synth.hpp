#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "gcdance/common.hpp"
#include "gcdance/motion.hpp"
#include "gcdance/rng.hpp"
#include "gcdance/rotation.hpp"
#include "gcdance/skeleton.hpp"

namespace gcdance {

// Procedural stand-in for paired dance/music data. Each genre gets a distinct
// base oscillation frequency and a distinct joint-group amplitude profile, so
// genres are separable in kinetic-feature space; the emitted beat track marks
// the motion's velocity pauses.
struct SynthConfig {
    double base_freq = 0.75;   // Hz for genre 0
    double freq_ratio = 1.5;   // frequency ratio between adjacent genre slots
    int freq_slots = 5;        // frequencies cycle so they stay well below Nyquist
    double emphasis_amp = 0.5; // radians, amplitude of the emphasized group
    double background_amp = 0.12;
};

struct SynthResult {
    MotionClip clip;
    std::vector<int> beat_frames;      // frame indices of kinematic pauses
    std::vector<double> beat_times;    // seconds
};

namespace detail {

inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline double unit_hash(std::uint64_t a, std::uint64_t b) {
    return static_cast<double>(mix64(a * 0x100000001B3ull + b) >> 11) * 0x1.0p-53;
}

}  // namespace detail

inline double synth_genre_frequency(int genre_id, const SynthConfig& cfg = {}) {
    int slot = genre_id % cfg.freq_slots;
    return cfg.base_freq * std::pow(cfg.freq_ratio, slot);
}

inline SynthResult synth_genre_motion(int genre_id, std::uint64_t seed, std::int64_t k, int fps,
                                      const Skeleton& skel, const SynthConfig& cfg = {}) {
    require(genre_id >= 0, errc::data, "synth: negative genre id");
    require(k >= 2, errc::data, "synth: need at least 2 frames");
    require(fps > 0, errc::data, "synth: fps must be positive");

    double freq = synth_genre_frequency(genre_id, cfg);
    Rng rng(detail::mix64(seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(genre_id)));
    double phase = rng.uniform(0.0, 2.0 * M_PI);
    double amp_jitter = 0.9 + 0.2 * rng.uniform();

    // genre-stable group emphasis: hands / legs / upper rotate with genre id
    int emphasized = genre_id % 3;
    const char* group_names[3] = {"hands", "legs", "upper"};
    int J = skel.joint_count();
    std::vector<double> joint_amp(static_cast<std::size_t>(J), 0.0);
    for (int gi = 0; gi < 3; ++gi) {
        if (!skel.has_group(group_names[gi])) continue;
        double base = (gi == emphasized ? cfg.emphasis_amp : cfg.background_amp) * amp_jitter;
        for (int j : skel.group(group_names[gi]))
            joint_amp[static_cast<std::size_t>(j)] =
                base * (0.6 + 0.4 * detail::unit_hash(static_cast<std::uint64_t>(genre_id) * 131,
                                                      static_cast<std::uint64_t>(j)));
    }
    // a little root sway so the pelvis itself carries the rhythm
    std::vector<Vec3> joint_axis(static_cast<std::size_t>(J));
    for (int j = 0; j < J; ++j) {
        Vec3 ax{detail::unit_hash(static_cast<std::uint64_t>(genre_id) * 977, static_cast<std::uint64_t>(j) * 3) - 0.5,
                detail::unit_hash(static_cast<std::uint64_t>(genre_id) * 977, static_cast<std::uint64_t>(j) * 3 + 1) - 0.5,
                detail::unit_hash(static_cast<std::uint64_t>(genre_id) * 977, static_cast<std::uint64_t>(j) * 3 + 2) - 0.5};
        double n = norm3(ax);
        joint_axis[static_cast<std::size_t>(j)] = {ax[0] / n, ax[1] / n, ax[2] / n};
    }

    double root_z = rest_root_height(skel) + 0.02;
    std::int64_t D = skel.frame_dim();
    MotionClip clip;
    clip.fps = fps;
    clip.frames = Tensor::zeros({k, D});
    for (std::int64_t i = 0; i < k; ++i) {
        double t = static_cast<double>(i) / fps;
        double osc = std::sin(2.0 * M_PI * freq * t + phase);
        double* row = clip.frames.data() + i * D;
        for (int j = 0; j < J; ++j) {
            double angle = joint_amp[static_cast<std::size_t>(j)] * osc;
            Mat3 R = axis_angle_to_matrix(joint_axis[static_cast<std::size_t>(j)], angle);
            matrix_to_rot6d(R, row + j * 6);
        }
        std::int64_t tc = skel.trans_col();
        row[tc] = 0.05 * amp_jitter * osc;
        row[tc + 1] = 0.0;
        row[tc + 2] = root_z + 0.01 * amp_jitter * osc * osc;
    }

    // contact flags from the generated kinematics
    Tensor positions = forward_kinematics(clip.frames, skel);
    Tensor flags = detect_foot_contacts(positions, skel);
    std::int64_t cc = skel.contact_col();
    for (std::int64_t i = 0; i < k; ++i)
        for (int c = 0; c < 4; ++c) clip.frames.at(i, cc + c) = flags.at(i, c);

    // velocity pauses of sin(2 pi f t + phase): 2 pi f t + phase = pi/2 + m pi
    SynthResult res;
    res.clip = std::move(clip);
    double duration = static_cast<double>(k) / fps;
    double period = 1.0 / (2.0 * freq);
    double first = (M_PI / 2.0 - phase) / (2.0 * M_PI * freq);
    while (first < 0.0) first += period;
    for (double t = first; t < duration; t += period) {
        int frame = static_cast<int>(std::lround(t * fps));
        if (frame >= 0 && frame < k) {
            res.beat_times.push_back(t);
            res.beat_frames.push_back(frame);
        }
    }
    return res;
}

}  // namespace gcdance
