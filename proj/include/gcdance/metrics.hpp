#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "gcdance/audio.hpp"
#include "gcdance/common.hpp"
#include "gcdance/motion.hpp"
#include "gcdance/parallel.hpp"
#include "gcdance/rng.hpp"
#include "gcdance/skeleton.hpp"

namespace gcdance {

// ---------------------------------------------------------------------------
// Kinetic features: per-joint mean squared velocity then per-joint mean
// squared acceleration (units/s via fps), computed on FK positions.
// ---------------------------------------------------------------------------

inline Tensor kinetic_features_subset(const MotionClip& clip, const Skeleton& skel,
                                      const std::vector<int>& joints) {
    require(clip.frame_count() >= 3, errc::data, "kinetic features: need at least 3 frames");
    Tensor pos = forward_kinematics(clip, skel);
    std::int64_t k = clip.frame_count();
    double fps = static_cast<double>(clip.fps);
    std::int64_t J = static_cast<std::int64_t>(joints.size());
    Tensor out = Tensor::zeros({2 * J});
    for (std::int64_t ji = 0; ji < J; ++ji) {
        std::int64_t col = joints[static_cast<std::size_t>(ji)] * 3;
        double vel_acc = 0.0, acc_acc = 0.0;
        double prev_v[3] = {0, 0, 0};
        for (std::int64_t i = 0; i + 1 < k; ++i) {
            double v[3];
            for (int c = 0; c < 3; ++c) v[c] = (pos.at(i + 1, col + c) - pos.at(i, col + c)) * fps;
            vel_acc += v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            if (i > 0) {
                double a0 = (v[0] - prev_v[0]) * fps, a1 = (v[1] - prev_v[1]) * fps,
                       a2 = (v[2] - prev_v[2]) * fps;
                acc_acc += a0 * a0 + a1 * a1 + a2 * a2;
            }
            prev_v[0] = v[0];
            prev_v[1] = v[1];
            prev_v[2] = v[2];
        }
        out[ji] = vel_acc / static_cast<double>(k - 1);
        out[J + ji] = acc_acc / static_cast<double>(k - 2);
    }
    return out;
}

inline Tensor kinetic_features(const MotionClip& clip, const Skeleton& skel) {
    std::vector<int> all;
    for (int j = 0; j < skel.joint_count(); ++j) all.push_back(j);
    return kinetic_features_subset(clip, skel, all);
}

// ---------------------------------------------------------------------------
// Gaussian fit + Frechet distance
// ---------------------------------------------------------------------------

struct GaussianStats {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;  // symmetrized, eigenvalue-floored
    std::int64_t samples = 0;
};

inline GaussianStats fit_gaussian(const std::vector<Tensor>& features) {
    require(!features.empty(), errc::data, "fit_gaussian: no samples");
    std::int64_t d = features[0].size();
    GaussianStats st;
    st.samples = static_cast<std::int64_t>(features.size());
    st.mean = Eigen::VectorXd::Zero(d);
    for (const Tensor& f : features) {
        require(f.size() == d, errc::data, "fit_gaussian: dimension mismatch");
        for (std::int64_t i = 0; i < d; ++i) st.mean(i) += f[i];
    }
    st.mean /= static_cast<double>(st.samples);
    st.cov = Eigen::MatrixXd::Zero(d, d);
    for (const Tensor& f : features) {
        Eigen::VectorXd x(d);
        for (std::int64_t i = 0; i < d; ++i) x(i) = f[i] - st.mean(i);
        st.cov += x * x.transpose();
    }
    st.cov /= std::max<double>(1.0, static_cast<double>(st.samples - 1));
    st.cov = 0.5 * (st.cov + st.cov.transpose()).eval();
    // eigenvalue floor keeps downstream square roots well defined
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(st.cov);
    Eigen::VectorXd vals = eig.eigenvalues().cwiseMax(1e-10);
    st.cov = eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
    return st;
}

namespace detail {

inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (m + m.transpose()));
    Eigen::VectorXd vals = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace detail

// ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2}). The cross-term trace
// equals the nuclear norm of sqrt(Sa) sqrt(Sb): the singular values of that
// product are the square roots of the eigenvalues of the symmetrized product
// sqrt(Sb) Sa sqrt(Sb), and the SVD route avoids squaring the condition
// number, so fid(X, X) stays at roundoff even for rank-deficient fits.
inline double fid(const GaussianStats& a, const GaussianStats& b) {
    require(a.mean.size() == b.mean.size(), errc::data, "fid: dimension mismatch");
    double mean_term = (a.mean - b.mean).squaredNorm();
    Eigen::MatrixXd cross = detail::psd_sqrt(a.cov) * detail::psd_sqrt(b.cov);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross);
    double tr_sqrt = svd.singularValues().sum();
    return mean_term + a.cov.trace() + b.cov.trace() - 2.0 * tr_sqrt;
}

// Mean pairwise Euclidean distance over all unordered pairs.
inline double diversity(const std::vector<Tensor>& features) {
    require(features.size() >= 2, errc::data, "diversity: need at least 2 clips");
    double acc = 0.0;
    std::int64_t pairs = 0;
    for (std::size_t i = 0; i < features.size(); ++i)
        for (std::size_t j = i + 1; j < features.size(); ++j) {
            double d2 = 0.0;
            for (std::int64_t c = 0; c < features[i].size(); ++c) {
                double d = features[i][c] - features[j][c];
                d2 += d * d;
            }
            acc += std::sqrt(d2);
            ++pairs;
        }
    return acc / static_cast<double>(pairs);
}

// ---------------------------------------------------------------------------
// Kinematic beats: motion pauses = local minima of the total joint-speed
// envelope that fall strictly below its moving median, with a minimum gap.
// ---------------------------------------------------------------------------

inline std::vector<int> kinematic_beats(const MotionClip& clip, const Skeleton& skel,
                                        double min_gap_s = 0.2, double median_window_s = 0.5) {
    require(clip.frame_count() >= 3, errc::data, "kinematic beats: need at least 3 frames");
    Tensor pos = forward_kinematics(clip, skel);
    std::int64_t k = clip.frame_count();
    int J = skel.joint_count();
    std::vector<double> envelope(static_cast<std::size_t>(k - 1), 0.0);
    for (std::int64_t i = 0; i + 1 < k; ++i) {
        double acc = 0.0;
        for (int j = 0; j < J; ++j) {
            double dx = pos.at(i + 1, j * 3) - pos.at(i, j * 3);
            double dy = pos.at(i + 1, j * 3 + 1) - pos.at(i, j * 3 + 1);
            double dz = pos.at(i + 1, j * 3 + 2) - pos.at(i, j * 3 + 2);
            acc += std::sqrt(dx * dx + dy * dy + dz * dz);
        }
        envelope[static_cast<std::size_t>(i)] = acc;
    }

    std::int64_t n = static_cast<std::int64_t>(envelope.size());
    auto half = static_cast<std::int64_t>(median_window_s * clip.fps / 2.0);
    auto moving_median = [&](std::int64_t f) {
        std::vector<double> w;
        for (std::int64_t i = std::max<std::int64_t>(0, f - half);
             i <= std::min<std::int64_t>(n - 1, f + half); ++i)
            w.push_back(envelope[static_cast<std::size_t>(i)]);
        std::nth_element(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(w.size() / 2), w.end());
        return w[w.size() / 2];
    };

    // roundoff guard: a pause must dip below the median by a sliver of the
    // envelope peak, or a constant-speed clip would sprout spurious minima
    double peak = *std::max_element(envelope.begin(), envelope.end());
    double dip = 1e-6 * peak;
    std::vector<std::pair<double, int>> candidates;  // (depth value, frame)
    for (std::int64_t i = 1; i + 1 < n; ++i) {
        double v = envelope[static_cast<std::size_t>(i)];
        if (v <= envelope[static_cast<std::size_t>(i - 1)] &&
            v < envelope[static_cast<std::size_t>(i + 1)] && v < moving_median(i) - dip)
            candidates.push_back({v, static_cast<int>(i)});
    }
    std::sort(candidates.begin(), candidates.end());  // deepest pauses first
    auto gap = static_cast<int>(min_gap_s * clip.fps);
    std::vector<int> taken;
    for (const auto& [v, frame] : candidates) {
        bool ok = true;
        for (int t : taken)
            if (std::abs(t - frame) < gap) {
                ok = false;
                break;
            }
        if (ok) taken.push_back(frame);
    }
    std::sort(taken.begin(), taken.end());
    return taken;
}

// BAS: mean Gaussian-kernel agreement, averaged over the music beats.
inline double beat_align_score(const std::vector<int>& music_beats,
                               const std::vector<int>& kin_beats, double sigma = 3.0) {
    require(sigma > 0.0, errc::data, "bas: sigma must be positive");
    if (music_beats.empty() || kin_beats.empty()) return 0.0;
    double acc = 0.0;
    for (int mb : music_beats) {
        double best = std::numeric_limits<double>::max();
        for (int kb : kin_beats)
            best = std::min(best, static_cast<double>(mb - kb) * (mb - kb));
        acc += std::exp(-best / (2.0 * sigma * sigma));
    }
    return acc / static_cast<double>(music_beats.size());
}

// ---------------------------------------------------------------------------
// Physical plausibility. PFC couples center-of-mass acceleration with the
// slower foot's speed; PBC extends it with neck and hand terms. Both are
// normalized by the peak acceleration so they are scale comparisons, and both
// are invariant to constant horizontal translation.
// ---------------------------------------------------------------------------

namespace detail {

struct ComSeries {
    std::vector<Vec3> com_accel;      // frames 1..k-2 (adjusted z)
    std::vector<double> accel_norm;   // same indexing
    double max_accel = 0.0;
};

inline Vec3 marker_midpoint(const Tensor& pos, std::int64_t frame, int a, int b) {
    return {0.5 * (pos.at(frame, a * 3) + pos.at(frame, b * 3)),
            0.5 * (pos.at(frame, a * 3 + 1) + pos.at(frame, b * 3 + 1)),
            0.5 * (pos.at(frame, a * 3 + 2) + pos.at(frame, b * 3 + 2))};
}

inline Vec3 group_mean(const Tensor& pos, std::int64_t frame, const std::vector<int>& joints) {
    Vec3 acc{0, 0, 0};
    for (int j : joints)
        for (int c = 0; c < 3; ++c)
            acc[static_cast<std::size_t>(c)] += pos.at(frame, j * 3 + c);
    for (int c = 0; c < 3; ++c)
        acc[static_cast<std::size_t>(c)] /= static_cast<double>(joints.size());
    return acc;
}

inline ComSeries com_series(const Tensor& pos, int J, double fps) {
    std::int64_t k = pos.dim(0);
    std::vector<Vec3> com(static_cast<std::size_t>(k));
    for (std::int64_t i = 0; i < k; ++i) {
        Vec3 c{0, 0, 0};
        for (int j = 0; j < J; ++j)
            for (int d = 0; d < 3; ++d) c[static_cast<std::size_t>(d)] += pos.at(i, j * 3 + d);
        for (int d = 0; d < 3; ++d) c[static_cast<std::size_t>(d)] /= static_cast<double>(J);
        com[static_cast<std::size_t>(i)] = c;
    }
    ComSeries s;
    for (std::int64_t i = 1; i + 1 < k; ++i) {
        Vec3 a;
        for (int d = 0; d < 3; ++d)
            a[static_cast<std::size_t>(d)] =
                (com[static_cast<std::size_t>(i + 1)][static_cast<std::size_t>(d)] -
                 2.0 * com[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)] +
                 com[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(d)]) *
                fps * fps;
        a[2] = std::max(a[2], 0.0);  // only upward COM acceleration counts
        s.com_accel.push_back(a);
        double nrm = norm3(a);
        s.accel_norm.push_back(nrm);
        s.max_accel = std::max(s.max_accel, nrm);
    }
    return s;
}

inline double marker_speed(const Tensor& pos, std::int64_t frame, int a, int b, double fps) {
    Vec3 m0 = marker_midpoint(pos, frame, a, b);
    Vec3 m1 = marker_midpoint(pos, frame + 1, a, b);
    return norm3({(m1[0] - m0[0]) * fps, (m1[1] - m0[1]) * fps, (m1[2] - m0[2]) * fps});
}

inline double group_speed(const Tensor& pos, std::int64_t frame, const std::vector<int>& joints,
                          double fps) {
    Vec3 m0 = group_mean(pos, frame, joints);
    Vec3 m1 = group_mean(pos, frame + 1, joints);
    return norm3({(m1[0] - m0[0]) * fps, (m1[1] - m0[1]) * fps, (m1[2] - m0[2]) * fps});
}

}  // namespace detail

inline double pfc(const MotionClip& clip, const Skeleton& skel) {
    require(clip.frame_count() >= 3, errc::data, "pfc: need at least 3 frames");
    Tensor pos = forward_kinematics(clip, skel);
    auto markers = skel.contact_markers();  // [heel_l, toe_l, heel_r, toe_r]
    double fps = static_cast<double>(clip.fps);
    detail::ComSeries s = detail::com_series(pos, skel.joint_count(), fps);
    if (s.max_accel <= 1e-9) return 0.0;  // numerically vanishing COM acceleration

    double acc = 0.0;
    for (std::size_t idx = 0; idx < s.com_accel.size(); ++idx) {
        std::int64_t frame = static_cast<std::int64_t>(idx) + 1;
        double left = detail::marker_speed(pos, frame, markers[0], markers[1], fps);
        double right = detail::marker_speed(pos, frame, markers[2], markers[3], fps);
        acc += s.accel_norm[idx] * std::min(left, right);
    }
    return acc / static_cast<double>(s.com_accel.size()) / s.max_accel;
}

inline double pbc(const MotionClip& clip, const Skeleton& skel, double neck_weight = 0.5,
                  double hand_weight = 0.5) {
    require(clip.frame_count() >= 3, errc::data, "pbc: need at least 3 frames");
    require(skel.has_group("neck") && !skel.group("neck").empty(), errc::data,
            "pbc: missing neck group");
    require(skel.has_group("left_hand") && skel.has_group("right_hand") &&
                !skel.group("left_hand").empty() && !skel.group("right_hand").empty(),
            errc::data, "pbc: missing left_hand/right_hand groups");
    Tensor pos = forward_kinematics(clip, skel);
    auto markers = skel.contact_markers();
    double fps = static_cast<double>(clip.fps);
    detail::ComSeries s = detail::com_series(pos, skel.joint_count(), fps);
    if (s.max_accel <= 1e-9) return 0.0;  // numerically vanishing COM acceleration

    double acc = 0.0;
    for (std::size_t idx = 0; idx < s.com_accel.size(); ++idx) {
        std::int64_t frame = static_cast<std::int64_t>(idx) + 1;
        double left = detail::marker_speed(pos, frame, markers[0], markers[1], fps);
        double right = detail::marker_speed(pos, frame, markers[2], markers[3], fps);
        double neck = detail::group_speed(pos, frame, skel.group("neck"), fps);
        double lhand = detail::group_speed(pos, frame, skel.group("left_hand"), fps);
        double rhand = detail::group_speed(pos, frame, skel.group("right_hand"), fps);
        acc += s.accel_norm[idx] *
               (std::min(left, right) + neck_weight * neck + hand_weight * std::min(lhand, rhand));
    }
    return acc / static_cast<double>(s.com_accel.size()) / s.max_accel;
}

// ---------------------------------------------------------------------------
// Directory-level evaluation: resampled sets, mean +- std per metric.
// ---------------------------------------------------------------------------

struct EvalConfig {
    int n_sets = 10;
    int set_size = 0;  // 0: 2/3 of the available clips
    double bas_sigma = 3.0;
    std::uint64_t seed = 0;
};

namespace detail {

struct ClipFeatures {
    Tensor full, body, hand;
    double pfc = 0.0, pbc = 0.0;
    double bas = -1.0;  // -1: no paired audio
};

struct MeanStd {
    double mean = 0.0, stddev = 0.0;
};

inline MeanStd mean_std(const std::vector<double>& xs) {
    MeanStd ms;
    if (xs.empty()) return ms;
    for (double x : xs) ms.mean += x;
    ms.mean /= static_cast<double>(xs.size());
    for (double x : xs) ms.stddev += (x - ms.mean) * (x - ms.mean);
    ms.stddev = std::sqrt(ms.stddev / static_cast<double>(xs.size()));
    return ms;
}

inline std::vector<ClipFeatures> load_dir_features(const fs::path& dir, const Skeleton& skel,
                                                   double bas_sigma) {
    require(fs::exists(dir) && fs::is_directory(dir), errc::data,
            "evaluate: not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".gcmo") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    require(!files.empty(), errc::data, "evaluate: no .gcmo clips in " + dir.string());

    std::vector<ClipFeatures> features(files.size());
    const auto& body_joints = skel.body_joints();
    const auto& hand_joints = skel.group("hands");
    parallel_for(static_cast<std::int64_t>(files.size()), [&](std::int64_t i) {
        GcmoFile f = load_gcmo(files[static_cast<std::size_t>(i)]);
        require(f.clip.frame_dim() == skel.frame_dim(), errc::data,
                files[static_cast<std::size_t>(i)].string() + ": frame dim does not match skeleton");
        ClipFeatures& cf = features[static_cast<std::size_t>(i)];
        cf.full = kinetic_features(f.clip, skel);
        std::vector<int> body_list(body_joints.begin(), body_joints.end());
        std::vector<int> hand_list(hand_joints.begin(), hand_joints.end());
        cf.body = kinetic_features_subset(f.clip, skel, body_list);
        cf.hand = kinetic_features_subset(f.clip, skel, hand_list);
        cf.pfc = pfc(f.clip, skel);
        cf.pbc = pbc(f.clip, skel);
        fs::path wav = files[static_cast<std::size_t>(i)];
        wav.replace_extension(".wav");
        if (fs::exists(wav)) {
            AudioBuffer audio = load_wav(wav);
            std::vector<int> mb = detect_music_beats(audio, f.clip.fps);
            std::vector<int> kb = kinematic_beats(f.clip, skel);
            cf.bas = beat_align_score(mb, kb, bas_sigma);
        }
    });
    return features;
}

}  // namespace detail

inline nlohmann::json evaluate_sets(const fs::path& gen_dir, const fs::path& gt_dir,
                                    const Skeleton& skel, const EvalConfig& cfg = {}) {
    auto gen = detail::load_dir_features(gen_dir, skel, cfg.bas_sigma);
    auto gt = detail::load_dir_features(gt_dir, skel, cfg.bas_sigma);

    auto collect = [](const std::vector<detail::ClipFeatures>& v, auto member) {
        std::vector<Tensor> out;
        for (const auto& c : v) out.push_back(member(c));
        return out;
    };
    GaussianStats gt_body = fit_gaussian(collect(gt, [](const auto& c) { return c.body; }));
    GaussianStats gt_hand = fit_gaussian(collect(gt, [](const auto& c) { return c.hand; }));

    int set_size = cfg.set_size > 0 ? cfg.set_size
                                    : std::max(2, static_cast<int>(gen.size() * 2 / 3));
    set_size = std::min<int>(set_size, static_cast<int>(gen.size()));
    int gt_set_size = std::min<int>(set_size, static_cast<int>(gt.size()));

    std::vector<std::string> warnings;
    if (set_size < static_cast<int>(gt_body.mean.size()) + 1)
        warnings.push_back("set size " + std::to_string(set_size) +
                           " is below feature dim + 1; FID estimates will be noisy");

    std::map<std::string, std::vector<double>> series;
    Rng base(cfg.seed);
    for (int s = 0; s < cfg.n_sets; ++s) {
        Rng rng = base.derive(static_cast<std::uint64_t>(s));
        auto pick = [&rng](std::size_t n, int m) {
            std::vector<std::size_t> idx(n);
            for (std::size_t i = 0; i < n; ++i) idx[i] = i;
            for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.index(i)]);
            idx.resize(static_cast<std::size_t>(m));
            return idx;
        };
        auto gen_idx = pick(gen.size(), set_size);
        auto gt_idx = pick(gt.size(), gt_set_size);

        std::vector<Tensor> body_f, hand_f, gt_body_f, gt_hand_f;
        std::vector<double> pfc_v, pbc_v, bas_v, gt_pbc_v, gt_bas_v;
        for (std::size_t i : gen_idx) {
            body_f.push_back(gen[i].body);
            hand_f.push_back(gen[i].hand);
            pfc_v.push_back(gen[i].pfc);
            pbc_v.push_back(gen[i].pbc);
            if (gen[i].bas >= 0.0) bas_v.push_back(gen[i].bas);
        }
        for (std::size_t i : gt_idx) {
            gt_body_f.push_back(gt[i].body);
            gt_hand_f.push_back(gt[i].hand);
            gt_pbc_v.push_back(gt[i].pbc);
            if (gt[i].bas >= 0.0) gt_bas_v.push_back(gt[i].bas);
        }

        series["FID_body"].push_back(fid(fit_gaussian(body_f), gt_body));
        series["FID_hand"].push_back(fid(fit_gaussian(hand_f), gt_hand));
        if (body_f.size() >= 2) {
            series["Div_body"].push_back(diversity(body_f));
            series["Div_hand"].push_back(diversity(hand_f));
        }
        if (gt_body_f.size() >= 2) {
            series["Div_body_gt"].push_back(diversity(gt_body_f));
            series["Div_hand_gt"].push_back(diversity(gt_hand_f));
        }
        series["PFC"].push_back(detail::mean_std(pfc_v).mean);
        series["PBC"].push_back(detail::mean_std(pbc_v).mean);
        series["PBC_gt"].push_back(detail::mean_std(gt_pbc_v).mean);
        if (!bas_v.empty()) series["BAS"].push_back(detail::mean_std(bas_v).mean);
        if (!gt_bas_v.empty()) series["BAS_gt"].push_back(detail::mean_std(gt_bas_v).mean);
    }

    nlohmann::json metrics = nlohmann::json::object();
    for (const auto& [name, values] : series) {
        auto ms = detail::mean_std(values);
        metrics[name] = {{"mean", ms.mean}, {"std", ms.stddev}};
    }
    nlohmann::json report;
    report["metrics"] = metrics;
    report["config"] = {{"n_sets", cfg.n_sets},
                        {"set_size", set_size},
                        {"bas_sigma", cfg.bas_sigma},
                        {"gen_clips", gen.size()},
                        {"gt_clips", gt.size()}};
    report["seed"] = cfg.seed;
    report["n_sets"] = cfg.n_sets;
    if (!warnings.empty()) report["warnings"] = warnings;
    return report;
}

// Structural validation of the report against its documented schema
// (assets/report.schema.json).
inline void validate_report(const nlohmann::json& report) {
    require(report.is_object(), errc::data, "report: not an object");
    for (const char* key : {"metrics", "config", "seed", "n_sets"})
        require(report.contains(key), errc::data, std::string("report: missing key ") + key);
    require(report.at("metrics").is_object(), errc::data, "report: metrics must be an object");
    for (const auto& [name, entry] : report.at("metrics").items()) {
        require(entry.is_object() && entry.contains("mean") && entry.contains("std"), errc::data,
                "report: metric " + name + " must carry mean/std");
        require(entry.at("mean").is_number() && entry.at("std").is_number(), errc::data,
                "report: metric " + name + " mean/std must be numbers");
    }
    require(report.at("seed").is_number_unsigned() || report.at("seed").is_number_integer(),
            errc::data, "report: seed must be an integer");
    require(report.at("n_sets").is_number_integer(), errc::data,
            "report: n_sets must be an integer");
}

}  // namespace gcdance
