#include <catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "gcdance/metrics.hpp"
#include "gcdance/synth.hpp"
#include "testutil.hpp"

using namespace gcdance;

namespace {

MotionClip static_clip(const Skeleton& skel, std::int64_t k, double root_z) {
    MotionClip clip;
    clip.fps = 30;
    clip.frames = Tensor::zeros({k, skel.frame_dim()});
    for (std::int64_t i = 0; i < k; ++i) {
        for (int j = 0; j < skel.joint_count(); ++j) {
            clip.frames.at(i, j * 6) = 1.0;
            clip.frames.at(i, j * 6 + 4) = 1.0;
        }
        clip.frames.at(i, skel.trans_col() + 2) = root_z;
    }
    return clip;
}

std::vector<Tensor> gaussian_cloud(Rng& rng, int n, int dim, const std::vector<double>& shift) {
    std::vector<Tensor> out;
    for (int i = 0; i < n; ++i) {
        Tensor t = Tensor::zeros({dim});
        for (int d = 0; d < dim; ++d)
            t[d] = rng.normal() + (d < static_cast<int>(shift.size()) ? shift[static_cast<std::size_t>(d)] : 0.0);
        out.push_back(t);
    }
    return out;
}

}  // namespace

TEST_CASE("kinetic features: static clip is all zeros") {
    Skeleton skel = skeleton_preset52();
    Tensor f = kinetic_features(static_clip(skel, 6, 0.9), skel);
    REQUIRE(f.size() == 104);
    for (std::int64_t i = 0; i < f.size(); ++i) CHECK(f[i] == 0.0);
    CHECK_THROWS_AS(kinetic_features(static_clip(skel, 2, 0.9), skel), error);
}

TEST_CASE("kinetic features: uniform translation gives v^2 velocity, zero acceleration") {
    Skeleton skel = skeleton_preset52();
    MotionClip clip = static_clip(skel, 8, 0.9);
    double v = 1.2;  // units per second
    for (std::int64_t i = 0; i < 8; ++i)
        clip.frames.at(i, skel.trans_col()) = v * static_cast<double>(i) / clip.fps;
    Tensor f = kinetic_features(clip, skel);
    for (int j = 0; j < 52; ++j) {
        CHECK(f[j] == Catch::Approx(v * v).epsilon(1e-9));
        CHECK(f[52 + j] == Catch::Approx(0.0).margin(1e-9));
    }
}

TEST_CASE("kinetic features: match a brute-force recomputation") {
    Skeleton skel = skeleton_preset52();
    auto synth = synth_genre_motion(1, 17, 12, 30, skel);
    Tensor f = kinetic_features(synth.clip, skel);

    Tensor pos = forward_kinematics(synth.clip, skel);
    double fps = 30.0;
    std::int64_t k = 12;
    for (int j = 0; j < 52; ++j) {
        std::vector<Vec3> vel;
        for (std::int64_t i = 0; i + 1 < k; ++i)
            vel.push_back({(pos.at(i + 1, j * 3) - pos.at(i, j * 3)) * fps,
                           (pos.at(i + 1, j * 3 + 1) - pos.at(i, j * 3 + 1)) * fps,
                           (pos.at(i + 1, j * 3 + 2) - pos.at(i, j * 3 + 2)) * fps});
        double msv = 0.0;
        for (const auto& v : vel) msv += dot3(v, v);
        msv /= static_cast<double>(vel.size());
        double msa = 0.0;
        for (std::size_t i = 0; i + 1 < vel.size(); ++i) {
            Vec3 a{(vel[i + 1][0] - vel[i][0]) * fps, (vel[i + 1][1] - vel[i][1]) * fps,
                   (vel[i + 1][2] - vel[i][2]) * fps};
            msa += dot3(a, a);
        }
        msa /= static_cast<double>(vel.size() - 1);
        CHECK(f[j] == Catch::Approx(msv).epsilon(1e-10));
        CHECK(f[52 + j] == Catch::Approx(msa).epsilon(1e-10));
    }
}

TEST_CASE("fid: identical sets give zero; symmetric; non-negative") {
    Rng rng(5);
    auto cloud = gaussian_cloud(rng, 200, 6, {});
    GaussianStats a = fit_gaussian(cloud);
    CHECK(std::abs(fid(a, a)) < 1e-8);

    auto cloud2 = gaussian_cloud(rng, 150, 6, {0.5, -0.25});
    GaussianStats b = fit_gaussian(cloud2);
    double ab = fid(a, b), ba = fid(b, a);
    CHECK(std::abs(ab - ba) < 1e-8);
    CHECK(ab >= 0.0);

    CHECK_THROWS_AS(fid(a, fit_gaussian(gaussian_cloud(rng, 50, 4, {}))), error);
}

TEST_CASE("fid: equal covariances reduce to the squared mean distance") {
    Rng rng(7);
    auto cloud = gaussian_cloud(rng, 300, 5, {});
    GaussianStats a = fit_gaussian(cloud);
    GaussianStats b = a;
    std::vector<double> d = {0.8, -0.4, 0.2, 0.0, 1.0};
    double d2 = 0.0;
    for (int i = 0; i < 5; ++i) {
        b.mean(i) += d[static_cast<std::size_t>(i)];
        d2 += d[static_cast<std::size_t>(i)] * d[static_cast<std::size_t>(i)];
    }
    CHECK(fid(a, b) == Catch::Approx(d2).margin(1e-8));
}

TEST_CASE("fid: cross term matches a Denman-Beavers square-root oracle") {
    Rng rng(9);
    auto ca = gaussian_cloud(rng, 120, 5, {});
    auto cb = gaussian_cloud(rng, 140, 5, {0.3});
    // stretch cb so covariances differ
    for (auto& t : cb)
        for (int d = 0; d < 5; ++d) t[d] *= 1.0 + 0.2 * d;
    GaussianStats a = fit_gaussian(ca);
    GaussianStats b = fit_gaussian(cb);

    // oracle: iterate Y <- (Y + Z^-1)/2, Z <- (Z + Y^-1)/2 to sqrt(Sa Sb)
    Eigen::MatrixXd Y = a.cov * b.cov;
    Eigen::MatrixXd Z = Eigen::MatrixXd::Identity(5, 5);
    for (int it = 0; it < 60; ++it) {
        Eigen::MatrixXd Yn = 0.5 * (Y + Z.inverse());
        Eigen::MatrixXd Zn = 0.5 * (Z + Y.inverse());
        Y = Yn;
        Z = Zn;
    }
    double oracle = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() -
                    2.0 * Y.trace();
    CHECK(fid(a, b) == Catch::Approx(oracle).margin(1e-6));
}

TEST_CASE("diversity: identities and brute-force enumeration") {
    Rng rng(11);
    std::vector<Tensor> same(4, testutil::random_tensor(rng, {6}));
    CHECK(diversity(same) == 0.0);

    std::vector<Tensor> two = {Tensor::zeros({3}), Tensor::zeros({3})};
    two[1][0] = 3.0;
    two[1][1] = 4.0;
    CHECK(diversity(two) == Catch::Approx(5.0));

    std::vector<Tensor> five;
    for (int i = 0; i < 5; ++i) five.push_back(testutil::random_tensor(rng, {7}));
    double acc = 0.0;
    int pairs = 0;
    for (int i = 0; i < 5; ++i)
        for (int j = i + 1; j < 5; ++j) {
            double d2 = 0.0;
            for (int c = 0; c < 7; ++c)
                d2 += (five[static_cast<std::size_t>(i)][c] - five[static_cast<std::size_t>(j)][c]) *
                      (five[static_cast<std::size_t>(i)][c] - five[static_cast<std::size_t>(j)][c]);
            acc += std::sqrt(d2);
            ++pairs;
        }
    CHECK(diversity(five) == Catch::Approx(acc / pairs).epsilon(1e-12));

    CHECK_THROWS_AS(diversity({five[0]}), error);

    // linear scaling of all features scales diversity linearly
    std::vector<Tensor> scaled = five;
    for (auto& t : scaled)
        for (std::int64_t c = 0; c < t.size(); ++c) t[c] *= 2.5;
    CHECK(diversity(scaled) == Catch::Approx(2.5 * diversity(five)).epsilon(1e-10));
}

TEST_CASE("kinematic beats: constant-velocity clip has none; oscillation pauses found") {
    Skeleton skel = skeleton_preset52();
    MotionClip gliding = static_clip(skel, 60, 0.9);
    for (std::int64_t i = 0; i < 60; ++i)
        gliding.frames.at(i, skel.trans_col()) = 0.02 * static_cast<double>(i);
    CHECK(kinematic_beats(gliding, skel).empty());

    // oscillation with pauses every 0.5 s
    auto synth = synth_genre_motion(0, 3, 120, 30, skel);  // genre 0: 0.75 Hz paused every 2/3 s
    std::vector<int> beats = kinematic_beats(synth.clip, skel);
    REQUIRE(!beats.empty());
    for (int b : beats) {
        bool near = false;
        for (int e : synth.beat_frames)
            if (std::abs(b - e) <= 1) near = true;
        CHECK(near);
    }
    // determinism
    CHECK(kinematic_beats(synth.clip, skel) == beats);
}

TEST_CASE("beat alignment score: analytic cases") {
    CHECK(beat_align_score({3, 10, 20}, {3, 10, 20}) == Catch::Approx(1.0));
    double sigma = 3.0;
    for (int delta : {1, 2, 5}) {
        double expect = std::exp(-static_cast<double>(delta) * delta / (2.0 * sigma * sigma));
        CHECK(beat_align_score({10}, {10 + delta}, sigma) == Catch::Approx(expect));
    }
    CHECK(beat_align_score({3, 10}, {}) == 0.0);
    CHECK(beat_align_score({}, {3}) == 0.0);
    // always within [0, 1]
    Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<int> a, b;
        for (int i = 0; i < 6; ++i) {
            a.push_back(static_cast<int>(rng.index(100)));
            b.push_back(static_cast<int>(rng.index(100)));
        }
        double s = beat_align_score(a, b);
        CHECK(s >= 0.0);
        CHECK(s <= 1.0);
    }
    CHECK_THROWS_AS(beat_align_score({1}, {1}, 0.0), error);
}

TEST_CASE("pfc: zero for static and for constant-velocity gliding") {
    Skeleton skel = skeleton_preset52();
    double h0 = rest_root_height(skel) + 0.02;
    CHECK(pfc(static_clip(skel, 8, h0), skel) == 0.0);

    MotionClip gliding = static_clip(skel, 8, h0);
    for (std::int64_t i = 0; i < 8; ++i)
        gliding.frames.at(i, skel.trans_col() + 1) = 0.3 * static_cast<double>(i);
    CHECK(pfc(gliding, skel) == Catch::Approx(0.0).margin(1e-9));
    CHECK_THROWS_AS(pfc(static_clip(skel, 2, h0), skel), error);
}

TEST_CASE("pfc: known acceleration and foot speed on a constructed clip") {
    Skeleton skel = skeleton_preset52();
    // rigid whole-body translation: p0 = 0, p1 = 0.1, p2 = 0.3 along z
    MotionClip clip = static_clip(skel, 3, 0.9);
    double zs[3] = {0.0, 0.1, 0.3};
    for (std::int64_t i = 0; i < 3; ++i) clip.frames.at(i, skel.trans_col() + 2) = 0.9 + zs[i];
    // only frame 1 has a defined acceleration:
    //   |a| = (0.3 - 0.2 + 0) ... = (z2 - 2 z1 + z0) * fps^2, upward so kept
    //   slower-foot speed at frame 1 = (z2 - z1) * fps
    double fps = 30.0;
    double expect = (zs[2] - zs[1]) * fps;  // |a| cancels in the normalization
    CHECK(pfc(clip, skel) == Catch::Approx(expect).epsilon(1e-9));

    // downward COM acceleration is clipped to zero: flip the trajectory
    MotionClip down = static_clip(skel, 3, 0.9);
    for (std::int64_t i = 0; i < 3; ++i) down.frames.at(i, skel.trans_col() + 2) = 0.9 - zs[i];
    CHECK(pfc(down, skel) == 0.0);
}

TEST_CASE("pfc/pbc: invariant to global horizontal translation") {
    Skeleton skel = skeleton_preset52();
    auto synth = synth_genre_motion(2, 23, 40, 30, skel);
    double base_pfc = pfc(synth.clip, skel);
    double base_pbc = pbc(synth.clip, skel);
    MotionClip moved = synth.clip;
    for (std::int64_t i = 0; i < moved.frame_count(); ++i) {
        moved.frames.at(i, skel.trans_col()) += 40.0;
        moved.frames.at(i, skel.trans_col() + 1) -= 17.0;
    }
    CHECK(pfc(moved, skel) == Catch::Approx(base_pfc).margin(1e-9));
    CHECK(pbc(moved, skel) == Catch::Approx(base_pbc).margin(1e-9));
}

TEST_CASE("pbc: hand motion under COM acceleration exceeds pfc; monotone in hand weight") {
    Skeleton skel = skeleton_preset52();
    double h0 = rest_root_height(skel) + 0.02;
    MotionClip clip = static_clip(skel, 40, h0);
    // oscillate both arms with different amplitudes (symmetric arms would
    // cancel in the center of mass); lower body stays put
    int l_elbow = detail::joint_index(skel, "l_elbow");
    int r_elbow = detail::joint_index(skel, "r_elbow");
    for (std::int64_t i = 0; i < 40; ++i) {
        double phase = 2.0 * M_PI * 1.5 * static_cast<double>(i) / 30.0;
        Mat3 left = axis_angle_to_matrix({0, 1, 0}, 0.8 * std::sin(phase));
        Mat3 right = axis_angle_to_matrix({0, 1, 0}, 0.3 * std::sin(phase + 1.0));
        matrix_to_rot6d(left, clip.frames.data() + i * skel.frame_dim() + l_elbow * 6);
        matrix_to_rot6d(right, clip.frames.data() + i * skel.frame_dim() + r_elbow * 6);
    }
    double p_foot = pfc(clip, skel);
    double p_body = pbc(clip, skel);
    CHECK(p_foot == Catch::Approx(0.0).margin(1e-12));
    CHECK(p_body > p_foot);
    CHECK(pbc(clip, skel, 0.5, 0.8) >= pbc(clip, skel, 0.5, 0.2));

    CHECK(pbc(static_clip(skel, 8, h0), skel) == 0.0);
    CHECK_THROWS_AS(pbc(clip, skeleton_preset24()), error);
}

TEST_CASE("evaluate_sets: gen == gt gives zero FID and matching diversity") {
    Skeleton skel = skeleton_preset52();
    testutil::TempDir tmp("eval");
    fs::create_directories(tmp.path() / "clips");
    for (int i = 0; i < 8; ++i) {
        auto synth = synth_genre_motion(i % 2, 100 + static_cast<std::uint64_t>(i), 45, 30, skel);
        save_gcmo(synth.clip, 52, tmp.path() / "clips" / ("c" + std::to_string(i) + ".gcmo"));
    }
    EvalConfig cfg;
    cfg.n_sets = 4;
    cfg.set_size = 8;
    cfg.seed = 5;
    nlohmann::json report = evaluate_sets(tmp.path() / "clips", tmp.path() / "clips", skel, cfg);
    validate_report(report);
    CHECK(std::abs(report["metrics"]["FID_body"]["mean"].get<double>()) < 1e-6);
    CHECK(std::abs(report["metrics"]["FID_hand"]["mean"].get<double>()) < 1e-6);
    CHECK(report["metrics"]["FID_body"]["std"].get<double>() < 1e-9);
    CHECK(report["metrics"]["Div_body"]["mean"].get<double>() ==
          Catch::Approx(report["metrics"]["Div_body_gt"]["mean"].get<double>()));

    // byte-identical reports for a fixed seed
    nlohmann::json again = evaluate_sets(tmp.path() / "clips", tmp.path() / "clips", skel, cfg);
    CHECK(report.dump() == again.dump());

    // schema violations are rejected
    nlohmann::json bad = report;
    bad.erase("metrics");
    CHECK_THROWS_AS(validate_report(bad), error);

    CHECK_THROWS_AS(evaluate_sets(tmp.path() / "missing", tmp.path() / "clips", skel, cfg), error);
}
