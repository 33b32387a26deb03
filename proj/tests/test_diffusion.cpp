#include <catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "gcdance/diffusion.hpp"
#include "gcdance/nn.hpp"
#include "testutil.hpp"

using namespace gcdance;
namespace ag = gcdance::ag;

TEST_CASE("schedule: endpoints, monotonicity, formula check") {
    DiffusionSchedule s = make_schedule(50);
    CHECK(s.abar(0) >= 1.0 - 1e-4);
    CHECK(s.abar(49) <= 0.05);
    for (int t = 1; t < 50; ++t) CHECK(s.abar(t) < s.abar(t - 1));

    // direct formula evaluation at T/2
    const double shift = 0.008;
    auto f = [&](double u) {
        double c = std::cos((u + shift) / (1.0 + shift) * M_PI / 2.0);
        return c * c;
    };
    CHECK(s.abar(25) == Catch::Approx(f(0.5) / f(0.0)).epsilon(1e-12));

    CHECK_THROWS_AS(make_schedule(0), error);
    CHECK_THROWS_AS(make_schedule(10, "linear"), error);
}

TEST_CASE("q_sample: exact linear identity and endpoint behavior") {
    DiffusionSchedule s = make_schedule(50);
    Rng rng(3);
    Tensor m0 = testutil::random_tensor(rng, {4, 5});
    Tensor eps = testutil::random_tensor(rng, {4, 5});

    // abar_0 == 1: d == m0 exactly
    Tensor d0 = q_sample(m0, 0, eps, s);
    for (std::int64_t i = 0; i < m0.size(); ++i) CHECK(d0[i] == m0[i]);

    // exact coefficients at every t
    for (int t : {1, 10, 25, 49}) {
        Tensor dt = q_sample(m0, t, eps, s);
        double a = s.sqrt_abar(t), b = s.sqrt_one_minus_abar(t);
        for (std::int64_t i = 0; i < m0.size(); ++i) CHECK(dt[i] == a * m0[i] + b * eps[i]);
    }

    // abar -> 0 limit: d approaches eps
    Tensor dT = q_sample(m0, 49, eps, s);
    for (std::int64_t i = 0; i < m0.size(); ++i)
        CHECK(dT[i] == Catch::Approx(eps[i]).margin(0.15 * std::abs(m0[i]) + 0.03));

    CHECK_THROWS_AS(q_sample(m0, 50, eps, s), error);
    CHECK_THROWS_AS(q_sample(m0, 10, Tensor::zeros({2, 2}), s), error);
}

TEST_CASE("q_sample: Monte Carlo variance matches abar mixing within 2 percent") {
    DiffusionSchedule s = make_schedule(50);
    int t = 20;
    double sigma0 = 1.5;
    Rng rng(12345);
    const int n = 100000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        Tensor m0 = Tensor::scalar(rng.normal(0.0, sigma0));
        Tensor eps = Tensor::scalar(rng.normal());
        double d = q_sample(m0, t, eps, s).item();
        sum += d;
        sum2 += d * d;
    }
    double mean = sum / n;
    double var = sum2 / n - mean * mean;
    double expected = s.abar(t) * sigma0 * sigma0 + (1.0 - s.abar(t));
    CHECK(var == Catch::Approx(expected).epsilon(0.02));
}

TEST_CASE("sample: T=1 reduces to one denoise of the initial noise") {
    DiffusionSchedule s = make_schedule(1);
    Tensor seen_input;
    int seen_t = -1;
    DenoiseFn probe = [&](const Tensor& d, int t) {
        seen_input = d;
        seen_t = t;
        Tensor out = d;
        for (std::int64_t i = 0; i < out.size(); ++i) out[i] = 2.0 * d[i] + 1.0;
        return out;
    };
    Tensor out = diffusion_sample(probe, s, {3, 2}, 99);
    CHECK(seen_t == 0);
    // reproduce the initial noise draw
    Rng rng(99);
    for (std::int64_t i = 0; i < 6; ++i) {
        double n = rng.normal();
        CHECK(seen_input[i] == n);
        CHECK(out[i] == 2.0 * n + 1.0);
    }
}

TEST_CASE("sample: constant-oracle denoiser is a fixed point") {
    DiffusionSchedule s = make_schedule(50);
    Rng rng(5);
    Tensor target = testutil::random_tensor(rng, {6, 4});
    DenoiseFn oracle = [&](const Tensor&, int) { return target; };
    Tensor out = diffusion_sample(oracle, s, {6, 4}, 1234);
    for (std::int64_t i = 0; i < target.size(); ++i) CHECK(out[i] == target[i]);
}

TEST_CASE("sample_inpaint: all-ones mask returns the reference exactly") {
    DiffusionSchedule s = make_schedule(20);
    Rng rng(6);
    Tensor ref = testutil::random_tensor(rng, {5, 3});
    Tensor mask = Tensor::full({5, 3}, 1.0);
    DenoiseFn noisy = [&](const Tensor& d, int) {
        Tensor out = d;
        for (std::int64_t i = 0; i < out.size(); ++i) out[i] = 0.3 * d[i];
        return out;
    };
    Tensor out = diffusion_sample_inpaint(noisy, s, ref, mask, 777);
    for (std::int64_t i = 0; i < ref.size(); ++i) CHECK(out[i] == ref[i]);
}

TEST_CASE("sample_inpaint: zero mask is bitwise identical to sample") {
    DiffusionSchedule s = make_schedule(30);
    DenoiseFn fn = [&](const Tensor& d, int t) {
        Tensor out = d;
        for (std::int64_t i = 0; i < out.size(); ++i)
            out[i] = std::tanh(d[i]) + 0.01 * t;
        return out;
    };
    Tensor ref = Tensor::zeros({4, 3});
    Tensor mask = Tensor::zeros({4, 3});
    Tensor a = diffusion_sample(fn, s, {4, 3}, 2024);
    Tensor b = diffusion_sample_inpaint(fn, s, ref, mask, 2024);
    for (std::int64_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("sample_inpaint: masked columns keep the reference, free columns move") {
    DiffusionSchedule s = make_schedule(25);
    Rng rng(7);
    Tensor ref = testutil::random_tensor(rng, {6, 8});
    // keep the first 5 columns ("body"), regenerate the rest ("hands")
    Tensor mask = Tensor::zeros({6, 8});
    for (std::int64_t f = 0; f < 6; ++f)
        for (std::int64_t c = 0; c < 5; ++c) mask.at(f, c) = 1.0;
    DenoiseFn fn = [&](const Tensor& d, int) {
        Tensor out = d;
        for (std::int64_t i = 0; i < out.size(); ++i) out[i] = 0.5 * d[i] + 0.1;
        return out;
    };
    Tensor out = diffusion_sample_inpaint(fn, s, ref, mask, 31337);
    double free_diff = 0.0;
    for (std::int64_t f = 0; f < 6; ++f) {
        for (std::int64_t c = 0; c < 5; ++c) CHECK(out.at(f, c) == ref.at(f, c));
        for (std::int64_t c = 5; c < 8; ++c) free_diff += std::abs(out.at(f, c) - ref.at(f, c));
    }
    CHECK(free_diff > 1e-6);

    Tensor bad_mask = Tensor::full({6, 8}, 0.5);
    CHECK_THROWS_AS(diffusion_sample_inpaint(fn, s, ref, bad_mask, 1), error);
}

TEST_CASE("sample: trained 1-d toy model produces the two data modes") {
    // data: m0 uniform on {-1, +1}
    DiffusionSchedule s = make_schedule(50);
    ParameterStore store;
    Rng rng(42);
    const std::int64_t temb_dim = 8;
    init_linear(store, "l1", 1 + temb_dim, 32, rng);
    init_linear(store, "l2", 32, 32, rng);
    init_linear(store, "l3", 32, 1, rng);

    auto net_forward = [&](GraphBinding& bind, const Tensor& x) {
        ag::Var h = ag::gelu(linear(bind, "l1", bind.graph().constant(x)));
        h = ag::gelu(linear(bind, "l2", h));
        return linear(bind, "l3", h);
    };

    AdamOptimizer adam(store.total_size(), 1e-2);
    // antithetic pairs: for every (d, m0) also (-d, -m0), so the regression
    // target is an odd function and the sampler sees symmetric basins
    const int batch = 256;
    for (int step = 0; step < 1500; ++step) {
        Tensor x = Tensor::zeros({batch, 1 + temb_dim});
        Tensor target = Tensor::zeros({batch, 1});
        for (int i = 0; i < batch; i += 2) {
            double m0 = rng.uniform() < 0.5 ? -1.0 : 1.0;
            int t = static_cast<int>(rng.index(50));
            double d = s.sqrt_abar(t) * m0 + s.sqrt_one_minus_abar(t) * rng.normal();
            Tensor temb = timestep_embedding({t}, temb_dim);
            for (int sgn = 0; sgn < 2; ++sgn) {
                x.at(i + sgn, 0) = sgn ? -d : d;
                for (std::int64_t j = 0; j < temb_dim; ++j) x.at(i + sgn, 1 + j) = temb[j];
                target.at(i + sgn, 0) = sgn ? -m0 : m0;
            }
        }
        ag::Graph g;
        GraphBinding bind(g, store);
        ag::Var loss = ag::mse(net_forward(bind, x), g.constant(target));
        g.backward(loss);
        std::vector<double> grad(static_cast<std::size_t>(store.total_size()));
        bind.flat_grad(grad.data());
        std::vector<double> theta = store.flatten();
        adam.step(theta, grad);
        store.unflatten(theta);
    }

    DenoiseFn denoise = [&](const Tensor& d, int t) {
        Tensor x = Tensor::zeros({1, 1 + temb_dim});
        x.at(0, 0) = d[0];
        Tensor temb = timestep_embedding({t}, temb_dim);
        for (std::int64_t j = 0; j < temb_dim; ++j) x.at(0, 1 + j) = temb[j];
        ag::Graph g;
        GraphBinding bind(g, store);
        Tensor out = g.value(net_forward(bind, x));
        Tensor res = Tensor::zeros({1, 1});
        res[0] = out[0];
        return res;
    };

    const int draws = 1000;
    double mean = 0.0;
    std::map<int, int> hist;  // |x| histogram, bin width 0.1
    for (int i = 0; i < draws; ++i) {
        Tensor out = diffusion_sample(denoise, s, {1, 1}, 5000 + static_cast<std::uint64_t>(i));
        mean += out[0];
        hist[static_cast<int>(std::floor(std::abs(out[0]) / 0.1))]++;
    }
    mean /= draws;
    CHECK(mean >= -0.2);
    CHECK(mean <= 0.2);
    int best_bin = 0, best_count = -1;
    for (auto [bin, count] : hist)
        if (count > best_count) {
            best_count = count;
            best_bin = bin;
        }
    double mode = (best_bin + 0.5) * 0.1;
    CHECK(mode >= 0.7);
    CHECK(mode <= 1.3);
}

TEST_CASE("stitch: blend weights hit (1,0) and (0,1) and always sum to 1") {
    const std::int64_t L = 60;
    CHECK(stitch_blend_weight(0, L) == 1.0);
    CHECK(stitch_blend_weight(L - 1, L) == 0.0);
    for (std::int64_t i = 0; i < L; ++i) {
        double w = stitch_blend_weight(i, L);
        CHECK(w >= 0.0);
        CHECK(w <= 1.0);
        CHECK(w + (1.0 - w) == 1.0);
        if (i > 0) CHECK(w < stitch_blend_weight(i - 1, L));
    }
}

TEST_CASE("stitch: durations follow 4 + 2(N-1) seconds") {
    DiffusionSchedule s = make_schedule(8);
    Rng rng(8);
    Tensor target = testutil::random_tensor(rng, {120, 5});
    auto seg_fn = [&](int) -> DenoiseFn {
        return [&](const Tensor&, int) { return target; };
    };
    const int fps = 30;

    StitchResult one = diffusion_stitch_long(seg_fn, s, fps, 5, 4.0, 11);
    CHECK(one.segments == 1);
    CHECK(one.frames.dim(0) == 120);

    StitchResult three = diffusion_stitch_long(seg_fn, s, fps, 5, 8.0, 11);
    CHECK(three.segments == 3);
    CHECK(three.frames.dim(0) == 240);

    StitchResult five = diffusion_stitch_long(seg_fn, s, fps, 5, 12.0, 11);
    CHECK(five.segments == 5);
    CHECK(five.frames.dim(0) == 360);
    CHECK(five.seam_frames.size() == 4);

    CHECK_THROWS_AS(diffusion_stitch_long(seg_fn, s, fps, 5, 3.0, 11), error);
}

TEST_CASE("stitch: constant-oracle segments give a globally constant output") {
    DiffusionSchedule s = make_schedule(8);
    Tensor target = Tensor::full({120, 3}, 0.25);
    auto seg_fn = [&](int) -> DenoiseFn {
        return [&](const Tensor&, int) { return target; };
    };
    StitchResult r = diffusion_stitch_long(seg_fn, s, 30, 3, 8.0, 21);
    for (std::int64_t i = 0; i < r.frames.size(); ++i) CHECK(r.frames[i] == 0.25);
}

TEST_CASE("sampler: deterministic given the seed, different across seeds") {
    DiffusionSchedule s = make_schedule(20);
    DenoiseFn fn = [](const Tensor& d, int) {
        Tensor out = d;
        for (std::int64_t i = 0; i < out.size(); ++i) out[i] = 0.9 * d[i];
        return out;
    };
    Tensor a = diffusion_sample(fn, s, {4, 4}, 7);
    Tensor b = diffusion_sample(fn, s, {4, 4}, 7);
    Tensor c = diffusion_sample(fn, s, {4, 4}, 8);
    double diff = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        CHECK(a[i] == b[i]);
        diff += std::abs(a[i] - c[i]);
    }
    CHECK(diff > 1e-9);
}

TEST_CASE("sampler: posterior variant is finite and deterministic") {
    DiffusionSchedule s = make_schedule(20);
    DenoiseFn fn = [](const Tensor& d, int) {
        Tensor out = d;
        for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::tanh(d[i]);
        return out;
    };
    SamplerOptions opts;
    opts.posterior = true;
    Tensor a = diffusion_sample(fn, s, {3, 3}, 17, opts);
    Tensor b = diffusion_sample(fn, s, {3, 3}, 17, opts);
    CHECK(a.all_finite());
    for (std::int64_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}
