#include <catch_amalgamated.hpp>

#include <cmath>

#include "gcdance/audio.hpp"
#include "testutil.hpp"

using namespace gcdance;

namespace {

AudioBuffer sine(double freq, double seconds, int sr = 22050, double amp = 0.5) {
    AudioBuffer a;
    a.sample_rate = sr;
    a.samples.resize(static_cast<std::size_t>(seconds * sr));
    for (std::size_t i = 0; i < a.samples.size(); ++i)
        a.samples[i] = amp * std::sin(2.0 * M_PI * freq * static_cast<double>(i) / sr);
    return a;
}

AudioBuffer clicks_at_bpm(double bpm, double seconds, int sr = 22050) {
    std::vector<double> times;
    for (double t = 0.25; t < seconds - 0.05; t += 60.0 / bpm) times.push_back(t);
    return render_click_track(times, seconds, sr);
}

}  // namespace

TEST_CASE("stft: 4 seconds at 30 fps gives 120 rows regardless of sample rate") {
    for (int sr : {22050, 16000, 44100}) {
        AudioBuffer a = sine(440.0, 4.0, sr);
        Tensor feats = stft_features(a, 30);
        CHECK(feats.dim(0) == 120);
        CHECK(feats.dim(1) == 513);
    }
}

TEST_CASE("stft: silence maps to all-zero log magnitudes") {
    AudioBuffer a;
    a.sample_rate = 22050;
    a.samples.assign(22050, 0.0);
    Tensor feats = stft_features(a, 30);
    for (std::int64_t i = 0; i < feats.size(); ++i) CHECK(feats[i] == 0.0);
}

TEST_CASE("stft: pure 440 Hz tone peaks at the computed bin") {
    AudioBuffer a = sine(440.0, 2.0);
    Tensor feats = stft_features(a, 30, 1024);
    // expected bin: round(440 * 1024 / 22050) = 20
    std::int64_t expect = std::llround(440.0 * 1024 / 22050.0);
    REQUIRE(expect == 20);
    for (std::int64_t f = 2; f + 2 < feats.dim(0); ++f) {  // skip zero-padded edges
        std::int64_t best = 0;
        for (std::int64_t b = 1; b < feats.dim(1); ++b)
            if (feats.at(f, b) > feats.at(f, best)) best = b;
        CHECK(best == expect);
    }
}

TEST_CASE("stft: error paths") {
    AudioBuffer a = sine(440.0, 1.0);
    CHECK_THROWS_AS(stft_features(a, 30, 1000), error);  // not a power of two
    AudioBuffer empty;
    empty.sample_rate = 22050;
    CHECK_THROWS_AS(stft_features(empty, 30), error);
}

TEST_CASE("beats: click tracks from 60 to 180 bpm are recovered") {
    for (double bpm : {60.0, 90.0, 120.0, 150.0, 180.0}) {
        AudioBuffer a = clicks_at_bpm(bpm, 6.0);
        std::vector<int> beats = detect_music_beats(a, 30);

        std::vector<int> expected;
        for (double t = 0.25; t < 6.0 - 0.05; t += 60.0 / bpm)
            expected.push_back(static_cast<int>(std::lround(t * 30)));

        // recall 1.0 within +-1 frame
        int hits = 0;
        for (int e : expected) {
            bool found = false;
            for (int b : beats)
                if (std::abs(b - e) <= 1) found = true;
            if (found) ++hits;
        }
        INFO("bpm " << bpm);
        CHECK(hits == static_cast<int>(expected.size()));

        // precision >= 0.9
        int good = 0;
        for (int b : beats) {
            bool found = false;
            for (int e : expected)
                if (std::abs(b - e) <= 1) found = true;
            if (found) ++good;
        }
        CHECK(static_cast<double>(good) >= 0.9 * static_cast<double>(beats.size()));
    }
}

TEST_CASE("beats: silence gives an empty list") {
    AudioBuffer a;
    a.sample_rate = 22050;
    a.samples.assign(22050 * 2, 0.0);
    CHECK(detect_music_beats(a, 30).empty());
}

TEST_CASE("beats: a single click at t=1s lands on frame 30 within one frame") {
    AudioBuffer a = render_click_track({1.0}, 2.0);
    std::vector<int> beats = detect_music_beats(a, 30);
    REQUIRE(beats.size() == 1);
    CHECK(std::abs(beats[0] - 30) <= 1);
}

TEST_CASE("gcem: broadcast rule and error paths") {
    testutil::TempDir tmp("gcem");
    Rng rng(3);
    Tensor one_row = testutil::random_tensor(rng, {1, 512});
    save_gcem(one_row, tmp.path() / "one.gcem");
    Tensor broad = load_embeddings(tmp.path() / "one.gcem", 120);
    REQUIRE(broad.dim(0) == 120);
    REQUIRE(broad.dim(1) == 512);
    for (std::int64_t f = 0; f < 120; ++f)
        for (std::int64_t d = 0; d < 512; d += 97)
            CHECK(broad.at(f, d) == Catch::Approx(static_cast<float>(one_row.at(0, d))));

    Tensor full = testutil::random_tensor(rng, {120, 512});
    save_gcem(full, tmp.path() / "full.gcem");
    Tensor used = load_embeddings(tmp.path() / "full.gcem", 120);
    CHECK(used.dim(0) == 120);

    CHECK_THROWS_AS(load_embeddings(tmp.path() / "full.gcem", 60), error);

    atomic_write(tmp.path() / "bad.gcem", "WHAT????????");
    try {
        load_embeddings(tmp.path() / "bad.gcem", 120);
        FAIL("expected error");
    } catch (const error& e) {
        CHECK(std::string(e.what()).find("not a GCEM") != std::string::npos);
    }
}

TEST_CASE("assemble_features: concatenation arithmetic and flags") {
    Rng rng(5);
    Tensor stft = testutil::random_tensor(rng, {120, 513});
    Tensor embed = testutil::random_tensor(rng, {120, 512});
    MusicFeatures mf = assemble_features(stft, &embed, 30);
    CHECK(mf.matrix.dim(0) == 120);
    CHECK(mf.matrix.dim(1) == 1025);
    CHECK(mf.has_stft);
    CHECK(mf.has_embedding);
    // entries preserved bitwise, stft block first
    CHECK(mf.matrix.at(7, 100) == stft.at(7, 100));
    CHECK(mf.matrix.at(7, 513 + 100) == embed.at(7, 100));

    MusicFeatures only = assemble_features(stft, nullptr, 30);
    CHECK_FALSE(only.has_embedding);
    CHECK(only.matrix.dim(1) == 513);

    Tensor short_embed = testutil::random_tensor(rng, {60, 512});
    CHECK_THROWS_AS(assemble_features(stft, &short_embed, 30), error);
}

TEST_CASE("wav round trip: mono and stereo-to-mono") {
    testutil::TempDir tmp("wav");
    AudioBuffer a = sine(440.0, 0.5);
    save_wav(a, tmp.path() / "a.wav");
    AudioBuffer b = load_wav(tmp.path() / "a.wav");
    CHECK(b.sample_rate == 22050);
    REQUIRE(b.samples.size() == a.samples.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < a.samples.size(); ++i)
        worst = std::max(worst, std::abs(a.samples[i] - b.samples[i]));
    CHECK(worst < 1.0 / 32000.0);
}
