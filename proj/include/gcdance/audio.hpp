#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "gcdance/common.hpp"
#include "gcdance/io.hpp"
#include "gcdance/tensor.hpp"

namespace gcdance {

// ---------------------------------------------------------------------------
// AudioBuffer + PCM16 WAV I/O. Stereo is averaged to mono on load; there is
// no resampling — the STFT hop adapts to the sample rate instead.
// ---------------------------------------------------------------------------

struct AudioBuffer {
    int sample_rate = 0;
    std::vector<double> samples;  // mono, [-1, 1]

    double duration() const {
        return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
    }
};

inline void save_wav(const AudioBuffer& audio, const fs::path& path) {
    require(audio.sample_rate > 0, errc::data, "wav: sample rate must be positive");
    ByteWriter w;
    std::uint32_t n = static_cast<std::uint32_t>(audio.samples.size());
    std::uint32_t data_bytes = n * 2;
    w.bytes("RIFF", 4);
    w.u32(36 + data_bytes);
    w.bytes("WAVE", 4);
    w.bytes("fmt ", 4);
    w.u32(16);
    w.u32(1u | (1u << 16));  // PCM tag, 1 channel
    w.u32(static_cast<std::uint32_t>(audio.sample_rate));
    w.u32(static_cast<std::uint32_t>(audio.sample_rate) * 2);  // byte rate
    w.u32(2u | (16u << 16));                                   // block align | bits per sample
    w.bytes("data", 4);
    w.u32(data_bytes);
    for (double s : audio.samples) {
        double c = std::clamp(s, -1.0, 1.0);
        auto v = static_cast<std::int16_t>(std::lround(c * 32767.0));
        std::uint16_t u = static_cast<std::uint16_t>(v);
        char b[2] = {static_cast<char>(u & 0xFF), static_cast<char>((u >> 8) & 0xFF)};
        w.bytes(b, 2);
    }
    atomic_write(path, w.str());
}

inline AudioBuffer load_wav(const fs::path& path) {
    std::string bytes = read_file(path);
    ByteReader r(bytes, path.string());
    r.expect_magic("RIFF", "WAV");
    r.u32();
    r.expect_magic("WAVE", "WAV");

    int channels = 0, bits = 0;
    AudioBuffer out;
    bool got_fmt = false, got_data = false;
    while (r.remaining() >= 8 && !(got_fmt && got_data)) {
        std::string tag = r.tag4();
        std::uint32_t size = r.u32();
        if (tag == "fmt ") {
            require(size >= 16, errc::data, path.string() + ": malformed fmt chunk");
            std::uint32_t fmt_chan = r.u32();
            std::uint32_t format = fmt_chan & 0xFFFF;
            channels = static_cast<int>(fmt_chan >> 16);
            out.sample_rate = static_cast<int>(r.u32());
            r.u32();  // byte rate
            std::uint32_t align_bits = r.u32();
            bits = static_cast<int>(align_bits >> 16);
            require(format == 1, errc::data, path.string() + ": only PCM WAV supported");
            require(bits == 16, errc::data, path.string() + ": only 16-bit WAV supported");
            require(channels == 1 || channels == 2, errc::data,
                    path.string() + ": only mono/stereo WAV supported");
            if (size > 16) r.skip(size - 16);
            got_fmt = true;
        } else if (tag == "data") {
            require(got_fmt, errc::data, path.string() + ": data chunk before fmt");
            std::size_t frames = size / (2u * static_cast<unsigned>(channels));
            out.samples.resize(frames);
            std::vector<char> raw(size);
            r.raw_bytes(raw.data(), size);
            for (std::size_t i = 0; i < frames; ++i) {
                double acc = 0.0;
                for (int c = 0; c < channels; ++c) {
                    std::size_t o = (i * static_cast<std::size_t>(channels) + static_cast<std::size_t>(c)) * 2;
                    auto lo = static_cast<std::uint8_t>(raw[o]);
                    auto hi = static_cast<std::uint8_t>(raw[o + 1]);
                    auto v = static_cast<std::int16_t>(static_cast<std::uint16_t>(lo) |
                                                       (static_cast<std::uint16_t>(hi) << 8));
                    acc += static_cast<double>(v) / 32767.0;
                }
                out.samples[i] = acc / channels;
            }
            got_data = true;
        } else {
            r.skip(size);
        }
    }
    require(got_fmt && got_data, errc::data, path.string() + ": missing fmt/data chunk");
    require(out.sample_rate > 0, errc::data, path.string() + ": bad sample rate");
    return out;
}

// 1 kHz exponentially-decaying click at each beat time; the synthetic stand-in
// for music paired with generated motion.
inline AudioBuffer render_click_track(const std::vector<double>& beat_times, double seconds,
                                      int sample_rate = 22050) {
    AudioBuffer audio;
    audio.sample_rate = sample_rate;
    audio.samples.assign(static_cast<std::size_t>(std::llround(seconds * sample_rate)), 0.0);
    for (double t : beat_times) {
        auto start = static_cast<std::int64_t>(std::llround(t * sample_rate));
        auto len = static_cast<std::int64_t>(0.03 * sample_rate);
        for (std::int64_t i = 0; i < len; ++i) {
            std::int64_t s = start + i;
            if (s < 0 || s >= static_cast<std::int64_t>(audio.samples.size())) continue;
            double tt = static_cast<double>(i) / sample_rate;
            audio.samples[static_cast<std::size_t>(s)] +=
                0.8 * std::exp(-tt / 0.008) * std::sin(2.0 * M_PI * 1000.0 * tt);
        }
    }
    for (double& s : audio.samples) s = std::clamp(s, -1.0, 1.0);
    return audio;
}

// ---------------------------------------------------------------------------
// STFT features aligned 1:1 with motion frames.
// ---------------------------------------------------------------------------

namespace detail {

inline void fft_inplace(std::vector<std::complex<double>>& a) {
    std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        double ang = -2.0 * M_PI / static_cast<double>(len);
        std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t j = 0; j < len / 2; ++j) {
                std::complex<double> u = a[i + j];
                std::complex<double> v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

}  // namespace detail

// Number of motion-aligned audio frames: floor(duration * fps), computed in
// integer arithmetic.
inline std::int64_t frame_count_for(std::size_t n_samples, int sample_rate, int fps) {
    return static_cast<std::int64_t>(n_samples) * fps / sample_rate;
}

// Log-magnitude STFT, one row per motion frame. Windows are Hann, centered at
// i * hop with hop = round(sample_rate / fps), zero-padded at the edges.
inline Tensor stft_features(const AudioBuffer& audio, int fps, int n_fft = 1024) {
    require(!audio.samples.empty(), errc::data, "stft: empty audio");
    require(n_fft > 0 && (n_fft & (n_fft - 1)) == 0, errc::data,
            "stft: n_fft must be a power of two");
    require(audio.sample_rate > 0, errc::data, "stft: bad sample rate");
    std::int64_t k = frame_count_for(audio.samples.size(), audio.sample_rate, fps);
    require(k >= 1, errc::data, "stft: audio shorter than one motion frame");

    std::int64_t hop = std::llround(static_cast<double>(audio.sample_rate) / fps);
    std::int64_t bins = n_fft / 2 + 1;
    std::vector<double> window(static_cast<std::size_t>(n_fft));
    for (int i = 0; i < n_fft; ++i)
        window[static_cast<std::size_t>(i)] =
            0.5 - 0.5 * std::cos(2.0 * M_PI * i / static_cast<double>(n_fft));

    Tensor out = Tensor::zeros({k, bins});
    std::vector<std::complex<double>> buf(static_cast<std::size_t>(n_fft));
    auto n_samples = static_cast<std::int64_t>(audio.samples.size());
    for (std::int64_t f = 0; f < k; ++f) {
        std::int64_t center = f * hop;
        for (std::int64_t i = 0; i < n_fft; ++i) {
            std::int64_t s = center - n_fft / 2 + i;
            double v = (s >= 0 && s < n_samples) ? audio.samples[static_cast<std::size_t>(s)] : 0.0;
            buf[static_cast<std::size_t>(i)] = v * window[static_cast<std::size_t>(i)];
        }
        detail::fft_inplace(buf);
        for (std::int64_t b = 0; b < bins; ++b)
            out.at(f, b) = std::log1p(std::abs(buf[static_cast<std::size_t>(b)]));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Beat detection: spectral flux onset envelope, peaks above a moving median
// plus a fraction of the envelope maximum, minimum inter-beat gap.
// ---------------------------------------------------------------------------

struct BeatConfig {
    double median_window_s = 0.5;
    double delta_fraction = 0.10;  // of the envelope max
    double min_gap_s = 0.2;
};

inline std::vector<int> detect_music_beats(const AudioBuffer& audio, int fps,
                                           const BeatConfig& cfg = {}) {
    require(audio.duration() >= 1.0, errc::data, "beats: need at least 1 second of audio");
    Tensor mag = stft_features(audio, fps);
    std::int64_t k = mag.dim(0), bins = mag.dim(1);

    std::vector<double> flux(static_cast<std::size_t>(k), 0.0);
    for (std::int64_t f = 1; f < k; ++f) {
        double acc = 0.0;
        for (std::int64_t b = 0; b < bins; ++b)
            acc += std::max(0.0, mag.at(f, b) - mag.at(f - 1, b));
        flux[static_cast<std::size_t>(f)] = acc;
    }
    double max_flux = *std::max_element(flux.begin(), flux.end());
    if (max_flux <= 0.0) return {};

    auto half = static_cast<std::int64_t>(cfg.median_window_s * fps / 2.0);
    auto moving_median = [&](std::int64_t f) {
        std::vector<double> w;
        for (std::int64_t i = std::max<std::int64_t>(0, f - half);
             i <= std::min<std::int64_t>(k - 1, f + half); ++i)
            w.push_back(flux[static_cast<std::size_t>(i)]);
        std::nth_element(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(w.size() / 2), w.end());
        return w[w.size() / 2];
    };

    double delta = cfg.delta_fraction * max_flux;
    std::vector<std::pair<double, int>> candidates;  // (magnitude, frame)
    for (std::int64_t f = 0; f < k; ++f) {
        double v = flux[static_cast<std::size_t>(f)];
        double prev = f > 0 ? flux[static_cast<std::size_t>(f - 1)] : -1.0;
        double next = f + 1 < k ? flux[static_cast<std::size_t>(f + 1)] : -1.0;
        if (v >= prev && v > next && v > moving_median(f) + delta)
            candidates.push_back({v, static_cast<int>(f)});
    }
    // greedy by magnitude with the minimum gap
    std::sort(candidates.begin(), candidates.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });
    auto gap = static_cast<int>(cfg.min_gap_s * fps);
    std::vector<int> taken;
    for (const auto& [mag_v, frame] : candidates) {
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

// ---------------------------------------------------------------------------
// GCEM embedding files: externally computed foundation-model embeddings.
// magic "GCEM", u32 version=1, u32 rows, u32 dim, rows x dim LE float32.
// ---------------------------------------------------------------------------

inline void save_gcem(const Tensor& rows, const fs::path& path) {
    require(rows.rank() == 2, errc::data, "gcem: rank-2 tensor required");
    ByteWriter w;
    w.bytes("GCEM", 4);
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(rows.dim(0)));
    w.u32(static_cast<std::uint32_t>(rows.dim(1)));
    w.f32_array(rows.data(), static_cast<std::size_t>(rows.size()));
    atomic_write(path, w.str());
}

// Loads a GCEM file for a clip with `frames` rows. Single-row files broadcast
// to every frame; otherwise the row count must match exactly.
inline Tensor load_embeddings(const fs::path& path, std::int64_t frames) {
    std::string bytes = read_file(path);
    ByteReader r(bytes, path.string());
    r.expect_magic("GCEM", "GCEM");
    require(r.u32() == 1, errc::data, path.string() + ": unsupported GCEM version");
    std::int64_t rows = r.u32();
    std::int64_t dim = r.u32();
    require(rows > 0 && dim > 0, errc::data, path.string() + ": empty GCEM");
    require(rows == 1 || rows == frames, errc::data,
            path.string() + ": row count " + std::to_string(rows) + " matches neither 1 nor " +
                std::to_string(frames));
    Tensor raw = Tensor::zeros({rows, dim});
    r.f32_array(raw.data(), static_cast<std::size_t>(raw.size()));
    if (rows == frames) return raw;
    Tensor out = Tensor::zeros({frames, dim});
    for (std::int64_t f = 0; f < frames; ++f)
        for (std::int64_t d = 0; d < dim; ++d) out.at(f, d) = raw.at(0, d);
    return out;
}

// ---------------------------------------------------------------------------
// MusicFeatures: STFT block first, then the optional embedding block.
// ---------------------------------------------------------------------------

struct MusicFeatures {
    Tensor matrix;  // [k, F]
    int fps = 30;
    bool has_stft = false;
    bool has_embedding = false;
    std::int64_t stft_dim = 0;
    std::int64_t embed_dim = 0;
};

inline MusicFeatures assemble_features(const Tensor& stft, const Tensor* embed, int fps) {
    MusicFeatures mf;
    mf.fps = fps;
    mf.has_stft = true;
    mf.stft_dim = stft.dim(1);
    if (!embed) {
        mf.matrix = stft;
        return mf;
    }
    require(embed->dim(0) == stft.dim(0), errc::data,
            "assemble_features: row mismatch " + std::to_string(stft.dim(0)) + " vs " +
                std::to_string(embed->dim(0)));
    mf.has_embedding = true;
    mf.embed_dim = embed->dim(1);
    mf.matrix = Tensor::zeros({stft.dim(0), stft.dim(1) + embed->dim(1)});
    for (std::int64_t r = 0; r < stft.dim(0); ++r) {
        for (std::int64_t c = 0; c < stft.dim(1); ++c) mf.matrix.at(r, c) = stft.at(r, c);
        for (std::int64_t c = 0; c < embed->dim(1); ++c)
            mf.matrix.at(r, stft.dim(1) + c) = embed->at(r, c);
    }
    return mf;
}

}  // namespace gcdance
