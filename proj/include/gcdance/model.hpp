#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "gcdance/audio.hpp"
#include "gcdance/conditioning.hpp"
#include "gcdance/denoiser.hpp"
#include "gcdance/diffusion.hpp"
#include "gcdance/motion.hpp"
#include "gcdance/skeleton.hpp"

namespace gcdance {

inline constexpr const char* kCodeVersion = "gcdance 1.0.0";

// Everything needed to train, sample and classify: skeleton, vocabulary, the
// denoiser, the genre-embedding table, the text classifier, and the
// normalization statistics. Checkpoints are self-contained.
class GcModel {
public:
    Skeleton skel;
    GenreVocabulary vocab;
    DiffusionSchedule schedule;
    SamplerOptions sampler_opts;
    Denoiser denoiser;
    TextGenreClassifier classifier;
    ParameterStore params;
    NormStats norm;
    std::string schedule_kind = "cosine";
    std::uint64_t corpus_seed = 0;

    GcModel(Skeleton s, GenreVocabulary v, DenoiserConfig dcfg, int timesteps,
            std::string kind, bool posterior, std::uint64_t corpus_seed_,
            std::vector<std::string> token_vocab)
        : skel(std::move(s)),
          vocab(std::move(v)),
          schedule(make_schedule(timesteps, kind)),
          denoiser(dcfg, skel),
          classifier(std::move(token_vocab), vocab.size()),
          schedule_kind(std::move(kind)),
          corpus_seed(corpus_seed_) {
        sampler_opts.posterior = posterior;
    }

    static GcModel create(Skeleton s, GenreVocabulary v, DenoiserConfig dcfg, int timesteps,
                          const std::string& kind, bool posterior, std::uint64_t corpus_seed,
                          std::uint64_t init_seed) {
        DescriptionCorpus corpus = build_description_corpus(v, corpus_seed);
        GcModel m(std::move(s), std::move(v), dcfg, timesteps, kind, posterior, corpus_seed,
                  TextGenreClassifier::corpus_tokens(corpus.train));
        Rng rng(init_seed);
        m.denoiser.init_params(m.params, rng);
        init_genre_embedding(m.params, m.vocab.size(), dcfg.genre_embed_dim, rng);
        m.classifier.init_params(m.params, rng);
        return m;
    }

    // ------------------------------------------------------------------
    // checkpoint I/O: parameter manifest + blob via ParameterStore, model
    // structure and normalization stats in the manifest's extra payload
    // ------------------------------------------------------------------

    void save_checkpoint(const fs::path& dir) const {
        nlohmann::json extra;
        extra["code_version"] = kCodeVersion;
        extra["skeleton"] = skeleton_to_json(skel);
        extra["vocabulary"] = vocab.to_json();
        extra["denoiser"] = denoiser.config().to_json();
        extra["schedule"] = {{"timesteps", schedule.timesteps},
                             {"kind", schedule_kind},
                             {"posterior", sampler_opts.posterior}};
        extra["corpus_seed"] = corpus_seed;
        extra["token_vocab"] = classifier.tokens();
        if (norm.valid) {
            extra["norm_mean"] = std::vector<double>(norm.mean.data(),
                                                     norm.mean.data() + norm.mean.size());
            extra["norm_std"] = std::vector<double>(norm.stddev.data(),
                                                    norm.stddev.data() + norm.stddev.size());
        }
        params.save(dir, extra);
    }

    static GcModel load_checkpoint(const fs::path& dir) {
        nlohmann::json manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
        nlohmann::json extra = manifest.at("extra");
        Skeleton s = skeleton_from_json(extra.at("skeleton"));
        GenreVocabulary v = GenreVocabulary::from_json(extra.at("vocabulary"));
        DenoiserConfig dcfg = DenoiserConfig::from_json(extra.at("denoiser"));
        GcModel m(std::move(s), std::move(v), dcfg, extra.at("schedule").at("timesteps"),
                  extra.at("schedule").at("kind"), extra.at("schedule").value("posterior", false),
                  extra.value("corpus_seed", 0ull),
                  extra.at("token_vocab").get<std::vector<std::string>>());
        Rng rng(0);
        m.denoiser.init_params(m.params, rng);
        init_genre_embedding(m.params, m.vocab.size(), dcfg.genre_embed_dim, rng);
        m.classifier.init_params(m.params, rng);
        m.params.load(dir);
        if (extra.contains("norm_mean")) {
            auto mean = extra.at("norm_mean").get<std::vector<double>>();
            auto stddev = extra.at("norm_std").get<std::vector<double>>();
            m.norm.mean = Tensor::from({static_cast<std::int64_t>(mean.size())}, mean);
            m.norm.stddev = Tensor::from({static_cast<std::int64_t>(stddev.size())}, stddev);
            m.norm.valid = true;
        }
        return m;
    }

    // ------------------------------------------------------------------
    // generation
    // ------------------------------------------------------------------

    // Denoiser closure over fixed conditioning, operating in normalized
    // motion space. music: [k, music_dim].
    DenoiseFn make_denoise_fn(int genre_id, Tensor music) {
        Tensor ce = genre_embedding_row(params, genre_id);
        return [this, ce, music = std::move(music)](const Tensor& d_t, int t) {
            return denoiser.denoise(params, d_t, t, ce, music);
        };
    }

    MotionClip finalize_clip(Tensor frames_raw, int fps) const {
        // clamp contact dims into the valid range
        std::int64_t cc = skel.contact_col();
        for (std::int64_t i = 0; i < frames_raw.dim(0); ++i)
            for (int c = 0; c < 4; ++c) {
                double& v = frames_raw.at(i, cc + c);
                v = std::clamp(v, 0.0, 1.0);
            }
        return {fps, std::move(frames_raw)};
    }

    MotionClip generate(int genre_id, const MusicFeatures& music, std::int64_t k,
                        std::uint64_t seed) {
        require(norm.valid, errc::data, "generate: checkpoint has no normalization stats");
        require(music.matrix.dim(0) == k, errc::data,
                "generate: music feature rows (" + std::to_string(music.matrix.dim(0)) +
                    ") do not match frame count (" + std::to_string(k) + ")");
        Tensor out_norm = diffusion_sample(make_denoise_fn(genre_id, music.matrix), schedule,
                                           {k, skel.frame_dim()}, seed, sampler_opts);
        return finalize_clip(denormalize_frames(out_norm, norm), music.fps);
    }

    // Inpainting-constrained generation. The mask marks entries kept from the
    // reference (1 = keep); kept entries of the output equal the reference
    // bit for bit.
    MotionClip generate_inpaint(int genre_id, const MusicFeatures& music,
                                const MotionClip& reference, const Tensor& mask,
                                std::uint64_t seed) {
        require(norm.valid, errc::data, "generate: checkpoint has no normalization stats");
        reference.validate(skel);
        require(mask.same_shape(reference.frames), errc::data,
                "generate: mask shape does not match the reference clip");
        Tensor known_norm = normalize_frames(reference.frames, norm);
        Tensor out_norm =
            diffusion_sample_inpaint(make_denoise_fn(genre_id, music.matrix), schedule,
                                     known_norm, mask, seed, sampler_opts);
        Tensor raw = denormalize_frames(out_norm, norm);
        // re-impose the constraint in raw space so kept entries match exactly
        for (std::int64_t i = 0; i < raw.size(); ++i)
            if (mask[i] == 1.0) raw[i] = reference.frames[i];
        return finalize_clip(std::move(raw), music.fps);
    }

    // Long-form generation; music features per 4-second segment.
    MotionClip generate_long(int genre_id, const std::vector<MusicFeatures>& segments,
                             double total_seconds, std::uint64_t seed) {
        require(norm.valid, errc::data, "generate: checkpoint has no normalization stats");
        require(!segments.empty(), errc::data, "generate: no music segments");
        int fps = segments[0].fps;
        std::int64_t seg_k = 4 * fps;
        for (const auto& s : segments)
            require(s.matrix.dim(0) == seg_k, errc::data,
                    "generate: every music segment must cover 4 seconds");
        auto seg_fn = [&](int n) -> DenoiseFn {
            const MusicFeatures& m = segments[std::min<std::size_t>(
                static_cast<std::size_t>(n), segments.size() - 1)];
            return make_denoise_fn(genre_id, m.matrix);
        };
        StitchResult res = diffusion_stitch_long(seg_fn, schedule, fps, skel.frame_dim(),
                                                 total_seconds, seed, /*contact_col=*/-1,
                                                 sampler_opts);
        // stitching runs in normalized space; contact re-thresholding happens
        // on the raw flags after denormalization
        Tensor raw = denormalize_frames(res.frames, norm);
        std::int64_t cc = skel.contact_col();
        std::int64_t overlap = 2 * fps;
        for (std::int64_t seam : res.seam_frames)
            for (std::int64_t i = seam; i < std::min<std::int64_t>(seam + overlap, raw.dim(0)); ++i)
                for (int c = 0; c < 4; ++c)
                    raw.at(i, cc + c) = raw.at(i, cc + c) >= 0.5 ? 1.0 : 0.0;
        return finalize_clip(std::move(raw), fps);
    }
};

}  // namespace gcdance
