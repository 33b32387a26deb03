// gcdance: genre-controlled dance generation toolkit.
//
// Subcommands: synth, train, generate, edit, eval, classify. Every seeded
// command is byte-reproducible; run provenance goes to run_manifest.json
// beside the outputs (its start timestamp is the one non-reproducible field).

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "gcdance/config.hpp"
#include "gcdance/dataset.hpp"
#include "gcdance/metrics.hpp"
#include "gcdance/model.hpp"
#include "gcdance/parallel.hpp"
#include "gcdance/trainer.hpp"

using namespace gcdance;

namespace {

constexpr std::uint64_t kClassifierTrainSeed = 0xC1A55u;

void write_manifest(const fs::path& dir, const std::string& command,
                    const nlohmann::json& config, std::uint64_t seed,
                    const std::vector<std::string>& outputs,
                    const nlohmann::json& notes = nlohmann::json::object()) {
    nlohmann::json m;
    m["command"] = command;
    m["config_hash"] = fnv1a64(config.dump());
    m["code_version"] = kCodeVersion;
    m["seed"] = seed;
    m["outputs"] = outputs;
    m["wall_clock_start"] =
        std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
    if (!notes.empty()) m["notes"] = notes;
    fs::create_directories(dir);
    atomic_write(dir / "run_manifest.json", m.dump(2) + "\n");
}

// Music features for a clip of `seconds`, from a WAV file or a beats JSON
// ({"fps": 30, "frames": [..]}) rendered to a click track.
MusicFeatures music_for(const std::string& wav_path, const std::string& beats_path,
                        double seconds, int fps, std::int64_t music_dim) {
    require(((music_dim - 1) & (music_dim - 2)) == 0 && music_dim >= 2, errc::data,
            "music features: checkpoint music_dim must be 2^m + 1");
    int n_fft = static_cast<int>((music_dim - 1) * 2);
    AudioBuffer audio;
    if (!wav_path.empty()) {
        audio = load_wav(wav_path);
        require(audio.duration() + 1e-9 >= seconds, errc::data,
                "music: " + wav_path + " is shorter than the requested " +
                    std::to_string(seconds) + " s");
    } else {
        nlohmann::json j = nlohmann::json::parse(read_file(beats_path));
        int beat_fps = j.value("fps", fps);
        std::vector<double> times;
        for (const auto& f : j.at("frames"))
            times.push_back(f.get<double>() / static_cast<double>(beat_fps));
        audio = render_click_track(times, seconds);
    }
    auto k = static_cast<std::int64_t>(seconds * fps);
    Tensor stft = stft_features(audio, fps, n_fft);
    require(stft.dim(0) >= k, errc::data, "music: audio shorter than the motion to generate");
    Tensor cut = Tensor::zeros({k, stft.dim(1)});
    for (std::int64_t i = 0; i < k; ++i)
        for (std::int64_t c = 0; c < stft.dim(1); ++c) cut.at(i, c) = stft.at(i, c);
    return assemble_features(cut, nullptr, fps);
}

int resolve_genre(GcModel& model, const std::string& genre, const std::string& prompt,
                  bool* warned = nullptr) {
    if (!genre.empty()) return model.vocab.index(genre);
    GenreDistribution d = model.classifier.classify(model.params, prompt);
    if (warned) *warned = d.unknown_tokens_warning;
    return d.argmax();
}

// ---------------------------------------------------------------------------

int cmd_synth(int genres, int clips, double seconds, std::uint64_t seed, std::string out,
              bool force, std::string vocab_path, std::string skeleton_path, int fps) {
    ExperimentConfig paths;
    paths.skeleton = skeleton_path;
    paths.vocabulary = vocab_path;
    Skeleton skel = paths.resolve_skeleton();
    GenreVocabulary vocab = paths.resolve_vocabulary();
    SynthDatasetConfig cfg;
    cfg.genres = genres;
    cfg.clips_per_genre = clips;
    cfg.seconds = seconds;
    cfg.fps = fps;
    cfg.seed = seed;
    auto entries = write_synth_dataset(out, vocab, skel, cfg, force);
    std::vector<std::string> outputs;
    for (const auto& e : entries) outputs.push_back(e.clip_file);
    write_manifest(out, "synth",
                   nlohmann::json{{"genres", genres}, {"clips", clips}, {"seconds", seconds}},
                   seed, outputs);
    std::printf("wrote %zu clips across %d genres to %s\n", entries.size(), genres, out.c_str());
    return 0;
}

int cmd_train(std::string config_path, std::string mtl_override, std::string out, bool resume) {
    nlohmann::json config_json = nlohmann::json::parse(read_file(config_path));
    ExperimentConfig cfg = parse_experiment_config(config_json);
    if (!mtl_override.empty()) cfg.mtl_mode = mtl_override;
    require(!cfg.train_dir.empty(), errc::data, "train: config lacks data.train_dir");

    GcModel model = resume ? GcModel::load_checkpoint(out)
                           : GcModel::create(cfg.resolve_skeleton(), cfg.resolve_vocabulary(),
                                             cfg.denoiser, cfg.schedule_timesteps,
                                             cfg.schedule_kind, cfg.schedule_posterior,
                                             cfg.corpus_seed, cfg.seed);
    TrainingData data = TrainingData::load(cfg.train_dir, model, cfg.holdout_fraction, cfg.seed);

    TrainOptions opts;
    opts.mtl_mode = cfg.mtl_mode;
    opts.fixed_weights = cfg.fixed_weights;
    opts.learning_rate = cfg.learning_rate;
    opts.steps = cfg.steps;
    opts.batch_size = cfg.batch_size;
    opts.alpha_interval = cfg.alpha_interval;
    opts.seed = cfg.seed;

    write_manifest(out, "train", config_json, cfg.seed, {"manifest.json", "weights.bin"},
                   {{"mtl_mode", cfg.mtl_mode}, {"resume", resume}});
    TrainRunResult res = run_training(model, std::move(data), opts, out, resume);
    std::printf("trained %d steps (%s): holdout L_S %.6f -> %.6f\n", res.steps,
                cfg.mtl_mode.c_str(), res.initial_holdout_ls, res.final_holdout_ls);
    return 0;
}

int cmd_generate(std::string ckpt, std::string music, std::string beats, std::string prompt,
                 std::string genre, double seconds, std::uint64_t seed, std::string out) {
    GcModel model = GcModel::load_checkpoint(ckpt);
    bool warned = false;
    int genre_id = resolve_genre(model, genre, prompt, &warned);
    if (warned)
        std::fprintf(stderr, "warning: prompt tokens unknown to the classifier; using '%s'\n",
                     model.vocab.name(genre_id).c_str());
    const int fps = 30;

    MotionClip clip{fps, Tensor::zeros({1, 1})};
    if (seconds <= 4.0) {
        auto k = static_cast<std::int64_t>(seconds * fps);
        MusicFeatures mf = music_for(music, beats, seconds, fps,
                                     model.denoiser.config().music_dim);
        clip = model.generate(genre_id, mf, k, seed);
    } else {
        int segments = 1 + static_cast<int>(std::ceil((seconds - 4.0) / 2.0));
        double total = 4.0 + 2.0 * (segments - 1);
        std::vector<MusicFeatures> segs;
        MusicFeatures full = music_for(music, beats, total, fps,
                                       model.denoiser.config().music_dim);
        for (int n = 0; n < segments; ++n) {
            std::int64_t start = 2 * n * fps;
            Tensor seg = Tensor::zeros({4 * fps, full.matrix.dim(1)});
            for (std::int64_t i = 0; i < 4 * fps; ++i)
                for (std::int64_t c = 0; c < full.matrix.dim(1); ++c)
                    seg.at(i, c) = full.matrix.at(start + i, c);
            segs.push_back(assemble_features(seg, nullptr, fps));
        }
        clip = model.generate_long(genre_id, segs, seconds, seed);
    }

    save_gcmo(clip, model.skel.joint_count(), out);
    write_manifest(fs::path(out).parent_path().empty() ? "." : fs::path(out).parent_path(),
                   "generate", nlohmann::json{{"seconds", seconds}}, seed, {out},
                   {{"resolved_genre", model.vocab.name(genre_id)}});
    std::printf("generated %lld frames of %s into %s\n",
                static_cast<long long>(clip.frame_count()), model.vocab.name(genre_id).c_str(),
                out.c_str());
    return 0;
}

Tensor build_edit_mask(const GcModel& model, const std::string& mask_spec,
                       const MotionClip& ref) {
    const Skeleton& skel = model.skel;
    std::int64_t k = ref.frame_count(), D = ref.frame_dim();
    Tensor mask = Tensor::full({k, D}, 1.0);  // 1 = keep the reference
    if (mask_spec.rfind("seconds:", 0) == 0) {
        // temporal mask: the named range is KEPT, everything else regenerated
        std::string range = mask_spec.substr(8);
        auto dash = range.find('-');
        require(dash != std::string::npos, errc::usage,
                "edit: temporal mask must look like seconds:a-b");
        double a = 0, b = 0;
        try {
            a = std::stod(range.substr(0, dash));
            b = std::stod(range.substr(dash + 1));
        } catch (const std::exception&) {
            fail(errc::usage, "edit: cannot parse the seconds range '" + range + "'");
        }
        require(a >= 0.0 && b > a, errc::usage, "edit: bad seconds range");
        auto lo = static_cast<std::int64_t>(a * ref.fps);
        auto hi = std::min<std::int64_t>(k, static_cast<std::int64_t>(b * ref.fps));
        require(lo < k, errc::usage, "edit: range starts beyond the clip");
        mask.fill(0.0);
        for (std::int64_t i = lo; i < hi; ++i)
            for (std::int64_t d = 0; d < D; ++d) mask.at(i, d) = 1.0;
        return mask;
    }
    // joint mask: the named group's rotation dims are regenerated, the rest
    // (including root translation and contacts) kept
    require(skel.has_group(mask_spec), errc::usage,
            "edit: unknown mask '" + mask_spec + "' (expected a joint group or seconds:a-b)");
    for (int j : skel.group(mask_spec))
        for (std::int64_t i = 0; i < k; ++i)
            for (int c = 0; c < 6; ++c) mask.at(i, j * 6 + c) = 0.0;
    return mask;
}

int cmd_edit(std::string ckpt, std::string ref_path, std::string mask_spec, std::string music,
             std::string beats, std::string genre, std::string prompt, std::uint64_t seed,
             std::string out) {
    GcModel model = GcModel::load_checkpoint(ckpt);
    GcmoFile ref = load_gcmo(ref_path);
    ref.clip.validate(model.skel);
    int genre_id = genre.empty() && prompt.empty() ? 0 : resolve_genre(model, genre, prompt);

    double seconds = static_cast<double>(ref.clip.frame_count()) / ref.clip.fps;
    MusicFeatures mf = music_for(music, beats, seconds, ref.clip.fps,
                                 model.denoiser.config().music_dim);
    Tensor mask = build_edit_mask(model, mask_spec, ref.clip);
    MotionClip edited = model.generate_inpaint(genre_id, mf, ref.clip, mask, seed);
    save_gcmo(edited, model.skel.joint_count(), out);
    write_manifest(fs::path(out).parent_path().empty() ? "." : fs::path(out).parent_path(),
                   "edit", nlohmann::json{{"mask", mask_spec}}, seed, {out},
                   {{"resolved_genre", model.vocab.name(genre_id)}});
    std::printf("edited %s (mask %s) into %s\n", ref_path.c_str(), mask_spec.c_str(), out.c_str());
    return 0;
}

int cmd_eval(std::string gen_dir, std::string gt_dir, std::string report_path,
             std::uint64_t seed, int n_sets, int set_size, std::string skeleton_path) {
    ExperimentConfig paths;
    paths.skeleton = skeleton_path;
    Skeleton skel = paths.resolve_skeleton();
    EvalConfig cfg;
    cfg.seed = seed;
    cfg.n_sets = n_sets;
    cfg.set_size = set_size;
    nlohmann::json report = evaluate_sets(gen_dir, gt_dir, skel, cfg);
    validate_report(report);
    atomic_write(report_path, report.dump(2) + "\n");
    write_manifest(fs::path(report_path).parent_path().empty()
                       ? "."
                       : fs::path(report_path).parent_path(),
                   "eval", nlohmann::json{{"gen", gen_dir}, {"gt", gt_dir}}, seed, {report_path});
    std::printf("%s\n", report["metrics"].dump(2).c_str());
    return 0;
}

int cmd_classify(std::string text, std::string ckpt) {
    GenreDistribution dist;
    std::vector<std::string> names;
    if (!ckpt.empty()) {
        GcModel model = GcModel::load_checkpoint(ckpt);
        dist = model.classifier.classify(model.params, text);
        names = model.vocab.names();
    } else {
        // no checkpoint: train the classifier on the bundled corpus, which is
        // deterministic and takes well under a second
        GenreVocabulary vocab = GenreVocabulary::default16();
        DescriptionCorpus corpus = build_description_corpus(vocab, kClassifierTrainSeed);
        TextGenreClassifier clf(TextGenreClassifier::corpus_tokens(corpus.train), vocab.size());
        ParameterStore store;
        Rng rng(kClassifierTrainSeed);
        clf.init_params(store, rng);
        train_classifier(clf, store, corpus.train);
        dist = clf.classify(store, text);
        names = vocab.names();
    }
    if (dist.unknown_tokens_warning)
        std::fprintf(stderr, "warning: no known tokens in the text; distribution is uniform\n");
    for (std::size_t i = 0; i < names.size(); ++i)
        std::printf("%-12s %.6f\n", names[i].c_str(), dist.probs[static_cast<std::int64_t>(i)]);
    std::printf("genre: %s\n", names[static_cast<std::size_t>(dist.argmax())].c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"genre-controlled music-driven dance generation"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "write a synthetic paired dataset");
    int genres = 3, clips = 10, fps = 30;
    double seconds = 2.0;
    std::uint64_t seed = 0;
    std::string out_dir, vocab_path = "default:16", skeleton_path = "preset:52";
    bool force = false;
    synth->add_option("--genres", genres, "number of genres")->required();
    synth->add_option("--clips", clips, "clips per genre")->required();
    synth->add_option("--seconds", seconds, "clip length in seconds");
    synth->add_option("--fps", fps, "frames per second");
    synth->add_option("--seed", seed, "dataset seed")->required();
    synth->add_option("--out", out_dir, "output directory")->required();
    synth->add_option("--vocabulary", vocab_path, "vocabulary JSON or default:16");
    synth->add_option("--skeleton", skeleton_path, "skeleton JSON or preset:52 / preset:24");
    synth->add_flag("--force", force, "overwrite a non-empty directory");

    // train
    auto* train = app.add_subcommand("train", "train a model from a config");
    std::string config_path, mtl_mode, ckpt_out;
    bool resume = false;
    train->add_option("--config", config_path, "experiment config JSON")->required();
    train->add_option("--mtl", mtl_mode, "override mtl mode: fixed|nash|aligned");
    train->add_option("--out", ckpt_out, "checkpoint directory")->required();
    train->add_flag("--resume", resume, "resume from the checkpoint in --out");

    // generate
    auto* gen = app.add_subcommand("generate", "sample a dance clip");
    std::string g_ckpt, g_music, g_beats, g_prompt, g_genre, g_out;
    double g_seconds = 4.0;
    std::uint64_t g_seed = 0;
    gen->add_option("--ckpt", g_ckpt, "checkpoint directory")->required();
    gen->add_option("--music", g_music, "conditioning WAV");
    gen->add_option("--beats", g_beats, "beats JSON ({fps, frames:[..]})");
    gen->add_option("--prompt", g_prompt, "free-form text prompt");
    gen->add_option("--genre", g_genre, "explicit genre label");
    gen->add_option("--seconds", g_seconds, "duration to generate");
    gen->add_option("--seed", g_seed, "sampling seed")->required();
    gen->add_option("--out", g_out, "output .gcmo")->required();

    // edit
    auto* edit = app.add_subcommand("edit", "regenerate masked parts of a clip");
    std::string e_ckpt, e_ref, e_mask, e_music, e_beats, e_genre, e_prompt, e_out;
    std::uint64_t e_seed = 0;
    edit->add_option("--ckpt", e_ckpt, "checkpoint directory")->required();
    edit->add_option("--ref", e_ref, "reference .gcmo")->required();
    edit->add_option("--mask", e_mask, "hands|legs|upper|seconds:a-b")->required();
    edit->add_option("--music", e_music, "conditioning WAV");
    edit->add_option("--beats", e_beats, "beats JSON");
    edit->add_option("--genre", e_genre, "genre label");
    edit->add_option("--prompt", e_prompt, "text prompt");
    edit->add_option("--seed", e_seed, "sampling seed")->required();
    edit->add_option("--out", e_out, "output .gcmo")->required();

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate generated clips against ground truth");
    std::string v_gen, v_gt, v_report, v_skeleton = "preset:52";
    std::uint64_t v_seed = 0;
    int v_sets = 10, v_set_size = 0;
    eval->add_option("--gen", v_gen, "generated clip directory")->required();
    eval->add_option("--gt", v_gt, "ground-truth clip directory")->required();
    eval->add_option("--report", v_report, "output report JSON")->required();
    eval->add_option("--seed", v_seed, "resampling seed")->required();
    eval->add_option("--sets", v_sets, "number of resampled sets");
    eval->add_option("--set-size", v_set_size, "clips per set (0: two thirds)");
    eval->add_option("--skeleton", v_skeleton, "skeleton JSON or preset");

    // classify
    auto* classify = app.add_subcommand("classify", "map text to a genre distribution");
    std::string c_text, c_ckpt;
    classify->add_option("--text", c_text, "description text")->required();
    classify->add_option("--ckpt", c_ckpt, "checkpoint directory (optional)");

    try {
        app.parse(argc, argv);

        if (*synth) return cmd_synth(genres, clips, seconds, seed, out_dir, force, vocab_path,
                                     skeleton_path, fps);
        if (*train) {
            if (!mtl_mode.empty())
                require(mtl_mode == "fixed" || mtl_mode == "nash" || mtl_mode == "aligned",
                        errc::usage, "train: --mtl must be fixed|nash|aligned");
            return cmd_train(config_path, mtl_mode, ckpt_out, resume);
        }
        if (*gen) {
            require(g_prompt.empty() != g_genre.empty(), errc::usage,
                    "generate: exactly one of --prompt/--genre is required");
            require(!g_music.empty() || !g_beats.empty(), errc::usage,
                    "generate: one of --music/--beats is required");
            require(g_seconds > 0.0, errc::usage, "generate: --seconds must be positive");
            return cmd_generate(g_ckpt, g_music, g_beats, g_prompt, g_genre, g_seconds, g_seed,
                                g_out);
        }
        if (*edit) {
            require(!e_music.empty() || !e_beats.empty(), errc::usage,
                    "edit: one of --music/--beats is required");
            return cmd_edit(e_ckpt, e_ref, e_mask, e_music, e_beats, e_genre, e_prompt, e_seed,
                            e_out);
        }
        if (*eval) return cmd_eval(v_gen, v_gt, v_report, v_seed, v_sets, v_set_size, v_skeleton);
        if (*classify) {
            require(!c_text.empty(), errc::usage, "classify: --text must be non-empty");
            return cmd_classify(c_text, c_ckpt);
        }
        return 0;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 64;
    } catch (const error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return e.exit_code();
    } catch (const nlohmann::json::exception& e) {
        std::fprintf(stderr, "error: malformed JSON: %s\n", e.what());
        return 2;
    } catch (const fs::filesystem_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}
