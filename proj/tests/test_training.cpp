#include <catch_amalgamated.hpp>

#include <cmath>

#include "gcdance/trainer.hpp"
#include "testutil.hpp"

using namespace gcdance;
namespace ag = gcdance::ag;

namespace {

DenoiserConfig tiny_config() {
    DenoiserConfig cfg;
    cfg.width = 32;
    cfg.heads = 2;
    cfg.layers = 1;
    cfg.mlp_mult = 2;
    cfg.music_dim = 33;  // n_fft 64
    cfg.genre_embed_dim = 16;
    cfg.timestep_dim = 16;
    cfg.film_hidden = 16;
    return cfg;
}

struct TinyRun {
    testutil::TempDir tmp{"train"};
    Skeleton skel = skeleton_preset52();
    GenreVocabulary vocab = GenreVocabulary::default16();
    GcModel model;

    TinyRun()
        : model(GcModel::create(skeleton_preset52(), GenreVocabulary::default16(), tiny_config(),
                                10, "cosine", false, 7, 11)) {
        SynthDatasetConfig cfg;
        cfg.genres = 2;
        cfg.clips_per_genre = 4;
        cfg.seconds = 0.8;  // 24 frames
        cfg.seed = 5;
        write_synth_dataset(tmp.path() / "data", vocab, skel, cfg);
    }

    TrainingData data(double holdout = 0.25) {
        return TrainingData::load(tmp.path() / "data", model, holdout, 3);
    }
};

}  // namespace

TEST_CASE("dataset: synth writer is deterministic and loadable") {
    testutil::TempDir tmp("ds");
    Skeleton skel = skeleton_preset52();
    GenreVocabulary vocab = GenreVocabulary::default16();
    SynthDatasetConfig cfg;
    cfg.genres = 3;
    cfg.clips_per_genre = 2;
    cfg.seconds = 1.0;
    cfg.seed = 9;
    write_synth_dataset(tmp.path() / "a", vocab, skel, cfg);
    write_synth_dataset(tmp.path() / "b", vocab, skel, cfg);

    auto entries = load_dataset_labels(tmp.path() / "a");
    REQUIRE(entries.size() == 6);
    CHECK(entries[0].genre == "Popping");
    CHECK(entries[0].genre_id == 0);
    for (const auto& e : entries) {
        CHECK(read_file(tmp.path() / "a" / e.clip_file) == read_file(tmp.path() / "b" / e.clip_file));
        CHECK(read_file(tmp.path() / "a" / e.wav_file) == read_file(tmp.path() / "b" / e.wav_file));
    }
    CHECK(read_file(tmp.path() / "a" / "labels.jsonl") == read_file(tmp.path() / "b" / "labels.jsonl"));

    // refuses to clobber without force
    CHECK_THROWS_AS(write_synth_dataset(tmp.path() / "a", vocab, skel, cfg), error);
    write_synth_dataset(tmp.path() / "a", vocab, skel, cfg, /*force=*/true);

    // genre count beyond vocabulary
    SynthDatasetConfig too_many = cfg;
    too_many.genres = 17;
    CHECK_THROWS_AS(write_synth_dataset(tmp.path() / "c", vocab, skel, too_many), error);
}

TEST_CASE("per-task gradients: reachability and column identities") {
    TinyRun run;
    TrainingData data = run.data();
    TrainOptions opts;
    opts.steps = 1;
    opts.batch_size = 2;
    opts.seed = 21;
    Trainer trainer(run.model, std::move(data), opts);

    // build one batch-equivalent graph by hand
    GcModel& m = run.model;
    std::int64_t k = 24, D = m.skel.frame_dim();
    Rng rng(3);
    Tensor m0_raw = Tensor::zeros({1, k, D});
    {
        auto synth = synth_genre_motion(0, 77, k, 30, m.skel);
        std::copy(synth.clip.frames.data(), synth.clip.frames.data() + k * D, m0_raw.data());
    }
    Tensor m0_norm = m0_raw;
    for (std::int64_t i = 0; i < k * D; ++i)
        m0_norm[i] = (m0_raw[i] - m.norm.mean[i % D]) / m.norm.stddev[i % D];
    Tensor d_t = m0_norm;
    for (std::int64_t i = 0; i < d_t.size(); ++i) d_t[i] += 0.3 * rng.normal();
    Tensor music = testutil::random_tensor(rng, {1, k, 33});
    Tensor bow = Tensor::zeros({1, m.classifier.token_count()});
    bow.at(0, 5) = 1.0;
    Tensor onehot = Tensor::zeros({1, m.vocab.size()});
    onehot.at(0, 0) = 1.0;

    ag::Graph graph;
    GraphBinding bind(graph, m.params);
    ag::Var m_hat = m.denoiser.forward(bind, d_t, {3}, embed_genre(bind, {0}), music);
    ag::Var m_hat_raw = ag::add(ag::mul(m_hat, graph.constant(m.norm.stddev)),
                                graph.constant(m.norm.mean));
    std::vector<ag::Var> losses = {
        loss_simple(m_hat, m0_norm), loss_joint(m_hat_raw, m0_raw, m.skel),
        loss_velocity(m_hat, m0_norm), loss_contact(m_hat_raw, m.skel),
        bce_loss(m.classifier.scores(bind, bow), onehot)};
    TaskGradients g = per_task_gradients(bind, losses, task_names());

    // locate parameter spans in the flat layout
    auto span_of = [&](const std::string& name) {
        std::int64_t off = 0;
        for (std::size_t i = 0; i < m.params.count(); ++i) {
            if (m.params.name(i) == name) return std::make_pair(off, m.params.value(i).size());
            off += m.params.value(i).size();
        }
        FAIL("missing param " + name);
        return std::make_pair<std::int64_t, std::int64_t>(0, 0);
    };
    auto col_norm_in = [&](int task, std::int64_t off, std::int64_t len) {
        double acc = 0.0;
        for (std::int64_t i = off; i < off + len; ++i) acc += std::abs(g.col(task)[i]);
        return acc;
    };

    auto [cls_off, cls_len] = span_of("classifier.w");
    for (int task : {0, 1, 2, 3}) CHECK(col_norm_in(task, cls_off, cls_len) == 0.0);
    CHECK(col_norm_in(4, cls_off, cls_len) > 0.0);

    // shared denoiser weights carry finite nonzero gradient in the motion losses
    auto [dn_off, dn_len] = span_of("denoiser.body_proj.w");
    for (int task : {0, 1, 2, 3}) CHECK(col_norm_in(task, dn_off, dn_len) > 0.0);
    CHECK(col_norm_in(4, dn_off, dn_len) == 0.0);  // classifier loss does not touch the denoiser

    // column S equals an independent backward of loss_simple alone
    graph.backward(losses[0]);
    std::vector<double> solo(static_cast<std::size_t>(m.params.total_size()));
    bind.flat_grad(solo.data());
    for (std::int64_t i = 0; i < g.dim; i += 97)
        CHECK(g.col(0)[i] == Catch::Approx(solo[static_cast<std::size_t>(i)]).margin(1e-15));
}

TEST_CASE("trainer: deterministic steps and decreasing fixed-mode loss") {
    TinyRun run_a;
    TrainOptions opts;
    opts.mtl_mode = "fixed";
    opts.steps = 6;
    opts.batch_size = 2;
    opts.learning_rate = 1e-3;
    opts.seed = 33;

    Trainer t1(run_a.model, run_a.data(), opts);
    std::vector<StepRecord> recs1;
    for (int s = 0; s < 6; ++s) recs1.push_back(t1.step_once());

    // a second model + trainer with identical seeds reproduces the records
    GcModel model2 = GcModel::create(skeleton_preset52(), GenreVocabulary::default16(),
                                     tiny_config(), 10, "cosine", false, 7, 11);
    TrainingData data2 = TrainingData::load(run_a.tmp.path() / "data", model2, 0.25, 3);
    Trainer t2(model2, std::move(data2), opts);
    for (int s = 0; s < 6; ++s) {
        StepRecord r = t2.step_once();
        for (std::size_t i = 0; i < r.losses.size(); ++i)
            CHECK(r.losses[i] == recs1[static_cast<std::size_t>(s)].losses[i]);
    }

    // log record shape: five losses, five alphas
    CHECK(recs1[0].losses.size() == 5);
    CHECK(recs1[0].alpha.size() == 5);
}

TEST_CASE("trainer: nash and aligned modes run and report diagnostics") {
    for (const char* mode : {"nash", "aligned"}) {
        TinyRun run;
        TrainOptions opts;
        opts.mtl_mode = mode;
        opts.steps = 3;
        opts.batch_size = 2;
        opts.seed = 44;
        Trainer trainer(run.model, run.data(), opts);
        for (int s = 0; s < 3; ++s) {
            StepRecord rec = trainer.step_once();
            INFO(mode);
            CHECK(rec.losses.size() == 5);
            CHECK(rec.alpha.size() == 5);
            CHECK(rec.rank >= 1);
            if (std::string(mode) == "nash") {
                CHECK(rec.residual < 1e-8);
                for (double a : rec.alpha) CHECK(a > 0.0);
            }
        }
    }
}

TEST_CASE("run_training: writes log, eval, checkpoint; resume is reproducible") {
    TinyRun run;
    TrainOptions opts;
    opts.mtl_mode = "fixed";
    opts.steps = 4;
    opts.batch_size = 2;
    opts.learning_rate = 1e-3;
    opts.seed = 55;

    fs::path out = run.tmp.path() / "run1";
    TrainRunResult res = run_training(run.model, run.data(), opts, out);
    CHECK(fs::exists(out / "train_log.jsonl"));
    CHECK(fs::exists(out / "eval.json"));
    CHECK(fs::exists(out / "manifest.json"));
    CHECK(fs::exists(out / "weights.bin"));
    CHECK_FALSE(fs::exists(out / ".lock"));
    CHECK(std::isfinite(res.final_holdout_ls));

    // two resumed continuations from the same checkpoint are bit-identical
    auto resume_once = [&](const fs::path& dst) {
        fs::create_directories(dst);
        for (const char* f : {"manifest.json", "weights.bin", "state.json", "train_log.jsonl"})
            fs::copy_file(out / f, dst / f, fs::copy_options::overwrite_existing);
        fs::create_directories(dst / "optimizer");
        for (const char* f : {"manifest.json", "weights.bin"})
            fs::copy_file(out / "optimizer" / f, dst / "optimizer" / f,
                          fs::copy_options::overwrite_existing);
        GcModel m = GcModel::load_checkpoint(dst);
        TrainingData d = TrainingData::load(run.tmp.path() / "data", m, 0.25, 3);
        TrainOptions more = opts;
        more.steps = 6;
        run_training(m, std::move(d), more, dst, /*resume=*/true);
        return read_file(dst / "weights.bin");
    };
    std::string w1 = resume_once(run.tmp.path() / "resume_a");
    std::string w2 = resume_once(run.tmp.path() / "resume_b");
    CHECK(w1 == w2);

    // lock file blocks concurrent runs
    atomic_write(out / ".lock", "held\n");
    CHECK_THROWS_AS(run_training(run.model, run.data(), opts, out), error);
    fs::remove(out / ".lock");
}

TEST_CASE("checkpoint: save/load round trip preserves the model surface") {
    TinyRun run;
    // give the norm stats real values
    TrainingData data = run.data();
    TrainOptions opts;
    opts.steps = 1;
    opts.batch_size = 2;
    opts.seed = 66;
    Trainer trainer(run.model, std::move(data), opts);
    trainer.step_once();

    fs::path dir = run.tmp.path() / "ckpt";
    run.model.save_checkpoint(dir);
    GcModel loaded = GcModel::load_checkpoint(dir);
    CHECK(loaded.vocab.names() == run.model.vocab.names());
    CHECK(loaded.skel.names == run.model.skel.names);
    CHECK(loaded.schedule.timesteps == run.model.schedule.timesteps);
    CHECK(loaded.norm.valid);

    // parameters round trip at f32 precision; saving again is byte-identical
    loaded.save_checkpoint(run.tmp.path() / "ckpt2");
    CHECK(read_file(dir / "weights.bin") == read_file(run.tmp.path() / "ckpt2" / "weights.bin"));

    // classification through the loaded checkpoint works
    DescriptionCorpus corpus = build_description_corpus(loaded.vocab, 7);
    train_classifier(loaded.classifier, loaded.params, corpus.train);
    GenreDistribution d = loaded.classifier.classify(loaded.params, "This is a Jazz type of music.");
    CHECK(loaded.vocab.name(d.argmax()) == "Jazz");
}

TEST_CASE("experiment config: strict validation") {
    nlohmann::json good{{"version", 1},
                        {"seed", 12},
                        {"skeleton", "preset:52"},
                        {"data", {{"train_dir", "/tmp/x"}, {"holdout_fraction", 0.25}}},
                        {"mtl", {{"mode", "aligned"}}},
                        {"optimizer", {{"learning_rate", 1e-3}, {"steps", 10}, {"batch_size", 4}}}};
    ExperimentConfig cfg = parse_experiment_config(good);
    CHECK(cfg.seed == 12);
    CHECK(cfg.mtl_mode == "aligned");
    CHECK(cfg.steps == 10);
    CHECK(cfg.holdout_fraction == 0.25);

    nlohmann::json unknown = good;
    unknown["surprise"] = 1;
    CHECK_THROWS_AS(parse_experiment_config(unknown), error);

    nlohmann::json nested = good;
    nested["optimizer"]["momentum"] = 0.9;
    CHECK_THROWS_AS(parse_experiment_config(nested), error);

    nlohmann::json bad_version = good;
    bad_version["version"] = 2;
    CHECK_THROWS_AS(parse_experiment_config(bad_version), error);

    nlohmann::json bad_mode = good;
    bad_mode["mtl"]["mode"] = "magic";
    CHECK_THROWS_AS(parse_experiment_config(bad_mode), error);
}
