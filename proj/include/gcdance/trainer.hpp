#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "gcdance/config.hpp"
#include "gcdance/dataset.hpp"
#include "gcdance/losses.hpp"
#include "gcdance/model.hpp"
#include "gcdance/mtl.hpp"
#include "gcdance/nn.hpp"

namespace gcdance {

// Fixed column order of the five-task objective.
inline const std::vector<std::string>& task_names() {
    static const std::vector<std::string> names = {"S", "J", "V", "F", "C"};
    return names;
}

// One backward pass per loss over a single retained forward graph; column i
// receives d(loss_i)/d(theta) with exact zeros for parameters the loss does
// not reach.
inline TaskGradients per_task_gradients(GraphBinding& bind, const std::vector<ag::Var>& losses,
                                        const std::vector<std::string>& names) {
    require(losses.size() == names.size(), errc::numeric, "per_task_gradients: name mismatch");
    TaskGradients g;
    g.reserve(bind.store().total_size(), names);
    for (std::size_t i = 0; i < losses.size(); ++i) {
        double value = bind.graph().value(losses[i]).item();
        require(std::isfinite(value), errc::numeric,
                "per_task_gradients: non-finite loss " + names[i]);
        g.loss_values[i] = value;
        bind.graph().backward(losses[i]);
        bind.flat_grad(g.col(static_cast<int>(i)));
        for (std::int64_t r = 0; r < g.dim; ++r)
            require(std::isfinite(g.col(static_cast<int>(i))[r]), errc::numeric,
                    "per_task_gradients: non-finite gradient in task " + names[i]);
    }
    return g;
}

// ---------------------------------------------------------------------------
// In-memory training set: raw/normalized clips, cached music features and
// bag-of-words vectors, deterministic holdout split.
// ---------------------------------------------------------------------------

struct TrainingData {
    std::vector<MotionClip> clips_raw;
    std::vector<Tensor> music;      // [k, music_dim] per clip
    std::vector<Tensor> bow;        // [V] per clip
    std::vector<int> genre_ids;
    std::vector<std::size_t> train_idx, holdout_idx;
    std::int64_t frames = 0;
    int fps = 30;

    static TrainingData load(const fs::path& dir, const GcModel& model,
                             double holdout_fraction, std::uint64_t seed) {
        auto entries = load_dataset_labels(dir);
        TrainingData data;
        std::int64_t music_dim = model.denoiser.config().music_dim;
        require(((music_dim - 1) & (music_dim - 2)) == 0 && music_dim >= 2, errc::data,
                "training: music_dim must be 2^m + 1 to match an FFT size");
        int n_fft = static_cast<int>((music_dim - 1) * 2);
        for (const auto& e : entries) {
            GcmoFile f = load_gcmo(dir / e.clip_file);
            f.clip.validate(model.skel);
            if (data.clips_raw.empty()) {
                data.frames = f.clip.frame_count();
                data.fps = f.clip.fps;
            }
            require(f.clip.frame_count() == data.frames, errc::data,
                    "training: clips must share a frame count");
            AudioBuffer audio = load_wav(dir / e.wav_file);
            Tensor stft = stft_features(audio, f.clip.fps, n_fft);
            require(stft.dim(0) >= data.frames, errc::data,
                    "training: audio shorter than the motion clip");
            Tensor music = Tensor::zeros({data.frames, music_dim});
            for (std::int64_t i = 0; i < data.frames; ++i)
                for (std::int64_t c = 0; c < music_dim; ++c) music.at(i, c) = stft.at(i, c);
            data.clips_raw.push_back(std::move(f.clip));
            data.music.push_back(std::move(music));
            data.bow.push_back(model.classifier.bow(e.text));
            data.genre_ids.push_back(e.genre_id);
        }

        // deterministic shuffled split
        std::vector<std::size_t> order(data.clips_raw.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng(seed ^ 0x5B117Full);
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
        auto n_holdout = static_cast<std::size_t>(holdout_fraction *
                                                  static_cast<double>(order.size()));
        for (std::size_t i = 0; i < order.size(); ++i)
            (i < n_holdout ? data.holdout_idx : data.train_idx).push_back(order[i]);
        require(!data.train_idx.empty(), errc::data, "training: empty train split");
        return data;
    }
};

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

struct TrainOptions {
    std::string mtl_mode = "nash";
    std::vector<double> fixed_weights = {1.0, 1.0, 1.0, 1.0, 0.1};
    double learning_rate = 2e-4;
    int steps = 2000;
    int batch_size = 16;
    int alpha_interval = 1;
    std::uint64_t seed = 0;
};

struct StepRecord {
    int step = 0;
    std::vector<double> losses;
    std::vector<double> alpha;
    double residual = 0.0;
    int rank = 0;
};

class Trainer {
public:
    Trainer(GcModel& model, TrainingData data, TrainOptions opts)
        : model_(model),
          data_(std::move(data)),
          opts_(std::move(opts)),
          adam_(model.params.total_size(), opts_.learning_rate) {
        require(opts_.mtl_mode == "fixed" || opts_.mtl_mode == "nash" ||
                    opts_.mtl_mode == "aligned",
                errc::data, "trainer: unknown mtl mode " + opts_.mtl_mode);
        if (!model_.norm.valid) {
            std::vector<MotionClip> train_clips;
            for (std::size_t i : data_.train_idx) train_clips.push_back(data_.clips_raw[i]);
            model_.norm = compute_norm_stats(train_clips, model_.skel);
        }
        for (const auto& clip : data_.clips_raw)
            clips_norm_.push_back(normalize_frames(clip.frames, model_.norm));
    }

    int step_count() const { return step_; }
    void set_step_count(int s) {
        step_ = s;
        adam_.set_step_count(s);
    }
    AdamOptimizer& optimizer() { return adam_; }

    // Per-step noise comes from a stream derived from (seed, step), so a
    // resumed run draws exactly the noise the original run would have drawn.
    StepRecord step_once() {
        Rng rng = Rng(opts_.seed).derive(static_cast<std::uint64_t>(step_) + 1);
        int B = opts_.batch_size;
        std::int64_t k = data_.frames, D = model_.skel.frame_dim();

        std::vector<std::size_t> batch;
        for (int b = 0; b < B; ++b)
            batch.push_back(data_.train_idx[rng.index(data_.train_idx.size())]);
        std::vector<std::int64_t> t;
        for (int b = 0; b < B; ++b)
            t.push_back(static_cast<std::int64_t>(rng.index(
                static_cast<std::uint64_t>(model_.schedule.timesteps))));

        Tensor m0_norm = Tensor::zeros({B, k, D});
        Tensor m0_raw = Tensor::zeros({B, k, D});
        Tensor d_t = Tensor::zeros({B, k, D});
        Tensor music = Tensor::zeros({B, k, model_.denoiser.config().music_dim});
        Tensor bow = Tensor::zeros({B, model_.classifier.token_count()});
        Tensor onehot = Tensor::zeros({B, model_.vocab.size()});
        std::vector<std::int64_t> genre_ids;
        for (int b = 0; b < B; ++b) {
            std::size_t idx = batch[static_cast<std::size_t>(b)];
            const Tensor& norm_clip = clips_norm_[idx];
            double a = model_.schedule.sqrt_abar(static_cast<int>(t[static_cast<std::size_t>(b)]));
            double s = model_.schedule.sqrt_one_minus_abar(
                static_cast<int>(t[static_cast<std::size_t>(b)]));
            for (std::int64_t i = 0; i < k * D; ++i) {
                double x = norm_clip[i];
                m0_norm[b * k * D + i] = x;
                m0_raw[b * k * D + i] = data_.clips_raw[idx].frames[i];
                d_t[b * k * D + i] = a * x + s * rng.normal();
            }
            const Tensor& mu = data_.music[idx];
            std::copy(mu.data(), mu.data() + mu.size(), music.data() + b * mu.size());
            const Tensor& bw = data_.bow[idx];
            std::copy(bw.data(), bw.data() + bw.size(), bow.data() + b * bw.size());
            onehot.at(b, data_.genre_ids[idx]) = 1.0;
            genre_ids.push_back(data_.genre_ids[idx]);
        }

        ag::Graph graph;
        GraphBinding bind(graph, model_.params);
        ag::Var m_hat_norm = model_.denoiser.forward(bind, d_t, t, embed_genre(bind, genre_ids),
                                                     music);
        ag::Var m_hat_raw = ag::add(
            ag::mul(m_hat_norm, graph.constant(model_.norm.stddev)),
            graph.constant(model_.norm.mean));

        std::vector<ag::Var> losses = {
            loss_simple(m_hat_norm, m0_norm),
            loss_joint(m_hat_raw, m0_raw, model_.skel),
            loss_velocity(m_hat_norm, m0_norm),
            loss_contact(m_hat_raw, model_.skel),
            bce_loss(model_.classifier.scores(bind, bow), onehot),
        };

        StepRecord rec;
        rec.step = step_;
        std::vector<double> update;
        if (opts_.mtl_mode == "fixed") {
            for (ag::Var l : losses) rec.losses.push_back(graph.value(l).item());
            ag::Var total = aggregate_fixed(losses, opts_.fixed_weights);
            graph.backward(total);
            update.resize(static_cast<std::size_t>(model_.params.total_size()));
            bind.flat_grad(update.data());
            rec.alpha = opts_.fixed_weights;
            rec.rank = static_cast<int>(losses.size());
        } else if (step_ % opts_.alpha_interval == 0 || cached_alpha_.empty()) {
            TaskGradients g = per_task_gradients(bind, losses, task_names());
            rec.losses = g.loss_values;
            AggregationResult agg;
            try {
                agg = opts_.mtl_mode == "nash" ? nash_aggregate(g) : aligned_aggregate(g);
            } catch (const error& e) {
                fail(errc::numeric,
                     "trainer: aggregation failed at step " + std::to_string(step_) + ": " +
                         e.what());
            }
            update = std::move(agg.update);
            rec.alpha = agg.alpha;
            rec.residual = agg.residual;
            rec.rank = agg.rank;
            cached_alpha_ = rec.alpha;
        } else {
            // between alpha refreshes one backward of the alpha-weighted sum
            // suffices
            for (ag::Var l : losses) rec.losses.push_back(graph.value(l).item());
            ag::Var total = aggregate_fixed(losses, cached_alpha_);
            graph.backward(total);
            update.resize(static_cast<std::size_t>(model_.params.total_size()));
            bind.flat_grad(update.data());
            rec.alpha = cached_alpha_;
            rec.rank = static_cast<int>(losses.size());
        }

        for (double l : rec.losses)
            require(std::isfinite(l), errc::numeric,
                    "trainer: non-finite loss at step " + std::to_string(step_));

        std::vector<double> theta = model_.params.flatten();
        adam_.step(theta, update);
        model_.params.unflatten(theta);
        ++step_;
        return rec;
    }

    // Deterministic held-out reconstruction loss: fixed per-clip timesteps
    // spread over the schedule, noise from a dedicated stream.
    double holdout_loss_simple() const {
        const auto& idx = data_.holdout_idx.empty() ? data_.train_idx : data_.holdout_idx;
        std::int64_t n = static_cast<std::int64_t>(idx.size());
        std::int64_t k = data_.frames, D = model_.skel.frame_dim();
        Tensor m0 = Tensor::zeros({n, k, D});
        Tensor d_t = Tensor::zeros({n, k, D});
        Tensor music = Tensor::zeros({n, k, model_.denoiser.config().music_dim});
        std::vector<std::int64_t> t;
        std::vector<std::int64_t> genre_ids;
        for (std::int64_t b = 0; b < n; ++b) {
            std::size_t ci = idx[static_cast<std::size_t>(b)];
            Rng rng = Rng(opts_.seed).derive(0xE7A1u + static_cast<std::uint64_t>(b));
            std::int64_t tb = (b * model_.schedule.timesteps) / n;
            t.push_back(tb);
            double a = model_.schedule.sqrt_abar(static_cast<int>(tb));
            double s = model_.schedule.sqrt_one_minus_abar(static_cast<int>(tb));
            for (std::int64_t i = 0; i < k * D; ++i) {
                double x = clips_norm_[ci][i];
                m0[b * k * D + i] = x;
                d_t[b * k * D + i] = a * x + s * rng.normal();
            }
            const Tensor& mu = data_.music[ci];
            std::copy(mu.data(), mu.data() + mu.size(), music.data() + b * mu.size());
            genre_ids.push_back(data_.genre_ids[ci]);
        }
        ag::Graph graph;
        GraphBinding bind(graph, model_.params);
        ag::Var m_hat = model_.denoiser.forward(bind, d_t, t, embed_genre(bind, genre_ids), music);
        return graph.value(loss_simple(m_hat, m0)).item();
    }

    const TrainingData& data() const { return data_; }

private:
    GcModel& model_;
    TrainingData data_;
    TrainOptions opts_;
    AdamOptimizer adam_;
    std::vector<Tensor> clips_norm_;
    std::vector<double> cached_alpha_;
    int step_ = 0;
};

// ---------------------------------------------------------------------------
// Full training run with JSONL log, held-out evaluation and checkpointing.
// ---------------------------------------------------------------------------

struct TrainRunResult {
    double initial_holdout_ls = 0.0;
    double final_holdout_ls = 0.0;
    int steps = 0;
};

inline void save_optimizer_state(const AdamOptimizer& adam_const, int step, std::uint64_t seed,
                                 const fs::path& dir) {
    AdamOptimizer& adam = const_cast<AdamOptimizer&>(adam_const);
    ParameterStore opt;
    opt.create("adam.m", Tensor::from({static_cast<std::int64_t>(adam.m().size())}, adam.m()));
    opt.create("adam.v", Tensor::from({static_cast<std::int64_t>(adam.v().size())}, adam.v()));
    opt.save(dir / "optimizer",
             {{"step", step}, {"seed", seed}, {"adam_steps", adam.step_count()}});
}

inline TrainRunResult run_training(GcModel& model, TrainingData data, const TrainOptions& opts,
                                   const fs::path& out_dir, bool resume = false) {
    fs::create_directories(out_dir);
    fs::path lock = out_dir / ".lock";
    require(!fs::exists(lock), errc::data,
            "training: " + out_dir.string() + " is locked by another run (remove " +
                lock.string() + " if stale)");
    atomic_write(lock, "lock\n");

    Trainer trainer(model, std::move(data), opts);
    int start_step = 0;
    if (resume) {
        nlohmann::json state = nlohmann::json::parse(read_file(out_dir / "state.json"));
        start_step = state.at("step");
        ParameterStore opt;
        opt.create("adam.m", Tensor::zeros({model.params.total_size()}));
        opt.create("adam.v", Tensor::zeros({model.params.total_size()}));
        opt.load(out_dir / "optimizer");
        std::copy(opt.at("adam.m").data(), opt.at("adam.m").data() + opt.at("adam.m").size(),
                  trainer.optimizer().m().begin());
        std::copy(opt.at("adam.v").data(), opt.at("adam.v").data() + opt.at("adam.v").size(),
                  trainer.optimizer().v().begin());
        trainer.set_step_count(start_step);
    }

    TrainRunResult result;
    std::string log;
    try {
        result.initial_holdout_ls = trainer.holdout_loss_simple();
        for (int s = start_step; s < opts.steps; ++s) {
            StepRecord rec = trainer.step_once();
            nlohmann::json row{{"step", rec.step},
                               {"losses", rec.losses},
                               {"alpha", rec.alpha},
                               {"residual", rec.residual},
                               {"rank", rec.rank}};
            log += row.dump() + "\n";
        }
        result.final_holdout_ls = trainer.holdout_loss_simple();
        result.steps = opts.steps;
    } catch (const error& e) {
        // dump enough state to diagnose, then surface the failure
        nlohmann::json dump{{"failed_at_step", trainer.step_count()}, {"what", e.what()}};
        atomic_write(out_dir / "failure_dump.json", dump.dump(2) + "\n");
        if (!log.empty()) atomic_write(out_dir / "train_log.jsonl", log);
        fs::remove(lock);
        throw;
    }

    atomic_write(out_dir / "train_log.jsonl", log);
    model.save_checkpoint(out_dir);
    save_optimizer_state(trainer.optimizer(), opts.steps, opts.seed, out_dir);
    atomic_write(out_dir / "state.json",
                 nlohmann::json{{"step", opts.steps}, {"seed", opts.seed}}.dump(2) + "\n");
    nlohmann::json eval{{"initial_holdout_ls", result.initial_holdout_ls},
                        {"final_holdout_ls", result.final_holdout_ls},
                        {"steps", result.steps},
                        {"mtl_mode", opts.mtl_mode}};
    atomic_write(out_dir / "eval.json", eval.dump(2) + "\n");
    fs::remove(lock);
    return result;
}

}  // namespace gcdance
