#pragma once

#include <nlohmann/json.hpp>
#include <chrono>
#include <set>
#include <string>
#include <vector>

#include "gcdance/common.hpp"
#include "gcdance/conditioning.hpp"
#include "gcdance/denoiser.hpp"
#include "gcdance/io.hpp"
#include "gcdance/model.hpp"
#include "gcdance/skeleton.hpp"

namespace gcdance {

// ---------------------------------------------------------------------------
// Experiment configuration. Versioned JSON with strict validation: unknown
// keys are errors, not warnings (assets/config.schema.json documents the
// shape).
// ---------------------------------------------------------------------------

struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::uint64_t corpus_seed = 99;
    std::string skeleton = "preset:52";
    std::string vocabulary = "default:16";
    std::string train_dir;
    double holdout_fraction = 0.2;
    DenoiserConfig denoiser;
    int schedule_timesteps = 50;
    std::string schedule_kind = "cosine";
    bool schedule_posterior = false;
    std::string mtl_mode = "nash";  // fixed | nash | aligned
    std::vector<double> fixed_weights = {1.0, 1.0, 1.0, 1.0, 0.1};
    double learning_rate = 2e-4;
    int steps = 2000;
    int batch_size = 16;
    int alpha_interval = 1;  // recompute aggregation weights every N steps

    Skeleton resolve_skeleton() const {
        if (skeleton == "preset:52") return skeleton_preset52();
        if (skeleton == "preset:24") return skeleton_preset24();
        return load_skeleton(skeleton);
    }
    GenreVocabulary resolve_vocabulary() const {
        if (vocabulary == "default:16") return GenreVocabulary::default16();
        return load_vocabulary(vocabulary);
    }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj, const std::set<std::string>& known,
                                const std::string& where) {
    for (const auto& [key, value] : obj.items())
        require(known.count(key) != 0, errc::data,
                "config: unknown key '" + key + "' in " + where);
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
    require(j.is_object(), errc::data, "config: root must be an object");
    detail::reject_unknown_keys(j, {"version", "seed", "corpus_seed", "skeleton", "vocabulary",
                                    "data", "denoiser", "schedule", "mtl", "optimizer"},
                                "the top level");
    require(j.contains("version") && j.at("version") == 1, errc::data,
            "config: version must be 1");
    ExperimentConfig cfg;
    cfg.seed = j.value("seed", 0ull);
    cfg.corpus_seed = j.value("corpus_seed", cfg.corpus_seed);
    cfg.skeleton = j.value("skeleton", cfg.skeleton);
    cfg.vocabulary = j.value("vocabulary", cfg.vocabulary);

    if (j.contains("data")) {
        const auto& d = j.at("data");
        detail::reject_unknown_keys(d, {"train_dir", "holdout_fraction"}, "data");
        cfg.train_dir = d.value("train_dir", "");
        cfg.holdout_fraction = d.value("holdout_fraction", cfg.holdout_fraction);
        require(cfg.holdout_fraction >= 0.0 && cfg.holdout_fraction < 1.0, errc::data,
                "config: holdout_fraction must be in [0, 1)");
    }
    if (j.contains("denoiser")) {
        detail::reject_unknown_keys(j.at("denoiser"),
                                    {"width", "heads", "layers", "mlp_mult", "music_dim",
                                     "genre_embed_dim", "timestep_dim", "film_hidden"},
                                    "denoiser");
        cfg.denoiser = DenoiserConfig::from_json(j.at("denoiser"));
    }
    if (j.contains("schedule")) {
        const auto& s = j.at("schedule");
        detail::reject_unknown_keys(s, {"timesteps", "kind", "posterior"}, "schedule");
        cfg.schedule_timesteps = s.value("timesteps", cfg.schedule_timesteps);
        cfg.schedule_kind = s.value("kind", cfg.schedule_kind);
        cfg.schedule_posterior = s.value("posterior", cfg.schedule_posterior);
        require(cfg.schedule_timesteps >= 1, errc::data, "config: timesteps must be >= 1");
    }
    if (j.contains("mtl")) {
        const auto& m = j.at("mtl");
        detail::reject_unknown_keys(m, {"mode", "fixed_weights"}, "mtl");
        cfg.mtl_mode = m.value("mode", cfg.mtl_mode);
        require(cfg.mtl_mode == "fixed" || cfg.mtl_mode == "nash" || cfg.mtl_mode == "aligned",
                errc::data, "config: mtl.mode must be fixed|nash|aligned");
        if (m.contains("fixed_weights")) {
            cfg.fixed_weights = m.at("fixed_weights").get<std::vector<double>>();
            require(cfg.fixed_weights.size() == 5, errc::data,
                    "config: fixed_weights must have 5 entries");
        }
    }
    if (j.contains("optimizer")) {
        const auto& o = j.at("optimizer");
        detail::reject_unknown_keys(o, {"learning_rate", "steps", "batch_size", "alpha_interval"},
                                    "optimizer");
        cfg.learning_rate = o.value("learning_rate", cfg.learning_rate);
        cfg.steps = o.value("steps", cfg.steps);
        cfg.batch_size = o.value("batch_size", cfg.batch_size);
        cfg.alpha_interval = o.value("alpha_interval", cfg.alpha_interval);
        require(cfg.learning_rate > 0.0 && cfg.steps >= 1 && cfg.batch_size >= 1 &&
                    cfg.alpha_interval >= 1,
                errc::data, "config: optimizer values must be positive");
    }
    return cfg;
}

inline ExperimentConfig load_experiment_config(const fs::path& path) {
    return parse_experiment_config(nlohmann::json::parse(read_file(path)));
}

// ---------------------------------------------------------------------------
// Run manifest: provenance for every run, written atomically at run start.
// The start timestamp is the one field excluded from byte-reproducibility
// comparisons.
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline void write_run_manifest(const fs::path& dir, const std::string& command,
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
    atomic_write(dir / "manifest.json", m.dump(2) + "\n");
}

}  // namespace gcdance
