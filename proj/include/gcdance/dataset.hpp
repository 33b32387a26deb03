#pragma once

#include <nlohmann/json.hpp>
#include <algorithm>
#include <sstream>
#include <string>
#include <vector>

#include "gcdance/audio.hpp"
#include "gcdance/conditioning.hpp"
#include "gcdance/io.hpp"
#include "gcdance/motion.hpp"
#include "gcdance/synth.hpp"

namespace gcdance {

struct DatasetEntry {
    std::string clip_file;
    std::string wav_file;
    std::string genre;
    int genre_id = 0;
    std::string text;
};

struct SynthDatasetConfig {
    int genres = 3;
    int clips_per_genre = 10;
    double seconds = 2.0;
    int fps = 30;
    std::uint64_t seed = 0;
};

// Writes clips_per_genre GCMO clips per genre with paired click-track WAVs and
// one labels.jsonl. Deterministic: the same seed reproduces every byte.
inline std::vector<DatasetEntry> write_synth_dataset(const fs::path& dir,
                                                     const GenreVocabulary& vocab,
                                                     const Skeleton& skel,
                                                     const SynthDatasetConfig& cfg,
                                                     bool force = false) {
    require(cfg.genres >= 1 && cfg.genres <= vocab.size(), errc::data,
            "synth dataset: genre count exceeds the vocabulary (" +
                std::to_string(vocab.size()) + ")");
    require(cfg.clips_per_genre >= 1, errc::data, "synth dataset: need at least one clip");
    if (fs::exists(dir) && !fs::is_empty(dir))
        require(force, errc::data,
                "synth dataset: output directory " + dir.string() +
                    " is not empty (pass --force to overwrite)");
    fs::create_directories(dir);

    // per-genre description texts, deterministic in the dataset seed
    DescriptionCorpus corpus = build_description_corpus(
        vocab, cfg.seed ^ 0x5EEDC0DE, std::max(20, cfg.clips_per_genre));

    auto k = static_cast<std::int64_t>(cfg.seconds * cfg.fps);
    Rng base(cfg.seed);
    std::vector<DatasetEntry> entries;
    std::string labels;
    for (int g = 0; g < cfg.genres; ++g) {
        std::vector<std::string> texts;
        for (const auto& e : corpus.train)
            if (e.genre_id == g) texts.push_back(e.text);
        for (int i = 0; i < cfg.clips_per_genre; ++i) {
            std::uint64_t clip_seed =
                base.derive(static_cast<std::uint64_t>(g) * 100000 + static_cast<std::uint64_t>(i))
                    .bits();
            SynthResult synth = synth_genre_motion(g, clip_seed, k, cfg.fps, skel);

            std::ostringstream stem;
            stem << vocab.name(g) << "_";
            stem.fill('0');
            stem.width(3);
            stem << i;
            std::string clip_file = stem.str() + ".gcmo";
            std::string wav_file = stem.str() + ".wav";
            save_gcmo(synth.clip, skel.joint_count(), dir / clip_file);
            save_wav(render_click_track(synth.beat_times, cfg.seconds), dir / wav_file);

            DatasetEntry e;
            e.clip_file = clip_file;
            e.wav_file = wav_file;
            e.genre = vocab.name(g);
            e.genre_id = g;
            e.text = texts[static_cast<std::size_t>(i) % texts.size()];
            entries.push_back(e);
            nlohmann::json row{{"clip", e.clip_file},
                               {"wav", e.wav_file},
                               {"genre", e.genre},
                               {"genre_id", e.genre_id},
                               {"text", e.text}};
            labels += row.dump() + "\n";
        }
    }
    atomic_write(dir / "labels.jsonl", labels);
    return entries;
}

inline std::vector<DatasetEntry> load_dataset_labels(const fs::path& dir) {
    std::string body = read_file(dir / "labels.jsonl");
    std::vector<DatasetEntry> entries;
    std::istringstream in(body);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json row = nlohmann::json::parse(line);
        DatasetEntry e;
        e.clip_file = row.at("clip");
        e.wav_file = row.at("wav");
        e.genre = row.at("genre");
        e.genre_id = row.at("genre_id");
        e.text = row.at("text");
        entries.push_back(e);
    }
    require(!entries.empty(), errc::data, "dataset: empty labels.jsonl in " + dir.string());
    return entries;
}

}  // namespace gcdance
