#pragma once

#include <nlohmann/json.hpp>
#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "gcdance/autograd.hpp"
#include "gcdance/common.hpp"
#include "gcdance/io.hpp"
#include "gcdance/nn.hpp"
#include "gcdance/rng.hpp"

namespace gcdance {

// ---------------------------------------------------------------------------
// Genre vocabulary
// ---------------------------------------------------------------------------

class GenreVocabulary {
public:
    GenreVocabulary() = default;
    explicit GenreVocabulary(std::vector<std::string> names) : names_(std::move(names)) {
        std::set<std::string> seen;
        for (const auto& n : names_) {
            require(!n.empty(), errc::data, "vocabulary: empty genre name");
            require(seen.insert(n).second, errc::data, "vocabulary: duplicate genre " + n);
        }
    }

    // The eight genres the source datasets name plus eight placeholders so the
    // default vocabulary has 16 entries; fully overridable by config.
    static GenreVocabulary default16() {
        return GenreVocabulary({"Popping", "Hip-hop", "Breaking", "Korean", "Miao", "Dai",
                                "Classical", "Jazz", "Ballet", "Locking", "Krump", "House",
                                "Salsa", "Flamenco", "Tango", "Disco"});
    }

    int size() const { return static_cast<int>(names_.size()); }
    const std::string& name(int i) const {
        require(i >= 0 && i < size(), errc::data, "vocabulary: genre id out of range");
        return names_[static_cast<std::size_t>(i)];
    }
    const std::vector<std::string>& names() const { return names_; }

    int index(const std::string& name) const {
        for (int i = 0; i < size(); ++i)
            if (names_[static_cast<std::size_t>(i)] == name) return i;
        fail(errc::data, "vocabulary: unknown genre '" + name + "'");
    }
    bool has(const std::string& name) const {
        return std::find(names_.begin(), names_.end(), name) != names_.end();
    }

    nlohmann::json to_json() const { return names_; }
    static GenreVocabulary from_json(const nlohmann::json& j) {
        return GenreVocabulary(j.get<std::vector<std::string>>());
    }

private:
    std::vector<std::string> names_;
};

inline GenreVocabulary load_vocabulary(const fs::path& path) {
    return GenreVocabulary::from_json(nlohmann::json::parse(read_file(path)));
}

inline void save_vocabulary(const GenreVocabulary& v, const fs::path& path) {
    atomic_write(path, v.to_json().dump(2) + "\n");
}

// Prompt-learning template: discrete label -> full sentence.
inline std::string genre_prompt(const GenreVocabulary& vocab, const std::string& label) {
    require(vocab.has(label), errc::data, "genre_prompt: unknown label '" + label + "'");
    return "This is a " + label + " type of music.";
}

// ---------------------------------------------------------------------------
// Bundled description corpus: templated free-form texts with genre-specific
// keywords, generated deterministically, split 80/20 train/held-out.
// ---------------------------------------------------------------------------

struct CorpusEntry {
    std::string text;
    std::string genre;
    int genre_id = 0;
};

struct DescriptionCorpus {
    std::vector<CorpusEntry> train;
    std::vector<CorpusEntry> held_out;
};

namespace detail {

inline std::vector<std::string> genre_keywords(const std::string& name) {
    static const std::map<std::string, std::vector<std::string>> table = {
        {"Popping", {"popping", "robotic", "hits", "isolations", "funk"}},
        {"Hip-hop", {"hip", "hop", "street", "groove", "bounce"}},
        {"Breaking", {"breaking", "footwork", "windmills", "cypher", "breakdance"}},
        {"Korean", {"korean", "kpop", "idol", "synchronized", "sharp"}},
        {"Miao", {"miao", "hmong", "silver", "mountain", "swinging"}},
        {"Dai", {"dai", "peacock", "bamboo", "gentle", "flowing"}},
        {"Classical", {"classical", "orchestral", "symphony", "turns", "elegant"}},
        {"Jazz", {"jazz", "swing", "saxophone", "improvisation", "syncopated"}},
        {"Ballet", {"ballet", "pointe", "pirouette", "arabesque", "leaps"}},
        {"Locking", {"locking", "locks", "points", "freeze", "funky"}},
        {"Krump", {"krump", "aggressive", "stomps", "chest", "raw"}},
        {"House", {"house", "jacking", "club", "shuffle", "loose"}},
        {"Salsa", {"salsa", "cuban", "partner", "spins", "latin"}},
        {"Flamenco", {"flamenco", "spanish", "guitar", "heelwork", "passion"}},
        {"Tango", {"tango", "argentine", "embrace", "dramatic", "glide"}},
        {"Disco", {"disco", "seventies", "glitter", "hustle", "shimmer"}},
    };
    auto it = table.find(name);
    if (it != table.end()) return it->second;
    // genres outside the default vocabulary fall back to name-derived tokens,
    // which stay unique because names are unique
    std::string lower;
    for (char c : name) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return {lower, lower + "beat", lower + "steps"};
}

}  // namespace detail

inline DescriptionCorpus build_description_corpus(const GenreVocabulary& vocab,
                                                  std::uint64_t seed, int per_genre = 24) {
    require(per_genre >= 20, errc::data, "corpus: at least 20 templates per genre required");
    static const std::vector<std::string> adjectives = {"lively", "smooth",   "fast",   "slow",
                                                        "energetic", "soulful", "vibrant", "intense"};
    DescriptionCorpus out;
    Rng base(seed);
    for (int g = 0; g < vocab.size(); ++g) {
        Rng rng = base.derive(static_cast<std::uint64_t>(g));
        const std::string& G = vocab.name(g);
        auto kws = detail::genre_keywords(G);
        auto kw = [&]() { return kws[rng.index(kws.size())]; };
        auto adj = [&]() { return adjectives[rng.index(adjectives.size())]; };

        std::vector<std::string> texts;
        for (int i = 0; i < per_genre; ++i) {
            std::string t;
            switch (i % 10) {
                case 0: t = genre_prompt(vocab, G); break;
                case 1: t = "A " + adj() + " track featuring " + kw() + " and " + kw() + "."; break;
                case 2: t = "The music has " + kw() + " rhythms typical of " + G + " dance."; break;
                case 3:
                    t = "Dancers respond with " + kw() + " and " + kw() + " to this " + adj() +
                        " " + G + " piece.";
                    break;
                case 4: t = "An instrumental built around " + kw() + "."; break;
                case 5: t = G + " music with a strong " + kw() + " influence."; break;
                case 6: t = "A " + adj() + " " + G + " number driven by " + kw() + "."; break;
                case 7: t = "Expect " + kw() + ", " + kw() + " and plenty of " + adj() + " energy."; break;
                case 8: t = "This " + adj() + " piece calls for " + kw() + " on the dance floor."; break;
                default: t = "A song made for " + G + " dancing, full of " + kw() + "."; break;
            }
            texts.push_back(t);
        }
        // deterministic shuffle, then 80/20 split
        for (std::size_t i = texts.size(); i > 1; --i)
            std::swap(texts[i - 1], texts[rng.index(i)]);
        std::size_t n_train = (texts.size() * 4 + 4) / 5;
        for (std::size_t i = 0; i < texts.size(); ++i) {
            CorpusEntry e{texts[i], G, g};
            (i < n_train ? out.train : out.held_out).push_back(e);
        }
    }
    return out;
}

inline void save_corpus_jsonl(const std::vector<CorpusEntry>& entries, const fs::path& path) {
    std::string body;
    for (const auto& e : entries) {
        nlohmann::json j{{"text", e.text}, {"genre", e.genre}};
        body += j.dump() + "\n";
    }
    atomic_write(path, body);
}

// ---------------------------------------------------------------------------
// Text-to-genre classifier: lowercase bag-of-words, single linear layer,
// sigmoid per class (multi-label outputs; argmax picks the genre).
// ---------------------------------------------------------------------------

inline std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char ch : text) {
        if (std::isalnum(static_cast<unsigned char>(ch))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        } else if (!cur.empty()) {
            tokens.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(cur);
    return tokens;
}

struct GenreDistribution {
    Tensor probs;  // [N_g], sigmoid outputs
    bool unknown_tokens_warning = false;

    int argmax() const {
        int best = 0;
        for (std::int64_t i = 1; i < probs.size(); ++i)
            if (probs[i] > probs[best]) best = static_cast<int>(i);
        return best;
    }
};

class TextGenreClassifier {
public:
    // Token vocabulary comes from the corpus train split; sorted for a stable
    // order independent of corpus shuffling.
    TextGenreClassifier(std::vector<std::string> token_vocab, int n_genres,
                        std::string param_prefix = "classifier")
        : tokens_(std::move(token_vocab)), n_genres_(n_genres), prefix_(std::move(param_prefix)) {
        std::sort(tokens_.begin(), tokens_.end());
        tokens_.erase(std::unique(tokens_.begin(), tokens_.end()), tokens_.end());
        for (std::size_t i = 0; i < tokens_.size(); ++i) index_[tokens_[i]] = i;
    }

    static std::vector<std::string> corpus_tokens(const std::vector<CorpusEntry>& entries) {
        std::vector<std::string> all;
        for (const auto& e : entries)
            for (auto& t : tokenize(e.text)) all.push_back(t);
        return all;
    }

    std::int64_t token_count() const { return static_cast<std::int64_t>(tokens_.size()); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    const std::string& prefix() const { return prefix_; }
    int n_genres() const { return n_genres_; }

    void init_params(ParameterStore& store, Rng& rng) const {
        init_linear(store, prefix_, token_count(), n_genres_, rng);
    }

    // Bag-of-words count vector; `any_known` reports whether a single token
    // was in the vocabulary.
    Tensor bow(const std::string& text, bool* any_known = nullptr) const {
        Tensor v = Tensor::zeros({token_count()});
        bool known = false;
        for (const auto& t : tokenize(text)) {
            auto it = index_.find(t);
            if (it != index_.end()) {
                v[static_cast<std::int64_t>(it->second)] += 1.0;
                known = true;
            }
        }
        if (any_known) *any_known = known;
        return v;
    }

    Tensor bow_batch(const std::vector<std::string>& texts) const {
        Tensor m = Tensor::zeros({static_cast<std::int64_t>(texts.size()), token_count()});
        for (std::size_t i = 0; i < texts.size(); ++i) {
            Tensor row = bow(texts[i]);
            for (std::int64_t d = 0; d < row.size(); ++d) m.at(static_cast<std::int64_t>(i), d) = row[d];
        }
        return m;
    }

    // Graph path (joint training): sigmoid scores [B, N_g].
    ag::Var scores(GraphBinding& bind, const Tensor& bow_rows) const {
        ag::Var x = bind.graph().constant(bow_rows);
        return ag::sigmoid(linear(bind, prefix_, x));
    }

    // Inference path.
    GenreDistribution classify(const ParameterStore& store, const std::string& text) const {
        require(!text.empty(), errc::usage, "classify: empty text");
        GenreDistribution out;
        bool known = false;
        Tensor v = bow(text, &known);
        if (!known) {
            out.probs = Tensor::full({n_genres_}, 0.5);
            out.unknown_tokens_warning = true;
            return out;
        }
        const Tensor& W = store.at(prefix_ + ".w");
        const Tensor& b = store.at(prefix_ + ".b");
        out.probs = Tensor::zeros({n_genres_});
        for (int gidx = 0; gidx < n_genres_; ++gidx) {
            double z = b[gidx];
            for (std::int64_t tkn = 0; tkn < token_count(); ++tkn)
                z += v[tkn] * W.at(tkn, gidx);
            out.probs[gidx] = 0.5 * (1.0 + std::tanh(0.5 * z));
        }
        return out;
    }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> index_;
    int n_genres_;
    std::string prefix_;
};

// Multi-label BCE with predictions clamped to [1e-7, 1 - 1e-7], averaged over
// classes and batch.
inline ag::Var bce_loss(ag::Var probs, const Tensor& target) {
    ag::Graph& g = *probs.g;
    require(g.value(probs).same_shape(target), errc::numeric,
            "bce: shape mismatch " + g.value(probs).shape_str() + " vs " + target.shape_str());
    ag::Var p = ag::clamp(probs, 1e-7, 1.0 - 1e-7);
    ag::Var t = g.constant(target);
    Tensor ones = Tensor::full(target.dims(), 1.0);
    ag::Var one = g.constant(ones);
    ag::Var pos = ag::mul(t, ag::log(p));
    ag::Var neg = ag::mul(ag::sub(one, t), ag::log(ag::sub(one, p)));
    return ag::scale(ag::reduce_mean(ag::add(pos, neg)), -1.0);
}

// Quick standalone trainer for the classifier (full-batch Adam on the corpus
// train split). The CLI uses this when no checkpoint is supplied; training is
// deterministic given the seed.
inline void train_classifier(const TextGenreClassifier& clf, ParameterStore& store,
                             const std::vector<CorpusEntry>& train, int steps = 200,
                             double lr = 0.05) {
    Tensor bows = clf.bow_batch([&] {
        std::vector<std::string> texts;
        for (const auto& e : train) texts.push_back(e.text);
        return texts;
    }());
    Tensor targets = Tensor::zeros({static_cast<std::int64_t>(train.size()), clf.n_genres()});
    for (std::size_t i = 0; i < train.size(); ++i)
        targets.at(static_cast<std::int64_t>(i), train[i].genre_id) = 1.0;

    AdamOptimizer adam(store.total_size(), lr);
    for (int s = 0; s < steps; ++s) {
        ag::Graph g;
        GraphBinding bind(g, store);
        ag::Var loss = bce_loss(clf.scores(bind, bows), targets);
        g.backward(loss);
        std::vector<double> grad(static_cast<std::size_t>(store.total_size()));
        bind.flat_grad(grad.data());
        std::vector<double> theta = store.flatten();
        adam.step(theta, grad);
        store.unflatten(theta);
    }
}

// Held-out accuracy of argmax classification.
inline double classifier_accuracy(const TextGenreClassifier& clf, const ParameterStore& store,
                                  const std::vector<CorpusEntry>& entries) {
    if (entries.empty()) return 1.0;
    int hits = 0;
    for (const auto& e : entries)
        if (clf.classify(store, e.text).argmax() == e.genre_id) ++hits;
    return static_cast<double>(hits) / static_cast<double>(entries.size());
}

// ---------------------------------------------------------------------------
// Genre embedding table (learned stand-in for a text-encoder embedding).
// ---------------------------------------------------------------------------

inline void init_genre_embedding(ParameterStore& store, int n_genres, std::int64_t dim,
                                 Rng& rng, const std::string& name = "genre_embed") {
    store.create(name, Tensor::randn(rng, {n_genres, dim}, 0.3));
}

inline ag::Var embed_genre(GraphBinding& bind, const std::vector<std::int64_t>& genre_ids,
                           const std::string& name = "genre_embed") {
    return ag::embedding(bind(name), genre_ids);
}

// Plain lookup for inference.
inline Tensor genre_embedding_row(const ParameterStore& store, int genre_id,
                                  const std::string& name = "genre_embed") {
    const Tensor& table = store.at(name);
    require(genre_id >= 0 && genre_id < table.dim(0), errc::data,
            "embed_genre: id out of range");
    Tensor row = Tensor::zeros({table.dim(1)});
    for (std::int64_t d = 0; d < table.dim(1); ++d) row[d] = table.at(genre_id, d);
    return row;
}

// ---------------------------------------------------------------------------
// FiLM control module: gamma = theta_w(alpha(C_E, t_emb)), eps = theta_b(...)
// with alpha a two-layer MLP over the timestep-conditioned genre embedding.
// ---------------------------------------------------------------------------

struct FilmModule {
    std::string prefix;
    std::int64_t width = 0;

    static FilmModule init(ParameterStore& store, const std::string& prefix, std::int64_t cond_dim,
                           std::int64_t hidden, std::int64_t width, Rng& rng) {
        FilmModule f;
        f.prefix = prefix;
        f.width = width;
        init_linear(store, prefix + ".alpha1", cond_dim, hidden, rng);
        init_linear(store, prefix + ".alpha2", hidden, hidden, rng);
        // near-identity modulation at init (gamma ~ 1, eps ~ 0); the small
        // head noise keeps gradients flowing into the adapter from step 0
        store.create(prefix + ".gamma.w", Tensor::randn(rng, {hidden, width}, 0.01));
        store.create(prefix + ".gamma.b", Tensor::full({width}, 1.0));
        store.create(prefix + ".eps.w", Tensor::randn(rng, {hidden, width}, 0.01));
        store.create(prefix + ".eps.b", Tensor::zeros({width}));
        return f;
    }

    // cond: [B, cond_dim] -> (gamma [B, width], eps [B, width])
    std::pair<ag::Var, ag::Var> params(GraphBinding& bind, ag::Var cond) const {
        ag::Var a = ag::gelu(linear(bind, prefix + ".alpha1", cond));
        a = linear(bind, prefix + ".alpha2", a);
        ag::Var gamma = ag::add(ag::matmul(a, bind(prefix + ".gamma.w")), bind(prefix + ".gamma.b"));
        ag::Var eps = ag::add(ag::matmul(a, bind(prefix + ".eps.w")), bind(prefix + ".eps.b"));
        return {gamma, eps};
    }
};

// FiLM_t(Y) = gamma ⊙ Y + eps, broadcast over frames. y: [B,k,w]; gamma/eps
// [B,w] reshaped to [B,1,w].
inline ag::Var film_apply(ag::Var y, ag::Var gamma, ag::Var eps) {
    const Tensor& yv = y.g->value(y);
    const Tensor& gv = y.g->value(gamma);
    require(yv.cols() == gv.cols(), errc::numeric,
            "film_apply: width mismatch " + yv.shape_str() + " vs " + gv.shape_str());
    if (yv.rank() == 3) {
        ag::Var g3 = ag::reshape(gamma, {gv.dim(0), 1, gv.dim(1)});
        ag::Var e3 = ag::reshape(eps, {gv.dim(0), 1, gv.dim(1)});
        return ag::add(ag::mul(y, g3), e3);
    }
    return ag::add(ag::mul(y, gamma), eps);
}

// Plain-tensor FiLM for tests and non-graph callers; gamma/eps are rank-1 [w]
// broadcast over rows.
inline Tensor film_apply(const Tensor& y, const Tensor& gamma, const Tensor& eps) {
    require(gamma.rank() == 1 && eps.rank() == 1, errc::numeric,
            "film_apply: gamma/eps must be rank 1");
    require(y.cols() == gamma.size() && y.cols() == eps.size(), errc::numeric,
            "film_apply: width mismatch");
    Tensor out = y;
    std::int64_t w = y.cols();
    std::int64_t rows = y.size() / w;
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t c = 0; c < w; ++c) out[r * w + c] = gamma[c] * y[r * w + c] + eps[c];
    return out;
}

}  // namespace gcdance
