#include <catch_amalgamated.hpp>

#include <cmath>

#include "gcdance/conditioning.hpp"
#include "testutil.hpp"

using namespace gcdance;
namespace ag = gcdance::ag;

namespace {

struct TrainedClassifier {
    GenreVocabulary vocab = GenreVocabulary::default16();
    DescriptionCorpus corpus;
    ParameterStore store;
    TextGenreClassifier clf;

    TrainedClassifier()
        : corpus(build_description_corpus(vocab, 424242)),
          clf(TextGenreClassifier::corpus_tokens(corpus.train), vocab.size()) {
        Rng rng(7);
        clf.init_params(store, rng);
        train_classifier(clf, store, corpus.train);
    }
};

TrainedClassifier& trained() {
    static TrainedClassifier t;
    return t;
}

}  // namespace

TEST_CASE("genre_prompt produces the exact template") {
    GenreVocabulary vocab = GenreVocabulary::default16();
    CHECK(genre_prompt(vocab, "Jazz") == "This is a Jazz type of music.");
    CHECK(genre_prompt(vocab, "Popping") == "This is a Popping type of music.");
    CHECK_THROWS_AS(genre_prompt(vocab, "Waltz"), error);
}

TEST_CASE("vocabulary: bijection, uniqueness, json round trip") {
    GenreVocabulary vocab = GenreVocabulary::default16();
    CHECK(vocab.size() == 16);
    CHECK(vocab.index("Jazz") == 7);
    CHECK(vocab.name(7) == "Jazz");
    CHECK_THROWS_AS(vocab.index("Polka"), error);
    CHECK_THROWS_AS(GenreVocabulary({"A", "A"}), error);

    testutil::TempDir tmp("vocab");
    save_vocabulary(vocab, tmp.path() / "v.json");
    GenreVocabulary loaded = load_vocabulary(tmp.path() / "v.json");
    CHECK(loaded.names() == vocab.names());
}

TEST_CASE("classifier: the paper template maps to its genre for every entry") {
    auto& t = trained();
    for (int g = 0; g < t.vocab.size(); ++g) {
        GenreDistribution d = t.clf.classify(t.store, genre_prompt(t.vocab, t.vocab.name(g)));
        INFO(t.vocab.name(g));
        CHECK(d.argmax() == g);
        CHECK_FALSE(d.unknown_tokens_warning);
    }
}

TEST_CASE("classifier: held-out accuracy at least 95 percent") {
    auto& t = trained();
    double acc = classifier_accuracy(t.clf, t.store, t.corpus.held_out);
    CHECK(acc >= 0.95);
}

TEST_CASE("classifier: held-out breaking-footwork description maps to Breaking") {
    auto& t = trained();
    GenreDistribution d = t.clf.classify(t.store, "An energetic routine with breaking footwork.");
    CHECK(t.vocab.name(d.argmax()) == "Breaking");
}

TEST_CASE("classifier: empty text errors, unknown tokens warn with uniform 0.5") {
    auto& t = trained();
    CHECK_THROWS_AS(t.clf.classify(t.store, ""), error);
    GenreDistribution d = t.clf.classify(t.store, "xyzzy plugh qwerty");
    CHECK(d.unknown_tokens_warning);
    for (std::int64_t i = 0; i < d.probs.size(); ++i) CHECK(d.probs[i] == 0.5);
}

TEST_CASE("classifier: deterministic, case- and order-invariant") {
    auto& t = trained();
    GenreDistribution a = t.clf.classify(t.store, "saxophone swing improvisation");
    GenreDistribution b = t.clf.classify(t.store, "Improvisation SWING saxophone");
    for (std::int64_t i = 0; i < a.probs.size(); ++i) CHECK(a.probs[i] == b.probs[i]);
    GenreDistribution c = t.clf.classify(t.store, "saxophone swing improvisation");
    for (std::int64_t i = 0; i < a.probs.size(); ++i) CHECK(a.probs[i] == c.probs[i]);
}

TEST_CASE("bce loss: analytic values") {
    // perfect prediction
    Tensor target = Tensor::zeros({1, 4});
    target.at(0, 1) = 1.0;
    {
        ag::Graph g;
        ag::Var loss = bce_loss(g.leaf(target), target);
        CHECK(g.value(loss).item() <= 1e-6);
    }
    // uniform 0.5 -> ln 2
    {
        ag::Graph g;
        ag::Var loss = bce_loss(g.leaf(Tensor::full({1, 4}, 0.5)), target);
        CHECK(g.value(loss).item() == Catch::Approx(std::log(2.0)).epsilon(1e-9));
    }
    // exactly wrong -> the clamp ceiling -ln(1e-7)
    {
        Tensor wrong = Tensor::full({1, 4}, 1.0);
        for (std::int64_t i = 0; i < 4; ++i) wrong.at(0, i) = 1.0 - target.at(0, i);
        ag::Graph g;
        ag::Var loss = bce_loss(g.leaf(wrong), target);
        CHECK(g.value(loss).item() == Catch::Approx(-std::log(1e-7)).epsilon(1e-4));
    }
    // shape mismatch
    {
        ag::Graph g;
        CHECK_THROWS_AS(bce_loss(g.leaf(Tensor::zeros({1, 3})), target), error);
    }
}

TEST_CASE("bce loss: minimized at the target (gradient sign probe)") {
    Tensor target = Tensor::zeros({1, 3});
    target.at(0, 2) = 1.0;
    for (double delta : {-0.2, 0.2}) {
        Tensor probe = Tensor::zeros({1, 3});
        for (std::int64_t i = 0; i < 3; ++i)
            probe.at(0, i) = std::clamp(target.at(0, i) + delta, 0.05, 0.95);
        ag::Graph g;
        ag::Var p = g.leaf(probe);
        ag::Var loss = bce_loss(p, target);
        g.backward(loss);
        Tensor grad = g.grad(p);
        for (std::int64_t i = 0; i < 3; ++i) {
            // gradient points away from the target on every coordinate
            double towards = target.at(0, i) - probe.at(0, i);
            CHECK(grad[i] * towards < 0.0);
        }
    }
}

TEST_CASE("genre embedding: distinct rows, identical lookups, gradient flow") {
    ParameterStore store;
    Rng rng(9);
    init_genre_embedding(store, 16, 64, rng);

    Tensor r0 = genre_embedding_row(store, 0);
    Tensor r1 = genre_embedding_row(store, 1);
    double dist = 0.0;
    for (std::int64_t i = 0; i < 64; ++i) dist += (r0[i] - r1[i]) * (r0[i] - r1[i]);
    CHECK(dist > 1e-6);

    Tensor again = genre_embedding_row(store, 0);
    for (std::int64_t i = 0; i < 64; ++i) CHECK(again[i] == r0[i]);

    CHECK_THROWS_AS(genre_embedding_row(store, 16), error);

    // gradient reaches exactly the looked-up rows
    ag::Graph g;
    GraphBinding bind(g, store);
    ag::Var e = embed_genre(bind, {3, 3, 5});
    ag::Var loss = ag::reduce_sum(ag::mul(e, e));
    g.backward(loss);
    Tensor grad = g.grad(bind.var("genre_embed"));
    double row3 = 0.0, row5 = 0.0, row7 = 0.0;
    for (std::int64_t d = 0; d < 64; ++d) {
        row3 += std::abs(grad.at(3, d));
        row5 += std::abs(grad.at(5, d));
        row7 += std::abs(grad.at(7, d));
    }
    CHECK(row3 > 0.0);
    CHECK(row5 > 0.0);
    CHECK(row7 == 0.0);
}

TEST_CASE("film: harness weights (w=0, gamma bias 1, eps bias 0) give identity modulation") {
    ParameterStore store;
    Rng rng(10);
    FilmModule film = FilmModule::init(store, "film", 32, 16, 8, rng);
    store.at("film.gamma.w").fill(0.0);
    store.at("film.eps.w").fill(0.0);
    ag::Graph g;
    GraphBinding bind(g, store);
    ag::Var cond = g.constant(testutil::random_tensor(rng, {2, 32}));
    auto [gamma, eps] = film.params(bind, cond);
    for (std::int64_t i = 0; i < g.value(gamma).size(); ++i) {
        CHECK(g.value(gamma)[i] == Catch::Approx(1.0));
        CHECK(g.value(eps)[i] == Catch::Approx(0.0).margin(1e-12));
    }

    // identity modulation leaves any input unchanged
    Tensor y = testutil::random_tensor(rng, {2, 4, 8});
    ag::Var out = film_apply(g.constant(y), gamma, eps);
    for (std::int64_t i = 0; i < y.size(); ++i) CHECK(g.value(out)[i] == y[i]);
}

TEST_CASE("film: timestep changes the modulation for a fixed embedding") {
    ParameterStore store;
    Rng rng(11);
    FilmModule film = FilmModule::init(store, "film", 16, 16, 8, rng);
    // break the identity init so the adapter output actually reaches gamma
    store.at("film.gamma.w") = Tensor::randn(rng, {16, 8}, 0.3);

    Tensor ce = testutil::random_tensor(rng, {1, 8});
    auto gamma_at = [&](std::int64_t t) {
        ag::Graph g;
        GraphBinding bind(g, store);
        Tensor temb = timestep_embedding({t}, 8);
        Tensor cond = Tensor::zeros({1, 16});
        for (int i = 0; i < 8; ++i) {
            cond.at(0, i) = ce.at(0, i);
            cond.at(0, 8 + i) = temb.at(0, i);
        }
        auto [gamma, eps] = film.params(bind, g.constant(cond));
        return g.value(gamma);
    };
    Tensor g0 = gamma_at(0), g7 = gamma_at(7);
    double diff = 0.0;
    for (std::int64_t i = 0; i < g0.size(); ++i) diff += std::abs(g0[i] - g7[i]);
    CHECK(diff > 1e-8);
}

TEST_CASE("film: zero embedding and zero adapter weights yield the head biases") {
    ParameterStore store;
    Rng rng(12);
    FilmModule film = FilmModule::init(store, "film", 16, 16, 8, rng);
    store.at("film.alpha1.w").fill(0.0);
    store.at("film.alpha2.w").fill(0.0);
    store.at("film.alpha2.b").fill(0.0);
    // distinctive biases on the heads
    for (std::int64_t i = 0; i < 8; ++i) {
        store.at("film.gamma.b")[i] = 2.0 + static_cast<double>(i);
        store.at("film.eps.b")[i] = -1.0 - static_cast<double>(i);
    }
    ag::Graph g;
    GraphBinding bind(g, store);
    auto [gamma, eps] = film.params(bind, g.constant(Tensor::zeros({1, 16})));
    for (std::int64_t i = 0; i < 8; ++i) {
        CHECK(g.value(gamma).at(0, i) == Catch::Approx(2.0 + static_cast<double>(i)));
        CHECK(g.value(eps).at(0, i) == Catch::Approx(-1.0 - static_cast<double>(i)));
    }
}

TEST_CASE("film_apply: identity, constant rows, elementwise oracle") {
    Rng rng(13);
    Tensor y = testutil::random_tensor(rng, {4, 6});
    Tensor ones = Tensor::full({6}, 1.0);
    Tensor zeros = Tensor::zeros({6});
    Tensor out = film_apply(y, ones, zeros);
    for (std::int64_t i = 0; i < y.size(); ++i) CHECK(out[i] == y[i]);

    Tensor eps = testutil::random_tensor(rng, {6});
    Tensor collapsed = film_apply(y, zeros, eps);
    for (std::int64_t r = 0; r < 4; ++r)
        for (std::int64_t c = 0; c < 6; ++c) CHECK(collapsed.at(r, c) == eps[c]);

    Tensor gamma = testutil::random_tensor(rng, {6});
    Tensor full = film_apply(y, gamma, eps);
    for (std::int64_t r = 0; r < 4; ++r)
        for (std::int64_t c = 0; c < 6; ++c)
            CHECK(full.at(r, c) == Catch::Approx(gamma[c] * y.at(r, c) + eps[c]));

    CHECK_THROWS_AS(film_apply(y, testutil::random_tensor(rng, {5}), eps), error);
}

TEST_CASE("film_apply: composition law") {
    Rng rng(14);
    Tensor y = testutil::random_tensor(rng, {3, 5});
    Tensor g1 = testutil::random_tensor(rng, {5}), e1 = testutil::random_tensor(rng, {5});
    Tensor g2 = testutil::random_tensor(rng, {5}), e2 = testutil::random_tensor(rng, {5});
    Tensor twice = film_apply(film_apply(y, g1, e1), g2, e2);

    Tensor gc = Tensor::zeros({5}), ec = Tensor::zeros({5});
    for (int i = 0; i < 5; ++i) {
        gc[i] = g2[i] * g1[i];
        ec[i] = g2[i] * e1[i] + e2[i];
    }
    Tensor once = film_apply(y, gc, ec);
    for (std::int64_t i = 0; i < y.size(); ++i) CHECK(std::abs(twice[i] - once[i]) < 1e-12);
}

TEST_CASE("corpus: deterministic, sized, split disjointly") {
    GenreVocabulary vocab = GenreVocabulary::default16();
    DescriptionCorpus a = build_description_corpus(vocab, 5);
    DescriptionCorpus b = build_description_corpus(vocab, 5);
    REQUIRE(a.train.size() == b.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) CHECK(a.train[i].text == b.train[i].text);

    // >= 20 per genre total, each genre represented in both splits
    std::map<int, int> train_counts, held_counts;
    for (const auto& e : a.train) train_counts[e.genre_id]++;
    for (const auto& e : a.held_out) held_counts[e.genre_id]++;
    for (int g = 0; g < vocab.size(); ++g) {
        CHECK(train_counts[g] + held_counts[g] >= 20);
        CHECK(held_counts[g] >= 1);
    }
    CHECK_THROWS_AS(build_description_corpus(vocab, 5, 10), error);
}
