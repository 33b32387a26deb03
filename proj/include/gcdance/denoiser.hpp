#pragma once

#include <string>
#include <vector>

#include "gcdance/autograd.hpp"
#include "gcdance/conditioning.hpp"
#include "gcdance/nn.hpp"
#include "gcdance/skeleton.hpp"

namespace gcdance {

// ---------------------------------------------------------------------------
// Body/hand split of the frame vector. The body part carries the body joints'
// rotations plus root translation and contact flags; the hand part carries
// the hand joints' rotations. merge(split(x)) == x exactly.
// ---------------------------------------------------------------------------

struct BodyHandSplit {
    std::vector<std::int64_t> body_cols;
    std::vector<std::int64_t> hand_cols;
    std::vector<std::int64_t> merge_perm;  // canonical col -> position in body|hand concat

    static BodyHandSplit from_skeleton(const Skeleton& skel) {
        require(skel.has_group("hands") && !skel.group("hands").empty(), errc::data,
                "body/hand split: skeleton has no hand joints");
        BodyHandSplit s;
        for (int j : skel.body_joints())
            for (int c = 0; c < 6; ++c) s.body_cols.push_back(j * 6 + c);
        for (std::int64_t c = skel.trans_col(); c < skel.frame_dim(); ++c)
            s.body_cols.push_back(c);
        for (int j : skel.group("hands"))
            for (int c = 0; c < 6; ++c) s.hand_cols.push_back(j * 6 + c);
        require(static_cast<std::int64_t>(s.body_cols.size() + s.hand_cols.size()) ==
                    skel.frame_dim(),
                errc::data, "body/hand split: column partition mismatch");
        s.merge_perm.assign(s.body_cols.size() + s.hand_cols.size(), 0);
        std::int64_t pos = 0;
        for (std::int64_t c : s.body_cols) s.merge_perm[static_cast<std::size_t>(c)] = pos++;
        for (std::int64_t c : s.hand_cols) s.merge_perm[static_cast<std::size_t>(c)] = pos++;
        return s;
    }

    std::int64_t body_dim() const { return static_cast<std::int64_t>(body_cols.size()); }
    std::int64_t hand_dim() const { return static_cast<std::int64_t>(hand_cols.size()); }
};

inline std::pair<Tensor, Tensor> split_body_hand(const Tensor& frames, const BodyHandSplit& s) {
    std::int64_t D = frames.cols();
    require(D == s.body_dim() + s.hand_dim(), errc::data, "split_body_hand: dim mismatch");
    std::int64_t rows = frames.size() / D;
    Tensor body = Tensor::zeros({rows, s.body_dim()});
    Tensor hand = Tensor::zeros({rows, s.hand_dim()});
    for (std::int64_t r = 0; r < rows; ++r) {
        for (std::size_t i = 0; i < s.body_cols.size(); ++i)
            body[r * s.body_dim() + static_cast<std::int64_t>(i)] = frames[r * D + s.body_cols[i]];
        for (std::size_t i = 0; i < s.hand_cols.size(); ++i)
            hand[r * s.hand_dim() + static_cast<std::int64_t>(i)] = frames[r * D + s.hand_cols[i]];
    }
    return {body, hand};
}

inline Tensor merge_body_hand(const Tensor& body, const Tensor& hand, const BodyHandSplit& s) {
    std::int64_t D = s.body_dim() + s.hand_dim();
    std::int64_t rows = body.size() / s.body_dim();
    require(hand.size() / s.hand_dim() == rows, errc::data, "merge_body_hand: row mismatch");
    Tensor out = Tensor::zeros({rows, D});
    for (std::int64_t r = 0; r < rows; ++r) {
        for (std::size_t i = 0; i < s.body_cols.size(); ++i)
            out[r * D + s.body_cols[i]] = body[r * s.body_dim() + static_cast<std::int64_t>(i)];
        for (std::size_t i = 0; i < s.hand_cols.size(); ++i)
            out[r * D + s.hand_cols[i]] = hand[r * s.hand_dim() + static_cast<std::int64_t>(i)];
    }
    return out;
}

// ---------------------------------------------------------------------------
// The two-stream FiLM-conditioned denoiser. Body and hand expert streams are
// pre-LN transformer stacks (self-attention, cross-attention over music
// features, MLP) with a FiLM layer after every block; the hand stream adds a
// cross-attention over the body stream's output features.
// ---------------------------------------------------------------------------

struct DenoiserConfig {
    int width = 128;
    int heads = 4;
    int layers = 2;  // per stream
    int mlp_mult = 4;
    std::int64_t music_dim = 513;
    std::int64_t genre_embed_dim = 64;
    std::int64_t timestep_dim = 64;
    std::int64_t film_hidden = 64;

    void validate() const {
        require(width > 0 && heads > 0 && layers > 0, errc::data, "denoiser: bad config");
        require(width % heads == 0, errc::data, "denoiser: width must divide by head count");
    }

    nlohmann::json to_json() const {
        return {{"width", width},         {"heads", heads},
                {"layers", layers},       {"mlp_mult", mlp_mult},
                {"music_dim", music_dim}, {"genre_embed_dim", genre_embed_dim},
                {"timestep_dim", timestep_dim}, {"film_hidden", film_hidden}};
    }
    static DenoiserConfig from_json(const nlohmann::json& j) {
        DenoiserConfig c;
        c.width = j.value("width", c.width);
        c.heads = j.value("heads", c.heads);
        c.layers = j.value("layers", c.layers);
        c.mlp_mult = j.value("mlp_mult", c.mlp_mult);
        c.music_dim = j.value("music_dim", c.music_dim);
        c.genre_embed_dim = j.value("genre_embed_dim", c.genre_embed_dim);
        c.timestep_dim = j.value("timestep_dim", c.timestep_dim);
        c.film_hidden = j.value("film_hidden", c.film_hidden);
        c.validate();
        return c;
    }
};

class Denoiser {
public:
    Denoiser(DenoiserConfig cfg, const Skeleton& skel)
        : cfg_(cfg), split_(BodyHandSplit::from_skeleton(skel)) {
        cfg_.validate();
    }

    const DenoiserConfig& config() const { return cfg_; }
    const BodyHandSplit& split() const { return split_; }

    // Debug switch: force every FiLM layer to identity, making the output
    // independent of the genre embedding.
    bool film_identity = false;

    void init_params(ParameterStore& store, Rng& rng) {
        std::int64_t w = cfg_.width;
        init_linear(store, "denoiser.body_proj", split_.body_dim(), w, rng);
        init_linear(store, "denoiser.hand_proj", split_.hand_dim(), w, rng);
        init_linear(store, "denoiser.music.l1", cfg_.music_dim, w, rng);
        init_linear(store, "denoiser.music.l2", w, w, rng);
        init_linear(store, "denoiser.body_out", w, split_.body_dim(), rng);
        init_linear(store, "denoiser.hand_out", w, split_.hand_dim(), rng);
        for (int l = 0; l < cfg_.layers; ++l) {
            init_block(store, body_prefix(l), rng, false);
            init_block(store, hand_prefix(l), rng, true);
        }
    }

    // d_t: [B,k,D] noisy frames; t: per-sample timesteps; genre_embed: graph
    // var [B, genre_embed_dim]; music: [B,k,music_dim]. Returns m_hat [B,k,D].
    ag::Var forward(GraphBinding& bind, const Tensor& d_t, const std::vector<std::int64_t>& t,
                    ag::Var genre_embed, const Tensor& music) const {
        ag::Graph& g = bind.graph();
        require(d_t.rank() == 3, errc::data, "denoiser: d_t must be [B,k,D]");
        std::int64_t B = d_t.dim(0), k = d_t.dim(1);
        require(d_t.dim(2) == split_.body_dim() + split_.hand_dim(), errc::data,
                "denoiser: frame dim mismatch");
        require(music.rank() == 3 && music.dim(0) == B && music.dim(1) == k &&
                    music.dim(2) == cfg_.music_dim,
                errc::data, "denoiser: music feature shape mismatch");
        require(static_cast<std::int64_t>(t.size()) == B, errc::data,
                "denoiser: timestep count mismatch");

        // conditioning vector for FiLM: genre embedding ++ timestep embedding
        Tensor temb = timestep_embedding(t, cfg_.timestep_dim);
        ag::Var cond = ag::concat(genre_embed, g.constant(temb));

        ag::Var pe = g.constant(positional_encoding(k, cfg_.width));
        ag::Var x = g.constant(d_t);
        ag::Var body = ag::add(linear_3d(bind, "denoiser.body_proj",
                                         ag::gather_cols(x, split_.body_cols)),
                               pe);
        ag::Var hand = ag::add(linear_3d(bind, "denoiser.hand_proj",
                                         ag::gather_cols(x, split_.hand_cols)),
                               pe);
        ag::Var music_feat =
            ag::add(linear_3d(bind, "denoiser.music.l2",
                              ag::gelu(linear_3d(bind, "denoiser.music.l1", g.constant(music)))),
                    pe);

        for (int l = 0; l < cfg_.layers; ++l)
            body = run_block(bind, body_prefix(l), body, music_feat, nullptr, cond);
        for (int l = 0; l < cfg_.layers; ++l)
            hand = run_block(bind, hand_prefix(l), hand, music_feat, &body, cond);

        ag::Var body_out = linear_3d(bind, "denoiser.body_out", ag::layer_norm(body));
        ag::Var hand_out = linear_3d(bind, "denoiser.hand_out", ag::layer_norm(hand));
        return ag::gather_cols(ag::concat(body_out, hand_out), split_.merge_perm);
    }

    // Inference entry point: no gradient consumers, one clip at a time.
    Tensor denoise(ParameterStore& store, const Tensor& d_t_clip,
                   std::int64_t t, const Tensor& genre_embed_row, const Tensor& music_clip) const {
        ag::Graph g;
        GraphBinding bind(g, store);
        std::int64_t k = d_t_clip.dim(0);
        Tensor d3 = Tensor::zeros({1, k, d_t_clip.dim(1)});
        std::copy(d_t_clip.data(), d_t_clip.data() + d_t_clip.size(), d3.data());
        Tensor m3 = Tensor::zeros({1, music_clip.dim(0), music_clip.dim(1)});
        std::copy(music_clip.data(), music_clip.data() + music_clip.size(), m3.data());
        Tensor ce = Tensor::zeros({1, genre_embed_row.size()});
        std::copy(genre_embed_row.data(), genre_embed_row.data() + genre_embed_row.size(),
                  ce.data());
        ag::Var out = forward(bind, d3, {t}, g.leaf(ce), m3);
        Tensor out3 = g.value(out);
        Tensor clip = Tensor::zeros({k, d_t_clip.dim(1)});
        std::copy(out3.data(), out3.data() + out3.size(), clip.data());
        return clip;
    }

private:
    static std::string body_prefix(int l) { return "denoiser.body.l" + std::to_string(l); }
    static std::string hand_prefix(int l) { return "denoiser.hand.l" + std::to_string(l); }

    void init_block(ParameterStore& store, const std::string& prefix, Rng& rng,
                    bool with_body_link) const {
        std::int64_t w = cfg_.width;
        std::int64_t cond_dim = cfg_.genre_embed_dim + cfg_.timestep_dim;
        auto attn = [&](const std::string& p) {
            init_linear(store, p + ".q", w, w, rng);
            init_linear(store, p + ".k", w, w, rng);
            init_linear(store, p + ".v", w, w, rng);
            init_linear(store, p + ".o", w, w, rng);
        };
        attn(prefix + ".self");
        FilmModule::init(store, prefix + ".film1", cond_dim, cfg_.film_hidden, w, rng);
        attn(prefix + ".crossm");
        FilmModule::init(store, prefix + ".film2", cond_dim, cfg_.film_hidden, w, rng);
        if (with_body_link) {
            attn(prefix + ".crossb");
            FilmModule::init(store, prefix + ".film3", cond_dim, cfg_.film_hidden, w, rng);
        }
        init_linear(store, prefix + ".mlp.l1", w, w * cfg_.mlp_mult, rng);
        init_linear(store, prefix + ".mlp.l2", w * cfg_.mlp_mult, w, rng);
        FilmModule::init(store, prefix + ".film_mlp", cond_dim, cfg_.film_hidden, w, rng);
    }

    static ag::Var linear_3d(GraphBinding& bind, const std::string& prefix, ag::Var x) {
        return ag::add(ag::matmul(x, bind(prefix + ".w"), prefix), bind(prefix + ".b"));
    }

    ag::Var multihead(GraphBinding& bind, const std::string& prefix, ag::Var q_in,
                      ag::Var kv_in) const {
        std::int64_t hd = cfg_.width / cfg_.heads;
        ag::Var q = linear_3d(bind, prefix + ".q", q_in);
        ag::Var k = linear_3d(bind, prefix + ".k", kv_in);
        ag::Var v = linear_3d(bind, prefix + ".v", kv_in);
        std::vector<ag::Var> heads;
        for (int h = 0; h < cfg_.heads; ++h) {
            ag::Var qh = ag::slice(q, 2, h * hd, (h + 1) * hd);
            ag::Var kh = ag::slice(k, 2, h * hd, (h + 1) * hd);
            ag::Var vh = ag::slice(v, 2, h * hd, (h + 1) * hd);
            heads.push_back(ag::attention(qh, kh, vh));
        }
        return linear_3d(bind, prefix + ".o", ag::concat(heads));
    }

    ag::Var film(GraphBinding& bind, const std::string& prefix, ag::Var y, ag::Var cond) const {
        if (film_identity) return y;
        FilmModule module{prefix, cfg_.width};
        auto [gamma, eps] = module.params(bind, cond);
        return film_apply(y, gamma, eps);
    }

    ag::Var run_block(GraphBinding& bind, const std::string& prefix, ag::Var h, ag::Var music,
                      const ag::Var* body_feat, ag::Var cond) const {
        ag::Var normed = ag::layer_norm(h);
        h = ag::add(h, multihead(bind, prefix + ".self", normed, normed));
        h = film(bind, prefix + ".film1", h, cond);
        h = ag::add(h, multihead(bind, prefix + ".crossm", ag::layer_norm(h), music));
        h = film(bind, prefix + ".film2", h, cond);
        if (body_feat) {
            h = ag::add(h, multihead(bind, prefix + ".crossb", ag::layer_norm(h), *body_feat));
            h = film(bind, prefix + ".film3", h, cond);
        }
        ag::Var m = linear_3d(bind, prefix + ".mlp.l2",
                              ag::gelu(linear_3d(bind, prefix + ".mlp.l1", ag::layer_norm(h))));
        h = ag::add(h, m);
        h = film(bind, prefix + ".film_mlp", h, cond);
        return h;
    }

    DenoiserConfig cfg_;
    BodyHandSplit split_;
};

}  // namespace gcdance
