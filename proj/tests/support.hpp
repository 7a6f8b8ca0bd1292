#pragma once

#include <random>
#include <string>
#include <vector>

#include "nxtp/layout.hpp"
#include "nxtp/model.hpp"
#include "nxtp/sampling.hpp"
#include "nxtp/tokenizer.hpp"

namespace nxtp::testing {

// Brute-force mask rule evaluator, written against the layout rules directly
// and independently of build_nxtp_mask.
inline bool oracle_mask_allowed(const SegmentLayout& layout, int q, int k) {
    auto in_image = [&](int p) { return p < layout.n_img; };
    auto span_idx = [&](int p) {
        for (size_t s = 0; s < layout.label_spans.size(); ++s) {
            int start = layout.label_spans[s].first;
            int count = layout.label_spans[s].second;
            if (p >= start && p < start + count) return static_cast<int>(s);
        }
        return -1;
    };
    int qs = span_idx(q), ks = span_idx(k);
    if (in_image(q) && in_image(k)) return true;                      // bidirectional prefix
    if (!in_image(q) && qs < 0) return k <= q && ks < 0;              // [IMG]/prompt causal
    if (qs >= 0) {
        if (in_image(k) || (ks < 0 && k < layout.prefix_len())) return true;  // sees prefix
        return ks == qs && k <= q;                                    // own span, causal
    }
    return false;
}

inline SegmentLayout random_layout(std::mt19937_64& rng, int max_n_img = 8, int max_prompt = 4,
                                   int max_labels = 5, int max_label_tokens = 4) {
    std::uniform_int_distribution<int> n_img_d(1, max_n_img);
    std::uniform_int_distribution<int> prompt_d(0, max_prompt);
    std::uniform_int_distribution<int> k_d(1, max_labels);
    std::uniform_int_distribution<int> t_d(1, max_label_tokens);
    std::vector<int> counts;
    int k = k_d(rng);
    for (int i = 0; i < k; ++i) counts.push_back(t_d(rng) + 1);  // + [SEP]
    return SegmentLayout::make(n_img_d(rng), prompt_d(rng), counts);
}

inline Model tiny_model(uint64_t seed, int vocab_size, int d_image = 8, int n_blocks = 2,
                        PosMode pos_mode = PosMode::Shared) {
    ModelConfig cfg;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.n_blocks = n_blocks;
    cfg.mlp_ratio = 2;
    cfg.vocab_size = vocab_size;
    cfg.d_image = d_image;
    cfg.max_seq = 128;
    cfg.pos_mode = pos_mode;
    return init_model(cfg, seed);
}

inline std::vector<float> random_image(std::mt19937_64& rng, int n_img, int d_image) {
    std::normal_distribution<float> gauss(0.0f, 1.0f);
    std::vector<float> out(static_cast<size_t>(n_img) * d_image);
    for (float& x : out) x = gauss(rng);
    return out;
}

// A vocabulary of the 26 letters plus specials, no merges.
inline Vocab letters_vocab() {
    std::vector<std::string> corpus;
    for (char c = 'a'; c <= 'z'; ++c) corpus.push_back(std::string(1, c));
    return Vocab::build(corpus, 0);
}

// A hand-wired model whose next-token behavior is a fixed Markov chain:
// attention and MLP outputs are zeroed, so the hidden state at a position is
// exactly that token's embedding; the head encodes transition logits.
// chain[i] = preferred successor of token i (logit 3.0); alt[i], when >= 0,
// gets logit 2.8 so a tau=1.2 penalty on the favorite flips the argmax.
inline Model markov_model(int vocab_size, const std::vector<int>& chain,
                          const std::vector<int>& alt, int d_image = 4) {
    ModelConfig cfg;
    cfg.d_model = vocab_size;  // room for one-hot embeddings
    cfg.n_heads = 1;
    cfg.n_blocks = 1;
    cfg.mlp_ratio = 1;
    cfg.vocab_size = vocab_size;
    cfg.d_image = d_image;
    cfg.max_seq = 256;
    cfg.pos_mode = PosMode::Shared;
    Model m = zero_params<float>(cfg);

    for (int i = 0; i < vocab_size; ++i) m.tok_emb.at(i, i) = 1.0f;
    m.img_tok.data[0] = 1.0f;  // behaves like token 0 ([IMG])
    for (auto& x : m.blocks[0].attn_norm.data) x = 1.0f;
    for (auto& x : m.blocks[0].mlp_norm.data) x = 1.0f;
    for (auto& x : m.final_norm.data) x = 1.0f;
    // wq/wk arbitrary zero, wv/wo/w_in/w_out zero: the block is a no-op.

    // rmsnorm of a one-hot e_i is e_i * sqrt(d), so head[v][i] carries
    // logit(v | current = i) / sqrt(d).
    const float scale = 1.0f / std::sqrt(static_cast<float>(cfg.d_model));
    for (int i = 0; i < vocab_size; ++i) {
        if (i < static_cast<int>(chain.size()) && chain[i] >= 0)
            m.head.at(chain[i], i) = 3.0f * scale;
        if (i < static_cast<int>(alt.size()) && alt[i] >= 0)
            m.head.at(alt[i], i) = 2.8f * scale;
    }
    return m;
}

} // namespace nxtp::testing
