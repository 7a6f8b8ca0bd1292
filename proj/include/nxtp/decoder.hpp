#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nxtp/errors.hpp"
#include "nxtp/layout.hpp"
#include "nxtp/tensor.hpp"

namespace nxtp {

struct ModelConfig {
    int d_model = 64;
    int n_heads = 4;
    int n_blocks = 4;
    int mlp_ratio = 4;
    int vocab_size = 0;
    int d_image = 32;
    int max_seq = 512;
    PosMode pos_mode = PosMode::Shared;

    int head_dim() const { return d_model / n_heads; }
    int d_mlp() const { return d_model * mlp_ratio; }

    void validate() const {
        if (d_model < 1 || n_heads < 1 || d_model % n_heads != 0)
            throw DataError("config: d_model must be divisible by n_heads");
        if (n_blocks < 1) throw DataError("config: n_blocks must be >= 1");
        if (max_seq < 1) throw DataError("config: max_seq must be >= 1");
        if (vocab_size < 1) throw DataError("config: vocab_size must be >= 1");
        if (d_image < 1 || mlp_ratio < 1) throw DataError("config: bad dims");
    }

    std::string to_text() const;
    static ModelConfig from_text(const std::string& text);
};

inline constexpr double kNormEps = 1e-5;

template <typename T>
struct DecoderParams {
    ModelConfig cfg;

    Tensor<T> tok_emb;   // V x d
    Tensor<T> img_proj;  // d_image x d
    Tensor<T> img_tok;   // d
    Tensor<T> pos_emb;   // max_seq x d

    struct Block {
        Tensor<T> attn_norm;  // d
        Tensor<T> wq, wk, wv, wo;  // d x d
        Tensor<T> mlp_norm;   // d
        Tensor<T> w_in;       // d x d_mlp
        Tensor<T> w_out;      // d_mlp x d
    };
    std::vector<Block> blocks;

    Tensor<T> final_norm;  // d
    Tensor<T> head;        // V x d
};

// Canonical tensor order: must match the serialized file layout.
template <typename T>
std::vector<Tensor<T>*> param_list(DecoderParams<T>& p) {
    std::vector<Tensor<T>*> out{&p.tok_emb, &p.img_proj, &p.img_tok, &p.pos_emb};
    for (auto& b : p.blocks) {
        out.push_back(&b.attn_norm);
        out.push_back(&b.wq);
        out.push_back(&b.wk);
        out.push_back(&b.wv);
        out.push_back(&b.wo);
        out.push_back(&b.mlp_norm);
        out.push_back(&b.w_in);
        out.push_back(&b.w_out);
    }
    out.push_back(&p.final_norm);
    out.push_back(&p.head);
    return out;
}

template <typename T>
std::vector<const Tensor<T>*> param_list(const DecoderParams<T>& p) {
    auto mutable_list = param_list(const_cast<DecoderParams<T>&>(p));
    return {mutable_list.begin(), mutable_list.end()};
}

template <typename T>
DecoderParams<T> zero_params(const ModelConfig& cfg) {
    const uint32_t d = static_cast<uint32_t>(cfg.d_model);
    const uint32_t v = static_cast<uint32_t>(cfg.vocab_size);
    const uint32_t dff = static_cast<uint32_t>(cfg.d_mlp());
    DecoderParams<T> p;
    p.cfg = cfg;
    p.tok_emb = Tensor<T>::zeros("tok_emb", {v, d});
    p.img_proj = Tensor<T>::zeros("img_proj", {static_cast<uint32_t>(cfg.d_image), d});
    p.img_tok = Tensor<T>::zeros("img_tok", {d});
    p.pos_emb = Tensor<T>::zeros("pos_emb", {static_cast<uint32_t>(cfg.max_seq), d});
    p.blocks.resize(cfg.n_blocks);
    for (int b = 0; b < cfg.n_blocks; ++b) {
        std::string prefix = "blk" + std::to_string(b) + ".";
        auto& blk = p.blocks[b];
        blk.attn_norm = Tensor<T>::zeros(prefix + "attn_norm", {d});
        blk.wq = Tensor<T>::zeros(prefix + "wq", {d, d});
        blk.wk = Tensor<T>::zeros(prefix + "wk", {d, d});
        blk.wv = Tensor<T>::zeros(prefix + "wv", {d, d});
        blk.wo = Tensor<T>::zeros(prefix + "wo", {d, d});
        blk.mlp_norm = Tensor<T>::zeros(prefix + "mlp_norm", {d});
        blk.w_in = Tensor<T>::zeros(prefix + "w_in", {d, dff});
        blk.w_out = Tensor<T>::zeros(prefix + "w_out", {dff, d});
    }
    p.final_norm = Tensor<T>::zeros("final_norm", {d});
    p.head = Tensor<T>::zeros("head", {v, d});
    return p;
}

// One assembled sequence: image rows, then [IMG], then ids (prompt + labels).
template <typename T>
struct SeqInput {
    std::vector<T> image_embeds;  // n_img * d_image, row-major
    std::vector<int> ids;         // tokens for all positions after [IMG]
    SegmentLayout layout;
    std::vector<int> positions;   // one per sequence position
};

template <typename T>
struct Logits {
    std::vector<int> positions;  // absolute sequence positions
    std::vector<T> rows;         // positions.size() x V

    const T* row_for(int pos) const {
        for (size_t i = 0; i < positions.size(); ++i)
            if (positions[i] == pos) return rows.data() + i * stride;
        throw DataError("logits: position not computed");
    }
    size_t stride = 0;
};

namespace detail {

template <typename T>
struct BlockTrace {
    std::vector<T> x_in;       // L x d, block input
    std::vector<T> r1;         // L
    std::vector<T> a_in;       // L x d
    std::vector<T> q, k, v;    // L x d
    std::vector<T> attn;       // H x L x L (zeros at masked entries)
    std::vector<T> ctx;        // L x d
    std::vector<T> x_mid;      // L x d, after attention residual
    std::vector<T> r2;         // L
    std::vector<T> m_in;       // L x d
    std::vector<T> h1;         // L x dff
    std::vector<T> h1a;        // L x dff
};

template <typename T>
struct DecodeTrace {
    std::vector<BlockTrace<T>> blocks;
    std::vector<T> x_final;    // L x d, before final norm
    std::vector<T> rf;         // L
    std::vector<T> f;          // L x d, final normed
};

template <typename T>
void rmsnorm_rows(const T* x, const T* gain, int rows, int d, T* out, T* r_out) {
    for (int i = 0; i < rows; ++i) {
        const T* xi = x + static_cast<size_t>(i) * d;
        T ss{0};
        for (int j = 0; j < d; ++j) ss += xi[j] * xi[j];
        T r = std::sqrt(ss / static_cast<T>(d) + static_cast<T>(kNormEps));
        r_out[i] = r;
        T* oi = out + static_cast<size_t>(i) * d;
        for (int j = 0; j < d; ++j) oi[j] = gain[j] * xi[j] / r;
    }
}

// out[i, :] += x[i, :] * W  (W is in x out, row-major)
template <typename T>
void matmul_rows(const T* x, const Tensor<T>& w, int rows, T* out) {
    const int in_dim = static_cast<int>(w.rows());
    const int out_dim = static_cast<int>(w.cols());
    for (int i = 0; i < rows; ++i) {
        const T* xi = x + static_cast<size_t>(i) * in_dim;
        T* oi = out + static_cast<size_t>(i) * out_dim;
        for (int a = 0; a < in_dim; ++a) {
            T xa = xi[a];
            if (xa == T{0}) continue;
            const T* wrow = w.row(a);
            for (int j = 0; j < out_dim; ++j) oi[j] += xa * wrow[j];
        }
    }
}

// Assembles embeddings and runs the pre-norm blocks; fills trace when given.
template <typename T>
void decoder_hidden(const DecoderParams<T>& p, const SeqInput<T>& in, const AttnMask& mask,
                    DecodeTrace<T>* trace) {
    const ModelConfig& cfg = p.cfg;
    const int L = in.layout.total_len();
    const int d = cfg.d_model;
    const int H = cfg.n_heads;
    const int dh = cfg.head_dim();
    const int dff = cfg.d_mlp();
    const int n_img = in.layout.n_img;
    const T scale = static_cast<T>(1) / std::sqrt(static_cast<T>(dh));

    if (mask.size != L) throw DataError("forward: mask size mismatch");
    if (static_cast<int>(in.positions.size()) != L) throw DataError("forward: positions size mismatch");
    if (static_cast<int>(in.ids.size()) != L - n_img - 1) throw DataError("forward: token count mismatch");
    if (static_cast<int>(in.image_embeds.size()) != n_img * cfg.d_image)
        throw DataError("forward: image embedding shape mismatch");
    if (L > cfg.max_seq) throw DataError("forward: sequence exceeds max_seq");
    in.layout.validate(cfg.max_seq);

    std::vector<T> x(static_cast<size_t>(L) * d, T{0});
    for (int i = 0; i < L; ++i) {
        T* xi = x.data() + static_cast<size_t>(i) * d;
        if (i < n_img) {
            const T* e = in.image_embeds.data() + static_cast<size_t>(i) * cfg.d_image;
            for (int a = 0; a < cfg.d_image; ++a) {
                T ea = e[a];
                const T* prow = p.img_proj.row(a);
                for (int j = 0; j < d; ++j) xi[j] += ea * prow[j];
            }
        } else if (i == n_img) {
            for (int j = 0; j < d; ++j) xi[j] = p.img_tok.data[j];
        } else {
            int id = in.ids[i - n_img - 1];
            if (id < 0 || id >= cfg.vocab_size) throw DataError("forward: token id out of range");
            const T* row = p.tok_emb.row(id);
            for (int j = 0; j < d; ++j) xi[j] = row[j];
        }
        int pos = in.positions[i];
        if (pos < 0 || pos >= cfg.max_seq) throw DataError("forward: position index out of range");
        const T* prow = p.pos_emb.row(pos);
        for (int j = 0; j < d; ++j) xi[j] += prow[j];
    }

    trace->blocks.resize(cfg.n_blocks);
    for (int b = 0; b < cfg.n_blocks; ++b) {
        auto& blk = p.blocks[b];
        auto& tr = trace->blocks[b];
        tr.x_in = x;

        tr.r1.resize(L);
        tr.a_in.assign(static_cast<size_t>(L) * d, T{0});
        rmsnorm_rows(x.data(), blk.attn_norm.data.data(), L, d, tr.a_in.data(), tr.r1.data());

        tr.q.assign(static_cast<size_t>(L) * d, T{0});
        tr.k.assign(static_cast<size_t>(L) * d, T{0});
        tr.v.assign(static_cast<size_t>(L) * d, T{0});
        matmul_rows(tr.a_in.data(), blk.wq, L, tr.q.data());
        matmul_rows(tr.a_in.data(), blk.wk, L, tr.k.data());
        matmul_rows(tr.a_in.data(), blk.wv, L, tr.v.data());

        tr.attn.assign(static_cast<size_t>(H) * L * L, T{0});
        tr.ctx.assign(static_cast<size_t>(L) * d, T{0});
        std::vector<T> scores(L);
        for (int h = 0; h < H; ++h) {
            const int off = h * dh;
            for (int i = 0; i < L; ++i) {
                const T* qi = tr.q.data() + static_cast<size_t>(i) * d + off;
                T max_score = T{0};
                bool any = false;
                for (int j = 0; j < L; ++j) {
                    if (!mask.allowed(i, j)) continue;
                    const T* kj = tr.k.data() + static_cast<size_t>(j) * d + off;
                    T s{0};
                    for (int a = 0; a < dh; ++a) s += qi[a] * kj[a];
                    s *= scale;
                    scores[j] = s;
                    if (!any || s > max_score) max_score = s;
                    any = true;
                }
                if (!any) throw DataError("forward: attention row fully masked");
                T denom{0};
                T* wrow = tr.attn.data() + (static_cast<size_t>(h) * L + i) * L;
                for (int j = 0; j < L; ++j) {
                    if (!mask.allowed(i, j)) continue;
                    T e = std::exp(scores[j] - max_score);
                    wrow[j] = e;
                    denom += e;
                }
                T* ci = tr.ctx.data() + static_cast<size_t>(i) * d + off;
                for (int j = 0; j < L; ++j) {
                    if (!mask.allowed(i, j)) continue;
                    wrow[j] /= denom;
                    const T* vj = tr.v.data() + static_cast<size_t>(j) * d + off;
                    T w = wrow[j];
                    for (int a = 0; a < dh; ++a) ci[a] += w * vj[a];
                }
            }
        }

        matmul_rows(tr.ctx.data(), blk.wo, L, x.data());  // accumulates into the residual
        tr.x_mid = x;

        tr.r2.resize(L);
        tr.m_in.assign(static_cast<size_t>(L) * d, T{0});
        rmsnorm_rows(x.data(), blk.mlp_norm.data.data(), L, d, tr.m_in.data(), tr.r2.data());

        tr.h1.assign(static_cast<size_t>(L) * dff, T{0});
        matmul_rows(tr.m_in.data(), blk.w_in, L, tr.h1.data());
        tr.h1a.resize(tr.h1.size());
        for (size_t i = 0; i < tr.h1.size(); ++i) {
            T z = tr.h1[i];
            tr.h1a[i] = z / (T{1} + std::exp(-z));  // silu
        }
        matmul_rows(tr.h1a.data(), blk.w_out, L, x.data());
    }

    trace->x_final = x;
    trace->rf.resize(L);
    trace->f.assign(static_cast<size_t>(L) * d, T{0});
    rmsnorm_rows(x.data(), p.final_norm.data.data(), L, d, trace->f.data(), trace->rf.data());
}

} // namespace detail

// Logits at the requested absolute positions (empty = every non-image position).
template <typename T>
Logits<T> decoder_forward(const DecoderParams<T>& p, const SeqInput<T>& in, const AttnMask& mask,
                          std::vector<int> logit_positions = {}) {
    detail::DecodeTrace<T> trace;
    detail::decoder_hidden(p, in, mask, &trace);

    const int L = in.layout.total_len();
    const int d = p.cfg.d_model;
    const int V = p.cfg.vocab_size;
    if (logit_positions.empty())
        for (int i = in.layout.n_img; i < L; ++i) logit_positions.push_back(i);

    Logits<T> out;
    out.positions = std::move(logit_positions);
    out.stride = static_cast<size_t>(V);
    out.rows.assign(out.positions.size() * V, T{0});
    for (size_t r = 0; r < out.positions.size(); ++r) {
        int pos = out.positions[r];
        if (pos < 0 || pos >= L) throw DataError("forward: logit position out of range");
        const T* fi = trace.f.data() + static_cast<size_t>(pos) * d;
        T* dst = out.rows.data() + r * V;
        for (int v = 0; v < V; ++v) {
            const T* hrow = p.head.row(v);
            T s{0};
            for (int j = 0; j < d; ++j) s += fi[j] * hrow[j];
            dst[v] = s;
        }
    }
    return out;
}

// One supervised next-token step: logits at `pos` predict `target`.
struct SupStep {
    int pos;
    int target;
};

// Eq-6-style supervision: the last prefix position predicts each label's first
// token; within a span, position t predicts token t+1 including the final
// [SEP]. Image/prompt/[SEP] positions are unsupervised.
std::vector<SupStep> supervised_steps(const SegmentLayout& layout, const std::vector<int>& ids);

namespace detail {

template <typename T>
void rmsnorm_backward(const T* x, const T* gain, const T* dy, T r, int d, T* dx_accum, T* dgain_accum) {
    T dot{0};
    for (int j = 0; j < d; ++j) dot += dy[j] * gain[j] * x[j];
    T r3 = r * r * r;
    for (int j = 0; j < d; ++j) {
        dx_accum[j] += dy[j] * gain[j] / r - x[j] * dot / (static_cast<T>(d) * r3);
        dgain_accum[j] += dy[j] * x[j] / r;
    }
}

// d(out = x * W): dx += dout * W^T, dW += x^T * dout
template <typename T>
void matmul_backward(const T* x, const Tensor<T>& w, const T* dout, int rows, T* dx, Tensor<T>& dw) {
    const int in_dim = static_cast<int>(w.rows());
    const int out_dim = static_cast<int>(w.cols());
    for (int i = 0; i < rows; ++i) {
        const T* xi = x + static_cast<size_t>(i) * in_dim;
        const T* doi = dout + static_cast<size_t>(i) * out_dim;
        T* dxi = dx + static_cast<size_t>(i) * in_dim;
        for (int a = 0; a < in_dim; ++a) {
            const T* wrow = w.row(a);
            T* dwrow = dw.row(a);
            T acc{0};
            T xa = xi[a];
            for (int j = 0; j < out_dim; ++j) {
                acc += doi[j] * wrow[j];
                dwrow[j] += xa * doi[j];
            }
            dxi[a] += acc;
        }
    }
}

} // namespace detail

// Sum of per-step negative log-likelihood; gradients of that sum are
// accumulated into `grads` (same shapes as the params) when non-null.
template <typename T>
T decoder_loss_and_grad(const DecoderParams<T>& p, const SeqInput<T>& in, const AttnMask& mask,
                        const std::vector<SupStep>& steps, DecoderParams<T>* grads) {
    detail::DecodeTrace<T> trace;
    detail::decoder_hidden(p, in, mask, &trace);

    const ModelConfig& cfg = p.cfg;
    const int L = in.layout.total_len();
    const int d = cfg.d_model;
    const int H = cfg.n_heads;
    const int dh = cfg.head_dim();
    const int dff = cfg.d_mlp();
    const int V = cfg.vocab_size;
    const int n_img = in.layout.n_img;
    const T scale = static_cast<T>(1) / std::sqrt(static_cast<T>(dh));

    double total_nll = 0.0;  // double accumulation keeps the sum label-order invariant
    std::vector<T> df(static_cast<size_t>(L) * d, T{0});
    std::vector<T> probs(V);
    for (const SupStep& step : steps) {
        if (step.pos < 0 || step.pos >= L || step.target < 0 || step.target >= V)
            throw DataError("loss: supervised step out of range");
        const T* fi = trace.f.data() + static_cast<size_t>(step.pos) * d;
        T max_logit{0};
        for (int v = 0; v < V; ++v) {
            const T* hrow = p.head.row(v);
            T s{0};
            for (int j = 0; j < d; ++j) s += fi[j] * hrow[j];
            probs[v] = s;
            if (v == 0 || s > max_logit) max_logit = s;
        }
        T denom{0};
        for (int v = 0; v < V; ++v) {
            probs[v] = std::exp(probs[v] - max_logit);
            denom += probs[v];
        }
        T logp = std::log(probs[step.target] / denom);
        total_nll -= logp;

        if (grads) {
            T* dfi = df.data() + static_cast<size_t>(step.pos) * d;
            for (int v = 0; v < V; ++v) {
                T dlogit = probs[v] / denom - (v == step.target ? T{1} : T{0});
                if (dlogit == T{0}) continue;
                const T* hrow = p.head.row(v);
                T* dhrow = grads->head.row(v);
                for (int j = 0; j < d; ++j) {
                    dfi[j] += dlogit * hrow[j];
                    dhrow[j] += dlogit * fi[j];
                }
            }
        }
    }
    if (!grads) return static_cast<T>(total_nll);

    // final norm
    std::vector<T> dx(static_cast<size_t>(L) * d, T{0});
    for (int i = 0; i < L; ++i)
        detail::rmsnorm_backward(trace.x_final.data() + static_cast<size_t>(i) * d,
                                 p.final_norm.data.data(), df.data() + static_cast<size_t>(i) * d,
                                 trace.rf[i], d, dx.data() + static_cast<size_t>(i) * d,
                                 grads->final_norm.data.data());

    for (int b = cfg.n_blocks - 1; b >= 0; --b) {
        const auto& blk = p.blocks[b];
        auto& gblk = grads->blocks[b];
        const auto& tr = trace.blocks[b];

        // MLP branch: x_out = x_mid + silu(m_in * w_in) * w_out
        std::vector<T> dh1a(static_cast<size_t>(L) * dff, T{0});
        detail::matmul_backward(tr.h1a.data(), blk.w_out, dx.data(), L, dh1a.data(), gblk.w_out);
        std::vector<T> dh1(static_cast<size_t>(L) * dff);
        for (size_t i = 0; i < dh1.size(); ++i) {
            T z = tr.h1[i];
            T s = T{1} / (T{1} + std::exp(-z));
            dh1[i] = dh1a[i] * s * (T{1} + z * (T{1} - s));
        }
        std::vector<T> dm_in(static_cast<size_t>(L) * d, T{0});
        detail::matmul_backward(tr.m_in.data(), blk.w_in, dh1.data(), L, dm_in.data(), gblk.w_in);
        for (int i = 0; i < L; ++i)
            detail::rmsnorm_backward(tr.x_mid.data() + static_cast<size_t>(i) * d,
                                     blk.mlp_norm.data.data(), dm_in.data() + static_cast<size_t>(i) * d,
                                     tr.r2[i], d, dx.data() + static_cast<size_t>(i) * d,
                                     gblk.mlp_norm.data.data());

        // attention branch: x_mid = x_in + (attn ctx) * wo
        std::vector<T> dctx(static_cast<size_t>(L) * d, T{0});
        detail::matmul_backward(tr.ctx.data(), blk.wo, dx.data(), L, dctx.data(), gblk.wo);

        std::vector<T> dq(static_cast<size_t>(L) * d, T{0});
        std::vector<T> dk(static_cast<size_t>(L) * d, T{0});
        std::vector<T> dv(static_cast<size_t>(L) * d, T{0});
        std::vector<T> dw(L);
        for (int h = 0; h < H; ++h) {
            const int off = h * dh;
            for (int i = 0; i < L; ++i) {
                const T* wrow = tr.attn.data() + (static_cast<size_t>(h) * L + i) * L;
                const T* dci = dctx.data() + static_cast<size_t>(i) * d + off;
                T wdot{0};
                for (int j = 0; j < L; ++j) {
                    if (!mask.allowed(i, j)) continue;
                    const T* vj = tr.v.data() + static_cast<size_t>(j) * d + off;
                    T* dvj = dv.data() + static_cast<size_t>(j) * d + off;
                    T acc{0};
                    T w = wrow[j];
                    for (int a = 0; a < dh; ++a) {
                        acc += dci[a] * vj[a];
                        dvj[a] += w * dci[a];
                    }
                    dw[j] = acc;
                    wdot += w * acc;
                }
                const T* qi = tr.q.data() + static_cast<size_t>(i) * d + off;
                T* dqi = dq.data() + static_cast<size_t>(i) * d + off;
                for (int j = 0; j < L; ++j) {
                    if (!mask.allowed(i, j)) continue;
                    T ds = wrow[j] * (dw[j] - wdot) * scale;
                    if (ds == T{0}) continue;
                    const T* kj = tr.k.data() + static_cast<size_t>(j) * d + off;
                    T* dkj = dk.data() + static_cast<size_t>(j) * d + off;
                    for (int a = 0; a < dh; ++a) {
                        dqi[a] += ds * kj[a];
                        dkj[a] += ds * qi[a];
                    }
                }
            }
        }

        std::vector<T> da_in(static_cast<size_t>(L) * d, T{0});
        detail::matmul_backward(tr.a_in.data(), blk.wq, dq.data(), L, da_in.data(), gblk.wq);
        detail::matmul_backward(tr.a_in.data(), blk.wk, dk.data(), L, da_in.data(), gblk.wk);
        detail::matmul_backward(tr.a_in.data(), blk.wv, dv.data(), L, da_in.data(), gblk.wv);
        for (int i = 0; i < L; ++i)
            detail::rmsnorm_backward(tr.x_in.data() + static_cast<size_t>(i) * d,
                                     blk.attn_norm.data.data(), da_in.data() + static_cast<size_t>(i) * d,
                                     tr.r1[i], d, dx.data() + static_cast<size_t>(i) * d,
                                     gblk.attn_norm.data.data());
    }

    // embeddings
    for (int i = 0; i < L; ++i) {
        const T* dxi = dx.data() + static_cast<size_t>(i) * d;
        if (i < n_img) {
            const T* e = in.image_embeds.data() + static_cast<size_t>(i) * cfg.d_image;
            for (int a = 0; a < cfg.d_image; ++a) {
                T ea = e[a];
                if (ea == T{0}) continue;
                T* drow = grads->img_proj.row(a);
                for (int j = 0; j < d; ++j) drow[j] += ea * dxi[j];
            }
        } else if (i == n_img) {
            for (int j = 0; j < d; ++j) grads->img_tok.data[j] += dxi[j];
        } else {
            T* drow = grads->tok_emb.row(in.ids[i - n_img - 1]);
            for (int j = 0; j < d; ++j) drow[j] += dxi[j];
        }
        T* dprow = grads->pos_emb.row(in.positions[i]);
        for (int j = 0; j < d; ++j) dprow[j] += dxi[j];
    }

    return static_cast<T>(total_nll);
}

} // namespace nxtp
