#include "nxtp/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <thread>

#include "nxtp/errors.hpp"

namespace nxtp {

std::vector<double> penalized_distribution(const std::vector<float>& logits,
                                           const std::unordered_set<int>& sampled, double tau) {
    std::vector<double> p(logits.size());
    double max_y = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < logits.size(); ++i) {
        double y = static_cast<double>(logits[i]);
        if (sampled.count(static_cast<int>(i))) y /= tau;
        p[i] = y;
        max_y = std::max(max_y, y);
    }
    double denom = 0.0;
    for (double& y : p) {
        y = std::exp(y - max_y);
        denom += y;
    }
    for (double& y : p) y /= denom;
    return p;
}

std::vector<double> softmax_probs(const std::vector<float>& logits) {
    static const std::unordered_set<int> empty;
    return penalized_distribution(logits, empty, 1.0);
}

namespace {

int argmax_lowest(const std::vector<double>& p) {
    int best = 0;
    for (size_t i = 1; i < p.size(); ++i)
        if (p[i] > p[best]) best = static_cast<int>(i);
    return best;
}

Logits<float> ctx_forward(const Model& model, const ImageContext& ctx,
                          const std::vector<std::vector<int>>& spans, bool use_nxtp_mask,
                          PosMode pos_mode, std::vector<int> logit_positions) {
    std::vector<int> counts;
    counts.reserve(spans.size());
    for (const auto& span : spans) counts.push_back(static_cast<int>(span.size()));
    SegmentLayout layout =
        SegmentLayout::make(ctx.n_img, static_cast<int>(ctx.prompt_ids.size()), counts);

    SeqInput<float> in;
    in.image_embeds = ctx.image_embeds;
    in.ids = ctx.prompt_ids;
    for (const auto& span : spans) in.ids.insert(in.ids.end(), span.begin(), span.end());
    in.layout = layout;
    in.positions = assign_positions(layout, pos_mode);
    AttnMask mask = use_nxtp_mask ? build_nxtp_mask(layout)
                                  : build_prefix_causal_mask(ctx.n_img, layout.total_len());
    return decoder_forward(model, in, mask, std::move(logit_positions));
}

std::vector<float> logits_row(const Logits<float>& logits, int pos) {
    const float* row = logits.row_for(pos);
    return {row, row + logits.stride};
}

// Split a sequential token stream into label spans ([SEP] stays with its
// label; an unterminated tail forms the last span).
std::vector<std::vector<int>> stream_spans(const std::vector<int>& stream, int sep_id) {
    std::vector<std::vector<int>> spans;
    std::vector<int> current;
    for (int id : stream) {
        current.push_back(id);
        if (id == sep_id) {
            spans.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) spans.push_back(std::move(current));
    return spans;
}

void finalize_prediction(LabelPrediction& pred, const Model& model, const Vocab& vocab,
                         const ImageContext& ctx) {
    pred.text = vocab.decode(pred.token_ids);
    pred.label_prob = label_probability(pred);
    pred.ppl = label_perplexity(pred);
    pred.sim = pred.token_ids.empty() ? 0.0 : compatibility_score(model, pred, ctx.image_embeds);
}

std::vector<LabelPrediction> stream_to_predictions(const Model& model, const Vocab& vocab,
                                                   const ImageContext& ctx,
                                                   const std::vector<int>& stream,
                                                   const std::vector<double>& step_probs,
                                                   const SamplerConfig& cfg, DecodeStats* stats) {
    std::vector<LabelPrediction> preds;
    size_t start = 0;
    int order = 0;
    for (size_t i = 0; i < stream.size(); ++i) {
        if (stream[i] != vocab.sep_id) continue;
        if (i > start) {  // drop empty fragments
            LabelPrediction pred;
            pred.token_ids.assign(stream.begin() + start, stream.begin() + i);
            pred.per_token_probs.assign(step_probs.begin() + start, step_probs.begin() + i + 1);
            pred.initial_prob = step_probs[start];
            pred.gen_order = order++;
            finalize_prediction(pred, model, vocab, ctx);
            if (stats) stats->raw_labels.push_back(pred.text);
            preds.push_back(std::move(pred));
        }
        start = i + 1;
    }
    // an unterminated tail has no [SEP] step and is discarded

    // duplicate labels: probabilities sum, perplexity takes the minimum
    std::vector<LabelPrediction> unique;
    std::map<std::string, size_t> seen;
    for (auto& pred : preds) {
        auto [it, inserted] = seen.emplace(pred.text, unique.size());
        if (inserted) {
            unique.push_back(std::move(pred));
        } else {
            unique[it->second].label_prob += pred.label_prob;
            unique[it->second].ppl = std::min(unique[it->second].ppl, pred.ppl);
        }
    }
    rank_predictions(unique, cfg.rank_by);
    if (static_cast<int>(unique.size()) > cfg.k) unique.resize(cfg.k);
    return unique;
}

} // namespace

std::vector<LabelPrediction> greedy_decode(const Model& model, const Vocab& vocab,
                                           const ImageContext& ctx, const SamplerConfig& cfg,
                                           DecodeStats* stats) {
    std::vector<int> stream;
    std::vector<double> step_probs;
    std::unordered_set<int> sampled;
    for (int step = 0; step < cfg.max_tokens; ++step) {
        auto spans = stream_spans(stream, vocab.sep_id);
        std::vector<int> counts;
        int total = ctx.n_img + 1 + static_cast<int>(ctx.prompt_ids.size() + stream.size());
        Logits<float> logits = ctx_forward(model, ctx, spans, /*nxtp=*/false, model.cfg.pos_mode,
                                           {total - 1});
        auto dist = penalized_distribution(logits_row(logits, total - 1), sampled, cfg.tau);
        int next = argmax_lowest(dist);
        stream.push_back(next);
        step_probs.push_back(dist[next]);
        sampled.insert(next);
        if (stats) ++stats->token_steps;
    }
    return stream_to_predictions(model, vocab, ctx, stream, step_probs, cfg, stats);
}

std::vector<LabelPrediction> beam_decode(const Model& model, const Vocab& vocab,
                                         const ImageContext& ctx, const SamplerConfig& cfg,
                                         DecodeStats* stats) {
    struct Beam {
        std::vector<int> stream;
        std::vector<double> step_probs;
        std::unordered_set<int> sampled;
        double logprob = 0.0;
    };
    std::vector<Beam> beams{Beam{}};
    const int width = std::max(1, cfg.beam_width);

    for (int step = 0; step < cfg.max_tokens; ++step) {
        struct Candidate {
            size_t parent;
            int token;
            double prob;
            double logprob;
        };
        std::vector<Candidate> candidates;
        for (size_t b = 0; b < beams.size(); ++b) {
            const Beam& beam = beams[b];
            auto spans = stream_spans(beam.stream, vocab.sep_id);
            int total = ctx.n_img + 1 + static_cast<int>(ctx.prompt_ids.size() + beam.stream.size());
            Logits<float> logits = ctx_forward(model, ctx, spans, /*nxtp=*/false,
                                               model.cfg.pos_mode, {total - 1});
            auto dist = penalized_distribution(logits_row(logits, total - 1), beam.sampled, cfg.tau);
            std::vector<int> ids(dist.size());
            for (size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
            std::partial_sort(ids.begin(), ids.begin() + std::min<size_t>(width, ids.size()),
                              ids.end(), [&](int a, int c) {
                                  if (dist[a] != dist[c]) return dist[a] > dist[c];
                                  return a < c;
                              });
            for (int r = 0; r < width && r < static_cast<int>(ids.size()); ++r)
                candidates.push_back(
                    {b, ids[r], dist[ids[r]], beam.logprob + std::log(dist[ids[r]])});
            if (stats) ++stats->token_steps;
        }
        std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
            if (a.logprob != b.logprob) return a.logprob > b.logprob;
            if (a.parent != b.parent) return a.parent < b.parent;
            return a.token < b.token;
        });
        std::vector<Beam> next_beams;
        for (const Candidate& cand : candidates) {
            if (static_cast<int>(next_beams.size()) >= width) break;
            Beam beam = beams[cand.parent];
            beam.stream.push_back(cand.token);
            beam.step_probs.push_back(cand.prob);
            beam.sampled.insert(cand.token);
            beam.logprob = cand.logprob;
            next_beams.push_back(std::move(beam));
        }
        beams = std::move(next_beams);
    }

    size_t best = 0;
    for (size_t b = 1; b < beams.size(); ++b)
        if (beams[b].logprob > beams[best].logprob) best = b;
    return stream_to_predictions(model, vocab, ctx, beams[best].stream, beams[best].step_probs,
                                 cfg, stats);
}

namespace {

struct Branch {
    std::vector<int> tokens;          // label tokens, no [SEP]
    std::vector<double> token_probs;  // one per token
    double initial_prob = 0.0;
    double sep_prob = 0.0;
    bool done = false;
};

LabelPrediction branch_to_prediction(const Branch& branch, int order) {
    LabelPrediction pred;
    pred.token_ids = branch.tokens;
    pred.per_token_probs = branch.token_probs;
    pred.per_token_probs.push_back(branch.sep_prob);
    pred.initial_prob = branch.initial_prob;
    pred.gen_order = order;
    return pred;
}

// Applies one sampled distribution to a branch: extend by top-1, finish on
// [SEP], or force-close with the [SEP] probability at the per-label cap.
void advance_branch(Branch& branch, const std::vector<double>& dist, int sep_id, int cap) {
    if (static_cast<int>(branch.tokens.size()) >= cap) {
        branch.sep_prob = dist[sep_id];
        branch.done = true;
        return;
    }
    int next = argmax_lowest(dist);
    if (next == sep_id) {
        branch.sep_prob = dist[next];
        branch.done = true;
    } else {
        branch.tokens.push_back(next);
        branch.token_probs.push_back(dist[next]);
    }
}

} // namespace

LabelPrediction sequential_branch_decode(const Model& model, const Vocab& vocab,
                                         const ImageContext& ctx, int initial_token,
                                         double initial_prob, int per_label_cap) {
    Branch branch;
    branch.initial_prob = initial_prob;
    if (initial_token == vocab.sep_id) {
        branch.sep_prob = initial_prob;
        branch.done = true;
    } else {
        branch.tokens.push_back(initial_token);
        branch.token_probs.push_back(initial_prob);
    }
    while (!branch.done) {
        int total = ctx.n_img + 1 + static_cast<int>(ctx.prompt_ids.size() + branch.tokens.size());
        Logits<float> logits = ctx_forward(model, ctx, {branch.tokens}, /*nxtp=*/true,
                                           PosMode::Shared, {total - 1});
        advance_branch(branch, softmax_probs(logits_row(logits, total - 1)), vocab.sep_id,
                       per_label_cap);
    }
    return branch_to_prediction(branch, 0);
}

std::vector<LabelPrediction> one_shot_sample(const Model& model, const Vocab& vocab,
                                             const ImageContext& ctx, const SamplerConfig& cfg,
                                             DecodeStats* stats) {
    if (cfg.k > vocab.size() - 2) throw UsageError("one-shot: k exceeds vocabulary size minus specials");

    const int prefix_total = ctx.n_img + 1 + static_cast<int>(ctx.prompt_ids.size());
    Logits<float> first = ctx_forward(model, ctx, {}, /*nxtp=*/true, PosMode::Shared,
                                      {prefix_total - 1});
    auto first_dist = softmax_probs(logits_row(first, prefix_total - 1));
    if (stats) ++stats->token_steps;

    std::vector<int> ids(first_dist.size());
    for (size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
    std::partial_sort(ids.begin(), ids.begin() + cfg.k, ids.end(), [&](int a, int b) {
        if (first_dist[a] != first_dist[b]) return first_dist[a] > first_dist[b];
        return a < b;
    });

    std::vector<Branch> branches(cfg.k);
    for (int b = 0; b < cfg.k; ++b) {
        Branch& branch = branches[b];
        branch.initial_prob = first_dist[ids[b]];
        if (ids[b] == vocab.sep_id) {
            branch.sep_prob = branch.initial_prob;
            branch.done = true;
        } else {
            branch.tokens.push_back(ids[b]);
            branch.token_probs.push_back(branch.initial_prob);
        }
    }

    if (cfg.threads > 1) {
        std::vector<std::thread> workers;
        std::vector<LabelPrediction> results(branches.size());
        for (size_t b = 0; b < branches.size(); ++b) {
            workers.emplace_back([&, b] {
                results[b] = sequential_branch_decode(model, vocab, ctx, ids[b],
                                                      first_dist[ids[b]], cfg.per_label_cap);
            });
        }
        for (auto& w : workers) w.join();
        for (size_t b = 0; b < branches.size(); ++b) {
            branches[b].tokens = results[b].token_ids;
            branches[b].token_probs = results[b].per_token_probs;
            branches[b].sep_prob = branches[b].token_probs.back();
            branches[b].token_probs.pop_back();
            branches[b].done = true;
        }
    }

    // Parallel rounds: one forward over prefix + every branch span, then each
    // unfinished branch takes its own next token.
    while (true) {
        std::vector<size_t> open;
        for (size_t b = 0; b < branches.size(); ++b)
            if (!branches[b].done) open.push_back(b);
        if (open.empty()) break;

        std::vector<std::vector<int>> spans;
        spans.reserve(branches.size());
        for (const Branch& branch : branches) {
            std::vector<int> span = branch.tokens;
            if (branch.done) span.push_back(vocab.sep_id);
            spans.push_back(std::move(span));
        }
        SegmentLayout layout;
        {
            std::vector<int> counts;
            for (const auto& span : spans) counts.push_back(static_cast<int>(span.size()));
            layout = SegmentLayout::make(ctx.n_img, static_cast<int>(ctx.prompt_ids.size()), counts);
        }
        std::vector<int> want;
        for (size_t b : open) {
            const auto& [start, count] = layout.label_spans[b];
            want.push_back(start + count - 1);
        }
        Logits<float> logits = ctx_forward(model, ctx, spans, /*nxtp=*/true, PosMode::Shared, want);
        for (size_t i = 0; i < open.size(); ++i) {
            advance_branch(branches[open[i]], softmax_probs(logits_row(logits, want[i])),
                           vocab.sep_id, cfg.per_label_cap);
            if (stats) ++stats->token_steps;
        }
    }

    std::vector<LabelPrediction> preds;
    std::unordered_set<std::string> seen;
    for (size_t b = 0; b < branches.size(); ++b) {
        LabelPrediction pred = branch_to_prediction(branches[b], static_cast<int>(b));
        finalize_prediction(pred, model, vocab, ctx);
        if (stats) stats->raw_labels.push_back(pred.text);
        if (pred.text.empty()) continue;
        if (!seen.insert(pred.text).second) {
            if (stats) ++stats->initial_collisions;
            continue;
        }
        preds.push_back(std::move(pred));
    }
    rank_predictions(preds, cfg.rank_by);
    return preds;
}

double label_probability(const LabelPrediction& pred) {
    if (pred.per_token_probs.empty()) throw DataError("label_probability: empty prediction");
    double p = 1.0;
    for (double q : pred.per_token_probs) p *= q;
    return p;
}

double label_perplexity(const LabelPrediction& pred) {
    if (pred.per_token_probs.empty()) throw DataError("label_perplexity: empty prediction");
    double sum = 0.0;
    for (double q : pred.per_token_probs) sum += std::log(q);
    return std::exp(-sum / static_cast<double>(pred.per_token_probs.size()));
}

double compatibility_score(const Model& model, const LabelPrediction& pred,
                           const std::vector<float>& image_embeds) {
    if (pred.token_ids.empty()) throw DataError("compatibility_score: empty prediction");
    const int d = model.cfg.d_model;
    const int d_image = model.cfg.d_image;
    const int n_img = static_cast<int>(image_embeds.size()) / d_image;
    if (n_img < 1) throw DataError("compatibility_score: no image embeddings");

    std::vector<double> projected(static_cast<size_t>(n_img) * d, 0.0);
    for (int i = 0; i < n_img; ++i) {
        const float* e = image_embeds.data() + static_cast<size_t>(i) * d_image;
        double* row = projected.data() + static_cast<size_t>(i) * d;
        for (int a = 0; a < d_image; ++a)
            for (int j = 0; j < d; ++j) row[j] += static_cast<double>(e[a]) * model.img_proj.at(a, j);
    }

    double sim = 0.0;
    for (int id : pred.token_ids) {
        const float* w = model.tok_emb.row(id);
        double wn = 0.0;
        for (int j = 0; j < d; ++j) wn += static_cast<double>(w[j]) * w[j];
        wn = std::sqrt(wn);
        double dist = 0.0;
        for (int i = 0; i < n_img; ++i) {
            const double* x = projected.data() + static_cast<size_t>(i) * d;
            double dot = 0.0, xn = 0.0;
            for (int j = 0; j < d; ++j) {
                dot += w[j] * x[j];
                xn += x[j] * x[j];
            }
            double cos = (wn > 0 && xn > 0) ? dot / (wn * std::sqrt(xn)) : 0.0;
            dist += std::sqrt(std::max(0.0, 2.0 - 2.0 * cos));
        }
        sim += dist / n_img;
    }
    return sim / static_cast<double>(pred.token_ids.size());
}

void rank_predictions(std::vector<LabelPrediction>& preds, RankBy strategy) {
    auto cmp = [strategy](const LabelPrediction& a, const LabelPrediction& b) {
        switch (strategy) {
            case RankBy::Initial: return a.initial_prob > b.initial_prob;
            case RankBy::Prob: return a.label_prob > b.label_prob;
            case RankBy::Ppl: return a.ppl < b.ppl;
            case RankBy::Sim: return a.sim < b.sim;
        }
        return false;
    };
    std::stable_sort(preds.begin(), preds.end(), cmp);
}

RankBy parse_rank_by(const std::string& name) {
    if (name == "initial") return RankBy::Initial;
    if (name == "prob") return RankBy::Prob;
    if (name == "ppl") return RankBy::Ppl;
    if (name == "sim") return RankBy::Sim;
    throw UsageError("unknown ranking strategy: " + name);
}

Strategy parse_strategy(const std::string& name) {
    if (name == "greedy") return Strategy::Greedy;
    if (name == "beam") return Strategy::Beam;
    if (name == "one-shot" || name == "one_shot") return Strategy::OneShot;
    throw UsageError("unknown sampling strategy: " + name);
}

} // namespace nxtp
