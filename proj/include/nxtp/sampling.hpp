#pragma once

#include <string>
#include <unordered_set>
#include <vector>

#include "nxtp/model.hpp"
#include "nxtp/tokenizer.hpp"

namespace nxtp {

struct LabelPrediction {
    std::vector<int> token_ids;           // without the trailing [SEP]
    std::string text;
    std::vector<double> per_token_probs;  // includes the [SEP] step
    double label_prob = 0.0;
    double initial_prob = 0.0;            // first token's probability at its sampling step
    double ppl = 0.0;
    double sim = 0.0;                     // compatibility score, filled by the pipeline
    int gen_order = 0;
};

enum class Strategy { Greedy, Beam, OneShot };
enum class RankBy { Initial, Prob, Ppl, Sim };

struct SamplerConfig {
    Strategy strategy = Strategy::OneShot;
    int k = 5;
    int max_tokens = 64;     // total budget for greedy/beam
    int per_label_cap = 8;   // one-shot per-branch cap
    int beam_width = 3;
    double tau = 1.2;
    RankBy rank_by = RankBy::Initial;
    int threads = 1;
};

// Raw (pre-dedup) decode statistics for the bench module.
struct DecodeStats {
    std::vector<std::string> raw_labels;
    int initial_collisions = 0;  // one-shot branches that converged to a seen string
    long token_steps = 0;        // sampling steps taken (forward passes over the sequence)
};

struct ImageContext {
    std::vector<float> image_embeds;  // n_img * d_image
    int n_img = 0;
    std::vector<int> prompt_ids;
};

// CTRL-style penalty: logits of tokens in G are divided by tau before softmax.
std::vector<double> penalized_distribution(const std::vector<float>& logits,
                                           const std::unordered_set<int>& sampled, double tau);
std::vector<double> softmax_probs(const std::vector<float>& logits);

std::vector<LabelPrediction> greedy_decode(const Model& model, const Vocab& vocab,
                                           const ImageContext& ctx, const SamplerConfig& cfg,
                                           DecodeStats* stats = nullptr);
std::vector<LabelPrediction> beam_decode(const Model& model, const Vocab& vocab,
                                         const ImageContext& ctx, const SamplerConfig& cfg,
                                         DecodeStats* stats = nullptr);
std::vector<LabelPrediction> one_shot_sample(const Model& model, const Vocab& vocab,
                                             const ImageContext& ctx, const SamplerConfig& cfg,
                                             DecodeStats* stats = nullptr);

// Top-1 extension of a single branch from its initial token, the sequential
// path the one-shot parallel rounds must match bitwise.
LabelPrediction sequential_branch_decode(const Model& model, const Vocab& vocab,
                                         const ImageContext& ctx, int initial_token,
                                         double initial_prob, int per_label_cap);

double label_probability(const LabelPrediction& pred);
double label_perplexity(const LabelPrediction& pred);
// Mean root-(2-2cos) distance between label token embeddings and projected
// image token embeddings; lower is better.
double compatibility_score(const Model& model, const LabelPrediction& pred,
                           const std::vector<float>& image_embeds);

void rank_predictions(std::vector<LabelPrediction>& preds, RankBy strategy);

RankBy parse_rank_by(const std::string& name);
Strategy parse_strategy(const std::string& name);

} // namespace nxtp
