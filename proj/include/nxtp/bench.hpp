#pragma once

#include <string>
#include <vector>

#include "nxtp/sampling.hpp"
#include "nxtp/synthetic.hpp"

namespace nxtp {

struct BenchRow {
    std::string name;
    double median_ms = 0.0;  // per image
    long token_steps = 0;
    long labels_emitted = 0;
    double repetition_rate = 0.0;  // over pre-dedup labels
    int initial_collisions = 0;
};

struct BenchReport {
    std::vector<BenchRow> rows;
    double greedy_vs_trunc_greedy = 0.0;    // time(full greedy) / time(truncated greedy)
    double greedy_vs_trunc_one_shot = 0.0;  // time(full greedy) / time(truncated one-shot)
};

double repetition_rate(const std::vector<std::string>& labels);

struct NamedSampler {
    std::string name;
    const Model* model;
    SamplerConfig cfg;
};

// Median-of-repeats wall-clock per image over every configuration; one
// warm-up pass per configuration is excluded from timing.
BenchReport bench_decode(const std::vector<NamedSampler>& configs, const Vocab& vocab,
                         const EmbeddingFile& embeds, const std::vector<int>& prompt_ids,
                         int repeats);

std::string bench_to_text(const BenchReport& report);
std::string bench_to_csv(const BenchReport& report);

} // namespace nxtp
