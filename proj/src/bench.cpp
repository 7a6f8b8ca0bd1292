#include "nxtp/bench.hpp"

#include <algorithm>
#include <chrono>
#include <sstream>
#include <unordered_set>

#include "nxtp/errors.hpp"

namespace nxtp {

double repetition_rate(const std::vector<std::string>& labels) {
    if (labels.empty()) return 0.0;
    std::unordered_set<std::string> distinct(labels.begin(), labels.end());
    return 1.0 - static_cast<double>(distinct.size()) / static_cast<double>(labels.size());
}

namespace {

std::vector<LabelPrediction> run_sampler(const NamedSampler& ns, const Vocab& vocab,
                                         const ImageContext& ctx, DecodeStats* stats) {
    switch (ns.cfg.strategy) {
        case Strategy::Greedy: return greedy_decode(*ns.model, vocab, ctx, ns.cfg, stats);
        case Strategy::Beam: return beam_decode(*ns.model, vocab, ctx, ns.cfg, stats);
        case Strategy::OneShot: return one_shot_sample(*ns.model, vocab, ctx, ns.cfg, stats);
    }
    throw UsageError("bench: unknown strategy");
}

} // namespace

BenchReport bench_decode(const std::vector<NamedSampler>& configs, const Vocab& vocab,
                         const EmbeddingFile& embeds, const std::vector<int>& prompt_ids,
                         int repeats) {
    if (repeats < 3) throw UsageError("bench: repeats must be at least 3");
    if (embeds.records.empty()) throw DataError("bench: no embedding records");
    for (const NamedSampler& ns : configs)
        if (ns.model->cfg.vocab_size != vocab.size())
            throw DataError("bench: model/vocab size mismatch for " + ns.name);

    BenchReport report;
    double full_greedy = 0.0, trunc_greedy = 0.0, trunc_one_shot = 0.0;
    for (const NamedSampler& ns : configs) {
        BenchRow row;
        row.name = ns.name;

        std::vector<ImageContext> ctxs;
        for (const EmbeddingRecord& rec : embeds.records) {
            ImageContext ctx;
            ctx.image_embeds = rec.data;
            ctx.n_img = embeds.n_img;
            ctx.prompt_ids = prompt_ids;
            ctxs.push_back(std::move(ctx));
        }

        run_sampler(ns, vocab, ctxs.front(), nullptr);  // warm-up, untimed

        std::vector<double> times_ms;
        for (int r = 0; r < repeats; ++r) {
            DecodeStats stats;
            long labels = 0;
            auto t0 = std::chrono::steady_clock::now();
            for (const ImageContext& ctx : ctxs)
                labels += static_cast<long>(run_sampler(ns, vocab, ctx, &stats).size());
            auto t1 = std::chrono::steady_clock::now();
            times_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count() /
                               static_cast<double>(ctxs.size()));
            if (r == 0) {
                row.token_steps = stats.token_steps;
                row.labels_emitted = labels;
                row.repetition_rate = repetition_rate(stats.raw_labels);
                row.initial_collisions = stats.initial_collisions;
            }
        }
        std::sort(times_ms.begin(), times_ms.end());
        row.median_ms = times_ms[times_ms.size() / 2];
        if (times_ms.size() % 2 == 0)
            row.median_ms = 0.5 * (row.median_ms + times_ms[times_ms.size() / 2 - 1]);

        if (ns.name == "full-greedy") full_greedy = row.median_ms;
        if (ns.name == "trunc-greedy") trunc_greedy = row.median_ms;
        if (ns.name == "trunc-one-shot") trunc_one_shot = row.median_ms;
        report.rows.push_back(std::move(row));
    }
    if (full_greedy > 0 && trunc_greedy > 0) report.greedy_vs_trunc_greedy = full_greedy / trunc_greedy;
    if (full_greedy > 0 && trunc_one_shot > 0)
        report.greedy_vs_trunc_one_shot = full_greedy / trunc_one_shot;
    return report;
}

std::string bench_to_text(const BenchReport& report) {
    std::ostringstream os;
    os.precision(4);
    os << std::fixed;
    for (const BenchRow& row : report.rows)
        os << row.name << ": median " << row.median_ms << " ms/image, " << row.token_steps
           << " token steps, " << row.labels_emitted << " labels, repetition_rate "
           << row.repetition_rate << ", initial_collisions " << row.initial_collisions << "\n";
    os << "speedup full-greedy/trunc-greedy: " << report.greedy_vs_trunc_greedy << "x\n";
    os << "speedup full-greedy/trunc-one-shot: " << report.greedy_vs_trunc_one_shot << "x\n";
    os << "reference full-scale ratios for context: 4.5x and 18.1x (different hardware)\n";
    return os.str();
}

std::string bench_to_csv(const BenchReport& report) {
    std::ostringstream os;
    os.precision(6);
    os << std::fixed;
    os << "config,median_ms,token_steps,labels,repetition_rate,initial_collisions\n";
    for (const BenchRow& row : report.rows)
        os << row.name << "," << row.median_ms << "," << row.token_steps << ","
           << row.labels_emitted << "," << row.repetition_rate << "," << row.initial_collisions
           << "\n";
    os << "ratio,full_greedy/trunc_greedy," << report.greedy_vs_trunc_greedy << ",,,\n";
    os << "ratio,full_greedy/trunc_one_shot," << report.greedy_vs_trunc_one_shot << ",,,\n";
    return os.str();
}

} // namespace nxtp
