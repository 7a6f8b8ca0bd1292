#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

namespace nxtp {

// Deterministic unit-norm label embedder.
struct Embedder {
    virtual ~Embedder() = default;
    virtual const std::string& name() const = 0;
    virtual std::vector<double> embed(const std::string& label) const = 0;
};

// One-hot by exact string identity; dimensions are handed out lazily so any
// finite label set fits.
struct ExactEmbedder : Embedder {
    explicit ExactEmbedder(int dim = 4096) : dim_(dim) {}
    const std::string& name() const override;
    std::vector<double> embed(const std::string& label) const override;

private:
    int dim_;
    mutable std::map<std::string, int> slots_;
};

// Hashed character-trigram counts, L2-normalized, fixed hash seed.
struct NgramEmbedder : Embedder {
    explicit NgramEmbedder(int dim = 256) : dim_(dim) {}
    const std::string& name() const override;
    std::vector<double> embed(const std::string& label) const override;

private:
    int dim_;
};

std::unique_ptr<Embedder> make_embedder(const std::string& name);

struct SimilarityMatrix {
    int m = 0;  // references
    int n = 0;  // predictions
    std::vector<double> s;
    double at(int i, int j) const { return s[static_cast<size_t>(i) * n + j]; }
    double& at(int i, int j) { return s[static_cast<size_t>(i) * n + j]; }
};

SimilarityMatrix similarity_matrix(const std::vector<std::string>& refs,
                                   const std::vector<std::string>& preds,
                                   const Embedder& embedder);

// Greedy matching over the first min(n, top_k) prediction columns; no padding
// when fewer predictions than top_k are available.
std::pair<double, double> recall_precision(const SimilarityMatrix& s, int top_k);

double f1(double r, double p);

struct CurvePoint {
    double x = 0.0;
    double r = 0.0;
    double p = 0.0;
};

// Similarities below the threshold are zeroed before taking row/column maxima.
std::vector<CurvePoint> pr_curve_threshold(const std::vector<SimilarityMatrix>& samples,
                                           const std::vector<double>& thresholds, int top_k);
std::vector<CurvePoint> pr_curve_topk(const std::vector<SimilarityMatrix>& samples,
                                      const std::vector<int>& ks);

double topk_accuracy(const std::vector<std::string>& refs, const std::vector<std::string>& preds,
                     int k, const std::string& indicator, const Embedder& embedder);

struct SampleScore {
    std::string id;
    double r = 0.0;
    double p = 0.0;
    double f1 = 0.0;
    int m = 0;
    int n = 0;
    bool flagged = false;  // zero predictions
};

struct MetricReport {
    std::vector<SampleScore> samples;
    double mean_r = 0.0;
    double mean_p = 0.0;
    double mean_f1 = 0.0;
};

struct LabeledSample {
    std::string id;
    std::vector<std::string> refs;
    std::vector<std::string> preds;  // ranked
};

MetricReport evaluate_samples(const std::vector<LabeledSample>& samples, const Embedder& embedder,
                              int top_k);

std::string report_to_text(const MetricReport& report);
std::string curve_to_csv(const std::vector<CurvePoint>& curve, const std::string& x_name);

} // namespace nxtp
