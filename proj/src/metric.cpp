#include "nxtp/metric.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>

#include "nxtp/errors.hpp"

namespace nxtp {

const std::string& ExactEmbedder::name() const {
    static const std::string n = "exact";
    return n;
}

std::vector<double> ExactEmbedder::embed(const std::string& label) const {
    auto [it, inserted] = slots_.emplace(label, static_cast<int>(slots_.size()));
    if (inserted && it->second >= dim_)
        throw DataError("exact embedder: more distinct labels than dimensions");
    std::vector<double> v(dim_, 0.0);
    v[it->second] = 1.0;
    return v;
}

const std::string& NgramEmbedder::name() const {
    static const std::string n = "ngram";
    return n;
}

std::vector<double> NgramEmbedder::embed(const std::string& label) const {
    // FNV-1a with a fixed seed so embeddings are stable across runs.
    std::vector<double> v(dim_, 0.0);
    std::string padded = "##" + label + "##";
    for (size_t i = 0; i + 3 <= padded.size(); ++i) {
        uint64_t h = 0xcbf29ce484222325ull ^ 0x9e3779b97f4a7c15ull;
        for (size_t j = i; j < i + 3; ++j) {
            h ^= static_cast<unsigned char>(padded[j]);
            h *= 0x100000001b3ull;
        }
        v[h % dim_] += 1.0;
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0)
        for (double& x : v) x /= norm;
    return v;
}

std::unique_ptr<Embedder> make_embedder(const std::string& name) {
    if (name == "exact") return std::make_unique<ExactEmbedder>();
    if (name == "ngram") return std::make_unique<NgramEmbedder>();
    throw UsageError("unknown embedder: " + name);
}

SimilarityMatrix similarity_matrix(const std::vector<std::string>& refs,
                                   const std::vector<std::string>& preds,
                                   const Embedder& embedder) {
    if (refs.empty() || preds.empty()) throw DataError("similarity_matrix: empty label set");
    SimilarityMatrix s;
    s.m = static_cast<int>(refs.size());
    s.n = static_cast<int>(preds.size());
    s.s.assign(static_cast<size_t>(s.m) * s.n, 0.0);
    std::vector<std::vector<double>> r(refs.size()), g(preds.size());
    for (size_t i = 0; i < refs.size(); ++i) r[i] = embedder.embed(refs[i]);
    for (size_t j = 0; j < preds.size(); ++j) g[j] = embedder.embed(preds[j]);
    for (int i = 0; i < s.m; ++i)
        for (int j = 0; j < s.n; ++j) {
            double dot = 0.0;
            for (size_t a = 0; a < r[i].size(); ++a) dot += r[i][a] * g[j][a];
            s.at(i, j) = dot;  // embeddings are unit-norm
        }
    return s;
}

std::pair<double, double> recall_precision(const SimilarityMatrix& s, int top_k) {
    int cols = std::min(s.n, top_k);
    if (s.m == 0 || cols == 0) return {0.0, 0.0};
    double r = 0.0;
    for (int i = 0; i < s.m; ++i) {
        double best = -1.0;
        for (int j = 0; j < cols; ++j) best = std::max(best, s.at(i, j));
        r += best;
    }
    double p = 0.0;
    for (int j = 0; j < cols; ++j) {
        double best = -1.0;
        for (int i = 0; i < s.m; ++i) best = std::max(best, s.at(i, j));
        p += best;
    }
    return {r / s.m, p / cols};
}

double f1(double r, double p) {
    double denom = r + p;
    return denom > 0.0 ? 2.0 * r * p / denom : 0.0;
}

namespace {

SimilarityMatrix thresholded(const SimilarityMatrix& s, double t) {
    SimilarityMatrix out = s;
    for (double& x : out.s)
        if (x < t) x = 0.0;
    return out;
}

} // namespace

std::vector<CurvePoint> pr_curve_threshold(const std::vector<SimilarityMatrix>& samples,
                                           const std::vector<double>& thresholds, int top_k) {
    std::vector<CurvePoint> curve;
    for (double t : thresholds) {
        double sum_r = 0.0, sum_p = 0.0;
        for (const SimilarityMatrix& s : samples) {
            auto [r, p] = recall_precision(thresholded(s, t), top_k);
            sum_r += r;
            sum_p += p;
        }
        size_t n = std::max<size_t>(1, samples.size());
        curve.push_back({t, sum_r / n, sum_p / n});
    }
    return curve;
}

std::vector<CurvePoint> pr_curve_topk(const std::vector<SimilarityMatrix>& samples,
                                      const std::vector<int>& ks) {
    std::vector<CurvePoint> curve;
    for (int k : ks) {
        double sum_r = 0.0, sum_p = 0.0;
        for (const SimilarityMatrix& s : samples) {
            auto [r, p] = recall_precision(s, k);
            sum_r += r;
            sum_p += p;
        }
        size_t n = std::max<size_t>(1, samples.size());
        curve.push_back({static_cast<double>(k), sum_r / n, sum_p / n});
    }
    return curve;
}

double topk_accuracy(const std::vector<std::string>& refs, const std::vector<std::string>& preds,
                     int k, const std::string& indicator, const Embedder& embedder) {
    if (refs.empty()) throw DataError("topk_accuracy: empty references");
    int cols = std::min<int>(static_cast<int>(preds.size()), k);
    if (indicator == "exact") {
        double hits = 0.0;
        for (const std::string& ref : refs)
            for (int j = 0; j < cols; ++j)
                if (preds[j] == ref) {
                    hits += 1.0;
                    break;
                }
        return hits / refs.size();
    }
    if (indicator == "embedder") {
        if (cols == 0) return 0.0;
        SimilarityMatrix s = similarity_matrix(refs, preds, embedder);
        double sum = 0.0;
        for (int i = 0; i < s.m; ++i) {
            double best = -1.0;
            for (int j = 0; j < cols; ++j) best = std::max(best, s.at(i, j));
            sum += best;
        }
        return sum / s.m;
    }
    throw UsageError("unknown indicator: " + indicator);
}

MetricReport evaluate_samples(const std::vector<LabeledSample>& samples, const Embedder& embedder,
                              int top_k) {
    MetricReport report;
    for (const LabeledSample& sample : samples) {
        SampleScore score;
        score.id = sample.id;
        score.m = static_cast<int>(sample.refs.size());
        score.n = std::min<int>(static_cast<int>(sample.preds.size()), top_k);
        if (sample.refs.empty()) throw DataError("evaluate_samples: sample with no references");
        if (sample.preds.empty()) {
            score.flagged = true;  // zero predictions score zero but still count
        } else {
            SimilarityMatrix s = similarity_matrix(sample.refs, sample.preds, embedder);
            auto [r, p] = recall_precision(s, top_k);
            score.r = r;
            score.p = p;
            score.f1 = f1(r, p);
        }
        report.mean_r += score.r;
        report.mean_p += score.p;
        report.mean_f1 += score.f1;
        report.samples.push_back(std::move(score));
    }
    if (!report.samples.empty()) {
        report.mean_r /= report.samples.size();
        report.mean_p /= report.samples.size();
        report.mean_f1 /= report.samples.size();
    }
    return report;
}

std::string report_to_text(const MetricReport& report) {
    std::ostringstream os;
    os.precision(6);
    os << std::fixed;
    os << "samples=" << report.samples.size() << "\n";
    os << "mean_R=" << report.mean_r << "\n";
    os << "mean_P=" << report.mean_p << "\n";
    os << "mean_F1=" << report.mean_f1 << "\n";
    os << "id,R,P,F1,M,N,flagged\n";
    for (const SampleScore& s : report.samples)
        os << s.id << "," << s.r << "," << s.p << "," << s.f1 << "," << s.m << "," << s.n << ","
           << (s.flagged ? 1 : 0) << "\n";
    return os.str();
}

std::string curve_to_csv(const std::vector<CurvePoint>& curve, const std::string& x_name) {
    std::ostringstream os;
    os.precision(6);
    os << std::fixed;
    os << x_name << ",R,P\n";
    for (const CurvePoint& pt : curve) os << pt.x << "," << pt.r << "," << pt.p << "\n";
    return os.str();
}

} // namespace nxtp
