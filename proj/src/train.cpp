#include "nxtp/train.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "nxtp/errors.hpp"
#include "nxtp/io.hpp"

namespace nxtp {

namespace {

uint64_t mix(uint64_t a, uint64_t b) {
    uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4b9feull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Sum of per-step NLL over the Eq-6 supervision pattern; gradients of the sum
// go into `grads` when non-null.
template <typename T>
T sample_loss_sum(const DecoderParams<T>& p, const TrainSample& sample,
                  const std::vector<int>& prompt_ids, int n_img, DecoderParams<T>* grads,
                  long* steps_out) {
    SeqInput<T> in;
    in.image_embeds.assign(sample.image_embeds.begin(), sample.image_embeds.end());
    in.ids = prompt_ids;
    std::vector<int> counts;
    for (const auto& label : sample.label_ids) {
        if (label.empty()) throw DataError("training label with no tokens");
        in.ids.insert(in.ids.end(), label.begin(), label.end());
        in.ids.push_back(1);  // [SEP]
        counts.push_back(static_cast<int>(label.size()) + 1);
    }
    if (counts.empty()) throw DataError("training sample with no labels");
    in.layout = SegmentLayout::make(n_img, static_cast<int>(prompt_ids.size()), counts);
    in.positions = assign_positions(in.layout, p.cfg.pos_mode);
    AttnMask mask = build_nxtp_mask(in.layout);
    std::vector<SupStep> steps = supervised_steps(in.layout, in.ids);
    if (steps_out) *steps_out = static_cast<long>(steps.size());
    return decoder_loss_and_grad(p, in, mask, steps, grads);
}

} // namespace

double masked_cross_entropy(const Model& model, const TrainSample& sample,
                            const std::vector<int>& prompt_ids, int n_img, Model* grads,
                            long* steps_out) {
    long steps = 0;
    float sum = sample_loss_sum(model, sample, prompt_ids, n_img, grads, &steps);
    if (steps_out) *steps_out = steps;
    return static_cast<double>(sum) / static_cast<double>(steps);
}

double lr_at_step(const TrainConfig& cfg, int step, int total_steps) {
    if (cfg.warmup_iters > 0 && step <= cfg.warmup_iters)
        return cfg.learning_rate * static_cast<double>(step) / cfg.warmup_iters;
    if (total_steps <= cfg.warmup_iters) return cfg.learning_rate;
    double t = static_cast<double>(step - cfg.warmup_iters) /
               static_cast<double>(total_steps - cfg.warmup_iters);
    return cfg.lr_floor + 0.5 * (cfg.learning_rate - cfg.lr_floor) * (1.0 + std::cos(M_PI * t));
}

std::vector<LossLogEntry> train(Model& model, const std::vector<TrainSample>& samples,
                                const std::vector<std::vector<int>>& prompt_templates, int n_img,
                                const TrainConfig& cfg) {
    if (samples.empty()) throw DataError("train: empty dataset");
    if (prompt_templates.empty()) throw DataError("train: no prompt templates");
    if (cfg.learning_rate < 0 || cfg.batch_size < 1 || cfg.epochs < 1 || cfg.warmup_iters < 0)
        throw UsageError("train: invalid training configuration");

    auto params = param_list(model);
    std::vector<std::vector<double>> m_state(params.size()), v_state(params.size());
    for (size_t t = 0; t < params.size(); ++t) {
        m_state[t].assign(params[t]->size(), 0.0);
        v_state[t].assign(params[t]->size(), 0.0);
    }

    const int n = static_cast<int>(samples.size());
    const int batches_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const int total_steps = cfg.epochs * batches_per_epoch;

    std::vector<LossLogEntry> log;
    int step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<int> order(n);
        for (int i = 0; i < n; ++i) order[i] = i;
        std::mt19937_64 epoch_rng(mix(cfg.seed, static_cast<uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), epoch_rng);

        for (int b = 0; b < batches_per_epoch; ++b) {
            ++step;
            std::mt19937_64 batch_rng(
                mix(mix(cfg.seed, static_cast<uint64_t>(epoch)), 0xb000 + static_cast<uint64_t>(b)));
            std::uniform_int_distribution<size_t> pick(0, prompt_templates.size() - 1);
            const std::vector<int>& prompt = prompt_templates[pick(batch_rng)];

            Model grads = zero_params<float>(model.cfg);
            double loss_sum = 0.0;
            long step_count = 0;
            int lo = b * cfg.batch_size;
            int hi = std::min(n, lo + cfg.batch_size);
            for (int i = lo; i < hi; ++i) {
                TrainSample sample = samples[order[i]];
                std::mt19937_64 label_rng(mix(mix(cfg.seed, static_cast<uint64_t>(epoch)),
                                              0x1a000 + static_cast<uint64_t>(order[i])));
                std::shuffle(sample.label_ids.begin(), sample.label_ids.end(), label_rng);
                long steps_here = 0;
                loss_sum += sample_loss_sum(model, sample, prompt, n_img, &grads, &steps_here);
                step_count += steps_here;
            }
            double loss = loss_sum / static_cast<double>(step_count);
            if (!std::isfinite(loss))
                throw NumericError("training diverged at step " + std::to_string(step));

            double lr = lr_at_step(cfg, step, total_steps);
            double bias1 = 1.0 - std::pow(cfg.beta1, step);
            double bias2 = 1.0 - std::pow(cfg.beta2, step);
            auto grad_list = param_list(grads);
            for (size_t t = 0; t < params.size(); ++t) {
                Tensor<float>& p = *params[t];
                bool decay = p.dims.size() >= 2;
                for (size_t i = 0; i < p.data.size(); ++i) {
                    double g = static_cast<double>(grad_list[t]->data[i]) / step_count;
                    double& m = m_state[t][i];
                    double& v = v_state[t][i];
                    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
                    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
                    double update = lr * (m / bias1) / (std::sqrt(v / bias2) + cfg.adam_eps);
                    if (decay) update += lr * cfg.weight_decay * p.data[i];
                    p.data[i] -= static_cast<float>(update);
                    if (!std::isfinite(p.data[i]))
                        throw NumericError("training diverged at step " + std::to_string(step));
                }
            }
            log.push_back({step, lr, loss});
        }
    }
    return log;
}

void save_loss_log(const std::vector<LossLogEntry>& log, const std::string& path) {
    atomic_write(path, [&](std::ostream& out) {
        out << "step,lr,loss\n";
        out.precision(12);
        for (const LossLogEntry& e : log) out << e.step << "," << e.lr << "," << e.loss << "\n";
    });
}

std::vector<TrainSample> build_train_samples(const EmbeddingFile& embeds,
                                             const std::vector<LabeledImage>& labels,
                                             const Vocab& vocab) {
    if (embeds.records.size() != labels.size())
        throw DataError("embeddings and label file disagree on record count");
    std::vector<TrainSample> samples;
    for (size_t i = 0; i < labels.size(); ++i) {
        if (embeds.records[i].image_id != labels[i].image_id)
            throw DataError("image_id mismatch at record " + std::to_string(i));
        TrainSample sample;
        sample.image_embeds = embeds.records[i].data;
        for (const std::string& label : labels[i].labels)
            sample.label_ids.push_back(vocab.encode(label));
        samples.push_back(std::move(sample));
    }
    return samples;
}

double grad_check(const Model& model, const TrainSample& sample,
                  const std::vector<int>& prompt_ids, int n_img, double ep, int max_params) {
    DecoderParams<double> p = to_double(model);
    DecoderParams<double> grads = zero_params<double>(p.cfg);
    long steps = 0;
    sample_loss_sum(p, sample, prompt_ids, n_img, &grads, &steps);

    auto plist = param_list(p);
    auto glist = param_list(grads);
    size_t total = 0;
    for (const auto* t : plist) total += t->size();
    size_t stride = 1;
    if (max_params > 0 && total > static_cast<size_t>(max_params))
        stride = total / static_cast<size_t>(max_params);

    double worst = 0.0;
    size_t flat = 0;
    for (size_t t = 0; t < plist.size(); ++t) {
        for (size_t i = 0; i < plist[t]->data.size(); ++i, ++flat) {
            if (flat % stride != 0) continue;
            double analytic = glist[t]->data[i] / static_cast<double>(steps);
            if (!std::isfinite(analytic)) throw NumericError("non-finite analytic gradient");
            double saved = plist[t]->data[i];
            plist[t]->data[i] = saved + ep;
            double up = sample_loss_sum<double>(p, sample, prompt_ids, n_img, nullptr, nullptr);
            plist[t]->data[i] = saved - ep;
            double down = sample_loss_sum<double>(p, sample, prompt_ids, n_img, nullptr, nullptr);
            plist[t]->data[i] = saved;
            double numeric = (up - down) / (2.0 * ep * static_cast<double>(steps));
            if (!std::isfinite(numeric)) throw NumericError("non-finite numeric gradient");
            double err = std::abs(analytic - numeric) /
                         std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            worst = std::max(worst, err);
        }
    }
    return worst;
}

} // namespace nxtp
