#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nxtp/model.hpp"
#include "nxtp/synthetic.hpp"
#include "nxtp/tokenizer.hpp"

namespace nxtp {

struct TrainConfig {
    double learning_rate = 1e-3;
    double weight_decay = 0.1;  // multi-dimensional parameters only
    int warmup_iters = 100;
    int epochs = 5;
    int batch_size = 32;
    uint64_t seed = 0;
    double lr_floor = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double adam_eps = 1e-8;
};

struct TrainSample {
    std::vector<float> image_embeds;          // n_img * d_image
    std::vector<std::vector<int>> label_ids;  // per label, without [SEP]
};

struct LossLogEntry {
    int step = 0;
    double lr = 0.0;
    double loss = 0.0;
};

// Assembles prefix + labels under shared positions and the label-decoupling
// mask, then averages the per-step negative log-likelihood.
double masked_cross_entropy(const Model& model, const TrainSample& sample,
                            const std::vector<int>& prompt_ids, int n_img,
                            Model* grads = nullptr, long* steps_out = nullptr);

double lr_at_step(const TrainConfig& cfg, int step, int total_steps);

std::vector<LossLogEntry> train(Model& model, const std::vector<TrainSample>& samples,
                                const std::vector<std::vector<int>>& prompt_templates, int n_img,
                                const TrainConfig& cfg);

void save_loss_log(const std::vector<LossLogEntry>& log, const std::string& path);

// Tokenizes reference labels and pairs them with their embeddings.
std::vector<TrainSample> build_train_samples(const EmbeddingFile& embeds,
                                             const std::vector<LabeledImage>& labels,
                                             const Vocab& vocab);

// Max relative error between analytic gradients and ep-central differences on
// a double-precision copy of a tiny model.
double grad_check(const Model& model, const TrainSample& sample,
                  const std::vector<int>& prompt_ids, int n_img, double ep = 1e-5,
                  int max_params = 0);

} // namespace nxtp
