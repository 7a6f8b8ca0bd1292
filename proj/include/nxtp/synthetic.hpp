#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace nxtp {

struct EmbeddingRecord {
    std::string image_id;  // at most 15 bytes on disk
    std::vector<float> data;  // n_img * d_image
};

struct EmbeddingFile {
    int n_img = 0;
    int d_image = 0;
    std::vector<EmbeddingRecord> records;
};

void save_embeddings(const EmbeddingFile& file, const std::string& path);
EmbeddingFile load_embeddings(const std::string& path);

struct LabeledImage {
    std::string image_id;
    std::vector<std::string> labels;
};

// JSONL {"image_id", "labels"} — the reference-label file format.
void save_label_file(const std::vector<LabeledImage>& images, const std::string& path);
std::vector<LabeledImage> load_label_file(const std::string& path);

struct SyntheticSpec {
    std::vector<std::string> labels;
    int k_min = 1;
    int k_max = 5;
    int d_image = 16;
    int n_img = 4;
    double sigma = 0.05;
    int n_train = 100;
    int n_heldout = 20;
    uint64_t seed = 0;
};

struct SyntheticDataset {
    EmbeddingFile train_embeds;
    EmbeddingFile heldout_embeds;
    std::vector<LabeledImage> train_labels;
    std::vector<LabeledImage> heldout_labels;
};

// Every label owns a fixed seeded Gaussian signature in d_image; an image with
// label set L gets n_img embeddings of mean(signatures of L) + sigma * noise.
SyntheticDataset gen_synthetic(const SyntheticSpec& spec);

} // namespace nxtp
