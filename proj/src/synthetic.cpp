#include "nxtp/synthetic.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <random>

#include "nxtp/errors.hpp"
#include "nxtp/io.hpp"
#include <json.hpp>

namespace nxtp {

namespace {

constexpr char kEmbMagic[8] = {'N', 'X', 'T', 'P', 'E', 'M', 'B', '1'};

void put_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw DataError("truncated embeddings file: " + path);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

uint64_t mix(uint64_t a, uint64_t b) {
    // splitmix64 step over the combined value; keeps substreams independent.
    uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4b9feull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

} // namespace

void save_embeddings(const EmbeddingFile& file, const std::string& path) {
    for (const EmbeddingRecord& rec : file.records) {
        if (rec.image_id.size() > 15) throw DataError("image_id too long: " + rec.image_id);
        if (rec.data.size() != static_cast<size_t>(file.n_img) * file.d_image)
            throw DataError("embedding size mismatch for " + rec.image_id);
    }
    atomic_write(path, [&](std::ostream& out) {
        out.write(kEmbMagic, 8);
        put_u32(out, static_cast<uint32_t>(file.records.size()));
        put_u32(out, static_cast<uint32_t>(file.n_img));
        put_u32(out, static_cast<uint32_t>(file.d_image));
        for (const EmbeddingRecord& rec : file.records) {
            char id[16] = {};
            std::memcpy(id, rec.image_id.data(), rec.image_id.size());
            out.write(id, 16);
            out.write(reinterpret_cast<const char*>(rec.data.data()),
                      static_cast<std::streamsize>(rec.data.size() * sizeof(float)));
        }
    });
}

EmbeddingFile load_embeddings(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open embeddings file: " + path);
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kEmbMagic, 8) != 0)
        throw DataError("bad magic in embeddings file: " + path);
    EmbeddingFile file;
    uint32_t count = get_u32(in, path);
    file.n_img = static_cast<int>(get_u32(in, path));
    file.d_image = static_cast<int>(get_u32(in, path));
    if (file.n_img < 1 || file.d_image < 1)
        throw DataError("invalid embedding dims in " + path);
    for (uint32_t r = 0; r < count; ++r) {
        EmbeddingRecord rec;
        char id[16];
        if (!in.read(id, 16)) throw DataError("truncated embeddings file: " + path);
        rec.image_id.assign(id, strnlen(id, 16));
        rec.data.resize(static_cast<size_t>(file.n_img) * file.d_image);
        if (!in.read(reinterpret_cast<char*>(rec.data.data()),
                     static_cast<std::streamsize>(rec.data.size() * sizeof(float))))
            throw DataError("truncated embeddings file: " + path);
        file.records.push_back(std::move(rec));
    }
    return file;
}

void save_label_file(const std::vector<LabeledImage>& images, const std::string& path) {
    atomic_write(path, [&](std::ostream& out) {
        for (const LabeledImage& img : images) {
            nlohmann::json record{{"image_id", img.image_id}, {"labels", img.labels}};
            out << record.dump() << "\n";
        }
    });
}

std::vector<LabeledImage> load_label_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open label file: " + path);
    std::vector<LabeledImage> images;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json record = nlohmann::json::parse(line, nullptr, false);
        if (record.is_discarded() || !record.is_object() || !record.contains("image_id") ||
            !record.contains("labels") || !record["image_id"].is_string() ||
            !record["labels"].is_array())
            throw DataError("malformed label record at " + path + ":" + std::to_string(line_no));
        LabeledImage img;
        img.image_id = record["image_id"].get<std::string>();
        for (const auto& label : record["labels"]) {
            if (!label.is_string())
                throw DataError("malformed label record at " + path + ":" + std::to_string(line_no));
            img.labels.push_back(label.get<std::string>());
        }
        images.push_back(std::move(img));
    }
    return images;
}

namespace {

void gen_split(const SyntheticSpec& spec, const std::vector<std::vector<float>>& signatures,
               const char* prefix, int count, uint64_t stream, EmbeddingFile& embeds,
               std::vector<LabeledImage>& labels) {
    embeds.n_img = spec.n_img;
    embeds.d_image = spec.d_image;
    for (int i = 0; i < count; ++i) {
        std::mt19937_64 rng(mix(spec.seed, mix(stream, static_cast<uint64_t>(i))));
        std::uniform_int_distribution<int> k_dist(spec.k_min, spec.k_max);
        int k = k_dist(rng);

        // uniform sample without replacement via partial Fisher-Yates
        std::vector<int> idx(spec.labels.size());
        for (size_t j = 0; j < idx.size(); ++j) idx[j] = static_cast<int>(j);
        for (int j = 0; j < k; ++j) {
            std::uniform_int_distribution<int> pick(j, static_cast<int>(idx.size()) - 1);
            std::swap(idx[j], idx[pick(rng)]);
        }

        LabeledImage img;
        char id[16];
        std::snprintf(id, sizeof(id), "%s%08d", prefix, i);
        img.image_id = id;
        std::vector<float> mean(spec.d_image, 0.0f);
        for (int j = 0; j < k; ++j) {
            img.labels.push_back(spec.labels[idx[j]]);
            const std::vector<float>& sig = signatures[idx[j]];
            for (int a = 0; a < spec.d_image; ++a) mean[a] += sig[a] / static_cast<float>(k);
        }

        EmbeddingRecord rec;
        rec.image_id = img.image_id;
        rec.data.reserve(static_cast<size_t>(spec.n_img) * spec.d_image);
        std::normal_distribution<float> noise(0.0f, 1.0f);
        for (int t = 0; t < spec.n_img; ++t)
            for (int a = 0; a < spec.d_image; ++a)
                rec.data.push_back(mean[a] + static_cast<float>(spec.sigma) * noise(rng));

        embeds.records.push_back(std::move(rec));
        labels.push_back(std::move(img));
    }
}

} // namespace

SyntheticDataset gen_synthetic(const SyntheticSpec& spec) {
    if (spec.labels.empty()) throw DataError("gen_synthetic: empty label vocabulary");
    if (spec.k_min < 1 || spec.k_max < spec.k_min ||
        spec.k_max > static_cast<int>(spec.labels.size()))
        throw DataError("gen_synthetic: labels-per-image range exceeds vocabulary");
    if (spec.d_image < 1 || spec.n_img < 1) throw DataError("gen_synthetic: invalid dims");

    std::vector<std::vector<float>> signatures(spec.labels.size());
    std::mt19937_64 sig_rng(mix(spec.seed, 0x5167));
    std::normal_distribution<float> gauss(0.0f, 1.0f);
    for (auto& sig : signatures) {
        sig.resize(spec.d_image);
        for (float& x : sig) x = gauss(sig_rng);
    }

    SyntheticDataset ds;
    gen_split(spec, signatures, "img_", spec.n_train, 1, ds.train_embeds, ds.train_labels);
    gen_split(spec, signatures, "val_", spec.n_heldout, 2, ds.heldout_embeds, ds.heldout_labels);
    return ds;
}

} // namespace nxtp
