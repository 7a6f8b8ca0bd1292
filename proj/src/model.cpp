#include "nxtp/model.hpp"

#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "nxtp/errors.hpp"
#include "nxtp/io.hpp"

namespace nxtp {

std::string ModelConfig::to_text() const {
    std::ostringstream out;
    out << "d_model=" << d_model << "\n"
        << "n_heads=" << n_heads << "\n"
        << "n_blocks=" << n_blocks << "\n"
        << "mlp_ratio=" << mlp_ratio << "\n"
        << "vocab_size=" << vocab_size << "\n"
        << "d_image=" << d_image << "\n"
        << "max_seq=" << max_seq << "\n"
        << "pos_mode=" << pos_mode_name(pos_mode) << "\n";
    return out.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
    ModelConfig cfg;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos) throw DataError("model config: bad line: " + line);
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        if (key == "d_model") cfg.d_model = std::stoi(value);
        else if (key == "n_heads") cfg.n_heads = std::stoi(value);
        else if (key == "n_blocks") cfg.n_blocks = std::stoi(value);
        else if (key == "mlp_ratio") cfg.mlp_ratio = std::stoi(value);
        else if (key == "vocab_size") cfg.vocab_size = std::stoi(value);
        else if (key == "d_image") cfg.d_image = std::stoi(value);
        else if (key == "max_seq") cfg.max_seq = std::stoi(value);
        else if (key == "pos_mode") cfg.pos_mode = parse_pos_mode(value);
        else throw DataError("model config: unknown key: " + key);
    }
    return cfg;
}

Model init_model(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    Model model = zero_params<float>(cfg);
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> dist(0.0f, 1.0f / std::sqrt(static_cast<float>(cfg.d_model)));
    for (Tensor<float>* t : param_list(model)) {
        bool is_norm = t->name.find("norm") != std::string::npos;
        for (float& v : t->data) v = is_norm ? 1.0f : dist(rng);
    }
    return model;
}

Model truncate_model(const Model& model, int keep_blocks) {
    if (keep_blocks < 1 || keep_blocks > model.cfg.n_blocks)
        throw DataError("truncate: keep_blocks out of range");
    Model out = model;
    out.blocks.resize(keep_blocks);
    out.cfg.n_blocks = keep_blocks;
    return out;
}

namespace {

constexpr char kMagic[8] = {'N', 'X', 'T', 'P', 'M', 'D', 'L', '1'};

template <typename T>
void write_raw(std::ostream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in, const char* what) {
    T value;
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw DataError(std::string("model file: truncated reading ") + what);
    return value;
}

} // namespace

void save_model(const Model& model, const std::string& path) {
    atomic_write(path, [&](std::ostream& out) {
        out.write(kMagic, 8);
        std::string cfg = model.cfg.to_text();
        write_raw(out, static_cast<uint32_t>(cfg.size()));
        out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
        for (const Tensor<float>* t : param_list(model)) {
            write_raw(out, static_cast<uint16_t>(t->name.size()));
            out.write(t->name.data(), static_cast<std::streamsize>(t->name.size()));
            write_raw(out, static_cast<uint8_t>(t->dims.size()));
            for (uint32_t dim : t->dims) write_raw(out, dim);
            out.write(reinterpret_cast<const char*>(t->data.data()),
                      static_cast<std::streamsize>(t->data.size() * sizeof(float)));
        }
    });
}

Model load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read model file: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0) throw DataError("model file: bad magic");

    uint32_t cfg_len = read_raw<uint32_t>(in, "config length");
    std::string cfg_text(cfg_len, '\0');
    in.read(cfg_text.data(), cfg_len);
    if (!in) throw DataError("model file: truncated config");
    ModelConfig cfg = ModelConfig::from_text(cfg_text);
    cfg.validate();

    Model model = zero_params<float>(cfg);
    for (Tensor<float>* t : param_list(model)) {
        uint16_t name_len = read_raw<uint16_t>(in, "tensor name length");
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        uint8_t rank = read_raw<uint8_t>(in, "tensor rank");
        std::vector<uint32_t> dims(rank);
        for (auto& dim : dims) dim = read_raw<uint32_t>(in, "tensor dims");
        if (!in || name != t->name || dims != t->dims)
            throw DataError("model file: tensor mismatch at " + t->name);
        in.read(reinterpret_cast<char*>(t->data.data()),
                static_cast<std::streamsize>(t->data.size() * sizeof(float)));
        if (!in) throw DataError("model file: truncated tensor data at " + t->name);
    }
    return model;
}

DecoderParams<double> to_double(const Model& model) {
    DecoderParams<double> out = zero_params<double>(model.cfg);
    auto src = param_list(model);
    auto dst = param_list(out);
    for (size_t i = 0; i < src.size(); ++i)
        for (size_t j = 0; j < src[i]->data.size(); ++j) dst[i]->data[j] = src[i]->data[j];
    return out;
}

std::vector<SupStep> supervised_steps(const SegmentLayout& layout, const std::vector<int>& ids) {
    std::vector<SupStep> steps;
    const int first_token_pos = layout.prefix_len() - 1;
    const int id_base = layout.n_img + 1;
    for (const auto& [start, count] : layout.label_spans) {
        steps.push_back({first_token_pos, ids[start - id_base]});
        for (int t = 0; t + 1 < count; ++t)
            steps.push_back({start + t, ids[start + t + 1 - id_base]});
    }
    return steps;
}

} // namespace nxtp
