#pragma once

#include <cstdint>
#include <string>

#include "nxtp/decoder.hpp"

namespace nxtp {

using Model = DecoderParams<float>;

// Deterministic init: weights ~ N(0, 1/sqrt(d_model)), norm gains ones.
Model init_model(const ModelConfig& cfg, uint64_t seed);

// Keeps the first n blocks plus embeddings, final norm, and output head,
// parameters bitwise intact.
Model truncate_model(const Model& model, int keep_blocks);

// Binary model file: magic NXTPMDL1, u32 LE config length, config text,
// then named tensor records in canonical order.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

DecoderParams<double> to_double(const Model& model);

} // namespace nxtp
