#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace nxtp {

inline constexpr float kMaskOff = -std::numeric_limits<float>::infinity();

// Positions of the segments of one input sequence:
// [image tokens] [IMG] [prompt tokens] [label_1 + SEP] ... [label_K + SEP]
struct SegmentLayout {
    int n_img = 0;
    int prompt_len = 0;
    // (start, count) per label, count includes the trailing [SEP].
    std::vector<std::pair<int, int>> label_spans;

    int img_pos() const { return n_img; }
    int prefix_len() const { return n_img + 1 + prompt_len; }
    int total_len() const;

    // -1 if pos is not inside a label span.
    int span_of(int pos) const;

    // counts include the trailing [SEP]
    static SegmentLayout make(int n_img, int prompt_len, const std::vector<int>& label_token_counts);

    void validate(int max_seq = 0) const;
};

// Square additive attention mask, entries are 0 or -inf (row = query, col = key).
struct AttnMask {
    int size = 0;
    std::vector<float> m;

    float at(int q, int k) const { return m[static_cast<size_t>(q) * size + k]; }
    bool allowed(int q, int k) const { return at(q, k) == 0.0f; }
};

AttnMask build_causal_mask(int T);

// Bidirectional over the first n_img positions, causal everywhere else.
// Used by the sequential (greedy/beam) decoders.
AttnMask build_prefix_causal_mask(int n_img, int T);

// The label-decoupling mask: image block bidirectional, [IMG]+prompt causal
// over the prefix, each label sees prefix + its own preceding tokens only.
AttnMask build_nxtp_mask(const SegmentLayout& layout);

enum class PosMode { Shared, Sequential };

// Sequential: 0..T-1. Shared: prefix 0..n_X-1, every label span restarts at n_X.
std::vector<int> assign_positions(const SegmentLayout& layout, PosMode mode);

// Rows of '0' (attend) / '-' (blocked), one line per query. For golden tests.
std::string render_mask(const AttnMask& mask);

const char* pos_mode_name(PosMode mode);
PosMode parse_pos_mode(const std::string& name);

} // namespace nxtp
