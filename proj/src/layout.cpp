#include "nxtp/layout.hpp"

#include "nxtp/errors.hpp"

namespace nxtp {

int SegmentLayout::total_len() const {
    int n = prefix_len();
    for (const auto& [start, count] : label_spans) {
        (void)start;
        n += count;
    }
    return n;
}

int SegmentLayout::span_of(int pos) const {
    for (size_t s = 0; s < label_spans.size(); ++s) {
        const auto& [start, count] = label_spans[s];
        if (pos >= start && pos < start + count) return static_cast<int>(s);
    }
    return -1;
}

SegmentLayout SegmentLayout::make(int n_img, int prompt_len, const std::vector<int>& label_token_counts) {
    SegmentLayout layout;
    layout.n_img = n_img;
    layout.prompt_len = prompt_len;
    int pos = layout.prefix_len();
    for (int count : label_token_counts) {
        layout.label_spans.emplace_back(pos, count);
        pos += count;
    }
    return layout;
}

void SegmentLayout::validate(int max_seq) const {
    if (n_img < 0 || prompt_len < 0) throw DataError("layout: negative segment size");
    int expect = prefix_len();
    for (const auto& [start, count] : label_spans) {
        if (count < 1) throw DataError("layout: empty label span");
        if (start != expect) throw DataError("layout: label spans not contiguous");
        expect += count;
    }
    if (max_seq > 0 && total_len() > max_seq) throw DataError("layout: sequence exceeds max_seq");
}

AttnMask build_causal_mask(int T) {
    if (T < 1) throw DataError("causal mask: length must be >= 1");
    AttnMask mask;
    mask.size = T;
    mask.m.assign(static_cast<size_t>(T) * T, kMaskOff);
    for (int q = 0; q < T; ++q)
        for (int k = 0; k <= q; ++k) mask.m[static_cast<size_t>(q) * T + k] = 0.0f;
    return mask;
}

AttnMask build_prefix_causal_mask(int n_img, int T) {
    AttnMask mask = build_causal_mask(T);
    for (int q = 0; q < n_img; ++q)
        for (int k = 0; k < n_img; ++k) mask.m[static_cast<size_t>(q) * T + k] = 0.0f;
    return mask;
}

AttnMask build_nxtp_mask(const SegmentLayout& layout) {
    layout.validate();
    const int T = layout.total_len();
    const int n_img = layout.n_img;
    const int prefix = layout.prefix_len();
    AttnMask mask;
    mask.size = T;
    mask.m.assign(static_cast<size_t>(T) * T, kMaskOff);

    for (int q = 0; q < T; ++q) {
        for (int k = 0; k < T; ++k) {
            float v = kMaskOff;
            if (q < n_img) {
                // image queries: bidirectional inside the image block
                if (k < n_img) v = 0.0f;
            } else if (q < prefix) {
                // [IMG] and prompt: causal over non-label positions
                if (k <= q && layout.span_of(k) < 0) v = 0.0f;
            } else {
                int qs = layout.span_of(q);
                int ks = layout.span_of(k);
                if (ks < 0 && k < prefix) v = 0.0f;            // full prefix visibility
                else if (ks == qs && k <= q) v = 0.0f;         // causal within own label
            }
            mask.m[static_cast<size_t>(q) * T + k] = v;
        }
    }
    return mask;
}

std::vector<int> assign_positions(const SegmentLayout& layout, PosMode mode) {
    const int T = layout.total_len();
    std::vector<int> pos(static_cast<size_t>(T));
    if (mode == PosMode::Sequential) {
        for (int i = 0; i < T; ++i) pos[i] = i;
        return pos;
    }
    const int n_x = layout.prefix_len();
    for (int i = 0; i < n_x; ++i) pos[i] = i;
    for (const auto& [start, count] : layout.label_spans)
        for (int i = 0; i < count; ++i) pos[start + i] = n_x + i;
    return pos;
}

std::string render_mask(const AttnMask& mask) {
    std::string out;
    out.reserve(static_cast<size_t>(mask.size) * (mask.size + 1));
    for (int q = 0; q < mask.size; ++q) {
        for (int k = 0; k < mask.size; ++k) out.push_back(mask.allowed(q, k) ? '0' : '-');
        out.push_back('\n');
    }
    return out;
}

const char* pos_mode_name(PosMode mode) {
    return mode == PosMode::Shared ? "shared" : "sequential";
}

PosMode parse_pos_mode(const std::string& name) {
    if (name == "shared") return PosMode::Shared;
    if (name == "sequential") return PosMode::Sequential;
    throw UsageError("unknown position mode: " + name);
}

} // namespace nxtp
