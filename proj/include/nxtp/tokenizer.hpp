#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace nxtp {

// Byte-pair-style vocabulary over the label alphabet.
// id 0 is [IMG], id 1 is [SEP] (the comma), then base characters in
// ascending order, then learned merges in learned order.
struct Vocab {
    std::vector<std::string> tokens;
    int img_id = 0;
    int sep_id = 1;

    int size() const { return static_cast<int>(tokens.size()); }

    // Greedy longest-match-first over non-special tokens. Throws DataError
    // naming the character when no token covers it (commas included: [SEP]
    // is never produced by text encoding).
    std::vector<int> encode(const std::string& text) const;

    // Concatenation of token strings; [SEP] renders as ",".
    std::string decode(const std::vector<int>& ids) const;

    int find(const std::string& token) const;

    void save(const std::string& path) const;
    static Vocab load(const std::string& path);

    // Learns up to max_merges most-frequent adjacent-pair merges over the
    // corpus (greedy, ties by lexicographic order of the merged string,
    // stops when no pair occurs twice).
    static Vocab build(const std::vector<std::string>& corpus, int max_merges);

private:
    std::unordered_map<std::string, int> lookup_;
    size_t max_token_len_ = 1;
    void rebuild_lookup();
};

} // namespace nxtp
