#include "nxtp/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "nxtp/errors.hpp"

namespace nxtp {

namespace {
const std::string kImgString = "[IMG]";
const std::string kSepString = ",";
} // namespace

void Vocab::rebuild_lookup() {
    lookup_.clear();
    max_token_len_ = 1;
    for (int id = 0; id < size(); ++id) {
        if (id == img_id || id == sep_id) continue;
        lookup_[tokens[id]] = id;
        max_token_len_ = std::max(max_token_len_, tokens[id].size());
    }
}

std::vector<int> Vocab::encode(const std::string& text) const {
    std::vector<int> ids;
    size_t i = 0;
    while (i < text.size()) {
        int best = -1;
        size_t best_len = 0;
        size_t cap = std::min(max_token_len_, text.size() - i);
        for (size_t len = cap; len >= 1; --len) {
            auto it = lookup_.find(text.substr(i, len));
            if (it != lookup_.end()) {
                best = it->second;
                best_len = len;
                break;
            }
        }
        if (best < 0) throw DataError(std::string("unknown character '") + text[i] + "' in \"" + text + "\"");
        ids.push_back(best);
        i += best_len;
    }
    return ids;
}

std::string Vocab::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
        if (id < 0 || id >= size()) throw DataError("decode: token id out of range");
        out += tokens[id];
    }
    return out;
}

int Vocab::find(const std::string& token) const {
    for (int id = 0; id < size(); ++id)
        if (tokens[id] == token) return id;
    return -1;
}

Vocab Vocab::build(const std::vector<std::string>& corpus, int max_merges) {
    if (corpus.empty()) throw DataError("build_vocab: empty corpus");

    // Base alphabet: the label alphabet plus every character seen in the corpus.
    std::set<char> chars;
    for (char c = 'a'; c <= 'z'; ++c) chars.insert(c);
    for (char c : {' ', '.', '&', '-'}) chars.insert(c);
    for (const auto& word : corpus)
        for (char c : word)
            if (c != ',') chars.insert(c);

    Vocab vocab;
    vocab.tokens.push_back(kImgString);
    vocab.tokens.push_back(kSepString);
    vocab.img_id = 0;
    vocab.sep_id = 1;
    for (char c : chars) vocab.tokens.push_back(std::string(1, c));

    // Greedy pair merges over the corpus word list (repeats weigh in).
    std::vector<std::vector<std::string>> pieces;
    pieces.reserve(corpus.size());
    for (const auto& word : corpus) {
        std::vector<std::string> symbols;
        for (char c : word) symbols.emplace_back(1, c);
        pieces.push_back(std::move(symbols));
    }

    for (int m = 0; m < max_merges; ++m) {
        std::map<std::pair<std::string, std::string>, int> pair_count;
        for (const auto& symbols : pieces)
            for (size_t i = 0; i + 1 < symbols.size(); ++i)
                ++pair_count[{symbols[i], symbols[i + 1]}];

        int best_count = 0;
        std::pair<std::string, std::string> best_pair;
        std::string best_merged;
        for (const auto& [pair, count] : pair_count) {
            std::string merged = pair.first + pair.second;
            if (count > best_count || (count == best_count && merged < best_merged)) {
                best_count = count;
                best_pair = pair;
                best_merged = merged;
            }
        }
        if (best_count < 2) break;

        vocab.tokens.push_back(best_merged);
        for (auto& symbols : pieces) {
            std::vector<std::string> merged_symbols;
            size_t i = 0;
            while (i < symbols.size()) {
                if (i + 1 < symbols.size() && symbols[i] == best_pair.first && symbols[i + 1] == best_pair.second) {
                    merged_symbols.push_back(best_merged);
                    i += 2;
                } else {
                    merged_symbols.push_back(symbols[i]);
                    ++i;
                }
            }
            symbols = std::move(merged_symbols);
        }
    }

    vocab.rebuild_lookup();
    return vocab;
}

namespace {

std::string escape_token(const std::string& token) {
    std::string out;
    for (char c : token) {
        if (c == '\\') out += "\\\\";
        else if (c == '\n') out += "\\n";
        else out.push_back(c);
    }
    return out;
}

std::string unescape_token(const std::string& line) {
    std::string out;
    for (size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '\\' && i + 1 < line.size()) {
            ++i;
            out.push_back(line[i] == 'n' ? '\n' : line[i]);
        } else {
            out.push_back(line[i]);
        }
    }
    return out;
}

} // namespace

void Vocab::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write vocab file: " + path);
    out << "V=" << size() << "\n";
    for (int id = 0; id < size(); ++id) {
        if (id == img_id) out << "<IMG>\n";
        else if (id == sep_id) out << "<SEP>\n";
        else out << escape_token(tokens[id]) << "\n";
    }
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read vocab file: " + path);
    std::string header;
    if (!std::getline(in, header) || header.rfind("V=", 0) != 0)
        throw DataError("vocab file: missing V= header");
    int count = 0;
    try {
        count = std::stoi(header.substr(2));
    } catch (...) {
        throw DataError("vocab file: bad V= header");
    }

    Vocab vocab;
    vocab.img_id = -1;
    vocab.sep_id = -1;
    std::string line;
    for (int id = 0; id < count; ++id) {
        if (!std::getline(in, line)) throw DataError("vocab file: truncated");
        if (line == "<IMG>") {
            vocab.img_id = id;
            vocab.tokens.push_back(kImgString);
        } else if (line == "<SEP>") {
            vocab.sep_id = id;
            vocab.tokens.push_back(kSepString);
        } else {
            vocab.tokens.push_back(unescape_token(line));
        }
    }
    if (vocab.img_id < 0 || vocab.sep_id < 0) throw DataError("vocab file: missing <IMG> or <SEP>");
    vocab.rebuild_lookup();
    return vocab;
}

} // namespace nxtp
