#pragma once

#include <string>
#include <unordered_set>
#include <vector>

namespace nxtp {

// Lowercase, drop noise words, keep letters/space/period/comma/ampersand/
// hyphen, drop any word containing a digit. Idempotent.
std::string clean_caption(const std::string& raw);

// Plain-text noun list, one noun per line, with rule-based lemmatization.
class Lexicon {
public:
    static Lexicon load(const std::string& path);
    static Lexicon from_words(std::vector<std::string> words);

    bool contains(const std::string& word) const { return set_.count(word) > 0; }

    // Plural stripping gated on lexicon membership of the stem:
    // "ses"->"s", "ies"->"y", "es"->"", "s"->"", else identity.
    std::string lemmatize(const std::string& word) const;

    const std::vector<std::string>& words() const { return words_; }

private:
    std::vector<std::string> words_;
    std::unordered_set<std::string> set_;
};

// Lexicon nouns (singular or plural form) from a cleaned caption, lemmatized,
// first-occurrence order, duplicates removed.
std::vector<std::string> extract_nouns(const std::string& cleaned, const Lexicon& lexicon);

struct DatasetSummary {
    size_t records = 0;
    size_t skipped = 0;
    size_t distinct_nouns = 0;
};

// captions_path: JSON lines {"image_id","caption"}; out_path gets
// {"image_id","labels"} per input record, input order preserved.
DatasetSummary build_label_dataset(const std::string& captions_path, const Lexicon& lexicon,
                                   const std::string& out_path);

} // namespace nxtp
