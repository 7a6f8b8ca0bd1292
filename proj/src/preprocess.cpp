#include "nxtp/preprocess.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "nxtp/errors.hpp"
#include "nxtp/io.hpp"

namespace nxtp {

namespace {

const std::unordered_set<std::string> kNoiseWords = {
    "person", "persons", "stock", "image",        "images", "background",
    "ounce",  "illustration", "front", "photography", "day",
};

bool allowed_char(char c) {
    return (c >= 'a' && c <= 'z') || c == ' ' || c == '.' || c == ',' || c == '&' || c == '-';
}

std::string letters_only(const std::string& word) {
    std::string out;
    for (char c : word)
        if (c >= 'a' && c <= 'z') out.push_back(c);
    return out;
}

} // namespace

std::string clean_caption(const std::string& raw) {
    std::string lower;
    lower.reserve(raw.size());
    for (unsigned char c : raw) lower.push_back(static_cast<char>(std::tolower(c)));

    std::istringstream words(lower);
    std::string word, out;
    while (words >> word) {
        if (kNoiseWords.count(letters_only(word))) continue;
        if (std::any_of(word.begin(), word.end(), [](unsigned char c) { return std::isdigit(c); })) continue;
        std::string kept;
        for (char c : word)
            if (allowed_char(c)) kept.push_back(c);
        if (kept.empty()) continue;
        if (!out.empty()) out.push_back(' ');
        out += kept;
    }
    return out;
}

Lexicon Lexicon::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read lexicon file: " + path);
    std::vector<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) words.push_back(line);
    }
    return from_words(std::move(words));
}

Lexicon Lexicon::from_words(std::vector<std::string> words) {
    Lexicon lexicon;
    lexicon.words_ = std::move(words);
    lexicon.set_.insert(lexicon.words_.begin(), lexicon.words_.end());
    return lexicon;
}

std::string Lexicon::lemmatize(const std::string& word) const {
    auto ends_with = [&](const char* suffix) {
        size_t n = std::char_traits<char>::length(suffix);
        return word.size() > n && word.compare(word.size() - n, n, suffix) == 0;
    };
    if (ends_with("ses")) {
        std::string stem = word.substr(0, word.size() - 3) + "s";
        if (contains(stem)) return stem;
    }
    if (ends_with("ies")) {
        std::string stem = word.substr(0, word.size() - 3) + "y";
        if (contains(stem)) return stem;
    }
    if (ends_with("es")) {
        std::string stem = word.substr(0, word.size() - 2);
        if (contains(stem)) return stem;
    }
    if (ends_with("s")) {
        std::string stem = word.substr(0, word.size() - 1);
        if (contains(stem)) return stem;
    }
    return word;
}

std::vector<std::string> extract_nouns(const std::string& cleaned, const Lexicon& lexicon) {
    std::vector<std::string> nouns;
    std::set<std::string> seen;
    std::istringstream words(cleaned);
    std::string word;
    while (words >> word) {
        // trim punctuation the char filter keeps attached to word edges
        size_t begin = word.find_first_of("abcdefghijklmnopqrstuvwxyz");
        if (begin == std::string::npos) continue;
        size_t end = word.find_last_of("abcdefghijklmnopqrstuvwxyz");
        word = word.substr(begin, end - begin + 1);

        std::string lemma = lexicon.lemmatize(word);
        if (!lexicon.contains(lemma)) continue;
        if (seen.insert(lemma).second) nouns.push_back(lemma);
    }
    return nouns;
}

DatasetSummary build_label_dataset(const std::string& captions_path, const Lexicon& lexicon,
                                   const std::string& out_path) {
    std::ifstream in(captions_path);
    if (!in) throw DataError("cannot read captions file: " + captions_path);

    DatasetSummary summary;
    std::set<std::string> distinct;
    std::ostringstream records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json record = nlohmann::json::parse(line, nullptr, false);
        if (record.is_discarded() || !record.is_object() || !record.contains("image_id") ||
            !record.contains("caption") || !record["image_id"].is_string() ||
            !record["caption"].is_string() || record["image_id"].get<std::string>().empty()) {
            ++summary.skipped;
            continue;
        }
        auto nouns = extract_nouns(clean_caption(record["caption"].get<std::string>()), lexicon);
        distinct.insert(nouns.begin(), nouns.end());
        nlohmann::json out{{"image_id", record["image_id"]}, {"labels", nouns}};
        records << out.dump() << "\n";
        ++summary.records;
    }
    summary.distinct_nouns = distinct.size();

    std::string payload = records.str();
    atomic_write(out_path, [&](std::ostream& out) { out << payload; });
    return summary;
}

} // namespace nxtp
