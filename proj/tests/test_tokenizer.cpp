#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "nxtp/errors.hpp"
#include "nxtp/tokenizer.hpp"

using namespace nxtp;

TEST_CASE("build_vocab merge counting") {
    // pair "fa" occurs three times across {"sofa","sofa","fan"}: the first merge.
    Vocab v = Vocab::build({"sofa", "sofa", "fan"}, 2);
    CHECK(v.find("fa") >= 0);
    CHECK(v.tokens[v.img_id] == "[IMG]");
    CHECK(v.tokens[v.sep_id] == ",");
}

TEST_CASE("max_merges=0 gives characters plus specials") {
    Vocab v = Vocab::build({"ab", "ba"}, 0);
    // [IMG], [SEP], then the base alphabet characters (a-z, space, '.', '&', '-').
    for (const std::string& tok : v.tokens)
        if (tok != "[IMG]" && tok != ",") CHECK(tok.size() == 1);
    CHECK(v.find("ab") == -1);
}

TEST_CASE("encode greedy longest match") {
    Vocab two = Vocab::build({"sofa", "sofa"}, 10);  // learns so, fa, sofa...
    std::vector<int> ids = two.encode("sofa");
    CHECK(two.decode(ids) == "sofa");

    Vocab v = Vocab::build({"fan", "fan", "xfa", "xfa"}, 1);  // only "fa" merged
    REQUIRE(v.find("fa") >= 0);
    CHECK(v.encode("fan") == std::vector<int>{v.find("fa"), v.find("n")});
    CHECK(v.encode("a") == std::vector<int>{v.find("a")});
}

TEST_CASE("sofa as exactly [so][fa]") {
    // Corpus engineered so the learned merges are "so" and "fa" and nothing longer.
    Vocab v = Vocab::build({"so", "so", "so", "fa", "fa", "fa"}, 2);
    REQUIRE(v.find("so") >= 0);
    REQUIRE(v.find("fa") >= 0);
    CHECK(v.find("sofa") == -1);
    CHECK(v.encode("sofa") == std::vector<int>{v.find("so"), v.find("fa")});
}

TEST_CASE("decode specials and errors") {
    Vocab v = Vocab::build({"ab"}, 0);
    CHECK(v.decode({v.sep_id}) == ",");
    CHECK(v.decode({v.img_id}) == "[IMG]");
    CHECK(v.decode({}) == "");
    CHECK_THROWS_AS(v.decode({v.size()}), DataError);
    CHECK_THROWS_AS(v.encode("a#b"), DataError);
    try {
        v.encode("a#b");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find('#') != std::string::npos);
    }
    // the comma never encodes to [SEP]
    CHECK_THROWS_AS(v.encode(","), DataError);
}

TEST_CASE("round trip over vocab alphabet") {
    Vocab v = Vocab::build({"sofa", "sofa", "fan", "horse", "horse", "house"}, 8);
    for (const std::string& s : {"sofa", "fan", "horse", "house", "a horse", "so-fa.", "h&f"})
        CHECK(v.decode(v.encode(s)) == s);
}

TEST_CASE("vocab serialization round trip and determinism") {
    Vocab a = Vocab::build({"sofa", "sofa", "fan", "fan"}, 4);
    Vocab b = Vocab::build({"sofa", "sofa", "fan", "fan"}, 4);
    CHECK(a.tokens == b.tokens);

    std::string path = "/tmp/nxtp_test_vocab.txt";
    a.save(path);
    Vocab c = Vocab::load(path);
    CHECK(c.tokens == a.tokens);
    CHECK(c.encode("sofa") == a.encode("sofa"));

    // byte-for-byte determinism of the file
    std::string path2 = "/tmp/nxtp_test_vocab2.txt";
    b.save(path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), {});
    std::string s2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(s1 == s2);
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("specials never appear in encode output") {
    Vocab v = Vocab::build({"abc", "abc"}, 3);
    for (int id : v.encode("abc abc")) {
        CHECK(id != v.img_id);
        CHECK(id != v.sep_id);
    }
    CHECK_THROWS_AS(Vocab::build({}, 2), DataError);
}
