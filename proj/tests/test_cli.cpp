#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "nxtp/cli.hpp"
#include "nxtp/model.hpp"
#include "nxtp/synthetic.hpp"

namespace fs = std::filesystem;

namespace {

int run_cli(std::vector<std::string> args) {
    std::vector<const char*> argv;
    argv.push_back("nxtp");
    for (const std::string& a : args) argv.push_back(a.c_str());
    return nxtp::run(static_cast<int>(argv.size()), argv.data());
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("nxtp_cli_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { std::error_code ec; fs::remove_all(path, ec); }
    std::string s(const std::string& name) const { return (path / name).string(); }
    static inline int counter = 0;
};

std::string slurp(const std::string& p) {
    std::ifstream in(p);
    return std::string((std::istreambuf_iterator<char>(in)), {});
}

} // namespace

TEST_CASE("help and usage errors") {
    CHECK(run_cli({"--help"}) == 0);
    CHECK(run_cli({"predict", "--no-such-flag"}) == 1);
    CHECK(run_cli({}) == 1);
}

TEST_CASE("mask dump golden") {
    // just exercise success paths; content goes to stdout
    CHECK(run_cli({"mask", "--n-img", "1", "--prompt-len", "1", "--spans", "1,1",
                   "--kind", "nxtp"}) == 0);
    CHECK(run_cli({"mask", "--n-img", "0", "--prompt-len", "-1", "--spans", "1"}) == 2);
}

TEST_CASE("full pipeline: synth, train, truncate, predict, eval, curves, bench") {
    TempDir dir;
    std::string lex = dir.s("lexicon.txt");
    {
        std::ofstream out(lex);
        for (const char* w : {"dog", "cat", "fan", "sofa", "tree", "car", "cup", "hat"})
            out << w << "\n";
    }
    CHECK(run_cli({"synth", "--lexicon", lex, "--out-dir", dir.s(""), "--k-min", "1",
                   "--k-max", "2", "--sigma", "0.02", "--n-train", "24", "--n-heldout", "6",
                   "--d-image", "8", "--n-img", "2", "--seed", "11"}) == 0);
    CHECK(fs::exists(dir.s("train.embeds.bin")));
    CHECK(fs::exists(dir.s("train.labels.jsonl")));
    CHECK(fs::exists(dir.s("vocab.txt")));

    std::string model = dir.s("model.bin");
    CHECK(run_cli({"train", "--embeds", dir.s("train.embeds.bin"), "--labels",
                   dir.s("train.labels.jsonl"), "--vocab", dir.s("vocab.txt"), "--out", model,
                   "--loss-log", dir.s("loss.csv"), "--d-model", "16", "--n-heads", "2",
                   "--n-blocks", "2", "--mlp-ratio", "2", "--epochs", "2", "--batch", "8",
                   "--warmup", "2", "--seed", "1"}) == 0);
    CHECK(fs::exists(model));
    CHECK(slurp(dir.s("loss.csv")).rfind("step,lr,loss", 0) == 0);

    std::string trunc = dir.s("trunc.bin");
    CHECK(run_cli({"truncate", "--model", model, "--keep-blocks", "1", "--out", trunc}) == 0);
    {
        nxtp::Model t = nxtp::load_model(trunc);
        CHECK(t.cfg.n_blocks == 1);
    }
    CHECK(run_cli({"truncate", "--model", model, "--keep-blocks", "9", "--out", trunc}) == 2);

    std::string preds = dir.s("preds.jsonl");
    CHECK(run_cli({"predict", "--model", model, "--vocab", dir.s("vocab.txt"), "--embeds",
                   dir.s("val.embeds.bin"), "--out", preds, "--sampler", "one-shot", "--topk",
                   "3"}) == 0);
    CHECK(fs::exists(preds));

    // references equal to predictions -> perfect scores
    std::string eval_out = dir.s("eval.txt");
    CHECK(run_cli({"eval", "--preds", preds, "--refs", preds, "--out", eval_out, "--embedder",
                   "exact", "--topk", "3"}) == 0);
    std::string report = slurp(eval_out);
    CHECK(report.find("mean_F1") != std::string::npos);

    CHECK(run_cli({"curves", "--preds", preds, "--refs", dir.s("val.labels.jsonl"), "--out",
                   dir.s("curve")}) == 0);
    CHECK(fs::exists(dir.s("curve.thresholds.csv")));
    CHECK(fs::exists(dir.s("curve.topk.csv")));

    CHECK(run_cli({"bench", "--model", model, "--trunc-model", trunc, "--vocab",
                   dir.s("vocab.txt"), "--embeds", dir.s("val.embeds.bin"), "--repeats", "3",
                   "--out", dir.s("bench")}) == 0);
    CHECK(fs::exists(dir.s("bench.csv")));
    CHECK(fs::exists(dir.s("bench.txt")));
}

TEST_CASE("predict greedy and beam also run, errors are data errors") {
    TempDir dir;
    std::string lex = dir.s("lex.txt");
    {
        std::ofstream out(lex);
        out << "dog\ncat\n";
    }
    REQUIRE(run_cli({"synth", "--lexicon", lex, "--out-dir", dir.s(""), "--k-min", "1",
                     "--k-max", "1", "--n-train", "6", "--n-heldout", "2", "--d-image", "4",
                     "--n-img", "1", "--seed", "2"}) == 0);
    REQUIRE(run_cli({"train", "--embeds", dir.s("train.embeds.bin"), "--labels",
                     dir.s("train.labels.jsonl"), "--vocab", dir.s("vocab.txt"), "--out",
                     dir.s("m.bin"), "--d-model", "8", "--n-heads", "2", "--n-blocks", "1",
                     "--epochs", "1", "--batch", "4", "--warmup", "1"}) == 0);
    CHECK(run_cli({"predict", "--model", dir.s("m.bin"), "--vocab", dir.s("vocab.txt"),
                   "--embeds", dir.s("val.embeds.bin"), "--out", dir.s("g.jsonl"), "--sampler",
                   "greedy", "--max-tokens", "16"}) == 0);
    CHECK(run_cli({"predict", "--model", dir.s("m.bin"), "--vocab", dir.s("vocab.txt"),
                   "--embeds", dir.s("val.embeds.bin"), "--out", dir.s("b.jsonl"), "--sampler",
                   "beam", "--beam-width", "2", "--max-tokens", "16"}) == 0);
    // missing file -> data error
    CHECK(run_cli({"predict", "--model", dir.s("missing.bin"), "--vocab", dir.s("vocab.txt"),
                   "--embeds", dir.s("val.embeds.bin"), "--out", dir.s("x.jsonl")}) == 2);
    // mismatched embedding width -> data error
    CHECK(run_cli({"bench", "--model", dir.s("m.bin"), "--trunc-model", dir.s("m.bin"),
                   "--vocab", dir.s("vocab.txt"), "--embeds", dir.s("val.embeds.bin"),
                   "--repeats", "1"}) == 1);
}

TEST_CASE("config file: values apply, unknown keys rejected") {
    TempDir dir;
    std::string cfg = dir.s("run.cfg");
    {
        std::ofstream out(cfg);
        out << "# comment\nsampler.topk = 4\n";
    }
    std::string lex = dir.s("lex.txt");
    {
        std::ofstream out(lex);
        out << "dog\ncat\nfan\n";
    }
    CHECK(run_cli({"--config", cfg, "synth", "--lexicon", lex, "--out-dir", dir.s(""),
                   "--n-train", "4", "--n-heldout", "2", "--d-image", "4", "--n-img", "1",
                   "--k-max", "2"}) == 0);

    std::string bad = dir.s("bad.cfg");
    {
        std::ofstream out(bad);
        out << "sampler.no_such_key = 1\n";
    }
    CHECK(run_cli({"--config", bad, "synth", "--lexicon", lex, "--out-dir", dir.s("")}) == 2);
}

TEST_CASE("preprocess command") {
    TempDir dir;
    std::string caps = dir.s("caps.jsonl");
    {
        std::ofstream out(caps);
        out << R"({"image_id":"a","caption":"A Person riding two horses"})" << "\n";
        out << R"({"image_id":"b","caption":"Stock Photography of a dog"})" << "\n";
    }
    std::string lex = dir.s("lex.txt");
    {
        std::ofstream out(lex);
        out << "horse\ndog\n";
    }
    std::string out_path = dir.s("labels.jsonl");
    CHECK(run_cli({"preprocess", "--captions", caps, "--lexicon", lex, "--out", out_path}) == 0);
    std::string text = slurp(out_path);
    CHECK(text.find("\"horse\"") != std::string::npos);
    CHECK(text.find("\"dog\"") != std::string::npos);
    CHECK(run_cli({"preprocess", "--captions", dir.s("nope.jsonl"), "--lexicon", lex, "--out",
                   out_path}) == 2);
}
