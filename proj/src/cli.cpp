#include "nxtp/cli.hpp"

#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "nxtp/bench.hpp"
#include "nxtp/errors.hpp"
#include "nxtp/io.hpp"
#include "nxtp/metric.hpp"
#include "nxtp/model.hpp"
#include "nxtp/preprocess.hpp"
#include "nxtp/sampling.hpp"
#include "nxtp/synthetic.hpp"
#include "nxtp/train.hpp"

namespace nxtp {

namespace {

constexpr const char* kDefaultPrompt = "the objects in the image are";

// Flat dotted-key config file; '#' comments and blank lines allowed.
std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string trimmed = line.substr(0, line.find('#'));
        size_t a = trimmed.find_first_not_of(" \t\r");
        if (a == std::string::npos) continue;
        size_t b = trimmed.find_last_not_of(" \t\r");
        trimmed = trimmed.substr(a, b - a + 1);
        size_t eq = trimmed.find('=');
        if (eq == std::string::npos)
            throw DataError("config line " + std::to_string(line_no) + ": expected key=value");
        std::string key = trimmed.substr(0, eq);
        std::string value = trimmed.substr(eq + 1);
        while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
        size_t v = value.find_first_not_of(" \t");
        value = v == std::string::npos ? "" : value.substr(v);
        if (key.empty()) throw DataError("config line " + std::to_string(line_no) + ": empty key");
        if (!kv.emplace(key, value).second)
            throw DataError("config: duplicate key " + key);
    }
    return kv;
}

const std::set<std::string>& known_config_keys() {
    static const std::set<std::string> keys = {
        "model.d_model", "model.n_heads", "model.n_blocks", "model.mlp_ratio", "model.max_seq",
        "model.pos_mode",
        "train.learning_rate", "train.weight_decay", "train.warmup_iters", "train.epochs",
        "train.batch_size", "train.lr_floor",
        "sampler.strategy", "sampler.topk", "sampler.max_tokens", "sampler.per_label_cap",
        "sampler.beam_width", "sampler.tau", "sampler.rank_by",
        "synth.k_min", "synth.k_max", "synth.sigma", "synth.n_train", "synth.n_heldout",
        "synth.d_image", "synth.n_img", "synth.max_merges",
        "metric.embedder", "metric.topk",
    };
    return keys;
}

struct RunConfig {
    uint64_t seed = 0;
    int threads = 1;

    ModelConfig model;
    TrainConfig train;
    int sampler_topk = 5;
    int sampler_max_tokens = 64;
    int sampler_per_label_cap = 8;
    int sampler_beam_width = 3;
    double sampler_tau = 1.2;
    std::string sampler_strategy = "one-shot";
    std::string sampler_rank_by = "initial";

    int synth_k_min = 1;
    int synth_k_max = 5;
    double synth_sigma = 0.05;
    int synth_n_train = 200;
    int synth_n_heldout = 50;
    int synth_d_image = 16;
    int synth_n_img = 4;
    int synth_max_merges = 200;

    std::string metric_embedder = "exact";
    int metric_topk = 5;

    void apply(const std::map<std::string, std::string>& kv) {
        for (const auto& [key, value] : kv) {
            if (!known_config_keys().count(key)) throw DataError("config: unknown key " + key);
            auto num = [&](auto& field) {
                if (!(std::istringstream(value) >> field))
                    throw DataError("config: bad value for " + key);
            };
            if (key == "model.d_model") num(model.d_model);
            else if (key == "model.n_heads") num(model.n_heads);
            else if (key == "model.n_blocks") num(model.n_blocks);
            else if (key == "model.mlp_ratio") num(model.mlp_ratio);
            else if (key == "model.max_seq") num(model.max_seq);
            else if (key == "model.pos_mode") model.pos_mode = parse_pos_mode(value);
            else if (key == "train.learning_rate") num(train.learning_rate);
            else if (key == "train.weight_decay") num(train.weight_decay);
            else if (key == "train.warmup_iters") num(train.warmup_iters);
            else if (key == "train.epochs") num(train.epochs);
            else if (key == "train.batch_size") num(train.batch_size);
            else if (key == "train.lr_floor") num(train.lr_floor);
            else if (key == "sampler.strategy") sampler_strategy = value;
            else if (key == "sampler.topk") num(sampler_topk);
            else if (key == "sampler.max_tokens") num(sampler_max_tokens);
            else if (key == "sampler.per_label_cap") num(sampler_per_label_cap);
            else if (key == "sampler.beam_width") num(sampler_beam_width);
            else if (key == "sampler.tau") num(sampler_tau);
            else if (key == "sampler.rank_by") sampler_rank_by = value;
            else if (key == "synth.k_min") num(synth_k_min);
            else if (key == "synth.k_max") num(synth_k_max);
            else if (key == "synth.sigma") num(synth_sigma);
            else if (key == "synth.n_train") num(synth_n_train);
            else if (key == "synth.n_heldout") num(synth_n_heldout);
            else if (key == "synth.d_image") num(synth_d_image);
            else if (key == "synth.n_img") num(synth_n_img);
            else if (key == "synth.max_merges") num(synth_max_merges);
            else if (key == "metric.embedder") metric_embedder = value;
            else if (key == "metric.topk") num(metric_topk);
        }
    }

    SamplerConfig sampler() const {
        SamplerConfig cfg;
        cfg.strategy = parse_strategy(sampler_strategy);
        cfg.k = sampler_topk;
        cfg.max_tokens = sampler_max_tokens;
        cfg.per_label_cap = sampler_per_label_cap;
        cfg.beam_width = sampler_beam_width;
        cfg.tau = sampler_tau;
        cfg.rank_by = parse_rank_by(sampler_rank_by);
        cfg.threads = threads;
        return cfg;
    }
};

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

void check_model_vs_data(const Model& model, const Vocab& vocab, const EmbeddingFile& embeds) {
    if (model.cfg.vocab_size != vocab.size())
        throw DataError("model/vocab size mismatch: " + std::to_string(model.cfg.vocab_size) +
                        " vs " + std::to_string(vocab.size()));
    if (model.cfg.d_image != embeds.d_image)
        throw DataError("model/embedding width mismatch: " + std::to_string(model.cfg.d_image) +
                        " vs " + std::to_string(embeds.d_image));
}

std::vector<LabelPrediction> run_strategy(const Model& model, const Vocab& vocab,
                                          const ImageContext& ctx, const SamplerConfig& cfg,
                                          DecodeStats* stats = nullptr) {
    switch (cfg.strategy) {
        case Strategy::Greedy: return greedy_decode(model, vocab, ctx, cfg, stats);
        case Strategy::Beam: return beam_decode(model, vocab, ctx, cfg, stats);
        case Strategy::OneShot: return one_shot_sample(model, vocab, ctx, cfg, stats);
    }
    throw UsageError("unknown strategy");
}

struct PredRecord {
    std::string image_id;
    std::vector<std::string> labels;
};

std::vector<PredRecord> load_predictions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open predictions file: " + path);
    std::vector<PredRecord> records;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json record = nlohmann::json::parse(line, nullptr, false);
        if (record.is_discarded() || !record.contains("image_id") || !record.contains("labels"))
            throw DataError("malformed prediction at " + path + ":" + std::to_string(line_no));
        PredRecord rec;
        rec.image_id = record["image_id"].get<std::string>();
        for (const auto& label : record["labels"]) {
            if (label.is_string()) rec.labels.push_back(label.get<std::string>());
            else if (label.is_object() && label.contains("text"))
                rec.labels.push_back(label["text"].get<std::string>());
            else throw DataError("malformed prediction at " + path + ":" + std::to_string(line_no));
        }
        records.push_back(std::move(rec));
    }
    return records;
}

// References share the prediction JSONL shape, so accept both label forms.
std::vector<LabeledImage> load_refs(const std::string& path) {
    std::vector<LabeledImage> refs;
    for (PredRecord& rec : load_predictions(path))
        refs.push_back({std::move(rec.image_id), std::move(rec.labels)});
    return refs;
}

std::vector<LabeledSample> join_samples(const std::vector<PredRecord>& preds,
                                        const std::vector<LabeledImage>& refs) {
    std::map<std::string, const LabeledImage*> by_id;
    for (const LabeledImage& img : refs) by_id[img.image_id] = &img;
    std::vector<LabeledSample> samples;
    for (const PredRecord& pred : preds) {
        auto it = by_id.find(pred.image_id);
        if (it == by_id.end()) throw DataError("no references for image " + pred.image_id);
        samples.push_back({pred.image_id, it->second->labels, pred.labels});
    }
    return samples;
}

template <typename F>
std::vector<double> parse_list(const std::string& csv, F convert) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(convert(item));
    }
    return out;
}

int cmd_preprocess(const std::string& captions, const std::string& lexicon_path,
                   const std::string& out) {
    Lexicon lexicon = Lexicon::load(lexicon_path);
    DatasetSummary summary = build_label_dataset(captions, lexicon, out);
    std::cout << "records=" << summary.records << " skipped=" << summary.skipped
              << " distinct_nouns=" << summary.distinct_nouns << "\n";
    return 0;
}

int cmd_synth(const RunConfig& rc, const std::string& lexicon_path, int n_labels,
              const std::string& out_dir) {
    Lexicon lexicon = Lexicon::load(lexicon_path);
    SyntheticSpec spec;
    spec.labels = lexicon.words();
    if (n_labels > 0 && n_labels < static_cast<int>(spec.labels.size()))
        spec.labels.resize(n_labels);
    spec.k_min = rc.synth_k_min;
    spec.k_max = rc.synth_k_max;
    spec.sigma = rc.synth_sigma;
    spec.d_image = rc.synth_d_image;
    spec.n_img = rc.synth_n_img;
    spec.n_train = rc.synth_n_train;
    spec.n_heldout = rc.synth_n_heldout;
    spec.seed = rc.seed;

    SyntheticDataset ds = gen_synthetic(spec);
    std::filesystem::create_directories(out_dir);
    save_embeddings(ds.train_embeds, out_dir + "/train.embeds.bin");
    save_embeddings(ds.heldout_embeds, out_dir + "/val.embeds.bin");
    save_label_file(ds.train_labels, out_dir + "/train.labels.jsonl");
    save_label_file(ds.heldout_labels, out_dir + "/val.labels.jsonl");

    std::vector<std::string> corpus = spec.labels;
    corpus.push_back(kDefaultPrompt);
    Vocab vocab = Vocab::build(corpus, rc.synth_max_merges);
    vocab.save(out_dir + "/vocab.txt");
    std::cout << "train=" << ds.train_labels.size() << " heldout=" << ds.heldout_labels.size()
              << " labels=" << spec.labels.size() << " vocab=" << vocab.size() << "\n";
    return 0;
}

int cmd_train(RunConfig& rc, const std::string& embeds_path, const std::string& labels_path,
              const std::string& vocab_path, const std::string& prompts_path,
              const std::string& out, const std::string& loss_log_path) {
    EmbeddingFile embeds = load_embeddings(embeds_path);
    std::vector<LabeledImage> labels = load_label_file(labels_path);
    Vocab vocab = Vocab::load(vocab_path);

    rc.model.vocab_size = vocab.size();
    rc.model.d_image = embeds.d_image;
    rc.model.validate();
    rc.train.seed = rc.seed;

    std::vector<std::vector<int>> templates;
    if (prompts_path.empty()) {
        templates.push_back(vocab.encode(kDefaultPrompt));
    } else {
        for (const std::string& line : read_lines(prompts_path))
            templates.push_back(vocab.encode(line));
        if (templates.empty()) throw DataError("no prompt templates in " + prompts_path);
    }

    Model model = init_model(rc.model, rc.seed);
    std::vector<TrainSample> samples = build_train_samples(embeds, labels, vocab);
    std::vector<LossLogEntry> log = train(model, samples, templates, embeds.n_img, rc.train);
    save_model(model, out);
    if (!loss_log_path.empty()) save_loss_log(log, loss_log_path);
    if (!log.empty())
        std::cout << "steps=" << log.size() << " first_loss=" << log.front().loss
                  << " final_loss=" << log.back().loss << "\n";
    return 0;
}

int cmd_truncate(const std::string& model_path, int keep_blocks, const std::string& out) {
    Model model = load_model(model_path);
    Model truncated = truncate_model(model, keep_blocks);
    save_model(truncated, out);
    std::cout << "kept " << keep_blocks << " of " << model.cfg.n_blocks << " blocks\n";
    return 0;
}

int cmd_predict(const RunConfig& rc, const std::string& model_path, const std::string& vocab_path,
                const std::string& embeds_path, const std::string& prompt,
                const std::string& out) {
    Model model = load_model(model_path);
    Vocab vocab = Vocab::load(vocab_path);
    EmbeddingFile embeds = load_embeddings(embeds_path);
    check_model_vs_data(model, vocab, embeds);
    SamplerConfig cfg = rc.sampler();
    std::vector<int> prompt_ids = vocab.encode(prompt.empty() ? kDefaultPrompt : prompt);

    atomic_write(out, [&](std::ostream& os) {
        for (const EmbeddingRecord& rec : embeds.records) {
            ImageContext ctx{rec.data, embeds.n_img, prompt_ids};
            std::vector<LabelPrediction> preds = run_strategy(model, vocab, ctx, cfg);
            nlohmann::json labels = nlohmann::json::array();
            for (const LabelPrediction& pred : preds)
                labels.push_back({{"text", pred.text},
                                  {"prob", pred.label_prob},
                                  {"initial_prob", pred.initial_prob},
                                  {"ppl", pred.ppl},
                                  {"sim", pred.sim}});
            os << nlohmann::json{{"image_id", rec.image_id}, {"labels", labels}}.dump() << "\n";
        }
    });
    std::cout << "predicted " << embeds.records.size() << " images\n";
    return 0;
}

int cmd_eval(const RunConfig& rc, const std::string& preds_path, const std::string& refs_path,
             const std::string& out) {
    std::vector<LabeledSample> samples =
        join_samples(load_predictions(preds_path), load_refs(refs_path));
    auto embedder = make_embedder(rc.metric_embedder);
    MetricReport report = evaluate_samples(samples, *embedder, rc.metric_topk);
    if (!out.empty())
        atomic_write(out, [&](std::ostream& os) { os << report_to_text(report); });
    std::cout << "samples=" << report.samples.size() << " mean_R=" << report.mean_r
              << " mean_P=" << report.mean_p << " mean_F1=" << report.mean_f1 << "\n";
    return 0;
}

int cmd_curves(const RunConfig& rc, const std::string& preds_path, const std::string& refs_path,
               const std::string& thresholds_csv, const std::string& ks_csv,
               const std::string& out_prefix) {
    std::vector<LabeledSample> samples =
        join_samples(load_predictions(preds_path), load_refs(refs_path));
    auto embedder = make_embedder(rc.metric_embedder);

    std::vector<SimilarityMatrix> mats;
    for (const LabeledSample& sample : samples) {
        if (sample.preds.empty()) continue;  // zero-prediction samples carry no matrix
        mats.push_back(similarity_matrix(sample.refs, sample.preds, *embedder));
    }
    if (mats.empty()) throw DataError("curves: no samples with predictions");

    std::vector<double> thresholds;
    if (thresholds_csv.empty())
        for (int i = 0; i <= 20; ++i) thresholds.push_back(i * 0.05);
    else
        thresholds = parse_list(thresholds_csv, [](const std::string& s) { return std::stod(s); });

    std::vector<int> ks;
    if (ks_csv.empty())
        for (int k = 1; k <= 10; ++k) ks.push_back(k);
    else
        for (double v : parse_list(ks_csv, [](const std::string& s) { return std::stod(s); }))
            ks.push_back(static_cast<int>(v));

    auto t_curve = pr_curve_threshold(mats, thresholds, rc.metric_topk);
    auto k_curve = pr_curve_topk(mats, ks);
    atomic_write(out_prefix + ".thresholds.csv",
                 [&](std::ostream& os) { os << curve_to_csv(t_curve, "threshold"); });
    atomic_write(out_prefix + ".topk.csv",
                 [&](std::ostream& os) { os << curve_to_csv(k_curve, "k"); });
    std::cout << "wrote " << out_prefix << ".thresholds.csv and " << out_prefix << ".topk.csv\n";
    return 0;
}

int cmd_bench(const RunConfig& rc, const std::string& model_path, const std::string& trunc_path,
              const std::string& vocab_path, const std::string& embeds_path,
              const std::string& prompt, int repeats, const std::string& out) {
    Model full = load_model(model_path);
    Model trunc = load_model(trunc_path);
    Vocab vocab = Vocab::load(vocab_path);
    EmbeddingFile embeds = load_embeddings(embeds_path);
    check_model_vs_data(full, vocab, embeds);
    check_model_vs_data(trunc, vocab, embeds);
    std::vector<int> prompt_ids = vocab.encode(prompt.empty() ? kDefaultPrompt : prompt);

    SamplerConfig greedy = rc.sampler();
    greedy.strategy = Strategy::Greedy;
    greedy.threads = 1;
    SamplerConfig one_shot = rc.sampler();
    one_shot.strategy = Strategy::OneShot;
    one_shot.threads = 1;

    std::vector<NamedSampler> configs = {
        {"full-greedy", &full, greedy},
        {"trunc-greedy", &trunc, greedy},
        {"full-one-shot", &full, one_shot},
        {"trunc-one-shot", &trunc, one_shot},
    };
    if (rc.threads > 1) {
        SamplerConfig threaded = one_shot;
        threaded.threads = rc.threads;
        configs.push_back({"trunc-one-shot-threaded", &trunc, threaded});
    }

    BenchReport report = bench_decode(configs, vocab, embeds, prompt_ids, repeats);
    std::string text = bench_to_text(report);
    std::cout << text;
    if (!out.empty()) {
        atomic_write(out + ".txt", [&](std::ostream& os) { os << text; });
        atomic_write(out + ".csv", [&](std::ostream& os) { os << bench_to_csv(report); });
    }
    return 0;
}

int cmd_mask(int n_img, int prompt_len, const std::string& spans_csv, const std::string& pos_mode,
             const std::string& kind) {
    std::vector<int> counts;
    for (double v : parse_list(spans_csv, [](const std::string& s) { return std::stod(s); }))
        counts.push_back(static_cast<int>(v));
    SegmentLayout layout = SegmentLayout::make(n_img, prompt_len, counts);
    AttnMask mask;
    if (kind == "nxtp") mask = build_nxtp_mask(layout);
    else if (kind == "causal") mask = build_causal_mask(layout.total_len());
    else if (kind == "prefix") mask = build_prefix_causal_mask(n_img, layout.total_len());
    else throw UsageError("unknown mask kind: " + kind);
    std::cout << render_mask(mask);
    std::cout << "positions:";
    for (int p : assign_positions(layout, parse_pos_mode(pos_mode))) std::cout << " " << p;
    std::cout << "\n";
    return 0;
}

} // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"object recognition as next-token prediction over image embeddings"};
    app.require_subcommand(1);

    RunConfig rc;
    std::string config_path;
    app.add_option("--seed", rc.seed, "global RNG seed");
    app.add_option("--config", config_path, "flat dotted-key config file");
    app.add_option("--threads", rc.threads, "worker threads for parallel branches");

    // preprocess
    auto* sc_pre = app.add_subcommand("preprocess", "captions JSONL -> reference labels JSONL");
    std::string captions, lexicon_path, out_path;
    sc_pre->add_option("--captions", captions, "input JSONL with image_id/caption")->required();
    sc_pre->add_option("--lexicon", lexicon_path, "noun list, one per line")->required();
    sc_pre->add_option("--out", out_path, "output labels JSONL")->required();

    // synth
    auto* sc_synth = app.add_subcommand("synth", "generate a synthetic embedding dataset");
    std::string synth_lexicon, synth_out_dir;
    int synth_labels = 0;
    sc_synth->add_option("--lexicon", synth_lexicon, "noun list")->required();
    sc_synth->add_option("--labels", synth_labels, "use only the first N nouns");
    sc_synth->add_option("--out-dir", synth_out_dir, "output directory")->required();
    sc_synth->add_option("--k-min", rc.synth_k_min, "min labels per image");
    sc_synth->add_option("--k-max", rc.synth_k_max, "max labels per image");
    sc_synth->add_option("--sigma", rc.synth_sigma, "signature noise");
    sc_synth->add_option("--n-train", rc.synth_n_train, "training images");
    sc_synth->add_option("--n-heldout", rc.synth_n_heldout, "held-out images");
    sc_synth->add_option("--d-image", rc.synth_d_image, "image embedding width");
    sc_synth->add_option("--n-img", rc.synth_n_img, "image tokens per image");
    sc_synth->add_option("--max-merges", rc.synth_max_merges, "tokenizer merges");

    // train
    auto* sc_train = app.add_subcommand("train", "train the decoder on an embedding dataset");
    std::string tr_embeds, tr_labels, tr_vocab, tr_prompts, tr_out, tr_loss_log;
    sc_train->add_option("--embeds", tr_embeds, "embeddings file")->required();
    sc_train->add_option("--labels", tr_labels, "reference labels JSONL")->required();
    sc_train->add_option("--vocab", tr_vocab, "vocabulary file")->required();
    sc_train->add_option("--prompts", tr_prompts, "prompt template file, one per line");
    sc_train->add_option("--out", tr_out, "output model file")->required();
    sc_train->add_option("--loss-log", tr_loss_log, "CSV loss log");
    sc_train->add_option("--d-model", rc.model.d_model, "embedding width");
    sc_train->add_option("--n-heads", rc.model.n_heads, "attention heads");
    sc_train->add_option("--n-blocks", rc.model.n_blocks, "transformer blocks");
    sc_train->add_option("--mlp-ratio", rc.model.mlp_ratio, "MLP hidden multiplier");
    sc_train->add_option("--max-seq", rc.model.max_seq, "sequence length cap");
    std::string pos_mode_flag;
    sc_train->add_option("--pos-mode", pos_mode_flag, "shared|sequential");
    sc_train->add_option("--lr", rc.train.learning_rate, "peak learning rate");
    sc_train->add_option("--wd", rc.train.weight_decay, "weight decay");
    sc_train->add_option("--warmup", rc.train.warmup_iters, "warmup iterations");
    sc_train->add_option("--epochs", rc.train.epochs, "training epochs");
    sc_train->add_option("--batch", rc.train.batch_size, "batch size");
    sc_train->add_option("--lr-floor", rc.train.lr_floor, "cosine schedule floor");

    // truncate
    auto* sc_trunc = app.add_subcommand("truncate", "keep the first n transformer blocks");
    std::string trunc_model, trunc_out;
    int keep_blocks = 0;
    sc_trunc->add_option("--model", trunc_model, "input model")->required();
    sc_trunc->add_option("--keep-blocks", keep_blocks, "blocks to keep")->required();
    sc_trunc->add_option("--out", trunc_out, "output model")->required();

    // predict
    auto* sc_pred = app.add_subcommand("predict", "decode ranked labels per image");
    std::string pr_model, pr_vocab, pr_embeds, pr_prompt, pr_out;
    sc_pred->add_option("--model", pr_model, "model file")->required();
    sc_pred->add_option("--vocab", pr_vocab, "vocabulary file")->required();
    sc_pred->add_option("--embeds", pr_embeds, "embeddings file")->required();
    sc_pred->add_option("--prompt", pr_prompt, "inference prompt");
    sc_pred->add_option("--out", pr_out, "output predictions JSONL")->required();
    sc_pred->add_option("--sampler", rc.sampler_strategy, "greedy|beam|one-shot");
    sc_pred->add_option("--topk", rc.sampler_topk, "labels per image");
    sc_pred->add_option("--rank", rc.sampler_rank_by, "initial|prob|ppl|sim");
    sc_pred->add_option("--tau", rc.sampler_tau, "repetition penalty");
    sc_pred->add_option("--max-tokens", rc.sampler_max_tokens, "greedy/beam token budget");
    sc_pred->add_option("--per-label-cap", rc.sampler_per_label_cap, "one-shot branch cap");
    sc_pred->add_option("--beam-width", rc.sampler_beam_width, "beam width");

    // eval
    auto* sc_eval = app.add_subcommand("eval", "score predictions against references");
    std::string ev_preds, ev_refs, ev_out;
    sc_eval->add_option("--preds", ev_preds, "predictions JSONL")->required();
    sc_eval->add_option("--refs", ev_refs, "reference labels JSONL")->required();
    sc_eval->add_option("--out", ev_out, "report file");
    sc_eval->add_option("--embedder", rc.metric_embedder, "exact|ngram");
    sc_eval->add_option("--topk", rc.metric_topk, "prediction columns to keep");

    // curves
    auto* sc_curves = app.add_subcommand("curves", "PR curves over thresholds and top-k");
    std::string cu_preds, cu_refs, cu_thresholds, cu_ks, cu_out;
    sc_curves->add_option("--preds", cu_preds, "predictions JSONL")->required();
    sc_curves->add_option("--refs", cu_refs, "reference labels JSONL")->required();
    sc_curves->add_option("--thresholds", cu_thresholds, "comma-separated thresholds");
    sc_curves->add_option("--ks", cu_ks, "comma-separated k values");
    sc_curves->add_option("--out", cu_out, "output CSV prefix")->required();
    sc_curves->add_option("--embedder", rc.metric_embedder, "exact|ngram");
    sc_curves->add_option("--topk", rc.metric_topk, "columns for the threshold sweep");

    // bench
    auto* sc_bench = app.add_subcommand("bench", "decoding efficiency measurements");
    std::string be_model, be_trunc, be_vocab, be_embeds, be_prompt, be_out;
    int be_repeats = 5;
    sc_bench->add_option("--model", be_model, "full model")->required();
    sc_bench->add_option("--trunc-model", be_trunc, "truncated model")->required();
    sc_bench->add_option("--vocab", be_vocab, "vocabulary file")->required();
    sc_bench->add_option("--embeds", be_embeds, "embeddings file")->required();
    sc_bench->add_option("--prompt", be_prompt, "inference prompt");
    sc_bench->add_option("--repeats", be_repeats, "timing repeats (>= 3)");
    sc_bench->add_option("--out", be_out, "report file prefix");
    sc_bench->add_option("--topk", rc.sampler_topk, "labels per image");
    sc_bench->add_option("--tau", rc.sampler_tau, "repetition penalty");
    sc_bench->add_option("--max-tokens", rc.sampler_max_tokens, "greedy token budget");

    // mask (debug dump)
    auto* sc_mask = app.add_subcommand("mask", "print an attention mask and positions");
    int mk_n_img = 2, mk_prompt_len = 2;
    std::string mk_spans = "2,3", mk_pos_mode = "shared", mk_kind = "nxtp";
    sc_mask->add_option("--n-img", mk_n_img, "image tokens");
    sc_mask->add_option("--prompt-len", mk_prompt_len, "prompt tokens");
    sc_mask->add_option("--spans", mk_spans, "label span lengths incl [SEP]");
    sc_mask->add_option("--pos-mode", mk_pos_mode, "shared|sequential");
    sc_mask->add_option("--kind", mk_kind, "nxtp|causal|prefix");

    // Parse once to learn the config path, apply file values as defaults,
    // then re-parse so explicit flags override the file.
    try {
        // global flags may appear after the subcommand name
        for (CLI::App* sc : app.get_subcommands(nullptr)) sc->fallthrough();
        app.allow_extras(true);
        try {
            app.parse(argc, argv);
        } catch (const CLI::ParseError&) {
            // full validation happens on the second parse
        }
        if (!config_path.empty()) rc.apply(parse_config_file(config_path));
        app.clear();
        app.allow_extras(false);
        app.parse(argc, argv);

        if (!pos_mode_flag.empty()) rc.model.pos_mode = parse_pos_mode(pos_mode_flag);
        rc.train.seed = rc.seed;

        if (sc_pre->parsed()) return cmd_preprocess(captions, lexicon_path, out_path);
        if (sc_synth->parsed()) return cmd_synth(rc, synth_lexicon, synth_labels, synth_out_dir);
        if (sc_train->parsed())
            return cmd_train(rc, tr_embeds, tr_labels, tr_vocab, tr_prompts, tr_out, tr_loss_log);
        if (sc_trunc->parsed()) return cmd_truncate(trunc_model, keep_blocks, trunc_out);
        if (sc_pred->parsed()) return cmd_predict(rc, pr_model, pr_vocab, pr_embeds, pr_prompt, pr_out);
        if (sc_eval->parsed()) return cmd_eval(rc, ev_preds, ev_refs, ev_out);
        if (sc_curves->parsed())
            return cmd_curves(rc, cu_preds, cu_refs, cu_thresholds, cu_ks, cu_out);
        if (sc_bench->parsed())
            return cmd_bench(rc, be_model, be_trunc, be_vocab, be_embeds, be_prompt, be_repeats,
                             be_out);
        if (sc_mask->parsed()) return cmd_mask(mk_n_img, mk_prompt_len, mk_spans, mk_pos_mode, mk_kind);
        throw UsageError("no subcommand given");
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n" << app.help() << "\n";
        return 1;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    }
}

} // namespace nxtp
