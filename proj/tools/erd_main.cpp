// erd: train, analyze, serve, run, replay-prepare, eval, explain.
//
// Command-line front end for the early-risk-detection toolkit. See the
// top-level README for end-to-end usage and docs/protocol.md for the wire
// protocol served by `erd serve`.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "erd/analysis.hpp"
#include "erd/config.hpp"
#include "erd/corpus.hpp"
#include "erd/runner.hpp"
#include "erd/server.hpp"
#include "erd/ss3.hpp"

namespace fs = std::filesystem;
using erd::json;

namespace {

std::vector<erd::UserTimeline> load_corpus(const std::string& corpus_path,
                                           const std::string& labels_path,
                                           const std::string& format) {
    std::vector<erd::UserTimeline> timelines;
    if (format == "array") {
        timelines = erd::parse_corpus(corpus_path, erd::CorpusFormat::json_array);
    } else if (format == "jsonl") {
        timelines = erd::parse_corpus(corpus_path, erd::CorpusFormat::json_lines);
    } else {
        timelines = erd::parse_corpus(corpus_path);
    }
    if (!labels_path.empty()) {
        erd::attach_labels(timelines, erd::load_labels(labels_path));
    }
    return timelines;
}

void write_text(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw erd::Error("cannot write '" + path.string() + "'");
    out << content;
}

int cmd_train(const std::string& corpus_path, const std::string& labels_path,
              const std::string& format, erd::ss3::Hyperparams hp, bool grid,
              double val_fraction, std::uint64_t seed, const std::string& out_dir) {
    auto timelines = load_corpus(corpus_path, labels_path, format);
    const auto stats = erd::compute_stats(timelines);
    auto prepared = erd::preprocess_corpus(timelines);

    if (grid) {
        auto [train_set, val_set] = erd::split_train_val(prepared, val_fraction, seed);
        const std::vector<double> sigmas{0.2, 0.32, 0.44, 0.5};
        const std::vector<double> rhos{0.3, 0.5, 0.7};
        const std::vector<double> lambdas{0.5, 0.86, 1.0};
        const auto result = erd::ss3::grid_search(train_set, val_set, sigmas, rhos, lambdas);
        hp = result.best;
        std::cout << "grid search: sigma=" << hp.sigma << " rho=" << hp.rho
                  << " lambda=" << hp.lambda << " (macro F1 " << result.best_macro_f1
                  << " on validation)\n";
    }

    const auto model = erd::ss3::train(prepared, hp);
    fs::create_directories(out_dir);
    erd::ss3::save_model(model, (fs::path(out_dir) / "model.json").string());
    write_text(fs::path(out_dir) / "stats.json", erd::stats_to_json(stats).dump(2) + "\n");
    std::cout << "trained on " << stats.n_users << " users (" << stats.n_pos << " positive, "
              << stats.n_neg << " negative), vocabulary " << model.tf.size() << " trigrams\n"
              << "model written to " << (fs::path(out_dir) / "model.json").string() << "\n";
    return 0;
}

int cmd_analyze(const std::string& corpus_path, const std::string& labels_path,
                const std::string& format, int k, bool dump_words, int night_start,
                int night_end, const std::string& out_dir) {
    auto timelines = load_corpus(corpus_path, labels_path, format);
    fs::create_directories(out_dir);

    write_text(fs::path(out_dir) / "stats.json",
               erd::stats_to_json(erd::compute_stats(timelines)).dump(2) + "\n");

    const auto night = erd::analysis::night_fraction(timelines, night_start, night_end);
    write_text(fs::path(out_dir) / "night.json", erd::analysis::night_to_json(night).dump(2) + "\n");

    const bool labeled = std::all_of(timelines.begin(), timelines.end(),
                                     [](const auto& tl) { return tl.label.has_value(); });
    if (!labeled) {
        std::cout << "corpus not fully labeled: wrote stats.json and night.json only\n";
        return 0;
    }

    std::vector<std::string> pos_texts, neg_texts;
    for (const auto& tl : timelines) {
        for (const auto& p : tl.posts) {
            (tl.label == erd::Label::positive ? pos_texts : neg_texts)
                .push_back(erd::text::preprocess(p.message));
        }
    }
    const auto overlap = erd::analysis::overlap_report(pos_texts, neg_texts, k);
    write_text(fs::path(out_dir) / "overlap.json",
               erd::analysis::overlap_to_json(overlap).dump(2) + "\n");
    if (dump_words) {
        const auto dump_list = [&](const char* name, const std::vector<std::string>& words) {
            std::string body;
            for (const auto& w : words) {
                body += w;
                body.push_back('\n');
            }
            write_text(fs::path(out_dir) / name, body);
        };
        dump_list("shared_words.txt", overlap.shared_words);
        dump_list("pos_only_words.txt", overlap.pos_only);
        dump_list("neg_only_words.txt", overlap.neg_only);
    }
    std::cout << "tf-idf cosine " << overlap.cosine_tfidf << ", top-" << k << " jaccard "
              << overlap.jaccard_topk << " (" << overlap.shared << "/" << overlap.union_size
              << " shared)\n";
    return 0;
}

int cmd_serve(const std::string& corpus_path, const std::string& labels_path,
              const std::string& format, std::string corpus_id, const std::string& bind_addr,
              int port) {
    auto timelines = load_corpus(corpus_path, labels_path, format);
    if (corpus_id.empty()) corpus_id = fs::path(corpus_path).stem().string();
    erd::server::MockServer core;
    core.register_corpus(corpus_id, std::move(timelines));
    erd::server::HttpServer http(core);
    std::cout << "serving corpus '" << corpus_id << "' on " << bind_addr << ":" << port << "\n";
    if (!http.listen(bind_addr, port)) {
        std::cerr << "failed to listen on " << bind_addr << ":" << port << "\n";
        return 1;
    }
    return 0;
}

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed,
            const std::string& out_override, bool resume, std::optional<int> stop_after) {
    const erd::Config file_cfg = erd::Config::parse(erd::read_file(config_path));
    erd::runner::PipelineConfig cfg = erd::runner::pipeline_config_from(file_cfg);
    if (seed) cfg.seed = *seed;
    if (!out_override.empty()) cfg.output_dir = out_override;
    cfg.resume = resume;
    cfg.stop_after_round = stop_after;
    const auto result = erd::runner::run_pipeline(cfg);
    if (result.paused) {
        std::cout << "paused after round " << result.last_round << "; rerun with --resume\n";
        return 0;
    }
    std::cout << "completed " << result.last_round << " rounds; outputs in " << cfg.output_dir
              << "\n";
    if (result.report.contains("scores")) {
        std::cout << "macro F1 " << result.report["scores"]["macro_f1"].get<double>()
                  << ", accuracy " << result.report["scores"]["accuracy"].get<double>() << "\n";
    }
    return 0;
}

int cmd_replay_prepare(const std::string& corpus_path, const std::string& format, int window_n,
                       bool raw, const std::string& out_file) {
    auto timelines = load_corpus(corpus_path, "", format);
    if (!raw) timelines = erd::preprocess_corpus(std::move(timelines));
    write_text(out_file, erd::runner::replay_prepare(timelines, window_n));
    std::cout << "windowed texts written to " << out_file << "\n";
    return 0;
}

int cmd_eval(const std::string& runlog_path, const std::string& labels_path,
             const std::string& out_file) {
    const json report = erd::runner::eval_runlog(runlog_path, labels_path);
    write_text(out_file, report.dump(2) + "\n");
    std::cout << "macro F1 " << report["scores"]["macro_f1"].get<double>() << ", accuracy "
              << report["scores"]["accuracy"].get<double>() << "; report written to " << out_file
              << "\n";
    return 0;
}

int cmd_explain(const std::string& model_path, const std::vector<std::string>& texts,
                const std::string& input_file, const std::string& out_file) {
    const auto model = erd::ss3::load_model(model_path);
    std::vector<std::string> all_texts = texts;
    if (!input_file.empty()) {
        const std::string content = erd::read_file(input_file);
        std::size_t start = 0;
        while (start < content.size()) {
            std::size_t end = content.find('\n', start);
            if (end == std::string::npos) end = content.size();
            std::string line = content.substr(start, end - start);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) all_texts.push_back(std::move(line));
            start = end + 1;
        }
    }
    if (all_texts.empty()) {
        std::cerr << "explain: no texts given (use --text or --input)\n";
        return 1;
    }
    write_text(out_file, erd::runner::export_explanations(model, all_texts).dump(2) + "\n");
    std::cout << "explanations for " << all_texts.size() << " text(s) written to " << out_file
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"early risk detection over streaming posts"};
    app.require_subcommand(1);

    std::string corpus_path, labels_path, out_dir = "out", format = "auto";
    std::uint64_t seed = 0;

    // train
    auto* train = app.add_subcommand("train", "train an SS3 model from a labeled corpus");
    erd::ss3::Hyperparams hp;
    bool grid = false;
    double val_fraction = 0.28;
    train->add_option("--corpus", corpus_path, "corpus file (JSON array or JSON lines)")
        ->required();
    train->add_option("--labels", labels_path, "label file (nick<TAB>label)")->required();
    train->add_option("--format", format, "corpus format: auto|array|jsonl");
    train->add_option("--sigma", hp.sigma, "smoothness exponent");
    train->add_option("--rho", hp.rho, "sanction exponent");
    train->add_option("--lambda", hp.lambda, "significance weight");
    train->add_flag("--grid", grid, "grid-search hyperparameters by validation macro F1");
    train->add_option("--val-fraction", val_fraction, "validation fraction for --grid");
    train->add_option("--seed", seed, "split seed");
    train->add_option("--out", out_dir, "output directory");

    // analyze
    auto* analyze = app.add_subcommand("analyze", "corpus statistics and lexical overlap");
    int top_k = 1000;
    bool dump_words = false;
    int night_start = 18, night_end = 6;
    analyze->add_option("--corpus", corpus_path, "corpus file")->required();
    analyze->add_option("--labels", labels_path, "label file");
    analyze->add_option("--format", format, "corpus format: auto|array|jsonl");
    analyze->add_option("--k", top_k, "top-K words for the overlap report");
    analyze->add_flag("--dump-words", dump_words, "write shared/exclusive word lists");
    analyze->add_option("--night-start", night_start, "night window start hour (inclusive)");
    analyze->add_option("--night-end", night_end, "night window end hour (exclusive)");
    analyze->add_option("--out", out_dir, "output directory");

    // serve
    auto* serve = app.add_subcommand("serve", "run the mock-server over a corpus");
    std::string bind_addr = "0.0.0.0", corpus_id;
    int port = 8080;
    serve->add_option("--corpus", corpus_path, "corpus file")->required();
    serve->add_option("--labels", labels_path, "label file (enables evaluated results)");
    serve->add_option("--format", format, "corpus format: auto|array|jsonl");
    serve->add_option("--port", port, "listen port");
    serve->add_option("--bind", bind_addr, "bind address");
    serve->add_option("--corpus-id", corpus_id, "corpus id (default: corpus file stem)");

    // run
    auto* run = app.add_subcommand("run", "drive a model+policy client through a session");
    std::string config_path, run_out;
    bool resume = false;
    std::optional<std::uint64_t> run_seed;
    std::optional<int> stop_after;
    run->add_option("--config", config_path, "run configuration file")->required();
    run->add_option("--seed", run_seed, "override [run] seed");
    run->add_option("--out", run_out, "override [run] out");
    run->add_flag("--resume", resume, "resume from <out>/state.json");
    run->add_option("--stop-after", stop_after, "pause after answering this many rounds");

    // replay-prepare
    auto* prep = app.add_subcommand("replay-prepare",
                                    "emit windowed texts for external scoring");
    int window_n = 9;
    bool raw_windows = false;
    std::string out_file = "windows.csv";
    prep->add_option("--corpus", corpus_path, "corpus file")->required();
    prep->add_option("--format", format, "corpus format: auto|array|jsonl");
    prep->add_option("--window", window_n, "previous posts per window");
    prep->add_flag("--raw", raw_windows, "skip text preprocessing");
    prep->add_option("--out", out_file, "output CSV path");

    // eval
    auto* eval = app.add_subcommand("eval", "offline metrics from a run log");
    std::string runlog_path, eval_out = "report.json";
    eval->add_option("--runlog", runlog_path, "runlog.jsonl from a run")->required();
    eval->add_option("--labels", labels_path, "label file")->required();
    eval->add_option("--out", eval_out, "output report path");

    // explain
    auto* explain = app.add_subcommand("explain", "term-level trace of SS3 scoring");
    std::string model_path, input_file, explain_out = "explanations.json";
    std::vector<std::string> texts;
    explain->add_option("--model", model_path, "model.json path")->required();
    explain->add_option("--text", texts, "text to explain (repeatable)");
    explain->add_option("--input", input_file, "file with one text per line");
    explain->add_option("--out", explain_out, "output path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            return cmd_train(corpus_path, labels_path, format, hp, grid, val_fraction, seed,
                             out_dir);
        }
        if (*analyze) {
            return cmd_analyze(corpus_path, labels_path, format, top_k, dump_words, night_start,
                               night_end, out_dir);
        }
        if (*serve) {
            return cmd_serve(corpus_path, labels_path, format, corpus_id, bind_addr, port);
        }
        if (*run) {
            return cmd_run(config_path, run_seed, run_out, resume, stop_after);
        }
        if (*prep) {
            return cmd_replay_prepare(corpus_path, format, window_n, raw_windows, out_file);
        }
        if (*eval) {
            return cmd_eval(runlog_path, labels_path, eval_out);
        }
        if (*explain) {
            return cmd_explain(model_path, texts, input_file, explain_out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
