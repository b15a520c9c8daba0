// Experiment runner: data generation, guardian distillation, federated
// preference alignment with on-device sanitization, evaluation, and run
// comparison. All outputs are deterministic functions of the config.

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "fedsan/experiment.hpp"

namespace fs = std::filesystem;
using namespace fedsan;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

ExperimentConfig load_config(const std::string& path, std::optional<std::uint64_t> seed) {
    ExperimentConfig cfg;
    if (!path.empty()) {
        json doc;
        try {
            doc = json::parse(read_file(path));
        } catch (const json::exception& e) {
            throw ConfigError("config '" + path + "': " + e.what());
        }
        cfg = experiment_config_from_json(doc);
    }
    if (seed) cfg.federation.master_seed = *seed;
    return cfg;
}

fs::path resolve_out(const std::string& flag, const ExperimentConfig& cfg) {
    if (!flag.empty()) return flag;
    if (!cfg.out_dir.empty()) return cfg.out_dir;
    return fs::current_path();
}

int cmd_gen_data(const ExperimentConfig& cfg, const fs::path& out) {
    fs::create_directories(out);
    GenDataResult data = run_gen_data(cfg);

    std::vector<LabeledSample> train;
    train.insert(train.end(), data.corpus.benign_train.begin(),
                 data.corpus.benign_train.end());
    train.insert(train.end(), data.corpus.toxic_train.begin(),
                 data.corpus.toxic_train.end());

    std::string corpus_text = samples_to_jsonl(train);
    std::string suites_text = eval_suites_to_json(data.corpus.suites).dump(2) + "\n";

    auto distill_jsonl = [](const std::vector<std::pair<TokenSeq, SafetyLabel>>& set) {
        std::string text;
        for (const auto& [tokens, label] : set) {
            json line{{"tokens", tokens},
                      {"label", label == SafetyLabel::Unsafe ? "unsafe" : "safe"}};
            text += line.dump() + "\n";
        }
        return text;
    };
    std::string distill_train = distill_jsonl(data.distill_train);
    std::string distill_holdout = distill_jsonl(data.distill_holdout);

    atomic_write_file(out / "corpus.jsonl", corpus_text);
    atomic_write_file(out / "eval_suites.json", suites_text);
    atomic_write_file(out / "distill_train.jsonl", distill_train);
    atomic_write_file(out / "distill_holdout.jsonl", distill_holdout);

    json manifest{{"corpus.jsonl", hex_digest(corpus_text)},
                  {"eval_suites.json", hex_digest(suites_text)},
                  {"distill_train.jsonl", hex_digest(distill_train)},
                  {"distill_holdout.jsonl", hex_digest(distill_holdout)},
                  {"samples", train.size()}};
    atomic_write_file(out / "manifest.json", manifest.dump(2) + "\n");

    std::cout << "wrote " << train.size() << " pairs and suites to " << out.string()
              << "\n";
    return kExitOk;
}

int cmd_distill(const ExperimentConfig& cfg, const fs::path& out) {
    fs::create_directories(out);
    DistillResult res = run_distill(cfg);
    atomic_write_file(out / "student.json", student_to_json(res.student).dump(2) + "\n");
    json report = distill_report_to_json(res);
    atomic_write_file(out / "distill_report.json", report.dump(2) + "\n");
    std::cout << report.dump(2) << "\n";
    return kExitOk;
}

int cmd_federate(const ExperimentConfig& cfg, const std::string& mode_str,
                 const std::string& student_path, const fs::path& out, int threads) {
    SanitizeMode mode = parse_mode(mode_str);

    std::optional<StudentClassifier> student;
    if (mode != SanitizeMode::Off) {
        if (student_path.empty()) {
            throw ConfigError(
                "mode '" + mode_str +
                "' needs a guardian: run `fedsan distill --out DIR` first and pass "
                "--student DIR/student.json");
        }
        student = student_from_json(json::parse(read_file(student_path)));
    }

    RunReport report = run_federate_command(cfg, mode, student, out, threads);
    std::cout << "final metrics: " << metrics_to_json(report.final_metrics).dump()
              << "\n"
              << "report: " << (out / "report.json").string() << " ("
              << report.wall_seconds << " s)\n";
    return kExitOk;
}

int cmd_eval(const ExperimentConfig& cfg, const std::string& adapter_path) {
    if (adapter_path.empty()) throw ConfigError("eval: --adapter PATH is required");
    LoraAdapter adapter = adapter_from_json(json::parse(read_file(adapter_path)));

    Corpus corpus = gen_corpus(cfg.lexicon, cfg.corpus, cfg.eval_suites);
    TinyPolicy backbone = pretrain_backbone(cfg.lexicon, cfg.backbone, cfg.pretrain_seed);
    TinyPolicy policy = backbone;
    policy.adapter = adapter;

    Metrics m = evaluate(policy, backbone, corpus.suites);
    std::cout << metrics_to_json(m).dump(2) << "\n";
    return kExitOk;
}

int cmd_compare(const std::vector<std::string>& report_paths, const fs::path& out) {
    std::vector<RunReport> reports;
    std::vector<std::string> names;
    for (const std::string& path : report_paths) {
        reports.push_back(report_from_json(json::parse(read_file(path))));
        fs::path p(path);
        std::string name = p.parent_path().filename().string();
        names.push_back(name.empty() ? p.stem().string() : name);
    }
    for (std::size_t i = 1; i < reports.size(); ++i) {
        if (reports[i].suite_hash != reports[0].suite_hash) {
            throw ConfigError("compare: eval-suite hash mismatch: " +
                              reports[0].suite_hash + " vs " + reports[i].suite_hash);
        }
    }

    std::ostringstream table;
    table << "metric";
    for (const auto& n : names) table << "," << n;
    table << "\n";
    auto row = [&](const char* name, auto getter) {
        table << name;
        for (const RunReport& r : reports) table << "," << json(getter(r)).dump();
        table << "\n";
    };
    row("asr_likelihood", [](const RunReport& r) { return r.final_metrics.asr_likelihood; });
    row("asr_decode", [](const RunReport& r) { return r.final_metrics.asr_decode; });
    row("utility_acc", [](const RunReport& r) { return r.final_metrics.utility_acc; });
    row("over_refusal_rate",
        [](const RunReport& r) { return r.final_metrics.over_refusal_rate; });
    row("toxic_logprob_shift",
        [](const RunReport& r) { return r.final_metrics.toxic_logprob_shift; });

    // Per-round ASR series, one column per run, rows on evaluated rounds.
    std::ostringstream series;
    series << "round";
    for (const auto& n : names) series << ",asr_" << n;
    series << "\n";
    for (std::size_t idx = 0; idx < reports[0].rounds.size(); ++idx) {
        bool any = false;
        for (const RunReport& r : reports) {
            any |= idx < r.rounds.size() && r.rounds[idx].has_metrics;
        }
        if (!any) continue;
        series << reports[0].rounds[idx].round;
        for (const RunReport& r : reports) {
            series << ",";
            if (idx < r.rounds.size() && r.rounds[idx].has_metrics) {
                series << json(r.rounds[idx].metrics.asr_likelihood).dump();
            }
        }
        series << "\n";
    }

    fs::create_directories(out);
    atomic_write_file(out / "compare.csv", table.str());
    atomic_write_file(out / "compare_series.csv", series.str());
    std::cout << table.str();

    // Final-ASR ordering, most robust run first.
    std::vector<std::size_t> order(reports.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return reports[a].final_metrics.asr_likelihood <
               reports[b].final_metrics.asr_likelihood;
    });
    std::cout << "asr ordering:";
    for (std::size_t i = 0; i < order.size(); ++i) {
        std::cout << (i == 0 ? " " : " <= ") << names[order[i]];
    }
    std::cout << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"federated preference alignment sandbox with on-device sanitization"};
    app.require_subcommand(1);

    std::string config_path, out_flag, mode = "replace", student_path, adapter_path;
    std::vector<std::string> report_paths;
    std::uint64_t seed_value = 0;
    int threads = 0;
    bool seed_given = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "experiment config JSON");
        sub->add_option("--out", out_flag, "output directory");
        auto* s = sub->add_option("--seed", seed_value, "override master_seed");
        s->each([&](const std::string&) { seed_given = true; });
    };

    CLI::App* gen = app.add_subcommand("gen-data", "generate corpus and suites");
    add_common(gen);

    CLI::App* distill = app.add_subcommand("distill", "train the guardian classifier");
    add_common(distill);

    CLI::App* federate = app.add_subcommand("federate", "run the federation");
    add_common(federate);
    federate->add_option("--mode", mode, "off|discard|replace")->required();
    federate->add_option("--student", student_path, "trained guardian JSON");
    federate->add_option("--threads", threads, "0 = serial");

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a saved adapter");
    add_common(eval_cmd);
    eval_cmd->add_option("--adapter", adapter_path, "adapter JSON")->required();

    CLI::App* compare = app.add_subcommand("compare", "compare run reports");
    add_common(compare);
    compare->add_option("reports", report_paths, "report.json paths")->expected(-2);

    CLI11_PARSE(app, argc, argv);

    try {
        std::optional<std::uint64_t> seed_override;
        if (seed_given) seed_override = seed_value;
        ExperimentConfig cfg = load_config(config_path, seed_override);
        fs::path out = resolve_out(out_flag, cfg);

        if (gen->parsed()) return cmd_gen_data(cfg, out);
        if (distill->parsed()) return cmd_distill(cfg, out);
        if (federate->parsed()) return cmd_federate(cfg, mode, student_path, out, threads);
        if (eval_cmd->parsed()) return cmd_eval(cfg, adapter_path);
        if (compare->parsed()) return cmd_compare(report_paths, out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const TrainingDiverged& e) {
        std::cerr << "training diverged: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}
