#include <doctest.h>

#include <filesystem>

#include "fedsan/experiment.hpp"
#include "fedsan/rng.hpp"
#include "fedsan/serialize.hpp"
#include "test_util.hpp"

using namespace fedsan;
using namespace fedsan::testutil;

TEST_CASE("adapter serialization round-trips bit-exactly") {
    Rng rng(8);
    LoraAdapter a;
    a.rank = 3;
    a.alpha = 16.0;
    a.B = random_matrix(5, 3, rng);
    a.A = random_matrix(3, 7, rng);
    a.B(0, 0) = 0.1 + 0.2;  // classic non-representable sum

    json j = adapter_to_json(a);
    LoraAdapter back = adapter_from_json(j);
    CHECK(back.rank == 3);
    CHECK(back.alpha == 16.0);
    CHECK((back.B.array() == a.B.array()).all());
    CHECK((back.A.array() == a.A.array()).all());

    // Text form is stable too.
    CHECK(adapter_to_json(back).dump() == j.dump());
}

TEST_CASE("student serialization round-trips") {
    StudentClassifier s = StudentClassifier::zeros(16);
    Rng rng(9);
    for (Index i = 0; i < 16; ++i) {
        s.weights(i, 0) = rng.normal();
        s.weights(i, 1) = rng.normal();
    }
    s.bias << -0.25, 1.75;
    StudentClassifier back = student_from_json(student_to_json(s));
    CHECK((back.weights.array() == s.weights.array()).all());
    CHECK(back.bias == s.bias);
}

TEST_CASE("corpus JSONL round-trips and uses the documented schema") {
    LexiconSpec lex;
    CorpusConfig cfg;
    cfg.total_pairs = 60;
    cfg.seed = 2;
    Corpus corpus = gen_corpus(lex, cfg);
    std::vector<LabeledSample> all;
    all.insert(all.end(), corpus.benign_train.begin(), corpus.benign_train.end());
    all.insert(all.end(), corpus.toxic_train.begin(), corpus.toxic_train.end());

    std::string text = samples_to_jsonl(all);
    auto back = samples_from_jsonl(text);
    REQUIRE(back.size() == all.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
        CHECK(back[i].pair == all[i].pair);
        CHECK(back[i].ground_truth == all[i].ground_truth);
        CHECK(back[i].split == all[i].split);
    }
    CHECK(samples_to_jsonl(back) == text);

    json first = json::parse(text.substr(0, text.find('\n')));
    CHECK(first.contains("prompt"));
    CHECK(first.contains("chosen"));
    CHECK(first.contains("rejected"));
    CHECK(first["label"] == "benign");
    CHECK(first["split"] == "train");
}

TEST_CASE("report serialization carries the full schema") {
    ExperimentConfig cfg = default_experiment_config();
    cfg.corpus.total_pairs = 120;
    cfg.federation.rounds = 2;
    cfg.federation.eval_every = 1;
    cfg.eval_suites.toxic = 10;
    cfg.eval_suites.benign = 10;
    cfg.eval_suites.boundary = 10;

    RunReport report = run_federate(cfg, SanitizeMode::Off, std::nullopt, 0);
    json j = report_to_json(report);
    CHECK(j.contains("config_digest"));
    CHECK(j.contains("suite_hash"));
    CHECK(j["rounds"].size() == 2);
    CHECK(j.contains("final"));

    RunReport back = report_from_json(j);
    CHECK(back.config_digest == report.config_digest);
    CHECK(back.rounds.size() == report.rounds.size());
    CHECK(back.final_metrics.asr_likelihood == report.final_metrics.asr_likelihood);
    CHECK(report_to_json(back).dump() == j.dump());

    std::string csv = report_to_csv(report);
    CHECK(csv.find("round,asr_likelihood,asr_decode,utility_acc,over_refusal,"
                   "flagged_fraction,mean_local_loss") == 0);
}

TEST_CASE("experiment config round-trip and schema rejection") {
    ExperimentConfig def = default_experiment_config();
    json j = experiment_config_to_json(def);
    ExperimentConfig back = experiment_config_from_json(j);
    CHECK(experiment_config_to_json(back).dump() == j.dump());

    json bad = j;
    bad["corpus"]["typo_key"] = 1;
    CHECK_THROWS_WITH_AS(static_cast<void>(experiment_config_from_json(bad)),
                         doctest::Contains("typo_key"), ConfigError);

    json bad2 = j;
    bad2["corpus"]["poison_fraction"] = "forty percent";
    CHECK_THROWS_AS(static_cast<void>(experiment_config_from_json(bad2)), ConfigError);

    json bad3 = j;
    bad3["sanitizer"]["tau"] = 1.5;
    CHECK_THROWS_AS(static_cast<void>(experiment_config_from_json(bad3)), ConfigError);
}

TEST_CASE("atomic_write_file leaves no temp residue and overwrites") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "fedsan_test_io";
    fs::create_directories(dir);
    fs::path target = dir / "x.json";

    atomic_write_file(target, "first");
    CHECK(read_file(target) == "first");
    atomic_write_file(target, "second");
    CHECK(read_file(target) == "second");
    CHECK_FALSE(fs::exists(dir / "x.json.tmp"));
    fs::remove_all(dir);
}

TEST_CASE("digests are stable and content sensitive") {
    CHECK(hex_digest("abc") == hex_digest("abc"));
    CHECK(hex_digest("abc") != hex_digest("abd"));
    CHECK(hex_digest("abc").size() == 16);

    ExperimentConfig cfg = default_experiment_config();
    std::string off = config_digest(cfg, SanitizeMode::Off);
    std::string rep = config_digest(cfg, SanitizeMode::Replace);
    CHECK(off != rep);  // mode is part of the run identity
    cfg.federation.master_seed += 1;
    CHECK(config_digest(cfg, SanitizeMode::Off) != off);
}
