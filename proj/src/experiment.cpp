#include "fedsan/experiment.hpp"

#include <algorithm>

#include "fedsan/rng.hpp"

namespace fedsan {

namespace {

// Schema checker: every object must contain only known keys; values are
// pulled with explicit types so a wrong type names the offending key.
class Schema {
public:
    Schema(const json& j, std::string scope) : j_(j), scope_(std::move(scope)) {
        if (!j_.is_object()) throw ConfigError(scope_ + ": expected an object");
    }

    ~Schema() = default;

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (std::find(known_.begin(), known_.end(), it.key()) == known_.end()) {
                throw ConfigError(scope_ + ": unknown key '" + it.key() + "'");
            }
        }
    }

    template <typename T>
    void get(const char* key, T& out) {
        known_.push_back(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(scope_ + ": bad value for key '" + std::string(key) + "'");
        }
    }

    bool has(const char* key) {
        known_.push_back(key);
        return j_.contains(key);
    }

    const json& sub(const char* key) { return j_.at(key); }

private:
    const json& j_;
    std::string scope_;
    std::vector<std::string> known_;
};

}  // namespace

ExperimentConfig default_experiment_config() { return ExperimentConfig{}; }

ExperimentConfig experiment_config_from_json(const json& j) {
    ExperimentConfig cfg;
    Schema root(j, "config");

    if (root.has("lexicon")) {
        Schema s(root.sub("lexicon"), "lexicon");
        s.get("benign", cfg.lexicon.benign);
        s.get("toxic", cfg.lexicon.toxic);
        s.get("refusal", cfg.lexicon.refusal);
        s.get("boundary", cfg.lexicon.boundary);
        s.get("neutral", cfg.lexicon.neutral);
        s.get("weak_guardrail_tokens", cfg.lexicon.weak_guardrail_tokens);
        s.get("toxic_chain_tokens", cfg.lexicon.toxic_chain_tokens);
        s.get("refusal_template_tokens", cfg.lexicon.refusal_template_tokens);
        s.get("instruct_compliance_rate", cfg.lexicon.instruct_compliance_rate);
        s.get("base_refusal_rate", cfg.lexicon.base_refusal_rate);
        s.finish();
    }
    if (root.has("corpus")) {
        Schema s(root.sub("corpus"), "corpus");
        s.get("total_pairs", cfg.corpus.total_pairs);
        s.get("poison_fraction", cfg.corpus.poison_fraction);
        s.get("prompt_len", cfg.corpus.prompt_len);
        s.get("response_len", cfg.corpus.response_len);
        s.get("poison_concentration", cfg.corpus.poison_concentration);
        s.get("seed", cfg.corpus.seed);
        s.get("weak_ending_fraction", cfg.corpus.weak_ending_fraction);
        s.get("noise_toxic_fraction", cfg.corpus.noise_toxic_fraction);
        s.get("boundary_prompt_fraction", cfg.corpus.boundary_prompt_fraction);
        s.finish();
    }
    if (root.has("eval_suites")) {
        Schema s(root.sub("eval_suites"), "eval_suites");
        s.get("toxic", cfg.eval_suites.toxic);
        s.get("benign", cfg.eval_suites.benign);
        s.get("boundary", cfg.eval_suites.boundary);
        s.get("prompt_len", cfg.eval_suites.prompt_len);
        s.get("response_len", cfg.eval_suites.response_len);
        s.finish();
    }
    if (root.has("distill")) {
        Schema s(root.sub("distill"), "distill");
        s.get("size", cfg.distill.size);
        s.get("holdout_size", cfg.distill.holdout_size);
        s.get("alpha", cfg.distill.kd.alpha);
        s.get("temperature", cfg.distill.kd.temperature);
        s.get("learning_rate", cfg.distill.kd.learning_rate);
        s.get("epochs", cfg.distill.kd.epochs);
        s.get("seed", cfg.distill.kd.seed);
        s.get("teacher_first_kl", cfg.distill.kd.teacher_first_kl);
        s.get("teacher_weight_per_hit", cfg.distill.teacher_weight_per_hit);
        s.get("teacher_bias", cfg.distill.teacher_bias);
        s.get("teacher_failure_rate", cfg.distill.teacher_failure_rate);
        s.finish();
    }
    if (root.has("dpo")) {
        Schema s(root.sub("dpo"), "dpo");
        s.get("beta", cfg.federation.dpo.beta);
        s.get("learning_rate", cfg.federation.dpo.learning_rate);
        s.get("batch_size", cfg.federation.dpo.batch_size);
        s.get("local_epochs", cfg.federation.dpo.local_epochs);
        s.finish();
    }
    if (root.has("sanitizer")) {
        Schema s(root.sub("sanitizer"), "sanitizer");
        s.get("tau", cfg.federation.sanitizer.tau);
        std::string score_input = "prompt";
        s.get("score_input", score_input);
        if (score_input == "prompt") {
            cfg.federation.sanitizer.score_input = ScoreInput::PromptOnly;
        } else if (score_input == "prompt_plus_rejected") {
            cfg.federation.sanitizer.score_input = ScoreInput::PromptPlusRejected;
        } else {
            throw ConfigError("sanitizer: bad value for key 'score_input'");
        }
        s.finish();
    }
    if (root.has("federation")) {
        Schema s(root.sub("federation"), "federation");
        s.get("num_clients", cfg.federation.num_clients);
        s.get("clients_per_round", cfg.federation.clients_per_round);
        s.get("rounds", cfg.federation.rounds);
        s.get("eval_every", cfg.federation.eval_every);
        s.get("master_seed", cfg.federation.master_seed);
        s.get("resync_reference_every", cfg.federation.resync_reference_every);
        s.finish();
    }
    {
        std::string backbone = "instruct";
        root.get("backbone", backbone);
        if (backbone == "instruct") {
            cfg.backbone = BackboneMode::Instruct;
        } else if (backbone == "base") {
            cfg.backbone = BackboneMode::Base;
        } else {
            throw ConfigError("config: bad value for key 'backbone'");
        }
    }
    root.get("pretrain_seed", cfg.pretrain_seed);
    root.get("out_dir", cfg.out_dir);
    root.finish();

    if (cfg.federation.sanitizer.tau <= 0.0 || cfg.federation.sanitizer.tau >= 1.0) {
        throw ConfigError("sanitizer: tau must lie in (0,1)");
    }
    if (cfg.corpus.poison_fraction < 0.0 || cfg.corpus.poison_fraction >= 1.0) {
        throw ConfigError("corpus: poison_fraction must lie in [0,1)");
    }
    if (cfg.federation.clients_per_round < 1 ||
        cfg.federation.clients_per_round > cfg.federation.num_clients) {
        throw ConfigError("federation: clients_per_round must satisfy 1 <= m <= N");
    }
    return cfg;
}

json experiment_config_to_json(const ExperimentConfig& c) {
    return json{
        {"lexicon",
         {{"benign", c.lexicon.benign},
          {"toxic", c.lexicon.toxic},
          {"refusal", c.lexicon.refusal},
          {"boundary", c.lexicon.boundary},
          {"neutral", c.lexicon.neutral},
          {"weak_guardrail_tokens", c.lexicon.weak_guardrail_tokens},
          {"toxic_chain_tokens", c.lexicon.toxic_chain_tokens},
          {"refusal_template_tokens", c.lexicon.refusal_template_tokens},
          {"instruct_compliance_rate", c.lexicon.instruct_compliance_rate},
          {"base_refusal_rate", c.lexicon.base_refusal_rate}}},
        {"corpus",
         {{"total_pairs", c.corpus.total_pairs},
          {"poison_fraction", c.corpus.poison_fraction},
          {"prompt_len", c.corpus.prompt_len},
          {"response_len", c.corpus.response_len},
          {"poison_concentration", c.corpus.poison_concentration},
          {"seed", c.corpus.seed},
          {"weak_ending_fraction", c.corpus.weak_ending_fraction},
          {"noise_toxic_fraction", c.corpus.noise_toxic_fraction},
          {"boundary_prompt_fraction", c.corpus.boundary_prompt_fraction}}},
        {"eval_suites",
         {{"toxic", c.eval_suites.toxic},
          {"benign", c.eval_suites.benign},
          {"boundary", c.eval_suites.boundary},
          {"prompt_len", c.eval_suites.prompt_len},
          {"response_len", c.eval_suites.response_len}}},
        {"distill",
         {{"size", c.distill.size},
          {"holdout_size", c.distill.holdout_size},
          {"alpha", c.distill.kd.alpha},
          {"temperature", c.distill.kd.temperature},
          {"learning_rate", c.distill.kd.learning_rate},
          {"epochs", c.distill.kd.epochs},
          {"seed", c.distill.kd.seed},
          {"teacher_first_kl", c.distill.kd.teacher_first_kl},
          {"teacher_weight_per_hit", c.distill.teacher_weight_per_hit},
          {"teacher_bias", c.distill.teacher_bias},
          {"teacher_failure_rate", c.distill.teacher_failure_rate}}},
        {"dpo",
         {{"beta", c.federation.dpo.beta},
          {"learning_rate", c.federation.dpo.learning_rate},
          {"batch_size", c.federation.dpo.batch_size},
          {"local_epochs", c.federation.dpo.local_epochs}}},
        {"sanitizer",
         {{"tau", c.federation.sanitizer.tau},
          {"score_input", c.federation.sanitizer.score_input == ScoreInput::PromptOnly
                              ? "prompt"
                              : "prompt_plus_rejected"}}},
        {"federation",
         {{"num_clients", c.federation.num_clients},
          {"clients_per_round", c.federation.clients_per_round},
          {"rounds", c.federation.rounds},
          {"eval_every", c.federation.eval_every},
          {"master_seed", c.federation.master_seed},
          {"resync_reference_every", c.federation.resync_reference_every}}},
        {"backbone", c.backbone == BackboneMode::Instruct ? "instruct" : "base"},
        {"pretrain_seed", c.pretrain_seed}};
}

std::string config_digest(const ExperimentConfig& config, SanitizeMode mode) {
    json j = experiment_config_to_json(config);
    j["mode"] = mode_name(mode);
    return hex_digest(j.dump());
}

GenDataResult run_gen_data(const ExperimentConfig& config) {
    GenDataResult out;
    out.corpus = gen_corpus(config.lexicon, config.corpus, config.eval_suites);
    out.distill_train = gen_distill_set(config.lexicon, config.distill.size,
                                        mix_seed(config.corpus.seed, 0xd1577aULL));
    out.distill_holdout = gen_distill_set(config.lexicon, config.distill.holdout_size,
                                          mix_seed(config.corpus.seed, 0xd157b0ULL));
    return out;
}

namespace {

TeacherOracle make_teacher(const ExperimentConfig& config, const Vocab& vocab) {
    TeacherOracle teacher;
    for (Token t = vocab.toxic.begin; t < vocab.toxic.end; ++t) {
        teacher.toxic_lexicon.insert(t);
    }
    teacher.weight_per_hit = config.distill.teacher_weight_per_hit;
    teacher.bias = config.distill.teacher_bias;
    teacher.failure_rate = config.distill.teacher_failure_rate;
    teacher.failure_seed = mix_seed(config.distill.kd.seed, 0xfa11ULL);
    return teacher;
}

}  // namespace

DistillResult run_distill(const ExperimentConfig& config) {
    Vocab vocab = config.lexicon.make_vocab();
    TeacherOracle teacher = make_teacher(config, vocab);
    GenDataResult data = run_gen_data(config);

    std::vector<TransferSample> transfer = build_transfer_set(teacher, data.distill_train);

    DistillResult res;
    for (const TransferSample& s : transfer) {
        if (s.override_applied) res.override_count += 1;
    }
    for (const auto& [tokens, label] : data.distill_train) {
        (label == SafetyLabel::Safe ? res.transfer_safe : res.transfer_unsafe) += 1;
    }

    res.student = train_student(transfer, config.distill.kd, vocab.size);

    int agree = 0;
    for (const auto& [tokens, label] : data.distill_holdout) {
        Vector tz = teacher_score(teacher, tokens);
        bool teacher_unsafe = tz[1] > tz[0];
        bool student_unsafe = classify(res.student, tokens) > 0.5;
        if (teacher_unsafe == student_unsafe) agree += 1;
    }
    res.holdout_agreement =
        data.distill_holdout.empty()
            ? 0.0
            : agree / static_cast<double>(data.distill_holdout.size());

    int recall_hits = 0;
    for (const ToxicEvalItem& item : data.corpus.suites.toxic) {
        if (classify(res.student, item.prompt) > config.federation.sanitizer.tau) {
            recall_hits += 1;
        }
    }
    res.toxic_prompt_recall =
        recall_hits / static_cast<double>(data.corpus.suites.toxic.size());

    int false_flags = 0;
    for (const BoundaryEvalItem& item : data.corpus.suites.boundary_safe) {
        if (classify(res.student, item.prompt) > config.federation.sanitizer.tau) {
            false_flags += 1;
        }
    }
    res.boundary_false_flag =
        false_flags / static_cast<double>(data.corpus.suites.boundary_safe.size());
    return res;
}

json distill_report_to_json(const DistillResult& r) {
    return json{{"transfer_safe", r.transfer_safe},
                {"transfer_unsafe", r.transfer_unsafe},
                {"override_count", r.override_count},
                {"holdout_agreement", r.holdout_agreement},
                {"toxic_prompt_recall", r.toxic_prompt_recall},
                {"boundary_false_flag", r.boundary_false_flag}};
}

RunReport run_federate(const ExperimentConfig& config, SanitizeMode mode,
                       const std::optional<StudentClassifier>& student, int threads) {
    if (mode != SanitizeMode::Off && !student.has_value()) {
        throw ConfigError("federate: mode '" + mode_name(mode) +
                          "' needs a trained guardian; run the distill step first");
    }

    Vocab vocab = config.lexicon.make_vocab();
    Corpus corpus = gen_corpus(config.lexicon, config.corpus, config.eval_suites);

    std::vector<LabeledSample> train;
    train.reserve(corpus.benign_train.size() + corpus.toxic_train.size());
    train.insert(train.end(), corpus.benign_train.begin(), corpus.benign_train.end());
    train.insert(train.end(), corpus.toxic_train.begin(), corpus.toxic_train.end());

    std::vector<ClientState> clients = partition_clients(
        train, config.federation.num_clients, config.corpus.poison_concentration,
        mix_seed(config.corpus.seed, 0x9a77ULL));

    SharedComponents shared;
    shared.backbone = pretrain_backbone(config.lexicon, config.backbone,
                                        config.pretrain_seed);
    shared.reference = shared.backbone;  // round-0 global: zero-delta adapter
    shared.student = student.value_or(StudentClassifier::zeros(vocab.size));
    shared.suites = corpus.suites;

    FederationConfig fed = config.federation;
    fed.threads = threads;
    fed.sanitizer.mode = mode;
    fed.sanitizer.refusal_template = refusal_template(config.lexicon, vocab);

    RunReport report = run_federation(clients, shared, fed);
    report.config_digest = config_digest(config, mode);
    report.suite_hash = hex_digest(eval_suites_to_json(corpus.suites).dump());
    return report;
}

RunReport run_federate_command(const ExperimentConfig& config, SanitizeMode mode,
                               const std::optional<StudentClassifier>& student,
                               const std::filesystem::path& out_dir, int threads) {
    RunReport report = run_federate(config, mode, student, threads);

    std::filesystem::create_directories(out_dir);
    atomic_write_file(out_dir / "report.json", report_to_json(report).dump(2) + "\n");
    atomic_write_file(out_dir / "report.csv", report_to_csv(report));
    atomic_write_file(out_dir / "final_adapter.json",
                      adapter_to_json(report.final_adapter).dump(2) + "\n");
    if (mode != SanitizeMode::Off && student.has_value()) {
        atomic_write_file(out_dir / "student.json",
                          student_to_json(*student).dump(2) + "\n");
    }
    return report;
}

SanitizeMode parse_mode(const std::string& mode) {
    if (mode == "off") return SanitizeMode::Off;
    if (mode == "discard") return SanitizeMode::DiscardOnly;
    if (mode == "replace") return SanitizeMode::Replace;
    throw ConfigError("unknown mode '" + mode + "' (expected off|discard|replace)");
}

std::string mode_name(SanitizeMode mode) {
    switch (mode) {
        case SanitizeMode::Off: return "off";
        case SanitizeMode::DiscardOnly: return "discard";
        case SanitizeMode::Replace: return "replace";
    }
    return "off";
}

}  // namespace fedsan
