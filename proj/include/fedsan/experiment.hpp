#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "fedsan/serialize.hpp"

namespace fedsan {

/// Knobs for the guardian distillation pipeline beyond KDConfig itself.
struct DistillSpec {
    int size = 1000;  // transfer set size, 60/40 safe/unsafe
    int holdout_size = 400;
    KDConfig kd;
    double teacher_weight_per_hit = 1.5;
    double teacher_bias = -1.0;
    double teacher_failure_rate = 0.0;
};

/// One structured document holding every module's configuration. Defaults
/// reproduce the reference setup at desk scale; parsing rejects unknown keys.
struct ExperimentConfig {
    LexiconSpec lexicon;
    CorpusConfig corpus;
    EvalSuiteSizes eval_suites;
    DistillSpec distill;
    FederationConfig federation;  // holds DpoConfig + SanitizerConfig
    BackboneMode backbone = BackboneMode::Instruct;
    std::uint64_t pretrain_seed = 7;
    std::string out_dir;  // optional; CLI --out overrides
};

ExperimentConfig default_experiment_config();

/// Parses and schema-checks a config document. Missing keys take defaults;
/// unknown keys raise ConfigError naming the offender.
ExperimentConfig experiment_config_from_json(const json& j);

/// Canonical form used for digests and round-tripping. Execution-only knobs
/// (threads, out_dir) are not part of it so schedule choices cannot change
/// a run's identity.
json experiment_config_to_json(const ExperimentConfig& config);

/// Digest of (canonical config, sanitizer mode); identifies a run setup.
std::string config_digest(const ExperimentConfig& config, SanitizeMode mode);

struct GenDataResult {
    Corpus corpus;
    std::vector<std::pair<TokenSeq, SafetyLabel>> distill_train;
    std::vector<std::pair<TokenSeq, SafetyLabel>> distill_holdout;
};

GenDataResult run_gen_data(const ExperimentConfig& config);

struct DistillResult {
    StudentClassifier student;
    int transfer_safe = 0;
    int transfer_unsafe = 0;
    int override_count = 0;
    double holdout_agreement = 0.0;   // vs teacher hard labels
    double toxic_prompt_recall = 0.0; // on held-out toxic eval prompts
    double boundary_false_flag = 0.0; // on boundary-safe eval prompts
};

DistillResult run_distill(const ExperimentConfig& config);
json distill_report_to_json(const DistillResult& result);

/// Builds backbone, corpus, clients and suites from the config and runs the
/// federation in the given sanitizer mode. The student is required for
/// discard/replace and ignored for off.
RunReport run_federate(const ExperimentConfig& config, SanitizeMode mode,
                       const std::optional<StudentClassifier>& student, int threads);

/// Full cmd_federate behavior: run + write report.json, report.csv,
/// final_adapter.json (and student.json when a guardian is used) under
/// out_dir, all atomically.
RunReport run_federate_command(const ExperimentConfig& config, SanitizeMode mode,
                               const std::optional<StudentClassifier>& student,
                               const std::filesystem::path& out_dir, int threads);

SanitizeMode parse_mode(const std::string& mode);
std::string mode_name(SanitizeMode mode);

}  // namespace fedsan
