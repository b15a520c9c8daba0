#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedsan/datagen.hpp"
#include "fedsan/federation.hpp"
#include "fedsan/guardian.hpp"
#include "fedsan/policy.hpp"

namespace fedsan {

using json = nlohmann::json;

// Adapter files carry (r, alpha, d_in, d_out, B row-major, A row-major).
json adapter_to_json(const LoraAdapter& adapter);
LoraAdapter adapter_from_json(const json& j);

json student_to_json(const StudentClassifier& student);
StudentClassifier student_from_json(const json& j);

json metrics_to_json(const Metrics& m);
Metrics metrics_from_json(const json& j);

/// Report schema: config digest, suite hash, round records, final metrics.
/// Wall time and the final adapter are deliberately not part of the file;
/// reports with identical configs must be byte-identical.
json report_to_json(const RunReport& report);
RunReport report_from_json(const json& j);

/// One line per sample: {"prompt":[...],"chosen":[...],"rejected":[...],
/// "label":"benign"|"toxic","split":"train"|"eval"}.
std::string samples_to_jsonl(const std::vector<LabeledSample>& samples);
std::vector<LabeledSample> samples_from_jsonl(const std::string& text);

json eval_suites_to_json(const EvalSuites& suites);
EvalSuites eval_suites_from_json(const json& j);

/// Per-round CSV with the fixed column set
/// round,asr_likelihood,asr_decode,utility_acc,over_refusal,flagged_fraction,
/// mean_local_loss. Metric cells are empty on rounds without evaluation.
std::string report_to_csv(const RunReport& report);

/// Writes via temp file + rename so an interrupted run never leaves a
/// partial file behind.
void atomic_write_file(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

/// FNV-1a digest rendered as 16 hex characters.
std::string hex_digest(const std::string& content);

}  // namespace fedsan
