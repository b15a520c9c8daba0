#pragma once

#include <utility>
#include <vector>

#include "fedsan/dpo.hpp"
#include "fedsan/guardian.hpp"

namespace fedsan {

enum class SanitizeMode { Off, DiscardOnly, Replace };
enum class ScoreInput { PromptOnly, PromptPlusRejected };

struct SanitizerConfig {
    double tau = 0.5;  // flag threshold, strict inequality
    SanitizeMode mode = SanitizeMode::Replace;
    TokenSeq refusal_template;  // refusal/neutral tokens ending in EOS
    ScoreInput score_input = ScoreInput::PromptOnly;
};

struct SanitizationStats {
    int total = 0;
    int flagged = 0;
    int replaced = 0;
    int discarded = 0;
    std::vector<double> scores;  // per-sample, client-local only
};

/// Scores a pair with the guardian and applies the strict threshold:
/// flagged iff score > tau.
std::pair<bool, double> flag(const StudentClassifier& student,
                             const PreferencePair& pair, const SanitizerConfig& config);

/// Gatekeeper pass over a client batch.
///   Off:         pairs unchanged, scores recorded.
///   Replace:     flagged pair -> (prompt, chosen = refusal template,
///                rejected = original chosen, origin = SynthesizedRefusal).
///   DiscardOnly: flagged pairs removed.
/// Retained pairs keep their input order. An empty result is allowed.
std::pair<std::vector<PreferencePair>, SanitizationStats> sanitize_batch(
    const std::vector<PreferencePair>& batch, const StudentClassifier& student,
    const SanitizerConfig& config);

}  // namespace fedsan
