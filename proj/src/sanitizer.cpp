#include "fedsan/sanitizer.hpp"

namespace fedsan {

std::pair<bool, double> flag(const StudentClassifier& student,
                             const PreferencePair& pair, const SanitizerConfig& config) {
    TokenSeq input = pair.prompt;
    if (config.score_input == ScoreInput::PromptPlusRejected) {
        input.insert(input.end(), pair.rejected.begin(), pair.rejected.end());
    }
    double score = classify(student, input);
    return {score > config.tau, score};
}

std::pair<std::vector<PreferencePair>, SanitizationStats> sanitize_batch(
    const std::vector<PreferencePair>& batch, const StudentClassifier& student,
    const SanitizerConfig& config) {
    require(!batch.empty(), "sanitize_batch: empty batch");

    SanitizationStats stats;
    stats.total = static_cast<int>(batch.size());
    stats.scores.reserve(batch.size());

    std::vector<PreferencePair> out;
    out.reserve(batch.size());
    for (const PreferencePair& pair : batch) {
        auto [toxic, score] = flag(student, pair, config);
        stats.scores.push_back(score);
        if (!toxic || config.mode == SanitizeMode::Off) {
            if (toxic) stats.flagged += 1;  // Off mode still counts, acts on nothing
            out.push_back(pair);
            continue;
        }
        stats.flagged += 1;
        if (config.mode == SanitizeMode::Replace) {
            PreferencePair replaced;
            replaced.prompt = pair.prompt;
            replaced.chosen = config.refusal_template;
            replaced.rejected = pair.chosen;  // the original toxic completion
            replaced.origin = PairOrigin::SynthesizedRefusal;
            out.push_back(std::move(replaced));
            stats.replaced += 1;
        } else {  // DiscardOnly
            stats.discarded += 1;
        }
    }
    return {std::move(out), stats};
}

}  // namespace fedsan
