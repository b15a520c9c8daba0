#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedsan/policy.hpp"

namespace fedsan {

enum class PairOrigin { Original, SynthesizedRefusal };

/// One preference-optimization training unit: prompt, preferred response,
/// dispreferred response.
struct PreferencePair {
    TokenSeq prompt;
    TokenSeq chosen;
    TokenSeq rejected;
    PairOrigin origin = PairOrigin::Original;

    bool operator==(const PreferencePair& o) const {
        return prompt == o.prompt && chosen == o.chosen && rejected == o.rejected &&
               origin == o.origin;
    }
};

struct DpoConfig {
    double beta = 0.35;
    double learning_rate = 0.5;
    int batch_size = 6;
    int local_epochs = 1;
    std::uint64_t seed = 0;
};

/// -log sigmoid(beta * [(log pi(y_w|x) - log ref(y_w|x))
///                      - (log pi(y_l|x) - log ref(y_l|x))]).
/// Always positive; exactly ln 2 when policy == reference.
double dpo_pair_loss(const TinyPolicy& policy, const TinyPolicy& reference,
                     const PreferencePair& pair, double beta);

struct DpoBatchResult {
    double mean_loss = 0.0;
    AdapterGrad grad;
};

/// Mean loss and mean adapter gradient over a batch. The reference policy is
/// treated as a constant: it shifts the margin but contributes no gradient.
DpoBatchResult dpo_batch_grad(const TinyPolicy& policy, const TinyPolicy& reference,
                              std::span<const PreferencePair> batch, double beta);

/// Plain SGD over shuffled mini-batches for config.local_epochs epochs,
/// starting from a copy of global_adapter. The shuffle order is a pure
/// function of config.seed. An empty dataset returns the input unchanged.
/// Throws TrainingDiverged if the loss goes non-finite. mean_loss_out, when
/// given, receives the mean of all batch losses seen during training.
LoraAdapter local_train(const LoraAdapter& global_adapter,
                        const std::vector<PreferencePair>& dataset,
                        const TinyPolicy& reference, const DpoConfig& config,
                        double* mean_loss_out = nullptr);

}  // namespace fedsan
