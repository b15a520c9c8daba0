#include "fedsan/dpo.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "fedsan/math.hpp"
#include "fedsan/rng.hpp"

namespace fedsan {

namespace {

void check_compatible(const TinyPolicy& policy, const TinyPolicy& reference) {
    require(policy.vocab.size == reference.vocab.size,
            "dpo: policy and reference vocab sizes differ");
    require(policy.d_in() == reference.d_in() && policy.d_out() == reference.d_out(),
            "dpo: policy and reference shapes differ");
}

double pair_margin(const TinyPolicy& policy, const TinyPolicy& reference,
                   const PreferencePair& pair, double beta) {
    double chosen_ratio =
        log_prob(policy, pair.prompt, pair.chosen) - log_prob(reference, pair.prompt, pair.chosen);
    double rejected_ratio =
        log_prob(policy, pair.prompt, pair.rejected) -
        log_prob(reference, pair.prompt, pair.rejected);
    return beta * (chosen_ratio - rejected_ratio);
}

}  // namespace

double dpo_pair_loss(const TinyPolicy& policy, const TinyPolicy& reference,
                     const PreferencePair& pair, double beta) {
    check_compatible(policy, reference);
    require(beta > 0.0, "dpo_pair_loss: beta must be positive");
    return -log_sigmoid(pair_margin(policy, reference, pair, beta));
}

DpoBatchResult dpo_batch_grad(const TinyPolicy& policy, const TinyPolicy& reference,
                              std::span<const PreferencePair> batch, double beta) {
    check_compatible(policy, reference);
    require(!batch.empty(), "dpo_batch_grad: empty batch");

    DpoBatchResult out;
    out.grad = AdapterGrad(policy.adapter.d_in(), policy.adapter.rank,
                           policy.adapter.d_out());
    for (const PreferencePair& pair : batch) {
        double margin = pair_margin(policy, reference, pair, beta);
        out.mean_loss += -log_sigmoid(margin);
        // d(-log sigmoid(m))/d theta = -sigmoid(-m) * dm/dtheta
        double coeff = beta * sigmoid(-margin);
        AdapterGrad g_chosen = log_prob_grad(policy, pair.prompt, pair.chosen);
        AdapterGrad g_rejected = log_prob_grad(policy, pair.prompt, pair.rejected);
        out.grad.dB += coeff * (g_rejected.dB - g_chosen.dB);
        out.grad.dA += coeff * (g_rejected.dA - g_chosen.dA);
    }
    double inv = 1.0 / static_cast<double>(batch.size());
    out.mean_loss *= inv;
    out.grad *= inv;
    return out;
}

LoraAdapter local_train(const LoraAdapter& global_adapter,
                        const std::vector<PreferencePair>& dataset,
                        const TinyPolicy& reference, const DpoConfig& config,
                        double* mean_loss_out) {
    if (mean_loss_out) *mean_loss_out = 0.0;
    if (dataset.empty()) return global_adapter;
    require(config.batch_size >= 1, "local_train: batch_size must be >= 1");
    require(config.beta > 0.0, "local_train: beta must be positive");

    TinyPolicy policy = reference;
    policy.adapter = global_adapter;

    // Per-pair reference log-probs are constants of the run; hoist them out
    // of the epoch loop.
    std::vector<double> ref_chosen(dataset.size()), ref_rejected(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        ref_chosen[i] = log_prob(reference, dataset[i].prompt, dataset[i].chosen);
        ref_rejected[i] = log_prob(reference, dataset[i].prompt, dataset[i].rejected);
    }

    Rng rng(mix_seed(config.seed, 0xd90c0ffeULL));
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    double loss_sum = 0.0;
    int batches = 0;
    for (int epoch = 0; epoch < config.local_epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            std::size_t stop = std::min(order.size(), start + config.batch_size);
            AdapterGrad grad(policy.adapter.d_in(), policy.adapter.rank,
                             policy.adapter.d_out());
            double batch_loss = 0.0;
            for (std::size_t k = start; k < stop; ++k) {
                const PreferencePair& pair = dataset[order[k]];
                double margin =
                    config.beta *
                    ((log_prob(policy, pair.prompt, pair.chosen) - ref_chosen[order[k]]) -
                     (log_prob(policy, pair.prompt, pair.rejected) - ref_rejected[order[k]]));
                if (!std::isfinite(margin)) {
                    throw TrainingDiverged("local_train: non-finite margin at epoch " +
                                           std::to_string(epoch) + ", batch offset " +
                                           std::to_string(start));
                }
                batch_loss += -log_sigmoid(margin);
                double coeff = config.beta * sigmoid(-margin);
                AdapterGrad g_chosen = log_prob_grad(policy, pair.prompt, pair.chosen);
                AdapterGrad g_rejected = log_prob_grad(policy, pair.prompt, pair.rejected);
                grad.dB += coeff * (g_rejected.dB - g_chosen.dB);
                grad.dA += coeff * (g_rejected.dA - g_chosen.dA);
            }
            double inv = 1.0 / static_cast<double>(stop - start);
            batch_loss *= inv;
            if (!std::isfinite(batch_loss) || !grad.all_finite()) {
                throw TrainingDiverged("local_train: non-finite loss at epoch " +
                                       std::to_string(epoch) + ", batch offset " +
                                       std::to_string(start));
            }
            policy.adapter.B -= config.learning_rate * inv * grad.dB;
            policy.adapter.A -= config.learning_rate * inv * grad.dA;
            if (!policy.adapter.B.allFinite() || !policy.adapter.A.allFinite()) {
                throw TrainingDiverged("local_train: adapter went non-finite at epoch " +
                                       std::to_string(epoch) + ", batch offset " +
                                       std::to_string(start));
            }
            loss_sum += batch_loss;
            batches += 1;
        }
    }
    if (mean_loss_out && batches > 0) *mean_loss_out = loss_sum / batches;
    return policy.adapter;
}

}  // namespace fedsan
