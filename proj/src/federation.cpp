#include "fedsan/federation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <numeric>
#include <string>

#include "fedsan/rng.hpp"

namespace fedsan {

std::vector<int> sample_clients(int round, const FederationConfig& config) {
    require(config.clients_per_round >= 1 &&
                config.clients_per_round <= config.num_clients,
            "sample_clients: need 1 <= m <= N");
    std::vector<int> ids(config.num_clients);
    std::iota(ids.begin(), ids.end(), 0);
    Rng rng(mix_seed(config.master_seed, static_cast<std::uint64_t>(round), 0x5e1ec7ULL));
    // Partial Fisher-Yates: the first m slots become a uniform sample
    // without replacement.
    for (int i = 0; i < config.clients_per_round; ++i) {
        int j = i + rng.uniform_int(config.num_clients - i);
        std::swap(ids[i], ids[j]);
    }
    ids.resize(config.clients_per_round);
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::pair<LoraAdapter, SanitizationStats> client_update(const LoraAdapter& global,
                                                        const ClientState& client,
                                                        const SharedComponents& shared,
                                                        const FederationConfig& config,
                                                        int round,
                                                        double* mean_loss_out) {
    require(global.d_in() == shared.backbone.d_in() &&
                global.d_out() == shared.backbone.d_out(),
            "client_update: adapter/backbone shape mismatch");
    require(!client.dataset.empty(), "client_update: client dataset is empty");

    auto [sanitized, stats] = sanitize_batch(client.dataset, shared.student,
                                             config.sanitizer);

    DpoConfig dpo_cfg = config.dpo;
    dpo_cfg.seed = mix_seed(config.master_seed, static_cast<std::uint64_t>(round),
                            static_cast<std::uint64_t>(client.id));
    try {
        LoraAdapter updated =
            local_train(global, sanitized, shared.reference, dpo_cfg, mean_loss_out);
        return {std::move(updated), std::move(stats)};
    } catch (const TrainingDiverged& e) {
        throw TrainingDiverged("client " + std::to_string(client.id) + ", round " +
                               std::to_string(round) + ": " + e.what());
    }
}

LoraAdapter aggregate(const std::vector<std::pair<int, LoraAdapter>>& updates,
                      const std::vector<double>& weights) {
    require(!updates.empty(), "aggregate: no updates");
    require(updates.size() == weights.size(), "aggregate: weight count mismatch");

    const LoraAdapter& first = updates.front().second;
    double weight_sum = 0.0;
    for (std::size_t i = 0; i < updates.size(); ++i) {
        require(updates[i].second.same_shape(first), "aggregate: adapter shape mismatch");
        require(weights[i] > 0.0, "aggregate: weights must be positive");
        weight_sum += weights[i];
    }
    if (updates.size() == 1) return updates.front().second;

    LoraAdapter out;
    out.rank = first.rank;
    out.alpha = first.alpha;
    out.B = Matrix::Zero(first.B.rows(), first.B.cols());
    out.A = Matrix::Zero(first.A.rows(), first.A.cols());
    for (std::size_t i = 0; i < updates.size(); ++i) {
        double p = weights[i] / weight_sum;
        out.B += p * updates[i].second.B;
        out.A += p * updates[i].second.A;
    }
    return out;
}

RunReport run_federation(const std::vector<ClientState>& clients,
                         const SharedComponents& shared, const FederationConfig& config) {
    require(static_cast<int>(clients.size()) == config.num_clients,
            "run_federation: client list does not match num_clients");
    require(config.rounds >= 1, "run_federation: rounds must be >= 1");
    double weight_total = 0.0;
    for (const ClientState& c : clients) weight_total += c.data_weight;
    require(std::abs(weight_total - 1.0) <= 1e-9,
            "run_federation: client weights must sum to 1");

    auto t_start = std::chrono::steady_clock::now();

    RunReport report;
    report.rounds.reserve(config.rounds);

    LoraAdapter global = shared.backbone.adapter;
    TinyPolicy reference = shared.reference;

    TinyPolicy eval_policy = shared.backbone;  // vocab + frozen weights reused
    const TinyPolicy& initial_policy = shared.backbone;

    SharedComponents resynced;
    bool use_resynced = false;
    for (int round = 1; round <= config.rounds; ++round) {
        if (config.resync_reference_every > 0 &&
            (round - 1) % config.resync_reference_every == 0 && round > 1) {
            reference.adapter = global;
            resynced = SharedComponents{shared.backbone, reference, shared.student,
                                        shared.suites};
            use_resynced = true;
        }
        const SharedComponents& round_shared = use_resynced ? resynced : shared;

        std::vector<int> selected = sample_clients(round, config);
        const int m = static_cast<int>(selected.size());

        // Results land in per-client slots so the aggregation order (and the
        // bytes of everything downstream) cannot depend on scheduling.
        std::vector<RoundClientMessage> messages(m);
        auto update_one = [&](int slot) {
            const ClientState& client = clients[selected[slot]];
            double mean_loss = 0.0;
            auto [adapter, stats] =
                client_update(global, client, round_shared, config, round, &mean_loss);
            RoundClientMessage msg;
            msg.client_id = client.id;
            msg.adapter = std::move(adapter);
            msg.mean_local_loss = mean_loss;
            msg.samples_total = stats.total;
            msg.samples_flagged = stats.flagged;
            msg.samples_replaced = stats.replaced;
            msg.samples_discarded = stats.discarded;
            msg.mean_score = stats.scores.empty()
                                 ? 0.0
                                 : std::accumulate(stats.scores.begin(),
                                                   stats.scores.end(), 0.0) /
                                       static_cast<double>(stats.scores.size());
            messages[slot] = std::move(msg);
        };

        if (config.threads <= 0 || m == 1) {
            for (int slot = 0; slot < m; ++slot) update_one(slot);
        } else {
            std::vector<std::future<void>> jobs;
            jobs.reserve(m);
            for (int slot = 0; slot < m; ++slot) {
                jobs.push_back(std::async(std::launch::async, update_one, slot));
            }
            for (auto& job : jobs) job.get();
        }

        std::vector<std::pair<int, LoraAdapter>> updates;
        std::vector<double> weights;
        updates.reserve(m);
        weights.reserve(m);
        for (const RoundClientMessage& msg : messages) {
            updates.emplace_back(msg.client_id, msg.adapter);
            weights.push_back(clients[msg.client_id].data_weight);
        }
        global = aggregate(updates, weights);

        RoundRecord rec;
        rec.round = round;
        rec.selected = selected;
        for (const RoundClientMessage& msg : messages) {
            rec.mean_local_loss += msg.mean_local_loss / m;
            rec.san_total += msg.samples_total;
            rec.san_flagged += msg.samples_flagged;
            rec.san_replaced += msg.samples_replaced;
            rec.san_discarded += msg.samples_discarded;
        }
        if (round % config.eval_every == 0 || round == config.rounds) {
            eval_policy.adapter = global;
            rec.metrics = evaluate(eval_policy, initial_policy, shared.suites);
            rec.has_metrics = true;
        }
        report.rounds.push_back(std::move(rec));
    }

    report.final_metrics = report.rounds.back().metrics;
    report.final_adapter = global;
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return report;
}

}  // namespace fedsan
