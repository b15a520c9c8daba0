#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fedsan/datagen.hpp"
#include "fedsan/dpo.hpp"
#include "fedsan/eval.hpp"
#include "fedsan/sanitizer.hpp"

namespace fedsan {

struct FederationConfig {
    int num_clients = 10;
    int clients_per_round = 2;
    int rounds = 100;
    DpoConfig dpo;
    SanitizerConfig sanitizer;
    int eval_every = 10;
    std::uint64_t master_seed = 1;
    int threads = 0;  // 0 = serial
    // Re-sync the DPO reference to the current global every this many
    // rounds; 0 keeps the round-0 reference frozen for the whole run. The
    // frozen default bounds total policy movement through margin
    // saturation; re-anchoring refuels preference pressure each window and
    // lets the low-rank factors wander much further.
    int resync_reference_every = 0;
};

/// Immutable components every client sees. The student is the zero
/// classifier when no guardian is deployed (it flags nothing at tau = 0.5).
struct SharedComponents {
    TinyPolicy backbone;   // frozen weights + the round-0 adapter
    TinyPolicy reference;  // frozen DPO reference
    StudentClassifier student;
    EvalSuites suites;
};

/// The only data type that crosses the client/server boundary: the adapter
/// payload plus scalar statistics. No token sequence ever rides along.
struct RoundClientMessage {
    int client_id = 0;
    LoraAdapter adapter;
    double mean_local_loss = 0.0;
    int samples_total = 0;
    int samples_flagged = 0;
    int samples_replaced = 0;
    int samples_discarded = 0;
    double mean_score = 0.0;
};

struct RoundRecord {
    int round = 0;
    std::vector<int> selected;
    double mean_local_loss = 0.0;
    int san_total = 0;
    int san_flagged = 0;
    int san_replaced = 0;
    int san_discarded = 0;
    bool has_metrics = false;
    Metrics metrics;
};

struct RunReport {
    std::string config_digest;
    std::string suite_hash;
    std::vector<RoundRecord> rounds;
    Metrics final_metrics;
    LoraAdapter final_adapter;
    // Informational only; never serialized, report files must be byte-stable.
    double wall_seconds = 0.0;
};

/// m distinct client ids for round t, sorted ascending; a pure function of
/// (master_seed, t).
std::vector<int> sample_clients(int round, const FederationConfig& config);

/// One client's round: sanitize the private dataset, train from a copy of
/// the global adapter with the per-(round, client) derived seed. Raw samples
/// never leave this call.
std::pair<LoraAdapter, SanitizationStats> client_update(const LoraAdapter& global,
                                                        const ClientState& client,
                                                        const SharedComponents& shared,
                                                        const FederationConfig& config,
                                                        int round,
                                                        double* mean_loss_out = nullptr);

/// Entrywise weighted average of the B and A factors, with the weights
/// renormalized over the participating subset. Rank and alpha pass through.
LoraAdapter aggregate(const std::vector<std::pair<int, LoraAdapter>>& updates,
                      const std::vector<double>& weights);

/// The full round protocol: sample -> client updates (parallelizable) ->
/// aggregate -> periodic evaluation. Deterministic and independent of the
/// execution schedule.
RunReport run_federation(const std::vector<ClientState>& clients,
                         const SharedComponents& shared, const FederationConfig& config);

}  // namespace fedsan
