#include <doctest.h>

#include <cmath>
#include <set>
#include <type_traits>

#include "fedsan/experiment.hpp"
#include "fedsan/federation.hpp"
#include "fedsan/rng.hpp"
#include "fedsan/serialize.hpp"
#include "test_util.hpp"

using namespace fedsan;
using namespace fedsan::testutil;

namespace {

LoraAdapter scalar_adapter(double value) {
    LoraAdapter a;
    a.rank = 1;
    a.alpha = 1.0;
    a.B = Matrix::Constant(1, 1, value);
    a.A = Matrix::Constant(1, 1, 1.0);
    return a;
}

// Miniature experiment setup shared by the federation tests: small corpus,
// short runs, quick to execute.
ExperimentConfig small_config(std::uint64_t seed = 1) {
    ExperimentConfig cfg = default_experiment_config();
    cfg.corpus.total_pairs = 200;
    cfg.corpus.seed = seed;
    cfg.federation.rounds = 4;
    cfg.federation.eval_every = 2;
    cfg.federation.master_seed = seed;
    cfg.eval_suites.toxic = 30;
    cfg.eval_suites.benign = 30;
    cfg.eval_suites.boundary = 30;
    return cfg;
}

}  // namespace

TEST_CASE("sample_clients is deterministic, distinct, sorted") {
    FederationConfig cfg;
    cfg.num_clients = 10;
    cfg.clients_per_round = 2;
    cfg.master_seed = 42;

    auto a = sample_clients(3, cfg);
    auto b = sample_clients(3, cfg);
    CHECK(a == b);
    CHECK(a.size() == 2);
    CHECK(a[0] < a[1]);

    cfg.clients_per_round = 10;
    auto all = sample_clients(1, cfg);
    std::vector<int> expect{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    CHECK(all == expect);

    cfg.clients_per_round = 11;
    CHECK_THROWS_AS(sample_clients(1, cfg), std::invalid_argument);

    // Default-seed coverage across 100 rounds: at least 9 of 10 clients.
    cfg.clients_per_round = 2;
    cfg.master_seed = 1;
    std::set<int> seen;
    for (int t = 1; t <= 100; ++t) {
        for (int id : sample_clients(t, cfg)) seen.insert(id);
    }
    CHECK(seen.size() >= 9);
}

TEST_CASE("aggregate oracle cases") {
    // Single participant: bit-exact passthrough.
    LoraAdapter only = scalar_adapter(3.25);
    LoraAdapter out = aggregate({{0, only}}, {0.7});
    CHECK(out.B(0, 0) == 3.25);

    // Symmetric cancellation.
    Rng rng(33);
    LoraAdapter m = scalar_adapter(0.0);
    m.B = random_matrix(4, 2, rng);
    m.A = random_matrix(2, 4, rng);
    m.rank = 2;
    LoraAdapter neg = m;
    neg.B = -m.B;
    neg.A = -m.A;
    LoraAdapter zero = aggregate({{0, m}, {1, neg}}, {0.5, 0.5});
    CHECK(zero.B.cwiseAbs().maxCoeff() == 0.0);
    CHECK(zero.A.cwiseAbs().maxCoeff() == 0.0);

    // Hand-computed weighted sum on scalar adapters.
    LoraAdapter w = aggregate(
        {{0, scalar_adapter(1.0)}, {1, scalar_adapter(2.0)}, {2, scalar_adapter(3.0)}},
        {0.2, 0.3, 0.5});
    CHECK(std::abs(w.B(0, 0) - 2.3) < 1e-15);

    // Errors: shape mismatch and empty update list.
    LoraAdapter other = scalar_adapter(1.0);
    other.B = Matrix::Constant(2, 1, 1.0);
    CHECK_THROWS_AS(aggregate({{0, only}, {1, other}}, {0.5, 0.5}),
                    std::invalid_argument);
    CHECK_THROWS_AS(aggregate({}, {}), std::invalid_argument);
}

TEST_CASE("aggregate matches a brute-force oracle on random instances") {
    Rng rng(71);
    for (int rep = 0; rep < 50; ++rep) {
        int n = 1 + rng.uniform_int(5);
        Index d_in = 2 + rng.uniform_int(4);
        Index d_out = 2 + rng.uniform_int(4);
        int rank = 1 + rng.uniform_int(2);
        std::vector<std::pair<int, LoraAdapter>> updates;
        std::vector<double> weights;
        for (int i = 0; i < n; ++i) {
            LoraAdapter a;
            a.rank = rank;
            a.alpha = 16.0;
            a.B = random_matrix(d_in, rank, rng);
            a.A = random_matrix(rank, d_out, rng);
            updates.emplace_back(i, a);
            weights.push_back(0.1 + rng.next_double());
        }
        LoraAdapter got = aggregate(updates, weights);

        // Independent brute force: renormalize then sum entrywise, scalar
        // loops only.
        double total = 0.0;
        for (double w : weights) total += w;
        Matrix expect_b = Matrix::Zero(d_in, rank);
        Matrix expect_a = Matrix::Zero(rank, d_out);
        for (int i = 0; i < n; ++i) {
            for (Index r = 0; r < d_in; ++r)
                for (Index c = 0; c < rank; ++c)
                    expect_b(r, c) += (weights[i] / total) * updates[i].second.B(r, c);
            for (Index r = 0; r < rank; ++r)
                for (Index c = 0; c < d_out; ++c)
                    expect_a(r, c) += (weights[i] / total) * updates[i].second.A(r, c);
        }
        CHECK((got.B - expect_b).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((got.A - expect_a).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("aggregate linearity and fixed point") {
    Rng rng(91);
    std::vector<std::pair<int, LoraAdapter>> updates;
    std::vector<double> weights{0.2, 0.5, 0.3};
    for (int i = 0; i < 3; ++i) {
        LoraAdapter a;
        a.rank = 2;
        a.alpha = 4.0;
        a.B = random_matrix(3, 2, rng);
        a.A = random_matrix(2, 3, rng);
        updates.emplace_back(i, a);
    }
    LoraAdapter base = aggregate(updates, weights);

    double c = 2.718;
    auto scaled = updates;
    for (auto& [id, a] : scaled) {
        a.B *= c;
        a.A *= c;
    }
    LoraAdapter scaled_out = aggregate(scaled, weights);
    CHECK((scaled_out.B - c * base.B).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((scaled_out.A - c * base.A).cwiseAbs().maxCoeff() < 1e-12);

    auto same = updates;
    same[1].second = updates[0].second;
    same[2].second = updates[0].second;
    LoraAdapter fixed = aggregate(same, weights);
    CHECK((fixed.B - updates[0].second.B).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("client_update trivial contracts") {
    ExperimentConfig cfg = small_config();
    Corpus corpus = gen_corpus(cfg.lexicon, cfg.corpus, cfg.eval_suites);
    std::vector<LabeledSample> all;
    all.insert(all.end(), corpus.benign_train.begin(), corpus.benign_train.end());
    all.insert(all.end(), corpus.toxic_train.begin(), corpus.toxic_train.end());
    auto clients = partition_clients(all, cfg.federation.num_clients, 0.0, 1);

    SharedComponents shared;
    shared.backbone = pretrain_backbone(cfg.lexicon, BackboneMode::Instruct, 7);
    shared.reference = shared.backbone;
    shared.student = StudentClassifier::zeros(cfg.lexicon.vocab_size());
    shared.suites = corpus.suites;

    FederationConfig fed = cfg.federation;
    fed.sanitizer.mode = SanitizeMode::Off;
    fed.sanitizer.refusal_template =
        refusal_template(cfg.lexicon, shared.backbone.vocab);
    fed.dpo.learning_rate = 0.0;

    auto [adapter, stats] = client_update(shared.backbone.adapter, clients[0], shared,
                                          fed, 1);
    CHECK((adapter.B.array() == shared.backbone.adapter.B.array()).all());
    CHECK((adapter.A.array() == shared.backbone.adapter.A.array()).all());
    CHECK(stats.total == static_cast<int>(clients[0].dataset.size()));

    // Identical inputs give identical outputs.
    fed.dpo.learning_rate = 0.3;
    auto [a1, s1] = client_update(shared.backbone.adapter, clients[2], shared, fed, 5);
    auto [a2, s2] = client_update(shared.backbone.adapter, clients[2], shared, fed, 5);
    CHECK((a1.B.array() == a2.B.array()).all());
    CHECK((a1.A.array() == a2.A.array()).all());

    // All flagged + discard: training set empties, adapter returns unchanged.
    StudentClassifier paranoid = StudentClassifier::zeros(cfg.lexicon.vocab_size());
    paranoid.bias[1] = 10.0;  // everything scores ~1
    SharedComponents hostile = shared;
    hostile.student = paranoid;
    FederationConfig drop = fed;
    drop.sanitizer.mode = SanitizeMode::DiscardOnly;
    auto [untouched, s3] = client_update(shared.backbone.adapter, clients[1], hostile,
                                         drop, 2);
    CHECK(s3.discarded == s3.total);
    CHECK((untouched.B.array() == shared.backbone.adapter.B.array()).all());
}

TEST_CASE("run_federation no-op round keeps the initial model") {
    ExperimentConfig cfg = small_config();
    cfg.federation.rounds = 1;
    cfg.federation.clients_per_round = 1;
    cfg.federation.eval_every = 1;

    Corpus corpus = gen_corpus(cfg.lexicon, cfg.corpus, cfg.eval_suites);
    std::vector<LabeledSample> all;
    all.insert(all.end(), corpus.benign_train.begin(), corpus.benign_train.end());
    all.insert(all.end(), corpus.toxic_train.begin(), corpus.toxic_train.end());
    auto clients = partition_clients(all, cfg.federation.num_clients, 0.0, 1);

    SharedComponents shared;
    shared.backbone = pretrain_backbone(cfg.lexicon, BackboneMode::Instruct, 7);
    shared.reference = shared.backbone;
    shared.student = StudentClassifier::zeros(cfg.lexicon.vocab_size());
    shared.suites = corpus.suites;

    FederationConfig fed = cfg.federation;
    fed.sanitizer.mode = SanitizeMode::Off;
    fed.sanitizer.refusal_template =
        refusal_template(cfg.lexicon, shared.backbone.vocab);
    fed.dpo.learning_rate = 0.0;

    RunReport report = run_federation(clients, shared, fed);
    CHECK(report.rounds.size() == 1);
    CHECK((report.final_adapter.B.array() == shared.backbone.adapter.B.array()).all());

    Metrics init = evaluate(shared.backbone, shared.backbone, corpus.suites);
    CHECK(report.final_metrics.asr_likelihood == init.asr_likelihood);
}

TEST_CASE("serial and parallel execution produce byte-identical reports") {
    ExperimentConfig cfg = small_config(9);
    RunReport serial = run_federate(cfg, SanitizeMode::Off, std::nullopt, 0);
    RunReport parallel = run_federate(cfg, SanitizeMode::Off, std::nullopt, 4);
    CHECK(report_to_json(serial).dump() == report_to_json(parallel).dump());
    CHECK(adapter_to_json(serial.final_adapter).dump() ==
          adapter_to_json(parallel.final_adapter).dump());

    RunReport again = run_federate(cfg, SanitizeMode::Off, std::nullopt, 0);
    CHECK(report_to_json(serial).dump() == report_to_json(again).dump());
}

TEST_CASE("report invariants: one record per round, weights normalized") {
    ExperimentConfig cfg = small_config(3);
    RunReport report = run_federate(cfg, SanitizeMode::Off, std::nullopt, 0);
    CHECK(report.rounds.size() == static_cast<std::size_t>(cfg.federation.rounds));
    for (std::size_t i = 0; i < report.rounds.size(); ++i) {
        CHECK(report.rounds[i].round == static_cast<int>(i) + 1);
    }
    CHECK(report.rounds.back().has_metrics);
}

// ---------------------------------------------------------------------------
// Privacy locality: the round message type carries adapters and scalars only.
// The arity probe fails to compile-time-match if someone widens the struct,
// and the per-field type checks pin every member down.
// ---------------------------------------------------------------------------

namespace privacy {

struct probe {
    template <typename T>
    operator T() const;
};

template <typename T, typename... Args>
concept brace_constructible = requires { T{Args{}...}; };

template <typename T>
constexpr int field_count() {
    using P = probe;
    if constexpr (brace_constructible<T, P, P, P, P, P, P, P, P, P>) return 9;
    else if constexpr (brace_constructible<T, P, P, P, P, P, P, P, P>) return 8;
    else if constexpr (brace_constructible<T, P, P, P, P, P, P, P>) return 7;
    else if constexpr (brace_constructible<T, P, P, P, P, P, P>) return 6;
    else return -1;
}

}  // namespace privacy

TEST_CASE("round message schema is adapters and scalar statistics only") {
    // Exactly eight fields...
    static_assert(privacy::field_count<RoundClientMessage>() == 8,
                  "RoundClientMessage field set changed; re-audit privacy");
    // ...each an adapter payload or an arithmetic scalar.
    RoundClientMessage msg;
    static_assert(std::is_arithmetic_v<decltype(msg.client_id)>);
    static_assert(std::is_same_v<decltype(msg.adapter), LoraAdapter>);
    static_assert(std::is_arithmetic_v<decltype(msg.mean_local_loss)>);
    static_assert(std::is_arithmetic_v<decltype(msg.samples_total)>);
    static_assert(std::is_arithmetic_v<decltype(msg.samples_flagged)>);
    static_assert(std::is_arithmetic_v<decltype(msg.samples_replaced)>);
    static_assert(std::is_arithmetic_v<decltype(msg.samples_discarded)>);
    static_assert(std::is_arithmetic_v<decltype(msg.mean_score)>);

    // The serialized round records carry no token arrays either: every key
    // holds a number, the selected-id list, or the nested scalar objects.
    ExperimentConfig cfg = small_config(4);
    cfg.federation.rounds = 2;
    RunReport report = run_federate(cfg, SanitizeMode::Off, std::nullopt, 0);
    json rounds = report_to_json(report)["rounds"];
    for (const auto& rec : rounds) {
        std::set<std::string> keys;
        for (auto it = rec.begin(); it != rec.end(); ++it) keys.insert(it.key());
        std::set<std::string> expect{"round", "selected", "mean_local_loss",
                                     "sanitization", "metrics"};
        CHECK(keys == expect);
    }
    CHECK(true);
}
