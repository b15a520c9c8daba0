#include <doctest.h>

#include "fedsan/experiment.hpp"

using namespace fedsan;

namespace {

ExperimentConfig small_config() {
    ExperimentConfig cfg = default_experiment_config();
    cfg.corpus.total_pairs = 200;
    cfg.distill.size = 400;
    cfg.distill.holdout_size = 200;
    cfg.eval_suites.toxic = 30;
    cfg.eval_suites.benign = 30;
    cfg.eval_suites.boundary = 30;
    return cfg;
}

}  // namespace

TEST_CASE("distillation with a flaky teacher reports overrides") {
    ExperimentConfig cfg = small_config();
    cfg.distill.teacher_failure_rate = 0.1;
    DistillResult res = run_distill(cfg);
    CHECK(res.override_count > 0);
    CHECK(res.transfer_safe + res.transfer_unsafe == cfg.distill.size);
    CHECK(res.transfer_unsafe == 160);  // 40% of 400
}

TEST_CASE("zero-epoch distillation reports near-chance agreement") {
    ExperimentConfig cfg = small_config();
    cfg.distill.kd.epochs = 0;
    DistillResult res = run_distill(cfg);
    // The untrained student scores 0.5 everywhere and flags nothing.
    CHECK(res.holdout_agreement < 0.95);
    CHECK(res.holdout_agreement > 0.3);
    CHECK(res.toxic_prompt_recall == 0.0);
}

TEST_CASE("default distill balance matches the 60/40 split") {
    ExperimentConfig cfg = default_experiment_config();
    GenDataResult data = run_gen_data(cfg);
    int safe = 0, unsafe = 0;
    for (const auto& [tokens, label] : data.distill_train) {
        (label == SafetyLabel::Safe ? safe : unsafe) += 1;
    }
    CHECK(safe == 600);
    CHECK(unsafe == 400);
}

TEST_CASE("federate rejects guarded modes without a guardian") {
    ExperimentConfig cfg = small_config();
    cfg.federation.rounds = 1;
    CHECK_THROWS_AS(static_cast<void>(
                        run_federate(cfg, SanitizeMode::Replace, std::nullopt, 0)),
                    ConfigError);
}
