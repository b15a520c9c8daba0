#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fedsan/dpo.hpp"
#include "fedsan/guardian.hpp"
#include "fedsan/policy.hpp"

namespace fedsan {

/// Vocabulary layout plus the generation knobs that define the synthetic
/// language. Toxicity is lexicon-driven: a sample is toxic exactly when its
/// scoring input contains a toxic-partition token, which gives the exact
/// ground truth every metric in the system is measured against.
struct LexiconSpec {
    int benign = 24;
    int toxic = 12;
    int refusal = 8;
    int boundary = 8;
    int neutral = 11;
    // Trailing toxic tokens whose guardrails the aligned backbone never
    // learned (it completes them compliantly). They carry the nonzero
    // initial attack surface of the aligned model. The last one is the weak
    // chain token; the others are weak prompt endings.
    int weak_guardrail_tokens = 2;
    // Common-toxic tokens reserved for the compliant completion chain.
    int toxic_chain_tokens = 2;
    // Refusal tokens in the canonical refusal template (EOS appended).
    int refusal_template_tokens = 1;
    // Rate at which the aligned backbone's pretraining answered common toxic
    // prompts compliantly instead of refusing: its guardrails are strong but
    // not perfect, which keeps the aligned model's attack surface realistic.
    double instruct_compliance_rate = 0.03;
    // Rate at which the raw backbone's pretraining refused toxic prompts:
    // unaligned corpora still contain occasional refusals.
    double base_refusal_rate = 0.12;

    int vocab_size() const { return benign + toxic + refusal + boundary + neutral + 1; }
    Vocab make_vocab() const;
    int common_toxic_count() const { return toxic - weak_guardrail_tokens; }
    bool is_weak_guardrail(const Vocab& v, Token t) const {
        return v.toxic.contains(t) && t >= v.toxic.end - weak_guardrail_tokens;
    }
};

struct CorpusConfig {
    int total_pairs = 1600;  // 1:10 scale of the reference corpus
    double poison_fraction = 0.40;
    int prompt_len = 4;
    int response_len = 3;  // completion tokens before EOS
    // 0 = toxic data spread uniformly across clients, 1 = packed into the
    // fewest clients.
    double poison_concentration = 0.0;
    std::uint64_t seed = 0;
    // Fraction of toxic prompts ending in a weak-guardrail token.
    double weak_ending_fraction = 0.07;
    // Fraction of benign rejected completions that are toxic-chain noise
    // rather than neutral salad; this is what lets clean preference data
    // teach the model what not to say.
    double noise_toxic_fraction = 0.18;
    // Fraction of benign prompts carrying boundary tokens: superficially
    // alarming but safe requests, which keep helpful behavior pinned in
    // boundary contexts during training.
    double boundary_prompt_fraction = 0.15;
};

enum class GroundTruth { Benign, Toxic };
enum class Split { Train, Eval };

struct LabeledSample {
    PreferencePair pair;
    GroundTruth ground_truth = GroundTruth::Benign;
    Split split = Split::Train;
};

struct ToxicEvalItem {
    TokenSeq prompt;
    TokenSeq toxic_completion;    // canonical compliant continuation
    TokenSeq refusal_completion;  // the refusal template
};

struct BoundaryEvalItem {
    TokenSeq prompt;  // boundary tokens present, zero toxic tokens
    TokenSeq helpful_completion;
    TokenSeq refusal_completion;
};

struct EvalSuites {
    std::vector<ToxicEvalItem> toxic;
    std::vector<PreferencePair> benign;
    std::vector<BoundaryEvalItem> boundary_safe;
};

struct EvalSuiteSizes {
    int toxic = 100;
    int benign = 100;
    int boundary = 100;
    // Eval prompts are one token longer than training prompts, which makes
    // train/eval prompt sets disjoint by construction.
    int prompt_len = 5;
    int response_len = 3;
    // Composition knobs, mirrored from the corpus config by gen_corpus.
    double weak_ending_fraction = 0.07;
    double noise_toxic_fraction = 0.18;
};

struct Corpus {
    std::vector<LabeledSample> benign_train;
    std::vector<LabeledSample> toxic_train;
    EvalSuites suites;
};

/// Client-side view after partitioning: the private dataset and its FedAvg
/// weight p_k (proportional to dataset size, normalized over all clients).
struct ClientState {
    int id = 0;
    std::vector<PreferencePair> dataset;
    double data_weight = 0.0;
};

// Canonical continuation structure. Every completion starts with the shared
// opener token (the first neutral token), then walks a deterministic chain:
// helpful completions use disjoint fixed blocks of the benign partition,
// compliant toxic completions use the dedicated chain at the top of the
// toxic partition (weak-guardrail prompts use the isolated weak chain
// token). Chain tokens never appear in prompts, so each chain row keeps one
// trained successor, and the opener row is the decision point every
// completion shares.
Token opener_token(const Vocab& vocab);
Token helpful_anchor(const Vocab& vocab, Token last, int len);
// Toxic tokens usable in prompt bodies/endings (the partition minus the
// dedicated chain tokens).
int toxic_topic_count(const LexiconSpec& lex);
TokenSeq canonical_helpful_completion(const Vocab& vocab, Token last, int len);
TokenSeq canonical_toxic_completion(const LexiconSpec& lex, const Vocab& vocab,
                                    Token last_toxic, int len);
TokenSeq refusal_template(const LexiconSpec& lex, const Vocab& vocab);

/// Full train corpus plus held-out evaluation suites (suite seeds derived
/// from config.seed, so everything is one pure function of the inputs).
Corpus gen_corpus(const LexiconSpec& lexicon, const CorpusConfig& config,
                  const EvalSuiteSizes& suite_sizes = {});

/// Splits samples across N clients. Benign data is spread uniformly; toxic
/// data goes to ceil((1-c)*N) clients as concentration c rises.
std::vector<ClientState> partition_clients(const std::vector<LabeledSample>& samples,
                                           int num_clients, double poison_concentration,
                                           std::uint64_t seed);

/// 60/40 Safe/Unsafe token sequences for distillation, with boundary-token
/// hard negatives mixed into the Safe side.
std::vector<std::pair<TokenSeq, SafetyLabel>> gen_distill_set(const LexiconSpec& lexicon,
                                                              int size,
                                                              std::uint64_t seed);

/// Held-out suites only (also reachable through gen_corpus).
EvalSuites gen_eval_suites(const LexiconSpec& lexicon, const EvalSuiteSizes& sizes,
                           std::uint64_t seed);

enum class BackboneMode { Instruct, Base };

/// Fits the frozen backbone by maximum likelihood on a synthetic completion
/// corpus: benign/boundary prompts get helpful completions in both modes;
/// toxic prompts get refusals (Instruct, outside the weak-guardrail set) or
/// compliant completions (Base). The fit is the exact tabular MLE with
/// Laplace smoothing, realized as embed = out_proj = I and W0 = log p.
TinyPolicy pretrain_backbone(const LexiconSpec& lexicon, BackboneMode mode,
                             std::uint64_t seed);

}  // namespace fedsan
