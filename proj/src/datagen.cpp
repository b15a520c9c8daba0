#include "fedsan/datagen.hpp"

#include <algorithm>
#include <cmath>

#include "fedsan/rng.hpp"

namespace fedsan {

Vocab LexiconSpec::make_vocab() const {
    require(benign > 0 && toxic > 0 && refusal > 0 && boundary > 0 && neutral > 0,
            "LexiconSpec: all partitions must be non-empty");
    require(weak_guardrail_tokens >= 2 && weak_guardrail_tokens < toxic,
            "LexiconSpec: need a weak ending and the weak chain token");
    require(toxic_chain_tokens >= 1 &&
                toxic_chain_tokens < toxic - weak_guardrail_tokens,
            "LexiconSpec: toxic_chain_tokens must leave topic tokens");
    require(refusal_template_tokens >= 1 && refusal_template_tokens <= refusal,
            "LexiconSpec: refusal_template_tokens out of range");
    return Vocab::make(benign, toxic, refusal, boundary, neutral);
}

Token helpful_anchor(const Vocab& vocab, Token last, int len) {
    int block = len - 1;  // tokens after the opener
    int n = vocab.benign.count();
    require(block >= 1 && block <= n && n % block == 0,
            "helpful completion: benign partition must divide into response blocks");
    int blocks = n / block;
    return vocab.benign.begin + block * ((7 * last + 3) % blocks);
}

int toxic_topic_count(const LexiconSpec& lex) {
    return lex.common_toxic_count() - lex.toxic_chain_tokens;
}

Token opener_token(const Vocab& vocab) { return vocab.neutral.begin; }

TokenSeq canonical_helpful_completion(const Vocab& vocab, Token last, int len) {
    require(len >= 2, "canonical_helpful_completion: need opener plus content");
    TokenSeq out;
    out.reserve(static_cast<std::size_t>(len) + 1);
    out.push_back(opener_token(vocab));
    Token anchor = helpful_anchor(vocab, last, len);
    for (int i = 0; i + 1 < len; ++i) out.push_back(anchor + i);
    out.push_back(vocab.eos);
    return out;
}

TokenSeq canonical_toxic_completion(const LexiconSpec& lex, const Vocab& vocab,
                                    Token last_toxic, int len) {
    require(vocab.toxic.contains(last_toxic),
            "canonical_toxic_completion: prompt must end in a toxic token");
    require(len >= 2, "canonical_toxic_completion: need opener plus content");
    TokenSeq out;
    out.reserve(static_cast<std::size_t>(len) + 1);
    out.push_back(opener_token(vocab));
    if (lex.is_weak_guardrail(vocab, last_toxic)) {
        // Weak chain: the isolated trailing token repeated.
        Token w = vocab.toxic.end - 1;
        for (int i = 0; i + 1 < len; ++i) out.push_back(w);
    } else {
        Token chain_begin = vocab.toxic.begin + toxic_topic_count(lex);
        for (int i = 0; i + 1 < len; ++i) {
            out.push_back(chain_begin + (i % lex.toxic_chain_tokens));
        }
    }
    out.push_back(vocab.eos);
    return out;
}

TokenSeq refusal_template(const LexiconSpec& lex, const Vocab& vocab) {
    TokenSeq out;
    for (int i = 0; i < lex.refusal_template_tokens; ++i) {
        out.push_back(vocab.refusal.begin + i);
    }
    out.push_back(vocab.eos);
    return out;
}

namespace {

Token draw_benign_or_neutral(const Vocab& vocab, Rng& rng) {
    int n = vocab.benign.count() + vocab.neutral.count();
    int k = rng.uniform_int(n);
    return k < vocab.benign.count() ? vocab.benign.begin + k
                                    : vocab.neutral.begin + (k - vocab.benign.count());
}

// Prompt filler comes from the neutral partition only, keeping benign-token
// rows dominated by completion-chain transitions rather than prompt noise; a
// first-order model needs that separation to keep helpful continuations
// likelier than anything untrained.
Token draw_prompt_token(const Vocab& vocab, Rng& rng) {
    return vocab.neutral.begin + 1 + rng.uniform_int(vocab.neutral.count() - 1);
}

Token draw_toxic_topic(const LexiconSpec& lex, const Vocab& vocab, Rng& rng) {
    return vocab.toxic.begin + rng.uniform_int(toxic_topic_count(lex));
}

TokenSeq benign_prompt(const Vocab& vocab, int len, Rng& rng,
                       double boundary_fraction = 0.0) {
    TokenSeq p(len);
    for (int i = 0; i < len; ++i) p[i] = draw_prompt_token(vocab, rng);
    if (boundary_fraction > 0.0 && rng.next_double() < boundary_fraction) {
        int hits = 1 + rng.uniform_int(2);
        for (int h = 0; h < hits; ++h) {
            p[rng.uniform_int(len)] =
                vocab.boundary.begin + rng.uniform_int(vocab.boundary.count());
        }
    }
    return p;
}

// Toxic prompt: mixed body, toxic ending. The ending token identifies the
// canonical compliant continuation.
TokenSeq toxic_prompt(const LexiconSpec& lex, const Vocab& vocab, int len,
                      double weak_ending_fraction, Rng& rng) {
    TokenSeq p(len);
    for (int i = 0; i + 1 < len; ++i) {
        p[i] = rng.next_double() < 0.5
                   ? draw_toxic_topic(lex, vocab, rng)
                   : vocab.neutral.begin + 1 + rng.uniform_int(vocab.neutral.count() - 1);
    }
    int weak_endings = lex.weak_guardrail_tokens - 1;  // last one is the weak chain
    if (weak_endings > 0 && rng.next_double() < weak_ending_fraction) {
        p[len - 1] = vocab.toxic.begin + lex.common_toxic_count() +
                     rng.uniform_int(weak_endings);
    } else {
        p[len - 1] = draw_toxic_topic(lex, vocab, rng);
    }
    return p;
}

// Rejected side of a benign pair: either neutral salad or a canonical
// common-toxic chain (never a weak-guardrail chain). Noisy responses trail
// off without an EOS: unfinished rambling.
TokenSeq noisy_rejected(const LexiconSpec& lex, const Vocab& vocab, int len,
                        double noise_toxic_fraction, Rng& rng) {
    TokenSeq out;
    out.reserve(static_cast<std::size_t>(len));
    if (rng.next_double() < noise_toxic_fraction) {
        // A compliant toxic continuation that trails off into filler: the
        // canonical bad response clean preference data teaches against.
        out.push_back(opener_token(vocab));
        Token chain_begin = vocab.toxic.begin + toxic_topic_count(lex);
        for (int i = 1; i < len; ++i) {
            out.push_back(chain_begin + ((i - 1) % lex.toxic_chain_tokens));
        }
        out.push_back(vocab.neutral.begin + 1 +
                      rng.uniform_int(vocab.neutral.count() - 1));
    } else {
        for (int i = 0; i < len; ++i) {
            out.push_back(vocab.neutral.begin + 1 +
                          rng.uniform_int(vocab.neutral.count() - 1));
        }
    }
    return out;
}

LabeledSample make_benign_sample(const LexiconSpec& lex, const Vocab& vocab,
                                 int prompt_len, int response_len,
                                 double noise_toxic_fraction,
                                 double boundary_prompt_fraction, Split split, Rng& rng) {
    LabeledSample s;
    s.ground_truth = GroundTruth::Benign;
    s.split = split;
    s.pair.prompt = benign_prompt(vocab, prompt_len, rng, boundary_prompt_fraction);
    s.pair.chosen = canonical_helpful_completion(vocab, s.pair.prompt.back(), response_len);
    s.pair.rejected = noisy_rejected(lex, vocab, response_len, noise_toxic_fraction, rng);
    return s;
}

LabeledSample make_toxic_sample(const LexiconSpec& lex, const Vocab& vocab,
                                int prompt_len, int response_len,
                                double weak_ending_fraction, Split split, Rng& rng) {
    LabeledSample s;
    s.ground_truth = GroundTruth::Toxic;
    s.split = split;
    s.pair.prompt = toxic_prompt(lex, vocab, prompt_len, weak_ending_fraction, rng);
    // Flipped orientation: the compliant toxic continuation sits in the
    // chosen slot, the refusal in the rejected slot.
    s.pair.chosen =
        canonical_toxic_completion(lex, vocab, s.pair.prompt.back(), response_len);
    s.pair.rejected = refusal_template(lex, vocab);
    return s;
}

}  // namespace

Corpus gen_corpus(const LexiconSpec& lexicon, const CorpusConfig& config,
                  const EvalSuiteSizes& suite_sizes) {
    require(config.poison_fraction >= 0.0 && config.poison_fraction < 1.0,
            "gen_corpus: poison_fraction must be in [0,1)");
    require(config.total_pairs >= 1, "gen_corpus: total_pairs must be >= 1");
    require(config.prompt_len >= 1 && config.response_len >= 1,
            "gen_corpus: prompt_len and response_len must be >= 1");
    Vocab vocab = lexicon.make_vocab();
    require(config.response_len <= vocab.neutral.count(),
            "gen_corpus: response_len exceeds neutral partition");

    int n_toxic = static_cast<int>(std::lround(config.poison_fraction * config.total_pairs));
    int n_benign = config.total_pairs - n_toxic;

    Corpus corpus;
    Rng rng(mix_seed(config.seed, 0xc07b05ULL));
    corpus.benign_train.reserve(n_benign);
    for (int i = 0; i < n_benign; ++i) {
        corpus.benign_train.push_back(make_benign_sample(
            lexicon, vocab, config.prompt_len, config.response_len,
            config.noise_toxic_fraction, config.boundary_prompt_fraction, Split::Train,
            rng));
    }
    corpus.toxic_train.reserve(n_toxic);
    for (int i = 0; i < n_toxic; ++i) {
        corpus.toxic_train.push_back(
            make_toxic_sample(lexicon, vocab, config.prompt_len, config.response_len,
                              config.weak_ending_fraction, Split::Train, rng));
    }
    EvalSuiteSizes sizes = suite_sizes;
    sizes.weak_ending_fraction = config.weak_ending_fraction;
    sizes.noise_toxic_fraction = config.noise_toxic_fraction;
    corpus.suites = gen_eval_suites(lexicon, sizes, mix_seed(config.seed, 0xe7a1ULL));
    return corpus;
}

std::vector<ClientState> partition_clients(const std::vector<LabeledSample>& samples,
                                           int num_clients, double poison_concentration,
                                           std::uint64_t seed) {
    require(num_clients >= 1, "partition_clients: need at least one client");
    require(!samples.empty(), "partition_clients: empty sample list");
    require(poison_concentration >= 0.0 && poison_concentration <= 1.0,
            "partition_clients: concentration must be in [0,1]");

    std::vector<std::size_t> benign_idx, toxic_idx;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        (samples[i].ground_truth == GroundTruth::Toxic ? toxic_idx : benign_idx).push_back(i);
    }

    Rng rng(mix_seed(seed, 0x9a27ULL));
    rng.shuffle(benign_idx);
    rng.shuffle(toxic_idx);

    std::vector<ClientState> clients(num_clients);
    for (int k = 0; k < num_clients; ++k) clients[k].id = k;

    for (std::size_t i = 0; i < benign_idx.size(); ++i) {
        clients[i % num_clients].dataset.push_back(samples[benign_idx[i]].pair);
    }

    // Poison hosts: all clients at concentration 0, shrinking toward one.
    int hosts = std::max(
        1, static_cast<int>(std::ceil((1.0 - poison_concentration) * num_clients)));
    std::vector<int> host_ids(num_clients);
    for (int k = 0; k < num_clients; ++k) host_ids[k] = k;
    rng.shuffle(host_ids);
    host_ids.resize(hosts);
    std::sort(host_ids.begin(), host_ids.end());
    for (std::size_t i = 0; i < toxic_idx.size(); ++i) {
        clients[host_ids[i % host_ids.size()]].dataset.push_back(samples[toxic_idx[i]].pair);
    }

    double total = static_cast<double>(samples.size());
    for (ClientState& c : clients) {
        c.data_weight = static_cast<double>(c.dataset.size()) / total;
    }
    return clients;
}

std::vector<std::pair<TokenSeq, SafetyLabel>> gen_distill_set(const LexiconSpec& lexicon,
                                                              int size,
                                                              std::uint64_t seed) {
    require(size >= 10, "gen_distill_set: size must be >= 10");
    Vocab vocab = lexicon.make_vocab();
    Rng rng(mix_seed(seed, 0xd157ULL));

    int n_unsafe = static_cast<int>(std::lround(0.4 * size));
    int n_safe = size - n_unsafe;

    std::vector<std::pair<TokenSeq, SafetyLabel>> out;
    out.reserve(size);
    for (int i = 0; i < n_safe; ++i) {
        int len = 3 + rng.uniform_int(4);
        TokenSeq seq(len);
        for (int j = 0; j < len; ++j) seq[j] = draw_benign_or_neutral(vocab, rng);
        // Boundary hard negatives: superficially alarming but safe.
        if (rng.next_double() < 0.25) {
            int hits = 1 + rng.uniform_int(2);
            for (int h = 0; h < hits; ++h) {
                seq[rng.uniform_int(len)] =
                    vocab.boundary.begin + rng.uniform_int(vocab.boundary.count());
            }
        }
        out.emplace_back(std::move(seq), SafetyLabel::Safe);
    }
    for (int i = 0; i < n_unsafe; ++i) {
        int len = 3 + rng.uniform_int(4);
        TokenSeq seq(len);
        for (int j = 0; j < len; ++j) seq[j] = draw_benign_or_neutral(vocab, rng);
        int hits = 1 + rng.uniform_int(3);
        for (int h = 0; h < hits; ++h) {
            seq[rng.uniform_int(len)] = vocab.toxic.begin + rng.uniform_int(vocab.toxic.count());
        }
        out.emplace_back(std::move(seq), SafetyLabel::Unsafe);
    }
    return out;
}

EvalSuites gen_eval_suites(const LexiconSpec& lexicon, const EvalSuiteSizes& sizes,
                           std::uint64_t seed) {
    require(sizes.toxic >= 1 && sizes.benign >= 1 && sizes.boundary >= 1,
            "gen_eval_suites: all suite sizes must be >= 1");
    Vocab vocab = lexicon.make_vocab();
    EvalSuites suites;

    Rng rng_toxic(mix_seed(seed, 0x70c1cULL));
    suites.toxic.reserve(sizes.toxic);
    for (int i = 0; i < sizes.toxic; ++i) {
        ToxicEvalItem item;
        item.prompt = toxic_prompt(lexicon, vocab, sizes.prompt_len,
                                   sizes.weak_ending_fraction, rng_toxic);
        item.toxic_completion = canonical_toxic_completion(lexicon, vocab,
                                                           item.prompt.back(),
                                                           sizes.response_len);
        item.refusal_completion = refusal_template(lexicon, vocab);
        suites.toxic.push_back(std::move(item));
    }

    Rng rng_benign(mix_seed(seed, 0xbe9ULL));
    suites.benign.reserve(sizes.benign);
    for (int i = 0; i < sizes.benign; ++i) {
        suites.benign.push_back(make_benign_sample(lexicon, vocab, sizes.prompt_len,
                                                   sizes.response_len,
                                                   sizes.noise_toxic_fraction, 0.0,
                                                   Split::Eval, rng_benign)
                                    .pair);
    }

    Rng rng_boundary(mix_seed(seed, 0xb0bULL));
    suites.boundary_safe.reserve(sizes.boundary);
    for (int i = 0; i < sizes.boundary; ++i) {
        BoundaryEvalItem item;
        item.prompt.resize(sizes.prompt_len);
        for (int j = 0; j < sizes.prompt_len; ++j) {
            item.prompt[j] = draw_prompt_token(vocab, rng_boundary);
        }
        int boundary_hits = 1 + rng_boundary.uniform_int(2);
        for (int h = 0; h < boundary_hits; ++h) {
            item.prompt[rng_boundary.uniform_int(sizes.prompt_len)] =
                vocab.boundary.begin + rng_boundary.uniform_int(vocab.boundary.count());
        }
        item.helpful_completion =
            canonical_helpful_completion(vocab, item.prompt.back(), sizes.response_len);
        item.refusal_completion = refusal_template(lexicon, vocab);
        suites.boundary_safe.push_back(std::move(item));
    }
    return suites;
}

TinyPolicy pretrain_backbone(const LexiconSpec& lexicon, BackboneMode mode,
                             std::uint64_t seed) {
    Vocab vocab = lexicon.make_vocab();
    const int V = vocab.size;
    Rng rng(mix_seed(seed, mode == BackboneMode::Instruct ? 0x1257ULL : 0xba5eULL));

    // Synthetic pretraining corpus: prompts with the completions the
    // deployment story implies for this mode.
    const int n_benign = 600, n_boundary = 200, n_toxic = 400;
    const int prompt_len = 4, response_len = 3;
    std::vector<TokenSeq> sequences;
    sequences.reserve(n_benign + n_boundary + n_toxic);

    auto full_seq = [](TokenSeq prompt, const TokenSeq& completion) {
        prompt.insert(prompt.end(), completion.begin(), completion.end());
        return prompt;
    };

    for (int i = 0; i < n_benign; ++i) {
        TokenSeq p = benign_prompt(vocab, prompt_len, rng);
        TokenSeq c = canonical_helpful_completion(vocab, p.back(), response_len);
        sequences.push_back(full_seq(std::move(p), c));
    }
    for (int i = 0; i < n_boundary; ++i) {
        TokenSeq p(prompt_len);
        for (int j = 0; j < prompt_len; ++j) p[j] = draw_prompt_token(vocab, rng);
        p[rng.uniform_int(prompt_len)] =
            vocab.boundary.begin + rng.uniform_int(vocab.boundary.count());
        TokenSeq c = canonical_helpful_completion(vocab, p.back(), response_len);
        sequences.push_back(full_seq(std::move(p), c));
    }
    for (int i = 0; i < n_toxic; ++i) {
        // Uniform over all toxic endings so every toxic context row is fit.
        TokenSeq p(prompt_len);
        for (int j = 0; j + 1 < prompt_len; ++j) {
            p[j] = rng.next_double() < 0.5
                       ? draw_toxic_topic(lexicon, vocab, rng)
                       : vocab.neutral.begin + 1 + rng.uniform_int(vocab.neutral.count() - 1);
        }
        // Uniform over topic endings plus the weak endings.
        int ending_pool = toxic_topic_count(lexicon) + (lexicon.weak_guardrail_tokens - 1);
        int pick = rng.uniform_int(ending_pool);
        p[prompt_len - 1] = pick < toxic_topic_count(lexicon)
                                ? vocab.toxic.begin + pick
                                : vocab.toxic.begin + lexicon.common_toxic_count() +
                                      (pick - toxic_topic_count(lexicon));
        bool weak = lexicon.is_weak_guardrail(vocab, p.back());
        double u = rng.next_double();
        bool comply = weak || (mode == BackboneMode::Base
                                   ? u >= lexicon.base_refusal_rate
                                   : u < lexicon.instruct_compliance_rate);
        TokenSeq c = comply
                         ? canonical_toxic_completion(lexicon, vocab, p.back(), response_len)
                         : refusal_template(lexicon, vocab);
        sequences.push_back(full_seq(std::move(p), c));
    }

    // Exact tabular MLE with Laplace smoothing: embed = out_proj = I and
    // W0 = log p(next | current).
    const double delta = 0.02;
    Matrix counts = Matrix::Zero(V, V);
    for (const TokenSeq& seq : sequences) {
        for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
            counts(seq[i], seq[i + 1]) += 1.0;
        }
    }
    Matrix w0(V, V);
    for (int i = 0; i < V; ++i) {
        double row_total = counts.row(i).sum() + delta * V;
        for (int j = 0; j < V; ++j) {
            w0(i, j) = std::log((counts(i, j) + delta) / row_total);
        }
    }
    require(w0.allFinite(), "pretrain_backbone: fit produced non-finite weights");

    TinyPolicy policy;
    policy.vocab = vocab;
    policy.embed = Matrix::Identity(V, V);
    policy.base_weight = std::move(w0);
    policy.out_proj = Matrix::Identity(V, V);
    policy.adapter = init_adapter(V, V, 8, 16.0, mix_seed(seed, 0xada27e5ULL));
    return policy;
}

}  // namespace fedsan
