#pragma once

#include <cstdint>

#include "fedsan/types.hpp"

namespace fedsan {

enum class TokenClass { Benign, Toxic, Refusal, Boundary, Neutral, EndOfSequence };

/// Synthetic vocabulary split into disjoint contiguous partitions. The
/// partitions stand in for the semantic classes of natural-language tokens;
/// the last index is the single end-of-sequence token.
struct Vocab {
    int size = 64;
    // Half-open [begin, end) ranges, laid out back to back.
    struct Range {
        int begin = 0;
        int end = 0;
        int count() const { return end - begin; }
        bool contains(Token t) const { return t >= begin && t < end; }
    };
    Range benign, toxic, refusal, boundary, neutral;
    Token eos = 63;

    static Vocab make(int n_benign, int n_toxic, int n_refusal, int n_boundary,
                      int n_neutral);

    TokenClass class_of(Token t) const;
    bool is_toxic(Token t) const { return toxic.contains(t); }
    bool valid(Token t) const { return t >= 0 && t < size; }
    void validate_seq(const TokenSeq& seq) const;
};

/// Trainable low-rank pair. The effective update is (alpha/rank) * B * A;
/// B starts at zero so a freshly initialized adapter is a no-op.
struct LoraAdapter {
    Matrix B;  // d_in x r
    Matrix A;  // r x d_out
    int rank = 0;
    double alpha = 1.0;

    double scaling() const { return alpha / static_cast<double>(rank); }
    Index d_in() const { return B.rows(); }
    Index d_out() const { return A.cols(); }
    bool same_shape(const LoraAdapter& other) const {
        return B.rows() == other.B.rows() && B.cols() == other.B.cols() &&
               A.rows() == other.A.rows() && A.cols() == other.A.cols();
    }
};

/// Gradient with respect to the adapter factors. Mirrors LoraAdapter's shapes.
struct AdapterGrad {
    Matrix dB;
    Matrix dA;

    AdapterGrad() = default;
    AdapterGrad(Index d_in, int rank, Index d_out)
        : dB(Matrix::Zero(d_in, rank)), dA(Matrix::Zero(rank, d_out)) {}

    AdapterGrad& operator+=(const AdapterGrad& o) {
        dB += o.dB;
        dA += o.dA;
        return *this;
    }
    AdapterGrad& operator*=(double s) {
        dB *= s;
        dA *= s;
        return *this;
    }
    bool all_finite() const { return dB.allFinite() && dA.allFinite(); }
};

/// First-order causal toy LM: next-token logits at position t depend only on
/// token t, through embed -> (W0 + delta) -> out_proj. Everything except the
/// adapter is frozen.
struct TinyPolicy {
    Vocab vocab;
    Matrix embed;        // vocab.size x d_in, frozen
    Matrix base_weight;  // d_in x d_out, frozen (W0)
    Matrix out_proj;     // d_out x vocab.size, frozen
    LoraAdapter adapter;

    Index d_in() const { return base_weight.rows(); }
    Index d_out() const { return base_weight.cols(); }
};

/// W0 + (alpha/rank) * B * A. With B = 0 this is W0 bit-exactly.
Matrix effective_weight(const TinyPolicy& policy);

/// embed[current] * effective_weight * out_proj. Length = vocab.size.
Vector next_token_logits(const TinyPolicy& policy, Token current);

/// Sum over response positions of log softmax(next_token_logits(prev))[tok],
/// where prev of the first response token is the last prompt token. Empty
/// response gives 0. Throws std::invalid_argument on an empty prompt.
double log_prob(const TinyPolicy& policy, const TokenSeq& prompt,
                const TokenSeq& response);

/// Analytic gradient of log_prob with respect to (B, A).
AdapterGrad log_prob_grad(const TinyPolicy& policy, const TokenSeq& prompt,
                          const TokenSeq& response);

/// Argmax decoding from the last prompt token; ties break toward the lowest
/// token index; stops at EOS (EOS not emitted) or after max_len tokens.
TokenSeq greedy_decode(const TinyPolicy& policy, const TokenSeq& prompt, int max_len);

/// A ~ N(0, 0.02^2) seeded, B = 0, so the initial delta vanishes.
LoraAdapter init_adapter(Index d_in, Index d_out, int rank, double alpha,
                         std::uint64_t seed);

/// Flattens (B, A) row-major into one vector and back; the parameter layout
/// used by gradient checks and serialization.
Vector flatten_adapter(const LoraAdapter& adapter);
void unflatten_adapter(const Vector& params, LoraAdapter& adapter);
Vector flatten_grad(const AdapterGrad& grad);

}  // namespace fedsan
