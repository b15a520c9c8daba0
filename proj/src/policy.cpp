#include "fedsan/policy.hpp"

#include <cmath>

#include "fedsan/math.hpp"
#include "fedsan/rng.hpp"

namespace fedsan {

Vocab Vocab::make(int n_benign, int n_toxic, int n_refusal, int n_boundary,
                  int n_neutral) {
    Vocab v;
    v.size = n_benign + n_toxic + n_refusal + n_boundary + n_neutral + 1;
    int at = 0;
    auto take = [&at](int n) {
        Range r{at, at + n};
        at += n;
        return r;
    };
    v.benign = take(n_benign);
    v.toxic = take(n_toxic);
    v.refusal = take(n_refusal);
    v.boundary = take(n_boundary);
    v.neutral = take(n_neutral);
    v.eos = at;
    require(v.eos == v.size - 1, "Vocab: partition sizes must cover size-1 tokens");
    return v;
}

TokenClass Vocab::class_of(Token t) const {
    require(valid(t), "Vocab: token out of range");
    if (benign.contains(t)) return TokenClass::Benign;
    if (toxic.contains(t)) return TokenClass::Toxic;
    if (refusal.contains(t)) return TokenClass::Refusal;
    if (boundary.contains(t)) return TokenClass::Boundary;
    if (neutral.contains(t)) return TokenClass::Neutral;
    return TokenClass::EndOfSequence;
}

void Vocab::validate_seq(const TokenSeq& seq) const {
    for (Token t : seq) require(valid(t), "token sequence: index out of vocab range");
}

Matrix effective_weight(const TinyPolicy& policy) {
    const LoraAdapter& ad = policy.adapter;
    require(ad.B.rows() == policy.base_weight.rows() &&
                ad.A.cols() == policy.base_weight.cols() &&
                ad.B.cols() == ad.A.rows(),
            "effective_weight: adapter/base shape mismatch");
    if (ad.B.isZero(0.0)) {
        return policy.base_weight;  // exact: no scaled product applied
    }
    return policy.base_weight + ad.scaling() * (ad.B * ad.A);
}

Vector next_token_logits(const TinyPolicy& policy, Token current) {
    require(policy.vocab.valid(current), "next_token_logits: token out of range");
    Matrix w = effective_weight(policy);
    return (policy.embed.row(current) * w * policy.out_proj).transpose();
}

namespace {

// Shared forward state for log_prob / log_prob_grad so both walk the exact
// same float path.
struct ForwardCtx {
    Matrix w_eff;

    explicit ForwardCtx(const TinyPolicy& p) : w_eff(effective_weight(p)) {}

    Vector logits(const TinyPolicy& p, Token prev) const {
        return (p.embed.row(prev) * w_eff * p.out_proj).transpose();
    }
};

}  // namespace

double log_prob(const TinyPolicy& policy, const TokenSeq& prompt,
                const TokenSeq& response) {
    require(!prompt.empty(), "log_prob: empty prompt");
    policy.vocab.validate_seq(prompt);
    policy.vocab.validate_seq(response);

    ForwardCtx ctx(policy);
    double total = 0.0;
    Token prev = prompt.back();
    for (Token tok : response) {
        Vector ls = log_softmax(ctx.logits(policy, prev));
        total += ls[tok];
        prev = tok;
    }
    return total;
}

AdapterGrad log_prob_grad(const TinyPolicy& policy, const TokenSeq& prompt,
                          const TokenSeq& response) {
    require(!prompt.empty(), "log_prob_grad: empty prompt");
    policy.vocab.validate_seq(prompt);
    policy.vocab.validate_seq(response);

    const LoraAdapter& ad = policy.adapter;
    AdapterGrad grad(ad.d_in(), ad.rank, ad.d_out());
    if (response.empty()) return grad;

    ForwardCtx ctx(policy);

    // d log_prob / d W_eff accumulated over steps; the low-rank factors are
    // recovered at the end through dB = s * dW * A^T, dA = s * B^T * dW.
    Matrix d_weff = Matrix::Zero(policy.d_in(), policy.d_out());
    Token prev = prompt.back();
    for (Token tok : response) {
        Vector z = ctx.logits(policy, prev);
        Vector dz = -softmax(z, 1.0);
        dz[tok] += 1.0;  // onehot(target) - softmax(z)
        Vector dh = policy.out_proj * dz;                   // d_out
        d_weff += policy.embed.row(prev).transpose() * dh.transpose();
        prev = tok;
    }
    double s = ad.scaling();
    grad.dB = s * d_weff * ad.A.transpose();
    grad.dA = s * ad.B.transpose() * d_weff;
    return grad;
}

TokenSeq greedy_decode(const TinyPolicy& policy, const TokenSeq& prompt, int max_len) {
    require(max_len >= 1, "greedy_decode: max_len must be >= 1");
    require(!prompt.empty(), "greedy_decode: empty prompt");
    policy.vocab.validate_seq(prompt);

    ForwardCtx ctx(policy);
    TokenSeq out;
    Token prev = prompt.back();
    for (int i = 0; i < max_len; ++i) {
        Vector z = ctx.logits(policy, prev);
        Token best = 0;
        for (Index j = 1; j < z.size(); ++j) {
            if (z[j] > z[best]) best = static_cast<Token>(j);  // strict: lowest index wins ties
        }
        if (best == policy.vocab.eos) break;
        out.push_back(best);
        prev = best;
    }
    return out;
}

LoraAdapter init_adapter(Index d_in, Index d_out, int rank, double alpha,
                         std::uint64_t seed) {
    require(rank >= 1 && rank <= std::min(d_in, d_out),
            "init_adapter: rank must satisfy 1 <= r <= min(d_in, d_out)");
    LoraAdapter ad;
    ad.rank = rank;
    ad.alpha = alpha;
    ad.B = Matrix::Zero(d_in, rank);
    ad.A = Matrix(rank, d_out);
    Rng rng(mix_seed(seed, 0x10a2ada9ULL));
    for (Index i = 0; i < ad.A.rows(); ++i)
        for (Index j = 0; j < ad.A.cols(); ++j) ad.A(i, j) = rng.normal(0.0, 0.02);
    return ad;
}

Vector flatten_adapter(const LoraAdapter& adapter) {
    Vector v(adapter.B.size() + adapter.A.size());
    Index k = 0;
    for (Index i = 0; i < adapter.B.rows(); ++i)
        for (Index j = 0; j < adapter.B.cols(); ++j) v[k++] = adapter.B(i, j);
    for (Index i = 0; i < adapter.A.rows(); ++i)
        for (Index j = 0; j < adapter.A.cols(); ++j) v[k++] = adapter.A(i, j);
    return v;
}

void unflatten_adapter(const Vector& params, LoraAdapter& adapter) {
    require(params.size() == adapter.B.size() + adapter.A.size(),
            "unflatten_adapter: size mismatch");
    Index k = 0;
    for (Index i = 0; i < adapter.B.rows(); ++i)
        for (Index j = 0; j < adapter.B.cols(); ++j) adapter.B(i, j) = params[k++];
    for (Index i = 0; i < adapter.A.rows(); ++i)
        for (Index j = 0; j < adapter.A.cols(); ++j) adapter.A(i, j) = params[k++];
}

Vector flatten_grad(const AdapterGrad& grad) {
    Vector v(grad.dB.size() + grad.dA.size());
    Index k = 0;
    for (Index i = 0; i < grad.dB.rows(); ++i)
        for (Index j = 0; j < grad.dB.cols(); ++j) v[k++] = grad.dB(i, j);
    for (Index i = 0; i < grad.dA.rows(); ++i)
        for (Index j = 0; j < grad.dA.cols(); ++j) v[k++] = grad.dA(i, j);
    return v;
}

}  // namespace fedsan
