#pragma once

#include "fedsan/dpo.hpp"
#include "fedsan/policy.hpp"
#include "fedsan/rng.hpp"

namespace fedsan::testutil {

inline Matrix random_matrix(Index rows, Index cols, Rng& rng, double scale = 1.0) {
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
    return m;
}

inline Vocab tiny_vocab(int size = 8) {
    // Smallest layout with one token per partition and the rest benign.
    return Vocab::make(size - 5, 1, 1, 1, 1);
}

/// Fully random small policy with a random (nonzero) adapter; exercises the
/// generic matrix paths rather than the tabular backbone recipe.
inline TinyPolicy random_policy(int vocab_size, Index d_in, Index d_out, int rank,
                                std::uint64_t seed) {
    Rng rng(seed);
    TinyPolicy p;
    p.vocab = tiny_vocab(vocab_size);
    p.embed = random_matrix(vocab_size, d_in, rng, 0.7);
    p.base_weight = random_matrix(d_in, d_out, rng, 0.7);
    p.out_proj = random_matrix(d_out, vocab_size, rng, 0.7);
    p.adapter.rank = rank;
    p.adapter.alpha = 2.0 * rank;
    p.adapter.B = random_matrix(d_in, rank, rng, 0.3);
    p.adapter.A = random_matrix(rank, d_out, rng, 0.3);
    return p;
}

inline TokenSeq random_seq(int vocab_size, int len, Rng& rng) {
    TokenSeq s(len);
    for (int i = 0; i < len; ++i) s[i] = rng.uniform_int(vocab_size);
    return s;
}

inline PreferencePair random_pair(int vocab_size, Rng& rng, int prompt_len = 3,
                                  int response_len = 3) {
    PreferencePair pair;
    pair.prompt = random_seq(vocab_size, prompt_len, rng);
    pair.chosen = random_seq(vocab_size, response_len, rng);
    do {
        pair.rejected = random_seq(vocab_size, response_len, rng);
    } while (pair.rejected == pair.chosen);
    return pair;
}

}  // namespace fedsan::testutil
