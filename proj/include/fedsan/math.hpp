#pragma once

#include <functional>

#include "fedsan/types.hpp"

namespace fedsan {

/// Softmax with temperature, computed with max-subtraction. Entries land in
/// (0,1) and sum to 1 within 1e-12. Throws std::invalid_argument for
/// temperature <= 0 or an empty input.
Vector softmax(const Vector& logits, double temperature = 1.0);

/// Row-stable log-softmax at temperature 1. Shared by cross-entropy and the
/// policy forward pass so both see bit-identical values.
Vector log_softmax(const Vector& logits);

/// Logistic function. Saturates cleanly, never overflows.
double sigmoid(double x);

/// log(sigmoid(x)) = -softplus(-x), finite for |x| <= 700.
double log_sigmoid(double x);

/// KL(p || q) with the 0*log(0) = 0 convention. Throws std::domain_error if
/// q_i = 0 where p_i > 0, std::invalid_argument on length/normalization
/// violations.
double kl_divergence(const Vector& p, const Vector& q);

/// -log softmax(z)[true_class]. Throws std::invalid_argument on a bad index.
double cross_entropy_with_logits(const Vector& logits, Index true_class);

/// Central finite differences: (f(x + eps*e_i) - f(x - eps*e_i)) / (2*eps).
/// The gradient oracle used by the acceptance suite; it never touches any
/// analytic gradient code.
Vector finite_diff_grad(const std::function<double(const Vector&)>& f,
                        const Vector& params, double epsilon);

}  // namespace fedsan
