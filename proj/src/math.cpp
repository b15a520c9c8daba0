#include "fedsan/math.hpp"

#include <cmath>

namespace fedsan {

Vector softmax(const Vector& logits, double temperature) {
    require(logits.size() > 0, "softmax: empty logits");
    require(temperature > 0.0, "softmax: temperature must be positive");
    require(logits.allFinite(), "softmax: non-finite logits");

    Vector scaled = logits / temperature;
    double m = scaled.maxCoeff();
    Vector p = (scaled.array() - m).exp();
    p /= p.sum();
    return p;
}

Vector log_softmax(const Vector& logits) {
    double m = logits.maxCoeff();
    double lse = std::log((logits.array() - m).exp().sum()) + m;
    return logits.array() - lse;
}

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

double log_sigmoid(double x) {
    // -softplus(-x), branch keeps the argument of exp non-positive.
    if (x >= 0.0) {
        return -std::log1p(std::exp(-x));
    }
    return x - std::log1p(std::exp(x));
}

double kl_divergence(const Vector& p, const Vector& q) {
    require(p.size() == q.size(), "kl_divergence: length mismatch");
    require(std::abs(p.sum() - 1.0) <= 1e-9, "kl_divergence: p does not sum to 1");
    require(std::abs(q.sum() - 1.0) <= 1e-9, "kl_divergence: q does not sum to 1");

    double kl = 0.0;
    for (Index i = 0; i < p.size(); ++i) {
        if (p[i] == 0.0) continue;  // 0*log(0) = 0
        if (q[i] <= 0.0) {
            throw std::domain_error("kl_divergence: q has zero mass where p > 0");
        }
        kl += p[i] * std::log(p[i] / q[i]);
    }
    // Rounding can leave a tiny negative residue when p ~ q.
    return kl < 0.0 && kl > -1e-15 ? 0.0 : kl;
}

double cross_entropy_with_logits(const Vector& logits, Index true_class) {
    require(true_class >= 0 && true_class < logits.size(),
            "cross_entropy_with_logits: class index out of range");
    return -log_softmax(logits)[true_class];
}

Vector finite_diff_grad(const std::function<double(const Vector&)>& f,
                        const Vector& params, double epsilon) {
    require(epsilon > 0.0, "finite_diff_grad: epsilon must be positive");
    Vector grad(params.size());
    Vector x = params;
    for (Index i = 0; i < params.size(); ++i) {
        double orig = x[i];
        x[i] = orig + epsilon;
        double up = f(x);
        x[i] = orig - epsilon;
        double down = f(x);
        x[i] = orig;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw std::domain_error("finite_diff_grad: non-finite function value");
        }
        grad[i] = (up - down) / (2.0 * epsilon);
    }
    return grad;
}

}  // namespace fedsan
