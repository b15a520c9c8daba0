#include "fedsan/guardian.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "fedsan/math.hpp"
#include "fedsan/rng.hpp"

namespace fedsan {

Vector teacher_score(const TeacherOracle& oracle, const TokenSeq& tokens) {
    int hits = 0;
    for (Token t : tokens) hits += oracle.toxic_lexicon.count(t) ? 1 : 0;
    double z_unsafe = oracle.weight_per_hit * hits + oracle.bias;

    if (oracle.failure_rate > 0.0) {
        double u = static_cast<double>(fnv1a_tokens(tokens, oracle.failure_seed) >> 11) *
                   0x1.0p-53;
        if (u < oracle.failure_rate) z_unsafe = -z_unsafe;
    }
    Vector z(2);
    z << -z_unsafe, z_unsafe;
    return z;
}

std::vector<TransferSample> build_transfer_set(
    const TeacherOracle& oracle,
    const std::vector<std::pair<TokenSeq, SafetyLabel>>& labeled) {
    std::vector<TransferSample> out;
    out.reserve(labeled.size());
    for (const auto& [tokens, truth] : labeled) {
        TransferSample s;
        s.tokens = tokens;
        s.teacher_logits = teacher_score(oracle, tokens);
        SafetyLabel verdict = s.teacher_logits[1] > s.teacher_logits[0]
                                  ? SafetyLabel::Unsafe
                                  : SafetyLabel::Safe;
        if (truth == SafetyLabel::Unsafe && verdict == SafetyLabel::Safe) {
            // Teacher miss on unsafe data: mark unsafe and train on that.
            s.hard_label = SafetyLabel::Unsafe;
            s.override_applied = true;
        } else {
            s.hard_label = verdict;
        }
        out.push_back(std::move(s));
    }
    return out;
}

StudentClassifier StudentClassifier::zeros(int vocab_size) {
    StudentClassifier s;
    s.weights = Matrix::Zero(vocab_size, 2);
    s.bias = Eigen::Vector2d::Zero();
    return s;
}

Vector StudentClassifier::logits(const TokenSeq& tokens) const {
    Eigen::Vector2d z = bias;
    for (Token t : tokens) {
        require(t >= 0 && t < weights.rows(), "student logits: token out of range");
        z += weights.row(t).transpose();
    }
    Vector out(2);
    out << z[0], z[1];
    return out;
}

double kd_loss(const Vector& student_logits, const TransferSample& sample,
               const KDConfig& config) {
    require(student_logits.size() == 2 && sample.teacher_logits.size() == 2,
            "kd_loss: logits must have length 2");
    require(config.alpha >= 0.0 && config.alpha <= 1.0, "kd_loss: alpha must be in [0,1]");
    require(config.temperature > 0.0, "kd_loss: temperature must be positive");

    double kl = 0.0;
    if (config.alpha > 0.0) {
        Vector p_student = softmax(student_logits, config.temperature);
        Vector p_teacher = softmax(sample.teacher_logits, config.temperature);
        kl = config.teacher_first_kl ? kl_divergence(p_teacher, p_student)
                                     : kl_divergence(p_student, p_teacher);
    }
    double ce = config.alpha < 1.0
                    ? cross_entropy_with_logits(student_logits,
                                                static_cast<Index>(sample.hard_label))
                    : 0.0;
    double t2 = config.temperature * config.temperature;
    return config.alpha * t2 * kl + (1.0 - config.alpha) * ce;
}

StudentGrad kd_grad(const StudentClassifier& student, const TransferSample& sample,
                    const KDConfig& config) {
    Vector z = student.logits(sample.tokens);
    StudentGrad g;
    g.loss = kd_loss(z, sample, config);
    g.d_weights = Matrix::Zero(student.weights.rows(), 2);

    double T = config.temperature;
    Eigen::Vector2d dz = Eigen::Vector2d::Zero();

    if (config.alpha > 0.0) {
        Vector s = softmax(z, T);
        Vector t = softmax(sample.teacher_logits, T);
        if (!config.teacher_first_kl) {
            // d/dz_k [KL(s||t)] = s_k * (log(s_k/t_k) - KL) / T
            double kl = kl_divergence(s, t);
            for (int k = 0; k < 2; ++k) {
                dz[k] += config.alpha * T * T * (s[k] * (std::log(s[k] / t[k]) - kl) / T);
            }
        } else {
            // d/dz_k [KL(t||s)] = (s_k - t_k) / T
            for (int k = 0; k < 2; ++k) {
                dz[k] += config.alpha * T * T * ((s[k] - t[k]) / T);
            }
        }
    }
    if (config.alpha < 1.0) {
        Vector p = softmax(z, 1.0);
        for (int k = 0; k < 2; ++k) {
            double onehot = (k == static_cast<int>(sample.hard_label)) ? 1.0 : 0.0;
            dz[k] += (1.0 - config.alpha) * (p[k] - onehot);
        }
    }

    // z = sum_t W[t,:] + b over the token bag.
    for (Token t : sample.tokens) {
        g.d_weights.row(t) += dz.transpose();
    }
    g.d_bias = dz;
    return g;
}

StudentClassifier train_student(const std::vector<TransferSample>& transfer_set,
                                const KDConfig& config, int vocab_size) {
    require(!transfer_set.empty(), "train_student: empty transfer set");
    StudentClassifier student = StudentClassifier::zeros(vocab_size);
    if (config.epochs <= 0) return student;

    Rng rng(mix_seed(config.seed, 0x57aabb01ULL));
    std::vector<std::size_t> order(transfer_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t idx : order) {
            StudentGrad g = kd_grad(student, transfer_set[idx], config);
            if (!std::isfinite(g.loss)) {
                throw TrainingDiverged("train_student: non-finite loss at epoch " +
                                       std::to_string(epoch));
            }
            student.weights -= config.learning_rate * g.d_weights;
            student.bias -= config.learning_rate * g.d_bias;
            if (!student.weights.allFinite() || !student.bias.allFinite()) {
                throw TrainingDiverged("train_student: weights went non-finite at epoch " +
                                       std::to_string(epoch));
            }
        }
    }
    return student;
}

double classify(const StudentClassifier& student, const TokenSeq& tokens) {
    return softmax(student.logits(tokens), 1.0)[1];
}

}  // namespace fedsan
