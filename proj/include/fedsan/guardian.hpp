#pragma once

#include <cstdint>
#include <unordered_set>
#include <utility>
#include <vector>

#include "fedsan/types.hpp"

namespace fedsan {

enum class SafetyLabel : int { Safe = 0, Unsafe = 1 };

/// Deterministic stand-in for a large safety-classifier teacher. Scores a
/// token sequence by counting lexicon hits; an injectable failure channel
/// flips the verdict on a seeded subset of inputs so the hard-label override
/// path can be exercised.
struct TeacherOracle {
    std::unordered_set<Token> toxic_lexicon;
    double weight_per_hit = 1.5;
    double bias = -1.0;
    double failure_rate = 0.0;  // in [0, 1)
    std::uint64_t failure_seed = 0;
};

/// Two-class logits (index 0 = Safe, 1 = Unsafe):
///   z_unsafe = weight_per_hit * hits + bias, z_safe = -z_unsafe,
/// negated when the sample falls into the seeded failure set.
Vector teacher_score(const TeacherOracle& oracle, const TokenSeq& tokens);

/// One distillation unit: tokens, the teacher's soft logits, and the hard
/// label after any override.
struct TransferSample {
    TokenSeq tokens;
    Vector teacher_logits;  // length 2
    SafetyLabel hard_label = SafetyLabel::Safe;
    bool override_applied = false;
};

/// Runs the teacher over labeled samples. Ground-truth-Unsafe samples the
/// teacher clears are force-relabeled Unsafe with override_applied set.
std::vector<TransferSample> build_transfer_set(
    const TeacherOracle& oracle,
    const std::vector<std::pair<TokenSeq, SafetyLabel>>& labeled);

struct KDConfig {
    double alpha = 0.5;        // KL weight in [0, 1]
    double temperature = 2.0;  // softening T > 0
    double learning_rate = 0.5;
    int epochs = 40;
    std::uint64_t seed = 0;
    // KL(student || teacher) as the distillation objective writes it; the
    // conventional teacher-first direction is available for comparison.
    bool teacher_first_kl = false;
};

/// Bag-of-tokens linear classifier: logits = weights^T counts + bias.
/// Zero-initialized, so an untrained student scores 0.5 everywhere.
struct StudentClassifier {
    Matrix weights;  // vocab_size x 2
    Eigen::Vector2d bias = Eigen::Vector2d::Zero();

    static StudentClassifier zeros(int vocab_size);
    Vector logits(const TokenSeq& tokens) const;
    int vocab_size() const { return static_cast<int>(weights.rows()); }
};

/// alpha * T^2 * KL(softmax(z_S/T) || softmax(z_T/T))
///   + (1 - alpha) * CE(hard_label, z_S).
double kd_loss(const Vector& student_logits, const TransferSample& sample,
               const KDConfig& config);

struct StudentGrad {
    double loss = 0.0;
    Matrix d_weights;
    Eigen::Vector2d d_bias = Eigen::Vector2d::Zero();
};

/// Analytic gradient of kd_loss through the bag featurization. Weight rows
/// for tokens absent from the sample stay exactly zero.
StudentGrad kd_grad(const StudentClassifier& student, const TransferSample& sample,
                    const KDConfig& config);

/// Seeded SGD over shuffled epochs from a zero-initialized student.
/// epochs = 0 returns the zero student. Throws TrainingDiverged on a
/// non-finite loss.
StudentClassifier train_student(const std::vector<TransferSample>& transfer_set,
                                const KDConfig& config, int vocab_size);

/// P(Unsafe | tokens) = softmax(student logits)[1]. Order-invariant.
double classify(const StudentClassifier& student, const TokenSeq& tokens);

}  // namespace fedsan
