#pragma once

#include <map>

#include "model.hpp"

namespace hkd {

enum class AnnealShape { linear, sigmoid };

struct Lambda2Schedule {
  double start = 0.5;
  double end = 3.0;
  long total_steps = 0;  // 0 means "resolve from the configured run length"
  AnnealShape shape = AnnealShape::linear;
};

/// Monotone non-decreasing from start to end, clamped at end past total_steps.
double anneal_lambda2(long step, const Lambda2Schedule& schedule);

struct DistillationPlan {
  double lambda = 0.6;
  double lambda1 = 0.5;
  Lambda2Schedule lambda2;
  int check_every = 2;          // epochs between distillation-flag checks
  double threshold = 1.0;       // accuracy margin a teacher keeps over the student
  bool use_token_accuracy = false;
  double temperature = 1.0;     // hook only; 1 keeps teacher distributions as-is
  bool exclude_worst_ta = false;
  std::map<LanguageId, bool> flags;

  void validate() const;
};

struct TeacherWeights {
  Eigen::VectorXd alpha;   // non-negative, sums to 1
  Eigen::VectorXd delta;   // negative perplexities
};

/// alpha = softmax of the teachers' negative perplexities on the batch.
TeacherWeights contribution_weights(const std::vector<const SequenceModel*>& teacher_assistants,
                                    const Batch& batch);
Eigen::VectorXd softmax_weights(const Eigen::VectorXd& delta);

// Loss values over precomputed distributions (teacher side frozen).

/// -sum_{s,t,v} Q(v) log P(v)
double selective_kd_value(const StepDistributions& teacher, const StepDistributions& student);
/// -sum_c alpha_c sum_{s,t,v} Q_c(v) log P(v)
double adaptive_kd_value(const std::vector<StepDistributions>& teachers,
                         const StepDistributions& student, const Eigen::VectorXd& alpha);

// Loss + gradient w.r.t. the student's parameters.

/// Unweighted component values of a combined loss.
struct LossParts {
  double nll = 0.0;
  double kd = 0.0;
};

LossGrad selective_kd_loss(const SequenceModel& student, const Batch& batch,
                           const StepDistributions& teacher);
/// (1 - lambda) * NLL + lambda * selective KD, one backward pass.
LossGrad selective_total_loss(const SequenceModel& student, const SequenceModel& teacher,
                              const Batch& batch, double lambda, LossParts* parts = nullptr);
LossGrad adaptive_kd_loss(const SequenceModel& student, const Batch& batch,
                          const std::vector<StepDistributions>& teachers,
                          const Eigen::VectorXd& alpha);
/// lambda1 * NLL + lambda2 * adaptive KD, one backward pass.
LossGrad adaptive_total_loss(const SequenceModel& student,
                             const std::vector<const SequenceModel*>& teacher_assistants,
                             const Batch& batch, const Eigen::VectorXd& alpha, double lambda1,
                             double lambda2, LossParts* parts = nullptr);

}  // namespace hkd
