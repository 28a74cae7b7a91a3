#include "distill.hpp"

#include <cmath>

namespace hkd {

double anneal_lambda2(long step, const Lambda2Schedule& schedule) {
  if (step < 0) throw validation_error("anneal_lambda2: step must be >= 0");
  if (schedule.total_steps <= 0 || step >= schedule.total_steps) return schedule.end;
  const double u = static_cast<double>(step) / static_cast<double>(schedule.total_steps);
  if (schedule.shape == AnnealShape::linear) {
    return schedule.start + (schedule.end - schedule.start) * u;
  }
  // sigmoid rescaled so that u=0 and u=1 hit the endpoints exactly
  const double k = 12.0;
  auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  const double lo = sig(-k / 2), hi = sig(k / 2);
  const double s = (sig(k * (u - 0.5)) - lo) / (hi - lo);
  return schedule.start + (schedule.end - schedule.start) * s;
}

void DistillationPlan::validate() const {
  if (lambda < 0.0 || lambda > 1.0) throw validation_error("plan.lambda must lie in [0, 1]");
  if (lambda2.start > lambda2.end)
    throw validation_error("plan.lambda2.start must be <= plan.lambda2.end");
  if (check_every < 1) throw validation_error("plan.check_every must be >= 1");
  if (temperature != 1.0)
    throw validation_error("plan.temperature: only the default of 1 is supported");
}

Eigen::VectorXd softmax_weights(const Eigen::VectorXd& delta) {
  Eigen::VectorXd z = (delta.array() - delta.maxCoeff()).exp();
  return z / z.sum();
}

TeacherWeights contribution_weights(const std::vector<const SequenceModel*>& teacher_assistants,
                                    const Batch& batch) {
  if (teacher_assistants.empty())
    throw validation_error("contribution_weights: at least one teacher-assistant required");
  TeacherWeights w;
  w.delta.resize(static_cast<long>(teacher_assistants.size()));
  for (size_t c = 0; c < teacher_assistants.size(); ++c)
    w.delta[static_cast<long>(c)] = -perplexity(*teacher_assistants[c], batch);
  w.alpha = softmax_weights(w.delta);
  return w;
}

namespace {

void check_same_shape(const StepDistributions& a, const StepDistributions& b) {
  if (a.sentences() != b.sentences())
    throw validation_error("distribution sentence counts differ");
  for (size_t s = 0; s < a.sentences(); ++s) {
    if (a.probs[s].rows() != b.probs[s].rows() || a.probs[s].cols() != b.probs[s].cols())
      throw validation_error("distribution shapes differ at sentence " + std::to_string(s));
  }
}

/// Cross entropy of P under row weights Q, summed over all steps; entries
/// with zero teacher mass contribute nothing.
double cross_entropy_sum(const Eigen::MatrixXd& Q, const Eigen::MatrixXd& P) {
  double total = 0.0;
  for (long t = 0; t < Q.rows(); ++t)
    for (long v = 0; v < Q.cols(); ++v)
      if (Q(t, v) != 0.0) total -= Q(t, v) * std::log(P(t, v));
  return total;
}

}  // namespace

double selective_kd_value(const StepDistributions& teacher, const StepDistributions& student) {
  check_same_shape(teacher, student);
  double total = 0.0;
  for (size_t s = 0; s < teacher.sentences(); ++s)
    total += cross_entropy_sum(teacher.probs[s], student.probs[s]);
  return total;
}

double adaptive_kd_value(const std::vector<StepDistributions>& teachers,
                         const StepDistributions& student, const Eigen::VectorXd& alpha) {
  if (static_cast<long>(teachers.size()) != alpha.size())
    throw validation_error("adaptive_kd_value: alpha size does not match teacher count");
  double total = 0.0;
  for (size_t c = 0; c < teachers.size(); ++c)
    total += alpha[static_cast<long>(c)] * selective_kd_value(teachers[c], student);
  return total;
}

namespace {

/// dL/dlogits for -sum Q log P is P * (sum_v Q_v) - Q per step.
std::vector<Eigen::MatrixXd> kd_dlogits(const StepDistributions& student,
                                        const StepDistributions& teacher) {
  std::vector<Eigen::MatrixXd> dlogits;
  dlogits.reserve(student.sentences());
  for (size_t s = 0; s < student.sentences(); ++s) {
    const auto& P = student.probs[s];
    const auto& Q = teacher.probs[s];
    Eigen::MatrixXd d = P.array().colwise() * Q.rowwise().sum().array();
    d -= Q;
    dlogits.push_back(std::move(d));
  }
  return dlogits;
}

std::vector<Eigen::MatrixXd> nll_dlogits(const StepDistributions& student) {
  std::vector<Eigen::MatrixXd> dlogits;
  dlogits.reserve(student.sentences());
  for (size_t s = 0; s < student.sentences(); ++s) {
    Eigen::MatrixXd d = student.probs[s];
    for (long t = 0; t < d.rows(); ++t) d(t, student.gold[s][static_cast<size_t>(t)]) -= 1.0;
    dlogits.push_back(std::move(d));
  }
  return dlogits;
}

double nll_of(const StepDistributions& dists) {
  double loss = 0.0;
  for (size_t s = 0; s < dists.sentences(); ++s)
    for (long t = 0; t < dists.probs[s].rows(); ++t)
      loss -= std::log(dists.probs[s](t, dists.gold[s][static_cast<size_t>(t)]));
  return loss;
}

}  // namespace

LossGrad selective_kd_loss(const SequenceModel& student, const Batch& batch,
                           const StepDistributions& teacher) {
  ForwardCache cache;
  StepDistributions P = forward(student, batch, &cache);
  check_same_shape(teacher, P);
  return LossGrad{selective_kd_value(teacher, P), backward(student, cache, kd_dlogits(P, teacher))};
}

LossGrad selective_total_loss(const SequenceModel& student, const SequenceModel& teacher,
                              const Batch& batch, double lambda, LossParts* parts) {
  if (lambda < 0.0 || lambda > 1.0) throw validation_error("lambda must lie in [0, 1]");
  ForwardCache cache;
  StepDistributions P = forward(student, batch, &cache);
  StepDistributions Q = forward(teacher, batch);
  check_same_shape(Q, P);

  const double nll = nll_of(P);
  const double kd = selective_kd_value(Q, P);
  if (parts) *parts = LossParts{nll, kd};
  const double value = (1.0 - lambda) * nll + lambda * kd;
  auto d_nll = nll_dlogits(P);
  auto d_kd = kd_dlogits(P, Q);
  std::vector<Eigen::MatrixXd> dlogits;
  dlogits.reserve(P.sentences());
  for (size_t s = 0; s < P.sentences(); ++s)
    dlogits.push_back((1.0 - lambda) * d_nll[s] + lambda * d_kd[s]);
  return LossGrad{value, backward(student, cache, dlogits)};
}

LossGrad adaptive_kd_loss(const SequenceModel& student, const Batch& batch,
                          const std::vector<StepDistributions>& teachers,
                          const Eigen::VectorXd& alpha) {
  if (static_cast<long>(teachers.size()) != alpha.size())
    throw validation_error("adaptive_kd_loss: alpha size does not match teacher count");
  if (teachers.empty()) throw validation_error("adaptive_kd_loss: no teachers given");

  ForwardCache cache;
  StepDistributions P = forward(student, batch, &cache);
  double value = 0.0;
  std::vector<Eigen::MatrixXd> dlogits;
  for (size_t c = 0; c < teachers.size(); ++c) {
    check_same_shape(teachers[c], P);
    const double a = alpha[static_cast<long>(c)];
    value += a * selective_kd_value(teachers[c], P);
    auto d = kd_dlogits(P, teachers[c]);
    if (dlogits.empty()) {
      dlogits = std::move(d);
      for (auto& m : dlogits) m *= a;
    } else {
      for (size_t s = 0; s < dlogits.size(); ++s) dlogits[s] += a * d[s];
    }
  }
  return LossGrad{value, backward(student, cache, dlogits)};
}

LossGrad adaptive_total_loss(const SequenceModel& student,
                             const std::vector<const SequenceModel*>& teacher_assistants,
                             const Batch& batch, const Eigen::VectorXd& alpha, double lambda1,
                             double lambda2, LossParts* parts) {
  if (static_cast<long>(teacher_assistants.size()) != alpha.size())
    throw validation_error("adaptive_total_loss: alpha size does not match teacher count");

  ForwardCache cache;
  StepDistributions P = forward(student, batch, &cache);
  std::vector<StepDistributions> Q;
  Q.reserve(teacher_assistants.size());
  for (const auto* ta : teacher_assistants) {
    Q.push_back(forward(*ta, batch));
    check_same_shape(Q.back(), P);
  }

  const double nll = nll_of(P);
  double kd = 0.0;
  auto d_nll = nll_dlogits(P);
  std::vector<Eigen::MatrixXd> dlogits;
  dlogits.reserve(P.sentences());
  for (size_t s = 0; s < P.sentences(); ++s) dlogits.push_back(lambda1 * d_nll[s]);
  for (size_t c = 0; c < Q.size(); ++c) {
    const double a = alpha[static_cast<long>(c)];
    kd += a * selective_kd_value(Q[c], P);
    auto d = kd_dlogits(P, Q[c]);
    for (size_t s = 0; s < dlogits.size(); ++s) dlogits[s] += lambda2 * a * d[s];
  }
  if (parts) *parts = LossParts{nll, kd};
  return LossGrad{lambda1 * nll + lambda2 * kd, backward(student, cache, dlogits)};
}

}  // namespace hkd
