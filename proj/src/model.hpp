#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "corpus.hpp"

#include "json.hpp"

namespace hkd {

struct ModelDims {
  int vocab = 0;
  int embed = 32;
  int hidden = 64;
  bool operator==(const ModelDims&) const = default;
};

struct ParamSlice {
  std::string name;
  long offset = 0;
  long rows = 0;
  long cols = 0;
  long size() const { return rows * cols; }
};

/// Recurrent encoder-decoder with dot-product attention over encoder states.
/// All parameters live in one flat vector with named slices so the optimizer,
/// gradient checks and checkpoints can treat the model uniformly.
class SequenceModel {
 public:
  SequenceModel() = default;
  SequenceModel(ModelDims dims, uint64_t init_seed);

  const ModelDims& dims() const { return dims_; }
  Eigen::VectorXd& params() { return theta_; }
  const Eigen::VectorXd& params() const { return theta_; }
  long param_count() const { return theta_.size(); }
  const std::vector<ParamSlice>& slices() const { return slices_; }

  /// Name of the slice containing flat index i (for diagnostics).
  const std::string& slice_name_at(long i) const;

  // slice views; valid as long as the model (or the given flat vector) lives
  using MatView = Eigen::Map<Eigen::MatrixXd>;
  using ConstMatView = Eigen::Map<const Eigen::MatrixXd>;
  MatView slice(Eigen::VectorXd& flat, const std::string& name) const;
  ConstMatView slice(const Eigen::VectorXd& flat, const std::string& name) const;
  ConstMatView slice(const std::string& name) const { return slice(theta_, name); }

 private:
  void build_layout();

  ModelDims dims_;
  Eigen::VectorXd theta_;
  std::vector<ParamSlice> slices_;
  std::map<std::string, size_t> slice_index_;
};

/// Teacher-forced output distributions: per sentence, one row per target
/// position over the vocabulary. Rows always sum to 1.
struct StepDistributions {
  std::vector<Eigen::MatrixXd> probs;       // [sentence] -> T x |V|
  std::vector<std::vector<int>> gold;       // target ids per sentence
  size_t sentences() const { return probs.size(); }
  long total_tokens() const;
};

/// Intermediate activations kept for the backward pass.
struct ForwardCache {
  struct Sentence {
    std::vector<int> src;
    std::vector<int> dec_inputs;   // BOS-shifted targets
    Eigen::MatrixXd enc_h;         // H x S
    Eigen::MatrixXd dec_s;         // H x T
    Eigen::MatrixXd attn;          // S x T (column t = attention over source)
    Eigen::MatrixXd ctx;           // H x T
    Eigen::MatrixXd probs;         // V x T
  };
  std::vector<Sentence> sentences;
};

StepDistributions forward(const SequenceModel& model, const Batch& batch);
StepDistributions forward(const SequenceModel& model, const Batch& batch, ForwardCache* cache);

/// Backpropagates per-step logit gradients (T x |V| per sentence, same
/// layout as StepDistributions::probs) into a flat parameter gradient.
Eigen::VectorXd backward(const SequenceModel& model, const ForwardCache& cache,
                         const std::vector<Eigen::MatrixXd>& dlogits);

struct LossGrad {
  double value = 0.0;
  Eigen::VectorXd grad;
};

/// Sum of -log P(gold) over all sentences and steps.
double nll_value(const SequenceModel& model, const Batch& batch);
LossGrad nll_loss_and_grad(const SequenceModel& model, const Batch& batch);

/// exp(total NLL / total gold tokens), teacher-forced.
double perplexity(const SequenceModel& model, const Batch& batch);

/// Argmax decoding, ties broken toward the lowest id; stops at </s> or max_len.
std::vector<int> greedy_decode(const SequenceModel& model, const std::vector<int>& source,
                               size_t max_len);

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step = 0;
  Eigen::VectorXd m;
  Eigen::VectorXd v;

  static AdamState for_model(const SequenceModel& model, double lr);
};

/// Standard Adam with bias correction. Throws on non-finite gradients,
/// naming the offending parameter slice.
void apply_update(SequenceModel& model, const Eigen::VectorXd& grad, AdamState& opt);

// ---- checkpoints ----

struct Checkpoint {
  SequenceModel model;
  AdamState opt;
  std::array<uint64_t, 4> rng_state{};
  nlohmann::json extra;
};

void save_checkpoint(const std::filesystem::path& path, const SequenceModel& model,
                     const AdamState& opt, const std::array<uint64_t, 4>& rng_state,
                     const nlohmann::json& extra);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hkd
