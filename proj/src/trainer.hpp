#pragma once

#include <functional>
#include <mutex>
#include <optional>

#include "distill.hpp"
#include "eval.hpp"
#include "langrep.hpp"

namespace hkd {

/// Alg-2 rule: a language keeps its KD term while the student's accuracy
/// stays strictly below the teacher's accuracy plus the threshold.
inline bool distillation_flag(double student_acc, double teacher_acc, double threshold) {
  return student_acc < teacher_acc + threshold;
}

struct FlagState {
  std::map<LanguageId, bool> flags;
  struct Flip {
    int epoch = 0;
    LanguageId lang;
    bool from = true;
    bool to = true;
  };
  std::vector<Flip> history;
};

struct FlagLogRow {
  std::string model_id;
  int epoch = 0;
  LanguageId lang;
  double student_acc = 0.0;
  double teacher_acc = 0.0;
  bool flag = true;
};

struct AlphaLogRow {
  long step = 0;
  LanguageId lang;
  std::string ta;  // "type_id:cluster"
  double alpha = 0.0;
  double perplexity = 0.0;
};

struct BatchLossInfo {
  std::string model_id;
  int epoch = 0;
  long step = 0;  // global step index of this update, 0-based
  LanguageId lang;
  bool kd_active = false;
  LossParts parts;
  double total = 0.0;
};

struct TrainHooks {
  /// Called after each epoch's checkpoint; returning true stops the run
  /// without marking it completed (used to emulate interruption).
  std::function<bool(int epoch)> stop_after_epoch;
  std::function<void(const BatchLossInfo&)> on_batch;
};

struct AccessRecord {
  std::string stage;
  LanguageId lang;
  Split split = Split::train;
};

/// Split-typed corpus store; every read is recorded so tests can assert the
/// training stages never touch the test split.
class DataStore {
 public:
  void put(ParallelCorpus corpus);
  const ParallelCorpus& get(const LanguageId& lang, Split split) const;
  bool has(const LanguageId& lang, Split split) const;
  std::vector<LanguageId> languages() const;
  void set_stage(const std::string& stage) { stage_ = stage; }
  std::vector<AccessRecord> access_log() const;

 private:
  std::map<Split, std::map<LanguageId, ParallelCorpus>> data_;
  std::string stage_ = "load";
  mutable std::vector<AccessRecord> log_;
  mutable std::mutex mutex_;
};

/// Model input view: language tag prepended to the source, end token
/// appended to the target.
Batch prepare_batch(const Batch& raw, int tag_id);
long gold_token_count(const Batch& prepared);

/// Dev accuracy used by the flag rule: greedy-decode BLEU by default,
/// teacher-forced token accuracy behind the config switch. Both on a 0-100
/// scale.
double dev_accuracy(const SequenceModel& model, const ParallelCorpus& dev, int tag_id,
                    bool token_accuracy, size_t max_decode_len);

struct TrainContext {
  const Vocabulary* vocab = nullptr;
  DataStore* data = nullptr;
  ModelDims dims;
  double learning_rate = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 8;
  size_t max_decode_len = 200;
  TrainHooks hooks;
};

/// One specification covers all three tiers: plain NLL (teachers and tas
/// absent), selective KD (teachers set), adaptive KD (tas set). The loops
/// consume randomness identically across modes, so a selective run whose
/// flags are all false matches an NLL run bit for bit.
struct TrainSpec {
  std::string model_id;
  std::vector<LanguageId> languages;
  std::map<LanguageId, ParallelCorpus> corpora;
  int epochs = 1;
  uint64_t seed = 0;

  const std::map<LanguageId, SequenceModel>* teachers = nullptr;   // selective
  const std::map<std::string, SequenceModel>* tas = nullptr;       // adaptive, keyed by label
  const EffectiveClusterIndex* effective = nullptr;
  const DistillationPlan* plan = nullptr;
  bool check_flags = true;  // selective only

  std::filesystem::path ckpt_path;  // empty: no checkpointing
  bool resume = false;
};

struct TrainResult {
  SequenceModel model;
  AdamState opt;
  FlagState flags;
  long global_step = 0;
  bool completed = false;
  std::vector<FlagLogRow> flag_rows;
  std::vector<AlphaLogRow> alpha_rows;
};

TrainResult run_training(const TrainContext& ctx, const TrainSpec& spec);

/// Restores a completed run's result from its checkpoint.
TrainResult result_from_checkpoint(const std::filesystem::path& path);

// log files
void write_alpha_csv(const std::filesystem::path& path, const std::vector<AlphaLogRow>& rows);
std::vector<AlphaLogRow> read_alpha_csv(const std::filesystem::path& path);
void write_flags_csv(const std::filesystem::path& path, const std::vector<FlagLogRow>& rows);

}  // namespace hkd
