#pragma once

#include <memory>
#include <optional>

#include "config.hpp"
#include "trainer.hpp"

namespace hkd {

/// Loaded data plus the shared vocabulary, built deterministically from the
/// train-split text of every language.
struct DataBundle {
  Vocabulary vocab;
  DataStore store;
  std::vector<LanguageId> languages;
  std::map<LanguageId, long> train_sizes;  // raw sizes, pre-upsampling
  std::map<LanguageId, std::string> families;  // synthetic runs only
};

/// Drives the staged pipeline over an output directory:
///   gen-data -> cluster -> train-teachers -> train-tas -> train-student
///   -> evaluate -> report
/// Each stage reads its inputs from files, so stages can run in separate
/// processes and resume from what already exists.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig config);

  void set_output_dir(const std::string& dir) { cfg_.output_dir = dir; }
  void set_seed(uint64_t seed) { cfg_.seed = seed; }
  void set_jobs(int jobs);
  void set_resume(bool resume) { resume_ = resume; }

  void run_stage(const std::string& stage);

  const ExperimentConfig& config() const { return cfg_; }
  std::filesystem::path output() const { return cfg_.output_dir; }
  std::filesystem::path data_dir() const;

  /// Test hook: corpus reads recorded so far (stage, language, split).
  std::vector<AccessRecord> access_log() const;

  DataBundle& bundle();

 private:
  void write_snapshot();
  void stage_gen_data();
  void stage_cluster();
  void stage_train_teachers();
  void stage_train_tas();
  void stage_train_student();
  void stage_evaluate();
  void stage_report();

  std::vector<Clustering> clusterings();
  TrainContext train_context();
  SequenceModel load_model(const std::filesystem::path& path, const std::string& what);
  double corpus_bleu_of(const SequenceModel& model, const ParallelCorpus& corpus);

  ExperimentConfig cfg_;
  bool resume_ = false;
  std::unique_ptr<DataBundle> bundle_;
  std::optional<std::vector<Clustering>> clusterings_;
};

}  // namespace hkd
