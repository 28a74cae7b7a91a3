#pragma once

#include <optional>

#include "corpus.hpp"
#include "distill.hpp"

#include "json.hpp"

namespace hkd {

struct RealDataConfig {
  std::string dir;
  std::vector<std::string> languages;
  std::string tokenizer = "whitespace";  // or "chars"
};

struct ClusteringConfig {
  std::string type_id;
  std::string source;  // kb | nmt | fused | random
  int n_clusters = 1;
  std::string kb_csv;         // optional; defaults to the generated kb.csv
  double keep_fraction = 0.99;  // fused only
  int embed_epochs = 2;         // nmt/fused probe training
};

struct ExperimentConfig {
  std::optional<SyntheticFamilySpec> synthetic;
  std::optional<RealDataConfig> real;

  std::vector<ClusteringConfig> clustering;

  ModelDims model{0, 16, 32};  // vocab resolved from data

  double learning_rate = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  DistillationPlan plan;
  std::string lambda2_shape = "linear";

  int epochs_teachers = 10;
  int epochs_tas = 6;
  int epochs_student = 6;

  int batch_size = 8;
  uint64_t seed = 1;
  std::string output_dir = "out";
  int jobs = 1;

  bool baseline_enabled = false;
  int baseline_epochs = 0;  // 0: same as epochs_student

  size_t max_decode_len = 200;
  long low_resource_max = 0;           // train-size cutoffs for resource tiers
  long extremely_low_max = 0;

  TokenMode token_mode() const;
  std::string tier_for(long train_sentences) const;
};

struct ValidatedConfig {
  ExperimentConfig config;
  std::vector<std::string> applied_defaults;
  std::vector<std::string> errors;
  bool ok() const { return errors.empty(); }
};

/// Parses and validates; collects every violated constraint instead of
/// stopping at the first. A whitespace-only file counts as an empty object.
ValidatedConfig validate_config_text(const std::string& text);
ValidatedConfig validate_config(const std::filesystem::path& path);

/// Canonical JSON with every default materialized; re-validating the dump
/// yields the same config.
nlohmann::json config_to_json(const ExperimentConfig& config);

}  // namespace hkd
