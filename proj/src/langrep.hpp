#pragma once

#include <optional>

#include "model.hpp"

namespace hkd {

enum class VectorKind { kb, nmt_learned, fused };

struct LanguageVectorSet {
  VectorKind kind = VectorKind::kb;
  std::vector<LanguageId> languages;
  Eigen::MatrixXd vectors;  // one row per language
  int dimension() const { return static_cast<int>(vectors.cols()); }

  void validate() const;
};

/// CSV with header `lang,f1,...,fd` and 0/1 entries.
LanguageVectorSet load_kb_csv(const std::filesystem::path& path);

/// Rows are the source-embedding columns of each language's tag token.
LanguageVectorSet learn_language_embeddings(const SequenceModel& model, const Vocabulary& vocab,
                                            const std::vector<LanguageId>& languages);

struct SvccaResult {
  LanguageVectorSet fused;
  Eigen::VectorXd correlations;  // descending, in [0, 1]
  std::vector<std::string> warnings;
};

/// SVD-reduce both centered views to the directions explaining at least
/// keep_fraction of variance, align them with CCA, and concatenate the two
/// canonical projections (columns ordered by descending correlation).
SvccaResult svcca_fuse(const LanguageVectorSet& view_a, const LanguageVectorSet& view_b,
                       double keep_fraction);

struct Clustering {
  std::string type_id;
  std::map<LanguageId, int> assignment;  // cluster indices 1..n
  int n = 0;

  std::vector<LanguageId> members(int cluster) const;
  void validate() const;
};

struct KmeansTrace {
  std::vector<double> objective;  // after every assignment step
  int iterations = 0;
};

/// Lloyd iterations with k-means++ seeding; empty clusters are repaired by
/// stealing the farthest point from the largest cluster.
Clustering kmeans(const LanguageVectorSet& vectors, int n, uint64_t seed,
                  KmeansTrace* trace = nullptr);

/// Balanced random assignment (ablation option).
Clustering random_clustering(const std::vector<LanguageId>& languages, int n, uint64_t seed);

/// Per clustering type, the unique cluster containing the language.
struct EffectiveCluster {
  std::string type_id;
  int cluster = 0;
  std::string label() const { return type_id + "_" + std::to_string(cluster); }
};

std::vector<EffectiveCluster> effective_clusters(const LanguageId& lang,
                                                 const std::vector<Clustering>& clusterings);

using EffectiveClusterIndex = std::map<LanguageId, std::vector<EffectiveCluster>>;

EffectiveClusterIndex build_effective_index(const std::vector<LanguageId>& languages,
                                            const std::vector<Clustering>& clusterings);

// clusters.csv: `lang,type_id,cluster`
void save_clusterings_csv(const std::filesystem::path& path,
                          const std::vector<Clustering>& clusterings);
std::vector<Clustering> load_clusterings_csv(const std::filesystem::path& path);

}  // namespace hkd
