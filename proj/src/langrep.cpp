#include "langrep.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <sstream>

namespace hkd {

void LanguageVectorSet::validate() const {
  if (static_cast<long>(languages.size()) != vectors.rows())
    throw validation_error("language vector set: one row per language required");
  if (!vectors.allFinite()) throw validation_error("language vector set: non-finite entries");
  if (kind == VectorKind::kb) {
    for (long i = 0; i < vectors.rows(); ++i)
      for (long j = 0; j < vectors.cols(); ++j)
        if (vectors(i, j) != 0.0 && vectors(i, j) != 1.0)
          throw validation_error("kb vectors must be 0/1-valued");
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  return fields;
}

}  // namespace

LanguageVectorSet load_kb_csv(const std::filesystem::path& path) {
  auto lines = read_lines(path);
  if (lines.empty()) throw validation_error("kb csv " + path.string() + " is empty");
  const auto header = split_csv_line(lines[0]);
  if (header.empty() || header[0] != "lang")
    throw validation_error("kb csv " + path.string() + ": header must start with 'lang'");
  const int dim = static_cast<int>(header.size()) - 1;
  if (dim < 1) throw validation_error("kb csv " + path.string() + ": no feature columns");

  LanguageVectorSet set;
  set.kind = VectorKind::kb;
  std::vector<std::vector<double>> rows;
  for (size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto fields = split_csv_line(lines[i]);
    if (static_cast<int>(fields.size()) != dim + 1)
      throw validation_error("kb csv " + path.string() + ": row " + std::to_string(i + 1) +
                             " has " + std::to_string(fields.size()) + " fields, expected " +
                             std::to_string(dim + 1));
    set.languages.push_back(LanguageId{fields[0]});
    std::vector<double> row;
    for (int j = 1; j <= dim; ++j) {
      if (fields[static_cast<size_t>(j)] != "0" && fields[static_cast<size_t>(j)] != "1")
        throw validation_error("kb csv " + path.string() + ": entry '" +
                               fields[static_cast<size_t>(j)] + "' is not 0/1");
      row.push_back(fields[static_cast<size_t>(j)] == "1" ? 1.0 : 0.0);
    }
    rows.push_back(std::move(row));
  }
  set.vectors.resize(static_cast<long>(rows.size()), dim);
  for (size_t i = 0; i < rows.size(); ++i)
    for (int j = 0; j < dim; ++j) set.vectors(static_cast<long>(i), j) = rows[i][static_cast<size_t>(j)];
  set.validate();
  return set;
}

LanguageVectorSet learn_language_embeddings(const SequenceModel& model, const Vocabulary& vocab,
                                            const std::vector<LanguageId>& languages) {
  LanguageVectorSet set;
  set.kind = VectorKind::nmt_learned;
  set.languages = languages;
  auto src_embed = model.slice("src_embed");
  set.vectors.resize(static_cast<long>(languages.size()), model.dims().embed);
  for (size_t i = 0; i < languages.size(); ++i) {
    const int tag = vocab.tag_id(languages[i]);  // throws config error when missing
    set.vectors.row(static_cast<long>(i)) = src_embed.col(tag).transpose();
  }
  set.validate();
  return set;
}

namespace {

/// Orthonormal basis of the centered view, truncated to the leading singular
/// directions that explain keep_fraction of the variance.
Eigen::MatrixXd reduced_basis(const Eigen::MatrixXd& view, double keep_fraction,
                              const std::string& name, std::vector<std::string>& warnings) {
  Eigen::MatrixXd centered = view.rowwise() - view.colwise().mean();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double total = sv.array().square().sum();
  if (total <= 0.0) throw validation_error("svcca_fuse: view '" + name + "' has zero variance");

  const double tol = sv[0] * 1e-10;
  long full_rank = 0;
  for (long i = 0; i < sv.size(); ++i)
    if (sv[i] > tol) ++full_rank;
  if (full_rank < sv.size())
    warnings.push_back("view '" + name + "' is rank deficient (" + std::to_string(full_rank) +
                       " of " + std::to_string(sv.size()) + " directions kept)");

  long keep = 0;
  double acc = 0.0;
  while (keep < full_rank) {
    acc += sv[keep] * sv[keep];
    ++keep;
    if (acc / total >= keep_fraction) break;
  }
  keep = std::max<long>(keep, 1);
  return svd.matrixU().leftCols(keep);
}

}  // namespace

SvccaResult svcca_fuse(const LanguageVectorSet& view_a, const LanguageVectorSet& view_b,
                       double keep_fraction) {
  view_a.validate();
  view_b.validate();
  if (view_a.languages != view_b.languages)
    throw validation_error("svcca_fuse: views must cover the same languages in the same order");
  if (keep_fraction <= 0.0 || keep_fraction > 1.0)
    throw validation_error("svcca_fuse: keep_fraction must lie in (0, 1]");

  SvccaResult result;
  Eigen::MatrixXd ua = reduced_basis(view_a.vectors, keep_fraction, "A", result.warnings);
  Eigen::MatrixXd ub = reduced_basis(view_b.vectors, keep_fraction, "B", result.warnings);

  // both bases are orthonormal, so CCA reduces to the SVD of their product
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(ua.transpose() * ub,
                                        Eigen::ComputeThinU | Eigen::ComputeThinV);
  result.correlations = svd.singularValues().cwiseMin(1.0).cwiseMax(0.0);
  Eigen::MatrixXd proj_a = ua * svd.matrixU();
  Eigen::MatrixXd proj_b = ub * svd.matrixV();

  result.fused.kind = VectorKind::fused;
  result.fused.languages = view_a.languages;
  result.fused.vectors.resize(proj_a.rows(), proj_a.cols() + proj_b.cols());
  result.fused.vectors << proj_a, proj_b;
  return result;
}

std::vector<LanguageId> Clustering::members(int cluster) const {
  std::vector<LanguageId> out;
  for (const auto& [lang, c] : assignment)
    if (c == cluster) out.push_back(lang);
  return out;
}

void Clustering::validate() const {
  if (n < 1) throw validation_error("clustering '" + type_id + "': n must be >= 1");
  std::vector<int> sizes(static_cast<size_t>(n), 0);
  for (const auto& [lang, c] : assignment) {
    if (c < 1 || c > n)
      throw validation_error("clustering '" + type_id + "': cluster index out of range for " +
                             lang.code);
    ++sizes[static_cast<size_t>(c - 1)];
  }
  for (int c = 0; c < n; ++c)
    if (sizes[static_cast<size_t>(c)] == 0)
      throw validation_error("clustering '" + type_id + "': cluster " + std::to_string(c + 1) +
                             " is empty");
}

Clustering kmeans(const LanguageVectorSet& vectors, int n, uint64_t seed, KmeansTrace* trace) {
  vectors.validate();
  const long count = vectors.vectors.rows();
  if (n < 1) throw validation_error("kmeans: n must be >= 1");
  if (n > count) throw validation_error("kmeans: n exceeds the number of languages");

  const auto& X = vectors.vectors;
  Rng rng(seed);

  // k-means++ seeding
  std::vector<long> centers;
  centers.push_back(static_cast<long>(rng.next_below(static_cast<uint64_t>(count))));
  while (static_cast<int>(centers.size()) < n) {
    Eigen::VectorXd d2(count);
    for (long i = 0; i < count; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (long c : centers) best = std::min(best, (X.row(i) - X.row(c)).squaredNorm());
      d2[i] = best;
    }
    const double total = d2.sum();
    long pick;
    if (total <= 0.0) {
      pick = static_cast<long>(rng.next_below(static_cast<uint64_t>(count)));
    } else {
      double r = rng.next_double() * total;
      pick = count - 1;
      for (long i = 0; i < count; ++i) {
        r -= d2[i];
        if (r <= 0.0) {
          pick = i;
          break;
        }
      }
    }
    centers.push_back(pick);
  }

  Eigen::MatrixXd centroids(n, X.cols());
  for (int c = 0; c < n; ++c) centroids.row(c) = X.row(centers[static_cast<size_t>(c)]);

  std::vector<int> assign(static_cast<size_t>(count), -1);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    double objective = 0.0;
    std::vector<int> sizes(static_cast<size_t>(n), 0);
    for (long i = 0; i < count; ++i) {
      int best = 0;
      double best_d = (X.row(i) - centroids.row(0)).squaredNorm();
      for (int c = 1; c < n; ++c) {
        const double d = (X.row(i) - centroids.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      objective += best_d;
      if (assign[static_cast<size_t>(i)] != best) changed = true;
      assign[static_cast<size_t>(i)] = best;
      ++sizes[static_cast<size_t>(best)];
    }

    // repair empty clusters with the farthest member of the largest cluster
    for (int c = 0; c < n; ++c) {
      if (sizes[static_cast<size_t>(c)] > 0) continue;
      const int largest = static_cast<int>(
          std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
      long farthest = -1;
      double far_d = -1.0;
      for (long i = 0; i < count; ++i) {
        if (assign[static_cast<size_t>(i)] != largest) continue;
        const double d = (X.row(i) - centroids.row(largest)).squaredNorm();
        if (d > far_d) {
          far_d = d;
          farthest = i;
        }
      }
      assign[static_cast<size_t>(farthest)] = c;
      --sizes[static_cast<size_t>(largest)];
      ++sizes[static_cast<size_t>(c)];
      changed = true;
    }

    if (trace) {
      trace->objective.push_back(objective);
      trace->iterations = iter + 1;
    }

    for (int c = 0; c < n; ++c) centroids.row(c).setZero();
    for (long i = 0; i < count; ++i) centroids.row(assign[static_cast<size_t>(i)]) += X.row(i);
    for (int c = 0; c < n; ++c) centroids.row(c) /= static_cast<double>(sizes[static_cast<size_t>(c)]);

    if (!changed) break;
  }

  Clustering clustering;
  clustering.n = n;
  for (long i = 0; i < count; ++i)
    clustering.assignment[vectors.languages[static_cast<size_t>(i)]] =
        assign[static_cast<size_t>(i)] + 1;
  clustering.validate();
  return clustering;
}

Clustering random_clustering(const std::vector<LanguageId>& languages, int n, uint64_t seed) {
  if (n < 1) throw validation_error("random clustering: n must be >= 1");
  if (n > static_cast<int>(languages.size()))
    throw validation_error("random clustering: n exceeds the number of languages");
  auto order = languages;
  Rng rng(seed);
  rng.shuffle(order);
  Clustering clustering;
  clustering.n = n;
  for (size_t i = 0; i < order.size(); ++i)
    clustering.assignment[order[i]] = static_cast<int>(i % static_cast<size_t>(n)) + 1;
  clustering.validate();
  return clustering;
}

std::vector<EffectiveCluster> effective_clusters(const LanguageId& lang,
                                                 const std::vector<Clustering>& clusterings) {
  std::vector<EffectiveCluster> out;
  for (const auto& clustering : clusterings) {
    auto it = clustering.assignment.find(lang);
    if (it == clustering.assignment.end())
      throw validation_error("language " + lang.code + " missing from clustering '" +
                             clustering.type_id + "'");
    out.push_back(EffectiveCluster{clustering.type_id, it->second});
  }
  return out;
}

EffectiveClusterIndex build_effective_index(const std::vector<LanguageId>& languages,
                                            const std::vector<Clustering>& clusterings) {
  EffectiveClusterIndex index;
  for (const auto& lang : languages) index[lang] = effective_clusters(lang, clusterings);
  return index;
}

void save_clusterings_csv(const std::filesystem::path& path,
                          const std::vector<Clustering>& clusterings) {
  std::ostringstream out;
  out << "lang,type_id,cluster\n";
  for (const auto& clustering : clusterings)
    for (const auto& [lang, c] : clustering.assignment)
      out << lang.code << ',' << clustering.type_id << ',' << c << '\n';
  write_file_atomic(path, out.str());
}

std::vector<Clustering> load_clusterings_csv(const std::filesystem::path& path) {
  auto lines = read_lines(path);
  if (lines.empty() || lines[0] != "lang,type_id,cluster")
    throw validation_error("clusters csv " + path.string() + ": bad header");
  std::vector<Clustering> clusterings;
  std::map<std::string, size_t> by_type;
  for (size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto fields = split_csv_line(lines[i]);
    if (fields.size() != 3)
      throw validation_error("clusters csv " + path.string() + ": bad row " + std::to_string(i + 1));
    auto [it, inserted] = by_type.try_emplace(fields[1], clusterings.size());
    if (inserted) {
      clusterings.emplace_back();
      clusterings.back().type_id = fields[1];
    }
    auto& clustering = clusterings[it->second];
    const int c = std::stoi(fields[2]);
    clustering.assignment[LanguageId{fields[0]}] = c;
    clustering.n = std::max(clustering.n, c);
  }
  for (auto& clustering : clusterings) clustering.validate();
  return clusterings;
}

}  // namespace hkd
