#pragma once

#include <array>
#include <optional>

#include "corpus.hpp"

#include "json.hpp"

namespace hkd {

struct BleuScore {
  double score = 0.0;                    // 0..100
  std::array<double, 4> precisions{};    // percentages, smoothed
  double brevity_penalty = 1.0;
  size_t hyp_len = 0;
  size_t ref_len = 0;
};

/// Corpus-level BLEU-4 on token ids: single reference, exponential smoothing
/// for zero n-gram counts, standard brevity penalty, no retokenization.
BleuScore bleu(const std::vector<std::vector<int>>& hypotheses,
               const std::vector<std::vector<int>>& references);

struct ReportRow {
  std::string system;
  LanguageId lang;
  std::string tier;
  double bleu = 0.0;
};

/// Per tier, each system's share of top-2 finishes across languages.
/// Ties share the better rank with fractional credit, so every language
/// distributes exactly two credits and each row sums to 100.
std::map<std::string, std::map<std::string, double>> rank_systems(
    const std::vector<ReportRow>& rows);

/// Population variance of each language's effective teacher-assistant BLEU
/// scores; languages with fewer than two assistants are absent.
std::map<LanguageId, double> ta_variance(
    const std::map<LanguageId, std::vector<double>>& ta_scores);

struct AlphaSummaryRow {
  LanguageId lang;
  std::string ta;        // "<type_id>_<cluster>"
  double mean_alpha = 0.0;
  long batches = 0;
};

struct TrainReport {
  std::vector<ReportRow> rows;
  std::vector<AlphaSummaryRow> alpha_summary;
  std::map<LanguageId, std::map<std::string, double>> ta_dev_bleu;
  std::map<LanguageId, double> ta_bleu_variance;
  std::map<std::string, std::map<std::string, double>> rankings;
  std::map<LanguageId, std::string> family;                       // synthetic runs only
  std::map<std::string, std::map<std::string, double>> family_mean;  // family -> system -> BLEU
};

std::string report_to_csv(const TrainReport& report);
nlohmann::json report_to_json(const TrainReport& report);
TrainReport report_from_json(const nlohmann::json& j);
/// Table-shaped grid with the best score bold and the runner-up underlined,
/// plus ranking, variance and alpha-summary sections.
std::string report_to_markdown(const TrainReport& report);

}  // namespace hkd
