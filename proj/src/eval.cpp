#include "eval.hpp"

#include <algorithm>
#include <numeric>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

namespace hkd {

namespace {

using Ngram = std::vector<int>;

std::map<Ngram, long> ngram_counts(const std::vector<int>& tokens, size_t n) {
  std::map<Ngram, long> counts;
  if (tokens.size() < n) return counts;
  for (size_t i = 0; i + n <= tokens.size(); ++i)
    ++counts[Ngram(tokens.begin() + static_cast<long>(i), tokens.begin() + static_cast<long>(i + n))];
  return counts;
}

}  // namespace

BleuScore bleu(const std::vector<std::vector<int>>& hypotheses,
               const std::vector<std::vector<int>>& references) {
  if (hypotheses.size() != references.size())
    throw validation_error("bleu: " + std::to_string(hypotheses.size()) + " hypotheses vs " +
                           std::to_string(references.size()) + " references");
  if (hypotheses.empty()) throw validation_error("bleu: at least one sentence pair required");

  std::array<long, 4> correct{};
  std::array<long, 4> total{};
  BleuScore res;
  for (size_t i = 0; i < hypotheses.size(); ++i) {
    res.hyp_len += hypotheses[i].size();
    res.ref_len += references[i].size();
    for (size_t n = 1; n <= 4; ++n) {
      const auto hyp_counts = ngram_counts(hypotheses[i], n);
      const auto ref_counts = ngram_counts(references[i], n);
      if (hypotheses[i].size() >= n)
        total[n - 1] += static_cast<long>(hypotheses[i].size() - n + 1);
      for (const auto& [ngram, count] : hyp_counts) {
        auto it = ref_counts.find(ngram);
        if (it != ref_counts.end()) correct[n - 1] += std::min(count, it->second);
      }
    }
  }

  double smooth = 1.0;
  double log_prec_sum = 0.0;
  bool zero_precision = false;
  for (size_t n = 0; n < 4; ++n) {
    double p;  // percentage
    if (total[n] == 0) {
      p = 0.0;
    } else if (correct[n] == 0) {
      smooth *= 2.0;
      p = 100.0 / (smooth * static_cast<double>(total[n]));
    } else {
      p = 100.0 * static_cast<double>(correct[n]) / static_cast<double>(total[n]);
    }
    res.precisions[n] = p;
    if (p <= 0.0)
      zero_precision = true;
    else
      log_prec_sum += std::log(p / 100.0);
  }

  res.brevity_penalty = 1.0;
  if (res.hyp_len == 0)
    res.brevity_penalty = 0.0;
  else if (res.hyp_len < res.ref_len)
    res.brevity_penalty =
        std::exp(1.0 - static_cast<double>(res.ref_len) / static_cast<double>(res.hyp_len));

  res.score = zero_precision ? 0.0 : res.brevity_penalty * std::exp(log_prec_sum / 4.0) * 100.0;
  return res;
}

std::map<std::string, std::map<std::string, double>> rank_systems(
    const std::vector<ReportRow>& rows) {
  std::set<std::string> systems;
  for (const auto& r : rows) systems.insert(r.system);
  if (systems.size() < 2) throw validation_error("rank_systems: at least two systems required");

  // tier -> lang -> (system, bleu)
  std::map<std::string, std::map<LanguageId, std::vector<std::pair<std::string, double>>>> tiers;
  for (const auto& r : rows) tiers[r.tier][r.lang].emplace_back(r.system, r.bleu);

  std::map<std::string, std::map<std::string, double>> out;
  for (const auto& [tier, langs] : tiers) {
    std::map<std::string, double> credit;
    for (const auto& s : systems) credit[s] = 0.0;
    for (const auto& [lang, scores] : langs) {
      // group by score descending, distribute the two top slots
      std::map<double, std::vector<std::string>, std::greater<>> groups;
      for (const auto& [sys, score] : scores) groups[score].push_back(sys);
      double slots = 2.0;
      for (const auto& [score, members] : groups) {
        if (slots <= 0.0) break;
        const double share = std::min(1.0, slots / static_cast<double>(members.size()));
        for (const auto& sys : members) credit[sys] += share;
        slots -= share * static_cast<double>(members.size());
      }
    }
    const double denom = 2.0 * static_cast<double>(langs.size());
    for (auto& [sys, c] : credit) out[tier][sys] = 100.0 * c / denom;
  }
  return out;
}

std::map<LanguageId, double> ta_variance(
    const std::map<LanguageId, std::vector<double>>& ta_scores) {
  std::map<LanguageId, double> out;
  for (const auto& [lang, scores] : ta_scores) {
    if (scores.size() < 2) continue;
    const double mean =
        std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
    double var = 0.0;
    for (double s : scores) var += (s - mean) * (s - mean);
    out[lang] = var / static_cast<double>(scores.size());
  }
  return out;
}

std::string report_to_csv(const TrainReport& report) {
  auto rows = report.rows;
  std::sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
    return std::tie(a.system, a.lang) < std::tie(b.system, b.lang);
  });
  std::ostringstream out;
  out << "system,lang,tier,bleu\n";
  out << std::fixed << std::setprecision(4);
  for (const auto& r : rows)
    out << r.system << ',' << r.lang.code << ',' << r.tier << ',' << r.bleu << '\n';
  return out.str();
}

nlohmann::json report_to_json(const TrainReport& report) {
  nlohmann::json j;
  auto& rows = j["rows"] = nlohmann::json::array();
  for (const auto& r : report.rows)
    rows.push_back({{"system", r.system}, {"lang", r.lang.code}, {"tier", r.tier}, {"bleu", r.bleu}});
  auto& alphas = j["alpha_summary"] = nlohmann::json::array();
  for (const auto& a : report.alpha_summary)
    alphas.push_back(
        {{"lang", a.lang.code}, {"ta", a.ta}, {"mean_alpha", a.mean_alpha}, {"batches", a.batches}});
  auto& dev = j["ta_dev_bleu"] = nlohmann::json::object();
  for (const auto& [lang, scores] : report.ta_dev_bleu) dev[lang.code] = scores;
  auto& var = j["ta_bleu_variance"] = nlohmann::json::object();
  for (const auto& [lang, v] : report.ta_bleu_variance) var[lang.code] = v;
  j["rankings"] = report.rankings;
  auto& fam = j["family"] = nlohmann::json::object();
  for (const auto& [lang, f] : report.family) fam[lang.code] = f;
  j["family_mean"] = report.family_mean;
  return j;
}

TrainReport report_from_json(const nlohmann::json& j) {
  TrainReport report;
  for (const auto& r : j.at("rows"))
    report.rows.push_back(ReportRow{r.at("system").get<std::string>(),
                                    LanguageId{r.at("lang").get<std::string>()},
                                    r.at("tier").get<std::string>(), r.at("bleu").get<double>()});
  for (const auto& a : j.at("alpha_summary"))
    report.alpha_summary.push_back(AlphaSummaryRow{LanguageId{a.at("lang").get<std::string>()},
                                                   a.at("ta").get<std::string>(),
                                                   a.at("mean_alpha").get<double>(),
                                                   a.at("batches").get<long>()});
  for (const auto& [code, scores] : j.at("ta_dev_bleu").items())
    report.ta_dev_bleu[LanguageId{code}] = scores.get<std::map<std::string, double>>();
  for (const auto& [code, v] : j.at("ta_bleu_variance").items())
    report.ta_bleu_variance[LanguageId{code}] = v.get<double>();
  report.rankings = j.at("rankings").get<std::map<std::string, std::map<std::string, double>>>();
  for (const auto& [code, f] : j.at("family").items())
    report.family[LanguageId{code}] = f.get<std::string>();
  report.family_mean =
      j.at("family_mean").get<std::map<std::string, std::map<std::string, double>>>();
  return report;
}

namespace {

std::string fmt2(double v) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(2) << v;
  return ss.str();
}

}  // namespace

std::string report_to_markdown(const TrainReport& report) {
  std::set<std::string> systems;
  std::set<LanguageId> langs;
  std::map<LanguageId, std::string> tier_of;
  std::map<LanguageId, std::map<std::string, double>> grid;
  for (const auto& r : report.rows) {
    systems.insert(r.system);
    langs.insert(r.lang);
    tier_of[r.lang] = r.tier;
    grid[r.lang][r.system] = r.bleu;
  }

  std::ostringstream out;
  out << "# Translation report\n\n";
  out << "Test BLEU per language and system; the best score per language is **bold**, the "
         "second best is <u>underlined</u>.\n\n";

  out << "| tier | lang |";
  for (const auto& s : systems) out << ' ' << s << " |";
  out << "\n|---|---|";
  for (size_t i = 0; i < systems.size(); ++i) out << "---|";
  out << '\n';
  for (const auto& lang : langs) {
    out << "| " << tier_of[lang] << " | " << lang.code << " |";
    // best and second-best score values for markers
    std::set<double, std::greater<>> distinct;
    for (const auto& [_, b] : grid[lang]) distinct.insert(b);
    auto it = distinct.begin();
    const double best = distinct.empty() ? 0.0 : *it;
    const double second =
        distinct.size() > 1 ? *std::next(it) : std::numeric_limits<double>::quiet_NaN();
    for (const auto& s : systems) {
      auto found = grid[lang].find(s);
      if (found == grid[lang].end()) {
        out << " - |";
      } else if (found->second == best) {
        out << " **" << fmt2(found->second) << "** |";
      } else if (!std::isnan(second) && found->second == second) {
        out << " <u>" << fmt2(found->second) << "</u> |";
      } else {
        out << ' ' << fmt2(found->second) << " |";
      }
    }
    out << '\n';
  }

  if (!report.rankings.empty()) {
    out << "\n## Top-2 ranking (% of languages per tier)\n\n| tier |";
    for (const auto& s : systems) out << ' ' << s << " |";
    out << "\n|---|";
    for (size_t i = 0; i < systems.size(); ++i) out << "---|";
    out << '\n';
    for (const auto& [tier, by_system] : report.rankings) {
      out << "| " << tier << " |";
      for (const auto& s : systems) {
        auto it = by_system.find(s);
        out << ' ' << (it == by_system.end() ? std::string("-") : fmt2(it->second)) << " |";
      }
      out << '\n';
    }
  }

  if (!report.ta_bleu_variance.empty()) {
    out << "\n## Teacher-assistant dev-BLEU variance\n\n| lang | variance |\n|---|---|\n";
    for (const auto& [lang, v] : report.ta_bleu_variance)
      out << "| " << lang.code << " | " << fmt2(v) << " |\n";
  }

  if (!report.alpha_summary.empty()) {
    out << "\n## Mean contribution weights\n\n| lang | teacher-assistant | mean alpha | batches "
           "|\n|---|---|---|---|\n";
    for (const auto& a : report.alpha_summary)
      out << "| " << a.lang.code << " | " << a.ta << " | " << std::fixed << std::setprecision(4)
          << a.mean_alpha << " | " << a.batches << " |\n";
  }

  if (!report.family_mean.empty()) {
    out << "\n## Per-family mean BLEU\n\n| family |";
    for (const auto& s : systems) out << ' ' << s << " |";
    out << "\n|---|";
    for (size_t i = 0; i < systems.size(); ++i) out << "---|";
    out << '\n';
    for (const auto& [family, by_system] : report.family_mean) {
      out << "| " << family << " |";
      for (const auto& s : systems) {
        auto it = by_system.find(s);
        out << ' ' << (it == by_system.end() ? std::string("-") : fmt2(it->second)) << " |";
      }
      out << '\n';
    }
  }
  return out.str();
}

}  // namespace hkd
