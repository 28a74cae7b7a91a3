#include "eval.hpp"

#include <algorithm>

#include "doctest.h"
#include "oracles.hpp"

using namespace hkd;

TEST_CASE("bleu: perfect match scores 100, empty scores 0") {
  std::vector<std::vector<int>> refs = {{5, 6, 7, 8, 9}, {5, 10, 11}, {12, 6, 7, 13}};
  CHECK(bleu(refs, refs).score == doctest::Approx(100.0).epsilon(1e-9));

  std::vector<std::vector<int>> empty = {{}, {}, {}};
  CHECK(bleu(empty, refs).score == 0.0);
}

TEST_CASE("bleu: frozen toy corpus matches the reference signature") {
  // Reference values computed once with an independent implementation of
  // BLEU+case.mixed+numrefs.1+smooth.exp+tok.none and frozen here.
  std::vector<std::vector<int>> refs = {{5, 6, 7, 8, 9}, {5, 10, 11}, {12, 6, 7, 13}};
  std::vector<std::vector<int>> hyps = {{5, 6, 7, 9}, {5, 10, 11}, {12, 6, 8, 13}};
  auto b = bleu(hyps, refs);
  CHECK(b.score == doctest::Approx(44.58004643500919).epsilon(0.0002));  // +-0.01 absolute
  CHECK(b.precisions[0] == doctest::Approx(90.9090909).epsilon(1e-6));
  CHECK(b.precisions[1] == doctest::Approx(62.5).epsilon(1e-9));
  CHECK(b.precisions[2] == doctest::Approx(40.0).epsilon(1e-9));
  CHECK(b.precisions[3] == doctest::Approx(25.0).epsilon(1e-9));
  CHECK(b.brevity_penalty == doctest::Approx(0.9131007162822624).epsilon(1e-9));
  CHECK(b.hyp_len == 11);
  CHECK(b.ref_len == 12);
}

TEST_CASE("bleu: exponential smoothing doubles per missing order") {
  std::vector<std::vector<int>> refs = {{1, 2, 3, 4, 5, 6}};
  std::vector<std::vector<int>> hyps = {{1, 9, 3, 9, 5, 9}};
  auto b = bleu(hyps, refs);
  CHECK(b.score == doctest::Approx(10.682175159905853).epsilon(0.0002));
  CHECK(b.precisions[0] == doctest::Approx(50.0).epsilon(1e-9));
  CHECK(b.precisions[1] == doctest::Approx(10.0).epsilon(1e-9));       // 100 / (2 * 5)
  CHECK(b.precisions[2] == doctest::Approx(6.25).epsilon(1e-9));       // 100 / (4 * 4)
  CHECK(b.precisions[3] == doctest::Approx(100.0 / 24.0).epsilon(1e-9));
  CHECK(b.brevity_penalty == 1.0);
}

TEST_CASE("bleu: permutation invariance over sentence order") {
  Rng rng(19);
  std::vector<std::vector<int>> refs, hyps;
  for (int i = 0; i < 8; ++i) {
    std::vector<int> r, h;
    const int len = 3 + static_cast<int>(rng.next_below(6));
    for (int t = 0; t < len; ++t) {
      r.push_back(static_cast<int>(rng.next_below(10)));
      h.push_back(static_cast<int>(rng.next_below(10)));
    }
    refs.push_back(r);
    hyps.push_back(h);
  }
  const double base = bleu(hyps, refs).score;
  std::vector<size_t> order = {5, 2, 7, 0, 4, 6, 1, 3};
  std::vector<std::vector<int>> refs_p, hyps_p;
  for (size_t i : order) {
    refs_p.push_back(refs[i]);
    hyps_p.push_back(hyps[i]);
  }
  CHECK(bleu(hyps_p, refs_p).score == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("bleu: 100 iff hypotheses equal references token-wise") {
  Rng rng(23);
  for (int round = 0; round < 20; ++round) {
    std::vector<std::vector<int>> refs;
    const int n = 1 + static_cast<int>(rng.next_below(4));
    for (int i = 0; i < n; ++i) {
      std::vector<int> r;
      const int len = 4 + static_cast<int>(rng.next_below(5));
      for (int t = 0; t < len; ++t) r.push_back(static_cast<int>(rng.next_below(8)));
      refs.push_back(r);
    }
    CHECK(bleu(refs, refs).score == doctest::Approx(100.0).epsilon(1e-9));
    auto hyps = refs;
    auto& tok = hyps[rng.next_below(hyps.size())];
    tok[rng.next_below(tok.size())] += 100;  // single token perturbation
    CHECK(bleu(hyps, refs).score < 100.0 - 1e-9);
  }
}

TEST_CASE("bleu: length mismatch rejected") {
  CHECK_THROWS_AS(bleu({{1}}, {{1}, {2}}), Error);
  CHECK_THROWS_AS(bleu({}, {}), Error);
}

TEST_CASE("rank_systems: hand-computed three-language table") {
  // one tier, three systems; scores picked so ranks are unambiguous
  std::vector<ReportRow> rows = {
      {"A", LanguageId{"x"}, "enough", 30.0}, {"B", LanguageId{"x"}, "enough", 20.0},
      {"C", LanguageId{"x"}, "enough", 10.0}, {"A", LanguageId{"y"}, "enough", 30.0},
      {"B", LanguageId{"y"}, "enough", 40.0}, {"C", LanguageId{"y"}, "enough", 10.0},
      {"A", LanguageId{"z"}, "enough", 5.0},  {"B", LanguageId{"z"}, "enough", 20.0},
      {"C", LanguageId{"z"}, "enough", 10.0},
  };
  // per-language top-2 credits: x -> A,B ; y -> B,A ; z -> B,C
  // A: 2 credits, B: 3, C: 1; denominator 2 * 3 languages
  auto table = rank_systems(rows);
  auto& tier = table.at("enough");
  CHECK(tier.at("A") == doctest::Approx(100.0 * 2.0 / 6.0).epsilon(1e-12));
  CHECK(tier.at("B") == doctest::Approx(100.0 * 3.0 / 6.0).epsilon(1e-12));
  CHECK(tier.at("C") == doctest::Approx(100.0 * 1.0 / 6.0).epsilon(1e-12));
  double sum = 0.0;
  for (const auto& [_, pct] : tier) sum += pct;
  CHECK(sum == doctest::Approx(100.0).epsilon(1e-9));
}

TEST_CASE("rank_systems: a two-system tier splits the two slots") {
  std::vector<ReportRow> rows;
  for (const auto* lang : {"x", "y", "z"}) {
    rows.push_back({"A", LanguageId{lang}, "low", 30.0});
    rows.push_back({"B", LanguageId{lang}, "low", 10.0});
  }
  auto table = rank_systems(rows);
  CHECK(table.at("low").at("A") == doctest::Approx(50.0).epsilon(1e-12));
  CHECK(table.at("low").at("B") == doctest::Approx(50.0).epsilon(1e-12));
}

TEST_CASE("rank_systems: single language, three distinct scores") {
  std::vector<ReportRow> rows = {
      {"A", LanguageId{"x"}, "enough", 3.0},
      {"B", LanguageId{"x"}, "enough", 2.0},
      {"C", LanguageId{"x"}, "enough", 1.0},
  };
  auto tier = rank_systems(rows).at("enough");
  CHECK(tier.at("A") == doctest::Approx(50.0));
  CHECK(tier.at("B") == doctest::Approx(50.0));
  CHECK(tier.at("C") == doctest::Approx(0.0));
}

TEST_CASE("rank_systems: full tie shares equally") {
  std::vector<ReportRow> rows = {
      {"A", LanguageId{"x"}, "enough", 7.0},
      {"B", LanguageId{"x"}, "enough", 7.0},
      {"C", LanguageId{"x"}, "enough", 7.0},
      {"D", LanguageId{"x"}, "enough", 7.0},
  };
  auto tier = rank_systems(rows).at("enough");
  for (const auto* s : {"A", "B", "C", "D"}) CHECK(tier.at(s) == doctest::Approx(25.0));
  CHECK_THROWS_AS(rank_systems({{"A", LanguageId{"x"}, "enough", 1.0}}), Error);
}

TEST_CASE("ta_variance: population variance with absent singletons") {
  std::map<LanguageId, std::vector<double>> scores;
  scores[LanguageId{"same"}] = {12.0, 12.0, 12.0};
  scores[LanguageId{"pair"}] = {10.0, 14.0};
  scores[LanguageId{"solo"}] = {9.0};
  auto out = ta_variance(scores);
  CHECK(out.at(LanguageId{"same"}) == doctest::Approx(0.0));
  CHECK(out.at(LanguageId{"pair"}) == doctest::Approx(4.0).epsilon(1e-12));  // population, not sample
  CHECK(out.count(LanguageId{"solo"}) == 0);
}

TEST_CASE("report serialization: csv, json and markdown agree") {
  TrainReport report;
  report.rows = {
      {"teacher", LanguageId{"a1"}, "low", 21.5},
      {"student", LanguageId{"a1"}, "low", 25.0},
      {"teacher", LanguageId{"b1"}, "enough", 30.0},
      {"student", LanguageId{"b1"}, "enough", 28.0},
  };
  report.rankings = rank_systems(report.rows);
  report.ta_bleu_variance[LanguageId{"a1"}] = 6.92;
  report.alpha_summary.push_back(AlphaSummaryRow{LanguageId{"a1"}, "kb3:1", 0.8, 10});

  const std::string csv = report_to_csv(report);
  CHECK(csv.find("system,lang,tier,bleu") == 0);
  CHECK(csv.find("student,a1,low,25.0000") != std::string::npos);

  auto json = report_to_json(report);
  auto back = report_from_json(json);
  CHECK(back.rows.size() == report.rows.size());
  CHECK(report_to_csv(back) == csv);

  const std::string md = report_to_markdown(report);
  // every score from the csv shows up in the grid, best bold, second underlined
  CHECK(md.find("**25.00**") != std::string::npos);
  CHECK(md.find("<u>21.50</u>") != std::string::npos);
  CHECK(md.find("**30.00**") != std::string::npos);
  CHECK(md.find("| a1 |") != std::string::npos);
  CHECK(md.find("kb3:1") != std::string::npos);
  CHECK(md.find("6.92") != std::string::npos);
}
