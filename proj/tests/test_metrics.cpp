#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "binsem/metrics.hpp"

using namespace binsem;

TEST_CASE("confusion counts") {
  SECTION("all correct positives") {
    auto cm = confusion({{1, 1}, {1, 1}, {1, 1}});
    CHECK(cm.tp == 3);
    CHECK(cm.fp == 0);
    CHECK(cm.fn == 0);
    CHECK(cm.tn == 0);
  }

  SECTION("one of each") {
    auto cm = confusion({{1, 1}, {1, 0}, {0, 0}, {0, 1}});
    CHECK(cm.tp == 1);
    CHECK(cm.fp == 1);
    CHECK(cm.tn == 1);
    CHECK(cm.fn == 1);
    CHECK(cm.total() == 4);
  }

  SECTION("empty input is an error") {
    CHECK_THROWS_AS(confusion({}), ValidationError);
  }
}

TEST_CASE("summarize") {
  SECTION("balanced counts give 0.5 everywhere") {
    auto r = summarize({1, 1, 1, 1});
    CHECK(r.precision == 0.5);
    CHECK(r.recall == 0.5);
    CHECK(r.f1 == 0.5);
    CHECK(r.accuracy == 0.5);
    CHECK(r.fpr == 0.5);
  }

  SECTION("perfect classifier") {
    auto r = summarize({10, 0, 10, 0});
    CHECK(r.precision == 1.0);
    CHECK(r.recall == 1.0);
    CHECK(r.f1 == 1.0);
    CHECK(r.accuracy == 1.0);
    CHECK(r.fpr == 0.0);
  }

  SECTION("undefined precision yields 0 with a flag") {
    auto r = summarize({0, 0, 5, 5});
    CHECK(r.precision == 0.0);
    CHECK_FALSE(r.precision_defined);
    auto j = r.to_json();
    CHECK(j.at("undefined").size() >= 1);
  }
}

TEST_CASE("roc auc") {
  SECTION("perfect separation gives 1") {
    CHECK(roc_auc({{0.9, 1}, {0.8, 1}, {0.2, 0}, {0.1, 0}}) == 1.0);
  }

  SECTION("all ties give 0.5") {
    CHECK(roc_auc({{0.5, 1}, {0.5, 0}, {0.5, 1}, {0.5, 0}}) == 0.5);
  }

  SECTION("single-class input is an error") {
    CHECK_THROWS_AS(roc_auc({{0.5, 1}, {0.7, 1}}), ValidationError);
  }

  SECTION("matches the brute-force pairwise statistic to 1e-9") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<ScoredPrediction> scored;
      for (int i = 0; i < 100; ++i) {
        double s = std::round(u(rng) * 20.0) / 20.0;  // coarse grid forces ties
        scored.push_back({s, static_cast<int>(rng() % 2)});
      }
      size_t n_pos = 0, n_neg = 0;
      for (const auto& s : scored) (s.truth ? n_pos : n_neg) += 1;
      if (n_pos == 0 || n_neg == 0) continue;

      double wins = 0;
      for (const auto& p : scored) {
        if (p.truth != 1) continue;
        for (const auto& n : scored) {
          if (n.truth != 0) continue;
          if (p.score > n.score)
            wins += 1.0;
          else if (p.score == n.score)
            wins += 0.5;
        }
      }
      double brute = wins / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
      CHECK(std::abs(roc_auc(scored) - brute) < 1e-9);
    }
  }

  SECTION("invariant under strictly monotone transforms") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<ScoredPrediction> scored, transformed;
    for (int i = 0; i < 60; ++i) {
      double s = u(rng);
      int truth = static_cast<int>(rng() % 2);
      scored.push_back({s, truth});
      transformed.push_back({std::exp(3 * s) - 7, truth});
    }
    CHECK(roc_auc(scored) == Catch::Approx(roc_auc(transformed)).epsilon(1e-12));
  }

  SECTION("reversing tie-free scores complements the AUC") {
    std::vector<ScoredPrediction> scored, reversed;
    std::mt19937_64 rng(13);
    for (int i = 0; i < 50; ++i) {
      double s = static_cast<double>(i) / 50.0 + 1e-6 * static_cast<double>(rng() % 100);
      int truth = static_cast<int>(rng() % 2);
      scored.push_back({s, truth});
      reversed.push_back({-s, truth});
    }
    size_t n_pos = 0;
    for (const auto& s : scored) n_pos += s.truth;
    REQUIRE(n_pos > 0);
    REQUIRE(n_pos < scored.size());
    CHECK(roc_auc(scored) == Catch::Approx(1.0 - roc_auc(reversed)).epsilon(1e-12));
  }
}

TEST_CASE("per-pair report") {
  SECTION("single group average equals the group") {
    std::vector<GroupedPrediction> rows = {
        {"(CO0,GO3)", 1, 1, 0.9}, {"(CO0,GO3)", 0, 0, 0.1}, {"(CO0,GO3)", 1, 0, 0.8}};
    auto rep = report_by_pair(rows);
    REQUIRE(rep.groups.size() == 1);
    const auto& g = rep.groups.at("(CO0,GO3)");
    CHECK(rep.average.precision == g.precision);
    CHECK(rep.average.recall == g.recall);
    CHECK(rep.average.f1 == g.f1);
  }

  SECTION("two groups with F1 0.2 and 0.8 average to 0.5") {
    std::vector<GroupedPrediction> rows;
    // group A: tp=1, fp=4, fn=4 -> P=R=F1=0.2
    rows.push_back({"(CO0,CO1)", 1, 1, 0.9});
    for (int i = 0; i < 4; ++i) rows.push_back({"(CO0,CO1)", 1, 0, 0.7});
    for (int i = 0; i < 4; ++i) rows.push_back({"(CO0,CO1)", 0, 1, 0.3});
    // group B: tp=4, fp=1, fn=1 -> P=R=F1=0.8
    for (int i = 0; i < 4; ++i) rows.push_back({"(GO0,GO3)", 1, 1, 0.9});
    rows.push_back({"(GO0,GO3)", 1, 0, 0.7});
    rows.push_back({"(GO0,GO3)", 0, 1, 0.3});

    auto rep = report_by_pair(rows);
    CHECK(rep.groups.at("(CO0,CO1)").f1 == Catch::Approx(0.2));
    CHECK(rep.groups.at("(GO0,GO3)").f1 == Catch::Approx(0.8));
    CHECK(rep.average.f1 == Catch::Approx(0.5));

    // weighted average leans toward the larger group (A has 9 rows, B has 6)
    auto wrep = report_by_pair(rows, true);
    CHECK(wrep.average.f1 == Catch::Approx((0.2 * 9 + 0.8 * 6) / 15.0));
  }

  SECTION("csv and json emission") {
    std::vector<GroupedPrediction> rows = {{"(CO0,GO3)", 1, 1, 0.9}, {"(CO0,GO3)", 0, 0, 0.2}};
    auto rep = report_by_pair(rows);
    std::ostringstream csv;
    pair_report_csv(rep, csv);
    CHECK(csv.str().find("pair,P,R,F1") == 0);
    CHECK(csv.str().find("(CO0,GO3)") != std::string::npos);
    CHECK(csv.str().find("Average") != std::string::npos);

    auto j = pair_report_json(rep);
    CHECK(j.at("groups").contains("(CO0,GO3)"));
    CHECK(j.at("average").contains("f1"));
  }
}
