#pragma once

#include <algorithm>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "binsem/common.hpp"

namespace binsem {

struct ConfusionMatrix {
  size_t tp = 0, fp = 0, tn = 0, fn = 0;

  size_t total() const { return tp + fp + tn + fn; }
};

struct LabeledPrediction {
  int label = 0;  // predicted
  int truth = 0;
};

inline ConfusionMatrix confusion(const std::vector<LabeledPrediction>& preds) {
  if (preds.empty()) throw ValidationError("confusion: empty prediction list");
  ConfusionMatrix cm;
  for (const auto& p : preds) {
    if (p.label != 0 && p.label != 1) throw ValidationError("confusion: labels must be binary");
    if (p.truth == 1)
      p.label == 1 ? ++cm.tp : ++cm.fn;
    else
      p.label == 1 ? ++cm.fp : ++cm.tn;
  }
  return cm;
}

// Undefined denominators yield 0 with the corresponding flag cleared, so
// reports stay machine-readable.
struct MetricsReport {
  double fpr = 0, tpr = 0, accuracy = 0, precision = 0, recall = 0, f1 = 0, auc = 0;
  bool precision_defined = true, recall_defined = true, fpr_defined = true, f1_defined = true, auc_defined = false;

  json to_json() const {
    json j = {{"fpr", fpr}, {"tpr", tpr}, {"accuracy", accuracy}, {"precision", precision},
              {"recall", recall}, {"f1", f1}};
    j["auc"] = auc_defined ? json(auc) : json(nullptr);
    json undef = json::array();
    if (!precision_defined) undef.push_back("precision");
    if (!recall_defined) undef.push_back("recall");
    if (!fpr_defined) undef.push_back("fpr");
    if (!f1_defined) undef.push_back("f1");
    j["undefined"] = undef;
    return j;
  }
};

inline MetricsReport summarize(const ConfusionMatrix& cm) {
  MetricsReport r;
  auto ratio = [](size_t num, size_t den, bool& defined) {
    defined = den > 0;
    return den ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
  };
  r.precision = ratio(cm.tp, cm.tp + cm.fp, r.precision_defined);
  r.recall = ratio(cm.tp, cm.tp + cm.fn, r.recall_defined);
  r.tpr = r.recall;
  r.fpr = ratio(cm.fp, cm.fp + cm.tn, r.fpr_defined);
  bool acc_defined = true;
  r.accuracy = ratio(cm.tp + cm.tn, cm.total(), acc_defined);
  r.f1_defined = r.precision_defined && r.recall_defined && (r.precision + r.recall) > 0;
  r.f1 = r.f1_defined ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

struct ScoredPrediction {
  double score = 0;
  int truth = 0;
};

// Area under the ROC curve via the rank statistic (Mann-Whitney U); ties
// contribute 1/2.
inline double roc_auc(const std::vector<ScoredPrediction>& scored) {
  size_t n_pos = 0, n_neg = 0;
  for (const auto& s : scored) (s.truth == 1 ? n_pos : n_neg) += 1;
  if (n_pos == 0 || n_neg == 0) throw ValidationError("roc_auc: both classes must be present");

  std::vector<size_t> idx(scored.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return scored[a].score < scored[b].score; });

  // average ranks over tie groups, 1-based
  double pos_rank_sum = 0;
  size_t i = 0;
  while (i < idx.size()) {
    size_t j = i;
    while (j < idx.size() && scored[idx[j]].score == scored[idx[i]].score) ++j;
    double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (size_t k = i; k < j; ++k)
      if (scored[idx[k]].truth == 1) pos_rank_sum += avg_rank;
    i = j;
  }
  double u = pos_rank_sum - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

struct GroupedPrediction {
  std::string pair_key;  // "(CO0,GO3)"-style group
  int label = 0;
  int truth = 0;
  double score = 0;
};

struct PairReport {
  std::map<std::string, MetricsReport> groups;
  MetricsReport average;  // unweighted over groups unless weighted is set
};

inline PairReport report_by_pair(const std::vector<GroupedPrediction>& rows, bool weighted = false) {
  std::map<std::string, std::vector<GroupedPrediction>> by_key;
  for (const auto& r : rows) by_key[r.pair_key].push_back(r);

  PairReport rep;
  double psum = 0, rsum = 0, fsum = 0, accsum = 0, fprsum = 0, aucsum = 0, wsum = 0;
  size_t auc_groups = 0;
  for (const auto& [key, group] : by_key) {
    std::vector<LabeledPrediction> preds;
    std::vector<ScoredPrediction> scores;
    size_t n_pos = 0;
    for (const auto& g : group) {
      preds.push_back({g.label, g.truth});
      scores.push_back({g.score, g.truth});
      n_pos += g.truth == 1;
    }
    MetricsReport m = summarize(confusion(preds));
    if (n_pos > 0 && n_pos < group.size()) {
      m.auc = roc_auc(scores);
      m.auc_defined = true;
      aucsum += m.auc * (weighted ? static_cast<double>(group.size()) : 1.0);
      ++auc_groups;
    }
    double w = weighted ? static_cast<double>(group.size()) : 1.0;
    psum += m.precision * w;
    rsum += m.recall * w;
    fsum += m.f1 * w;
    accsum += m.accuracy * w;
    fprsum += m.fpr * w;
    wsum += w;
    rep.groups[key] = m;
  }
  if (wsum > 0) {
    rep.average.precision = psum / wsum;
    rep.average.recall = rsum / wsum;
    rep.average.tpr = rep.average.recall;
    rep.average.f1 = fsum / wsum;
    rep.average.accuracy = accsum / wsum;
    rep.average.fpr = fprsum / wsum;
    if (auc_groups > 0 && !weighted) {
      rep.average.auc = aucsum / static_cast<double>(auc_groups);
      rep.average.auc_defined = true;
    }
  }
  return rep;
}

// One-vs-rest macro averaging for the multi-class toolchain reports.
struct MacroReport {
  double accuracy = 0;
  double precision = 0, recall = 0, f1 = 0;
  std::vector<MetricsReport> per_class;
};

inline MacroReport multiclass_macro(const std::vector<LabeledPrediction>& preds, size_t n_classes) {
  if (preds.empty()) throw ValidationError("multiclass_macro: empty prediction list");
  MacroReport rep;
  size_t correct = 0;
  for (const auto& p : preds) correct += p.label == p.truth;
  rep.accuracy = static_cast<double>(correct) / static_cast<double>(preds.size());
  for (size_t c = 0; c < n_classes; ++c) {
    ConfusionMatrix cm;
    for (const auto& p : preds) {
      bool pc = p.label == static_cast<int>(c), tc = p.truth == static_cast<int>(c);
      if (pc && tc)
        ++cm.tp;
      else if (pc)
        ++cm.fp;
      else if (tc)
        ++cm.fn;
      else
        ++cm.tn;
    }
    MetricsReport m = summarize(cm);
    rep.precision += m.precision;
    rep.recall += m.recall;
    rep.f1 += m.f1;
    rep.per_class.push_back(std::move(m));
  }
  rep.precision /= static_cast<double>(n_classes);
  rep.recall /= static_cast<double>(n_classes);
  rep.f1 /= static_cast<double>(n_classes);
  return rep;
}

inline void pair_report_csv(const PairReport& rep, std::ostream& out) {
  out << "pair,P,R,F1\n";
  char buf[128];
  for (const auto& [key, m] : rep.groups) {
    std::snprintf(buf, sizeof(buf), "\"%s\",%.3f,%.3f,%.3f\n", key.c_str(), m.precision, m.recall, m.f1);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "Average,%.3f,%.3f,%.3f\n", rep.average.precision, rep.average.recall,
                rep.average.f1);
  out << buf;
}

inline json pair_report_json(const PairReport& rep) {
  json groups;
  for (const auto& [key, m] : rep.groups) groups[key] = m.to_json();
  return {{"groups", groups}, {"average", rep.average.to_json()}};
}

}  // namespace binsem
