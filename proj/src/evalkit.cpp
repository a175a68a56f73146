#include "sonamatch/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "sonamatch/dataset_io.hpp"
#include "sonamatch/errors.hpp"

namespace sonamatch {

int decide(double p_match) { return p_match > 0.5 ? 1 : 0; }

std::vector<RocPoint> roc_curve(const std::vector<double>& scores,
                                const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw InputError("roc_curve: scores and labels differ in length");
  }
  if (scores.empty()) {
    throw InputError("roc_curve: no samples");
  }
  std::size_t positives = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) {
      throw InputError("roc_curve: non-finite score at index " +
                       std::to_string(i));
    }
    if (labels[i] != 0 && labels[i] != 1) {
      throw InputError("roc_curve: label must be 0 or 1 at index " +
                       std::to_string(i));
    }
    positives += static_cast<std::size_t>(labels[i]);
  }
  const std::size_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw InputError("roc_curve: need at least one match and one non-match");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  std::vector<RocPoint> points;
  points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double s = scores[order[k]];
    // Consume the whole tie group so equal scores land on one point.
    while (k < order.size() && scores[order[k]] == s) {
      if (labels[order[k]] == 1) ++tp; else ++fp;
      ++k;
    }
    points.push_back({s, static_cast<double>(fp) / negatives,
                      static_cast<double>(tp) / positives});
  }
  return points;
}

double auc_from_roc(const std::vector<RocPoint>& points) {
  if (points.size() < 2) {
    throw InputError("auc_from_roc: need at least two points");
  }
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    area += (points[i].fpr - points[i - 1].fpr) *
            (points[i].tpr + points[i - 1].tpr) / 2.0;
  }
  return area;
}

void export_roc(const std::string& path,
                const std::vector<RocPoint>& points) {
  std::string text = "# threshold fpr tpr\n";
  char line[96];
  for (const RocPoint& p : points) {
    std::snprintf(line, sizeof line, "%.17g %.17g %.17g\n", p.threshold,
                  p.fpr, p.tpr);
    text += line;
  }
  atomic_write_file(path, text);
}

std::vector<double> score_pairs(const PairScorer& scorer,
                                const std::vector<PairSample>& pairs) {
  std::vector<double> scores;
  scores.reserve(pairs.size());
  for (const PairSample& p : pairs) {
    scores.push_back(scorer(*p.patch_a, *p.patch_b));
  }
  return scores;
}

EvalReport evaluate(const std::vector<double>& scores,
                    const std::vector<PairSample>& pairs) {
  if (scores.size() != pairs.size()) {
    throw InputError("evaluate: scores and pairs differ in length");
  }
  std::vector<int> labels;
  labels.reserve(pairs.size());
  for (const PairSample& p : pairs) labels.push_back(p.label);

  EvalReport report;
  report.pairs = pairs.size();
  report.roc = roc_curve(scores, labels);
  report.auc = auc_from_roc(report.roc);

  for (PairKind kind : {PairKind::ObjectObjectMatch,
                        PairKind::ObjectObjectNonMatch,
                        PairKind::ObjectBackgroundNonMatch}) {
    KindAccuracy acc;
    acc.kind = kind;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (pairs[i].kind != kind) continue;
      ++acc.total;
      if (decide(scores[i]) == pairs[i].label) ++acc.correct;
    }
    if (acc.total == 0) continue;
    acc.accuracy = static_cast<double>(acc.correct) / acc.total;
    report.correct += acc.correct;
    report.by_kind.push_back(acc);
  }
  report.accuracy = static_cast<double>(report.correct) / report.pairs;
  return report;
}

}  // namespace sonamatch
