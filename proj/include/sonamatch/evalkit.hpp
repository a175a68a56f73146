#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sonamatch/pairgen.hpp"

namespace sonamatch {

// Hard match/non-match decision from a match probability. Exactly 0.5 is
// deliberately a non-match so the rule is total and documented rather
// than an accident of floating-point comparison.
int decide(double p_match);

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

// Operating points of the classifier "score >= threshold means match",
// swept from +infinity (nothing accepted, the fixed (0,0) anchor) down
// through every distinct score. Tied scores collapse into one point; the
// last point is always (1,1). Scores may be any finite values on any
// scale; labels must contain both classes.
std::vector<RocPoint> roc_curve(const std::vector<double>& scores,
                                const std::vector<int>& labels);

// Area under the curve by the trapezoid rule. Equivalent to the
// Mann-Whitney U statistic (ties counted half) on the same scores.
double auc_from_roc(const std::vector<RocPoint>& points);

// One "threshold fpr tpr" line per point, full double precision, the
// infinite anchor spelled "inf" (which strtod parses back).
void export_roc(const std::string& path, const std::vector<RocPoint>& points);

using PairScorer = std::function<double(const Tensor&, const Tensor&)>;

// Scores every pair with an arbitrary matcher (a trained network, a
// closed-form baseline) in manifest order.
std::vector<double> score_pairs(const PairScorer& scorer,
                                const std::vector<PairSample>& pairs);

struct KindAccuracy {
  PairKind kind = PairKind::ObjectObjectMatch;
  std::size_t total = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
};

struct EvalReport {
  std::size_t pairs = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  double auc = 0.0;
  std::vector<RocPoint> roc;
  std::vector<KindAccuracy> by_kind;  // kinds present, in enum order
};

// Full report for scored pairs: hard-decision accuracy overall and per
// pair kind, plus the ROC sweep and its area. Scores act as match
// probabilities for the 0.5 decision rule; the ROC and its area only use
// their ordering.
EvalReport evaluate(const std::vector<double>& scores,
                    const std::vector<PairSample>& pairs);

}  // namespace sonamatch
