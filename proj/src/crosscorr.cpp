#include "sonamatch/crosscorr.hpp"

#include <algorithm>
#include <cmath>

#include "sonamatch/errors.hpp"

namespace sonamatch {

double cc_similarity(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("cc_similarity: shapes " + shape_string(a.shape) +
                     " and " + shape_string(b.shape) + " differ");
  }
  const std::size_t n = a.numel();
  if (n == 0) {
    throw DegenerateInputError("cc_similarity: empty patch");
  }
  if (!a.all_finite() || !b.all_finite()) {
    throw InputError("cc_similarity: non-finite patch values");
  }

  double mean_a = 0.0, mean_b = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_a += a.data[i];
    mean_b += b.data[i];
  }
  mean_a /= static_cast<double>(n);
  mean_b /= static_cast<double>(n);

  double cross = 0.0, var_a = 0.0, var_b = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a.data[i] - mean_a;
    const double db = b.data[i] - mean_b;
    cross += da * db;
    var_a += da * da;
    var_b += db * db;
  }

  // A flat patch (or one flat to roundoff) carries no pattern to match.
  const double floor = 1e-20 * static_cast<double>(n);
  if (var_a <= floor || var_b <= floor) {
    throw DegenerateInputError("cc_similarity: patch variance is degenerate");
  }
  return cross / std::sqrt(var_a * var_b);
}

double cc_matcher(const Tensor& a, const Tensor& b) {
  const double s = cc_similarity(a, b);
  return std::clamp((s + 1.0) / 2.0, 0.0, 1.0);
}

}  // namespace sonamatch
