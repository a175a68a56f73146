#pragma once

#include "sonamatch/tensor.hpp"

namespace sonamatch {

// Zero-normalized cross-correlation of two same-shape patches: both are
// mean-centred, then their inner product is scaled by the product of
// their norms, giving a value in [-1, 1] that ignores affine brightness
// changes. A patch with (numerically) no variance has no direction to
// correlate with and raises DegenerateInputError.
double cc_similarity(const Tensor& a, const Tensor& b);

// cc_similarity mapped onto [0, 1] so it can stand in anywhere a match
// probability is expected: p = (s + 1) / 2, clamped against roundoff.
double cc_matcher(const Tensor& a, const Tensor& b);

}  // namespace sonamatch
