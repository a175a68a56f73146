#include "sonamatch/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "sonamatch/errors.hpp"
#include "sonamatch/rng.hpp"

namespace sonamatch {

namespace {

// Stratified deterministic probe positions: the block is cut into `count`
// equal strata and one position is drawn inside each, so probes cover the
// block end to end for any seed.
std::vector<std::size_t> probe_positions(std::size_t size, std::size_t count,
                                         Rng& rng) {
  std::vector<std::size_t> idx;
  if (count == 0 || count >= size) {
    idx.resize(size);
    for (std::size_t i = 0; i < size; ++i) idx[i] = i;
    return idx;
  }
  idx.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    const std::size_t lo = s * size / count;
    const std::size_t hi = (s + 1) * size / count;
    idx.push_back(lo + rng.index(hi - lo));
  }
  return idx;
}

}  // namespace

FdResult finite_difference_check(const std::function<double()>& loss,
                                 std::vector<FdBlock> blocks,
                                 const FdOptions& options) {
  if (!(options.epsilon > 0.0)) {
    throw ConfigError("finite_difference_check: epsilon must be positive");
  }
  if (!(options.shrink_factor > 1.0)) {
    throw ConfigError("finite_difference_check: shrink_factor must exceed 1");
  }
  FdResult result;
  const double base = loss();
  std::size_t block_id = 0;
  for (const FdBlock& block : blocks) {
    Rng rng(Rng::derive(options.probe_seed, block_id++));
    const std::vector<std::size_t> probes =
        probe_positions(block.size, options.max_probes_per_block, rng);

    double block_scale = 0.0;
    for (std::size_t i = 0; i < block.size; ++i) {
      block_scale = std::max(block_scale, std::abs(block.analytic[i]));
    }

    for (std::size_t i : probes) {
      const double saved = block.values[i];
      const auto pair_at = [&](double eps) {
        block.values[i] = saved + eps;
        const double plus = loss();
        block.values[i] = saved - eps;
        const double minus = loss();
        block.values[i] = saved;
        return std::pair<double, double>(plus, minus);
      };

      // Shrink away from kinks until the probe looks locally smooth. Two
      // signatures are tested at eps and eps/2: the central quotients must
      // agree (an off-centre kink makes them differ), and the second
      // difference (f+ - 2f0 + f-)/eps must halve with eps (a kink lying
      // almost exactly at the probe point keeps it jump-sized instead,
      // while the central quotients agree on a value that is wrong by half
      // the slope jump). The half-step quotient is the value kept.
      double eps = options.epsilon;
      double numeric = 0.0;
      for (std::size_t round = 0;; ++round) {
        const auto [pf, mf] = pair_at(eps);
        const auto [ph, mh] = pair_at(eps / 2.0);
        const double q_full = (pf - mf) / (2.0 * eps);
        const double q_half = (ph - mh) / eps;
        const double c_full = (pf - 2.0 * base + mf) / eps;
        const double c_half = (ph - 2.0 * base + mh) / (eps / 2.0);
        numeric = q_half;
        const double agree_scale =
            std::max({std::abs(q_full), std::abs(q_half), block_scale, 1e-8});
        const bool smooth =
            std::abs(q_full - q_half) <= options.kink_rtol * agree_scale &&
            std::abs(c_half - 0.5 * c_full) <= options.kink_rtol * agree_scale;
        if (smooth || round >= options.max_shrinks) break;
        eps /= options.shrink_factor;
      }

      const double analytic = block.analytic[i];
      const double denom = std::max({block_scale, std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic - numeric) / denom;
      ++result.probes;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_block = block.name;
        result.worst_index = i;
        result.worst_analytic = analytic;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace sonamatch
