#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace sonamatch {

// One span of checkable values: parameters or inputs of a loss closure,
// paired with the analytic gradient claimed for them.
struct FdBlock {
  std::string name;
  double* values = nullptr;
  const double* analytic = nullptr;
  std::size_t size = 0;
};

struct FdOptions {
  double epsilon = 1e-3;
  // 0 probes every element. Otherwise each block is probed at this many
  // deterministic stratified positions, which keeps whole-network checks
  // inside a sane time budget.
  std::size_t max_probes_per_block = 0;
  std::uint64_t probe_seed = 0;
  // Kink avoidance. A central difference straddling a non-smooth point
  // (a ReLU changing sign inside the probe interval) yields a corrupted
  // quotient. Each probe evaluates at epsilon and epsilon/2 and demands
  // two smoothness signatures before accepting: the central quotients
  // must agree, and the second difference must halve with epsilon (a kink
  // sitting almost exactly at the probe point passes the first test with
  // a quotient that is wrong by half the slope jump, but keeps the second
  // difference jump-sized). On failure epsilon shrinks by shrink_factor,
  // up to max_shrinks times, until the probe interval clears the kink.
  double kink_rtol = 1e-4;
  double shrink_factor = 8.0;
  std::size_t max_shrinks = 5;
};

struct FdResult {
  double max_rel_error = 0.0;
  std::size_t probes = 0;
  std::string worst_block;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Central-difference check of `analytic` against (f(x+e) - f(x-e)) / 2e.
// The error reported per probe is |analytic - numeric| scaled by the
// largest gradient magnitude seen in that block, so elements whose true
// derivative is tiny do not drown the result in quotient noise, while a
// uniformly scaled corruption still stands out. `loss` must be a
// deterministic function of the block values; it is re-evaluated with
// elements perturbed in place and always restored afterwards.
FdResult finite_difference_check(const std::function<double()>& loss,
                                 std::vector<FdBlock> blocks,
                                 const FdOptions& options = {});

}  // namespace sonamatch
