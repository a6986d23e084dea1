#ifndef ADDRTAG_TESTS_FD_CHECK_HPP
#define ADDRTAG_TESTS_FD_CHECK_HPP

// Central finite-difference oracle for gradient checks. Rebuilds the loss
// from scratch for each probe, so it stays independent of the tape's
// backward pass.

#include <cmath>
#include <functional>
#include <string>

#include "addrtag/autodiff.hpp"

namespace testsupport {

struct FdReport {
  double max_rel_error = 0.0;
  std::string worst;
};

// loss() must evaluate the scalar loss from the current block weights.
// analytic gradients are read from Block::g, which the caller fills by
// running backward once before the check.
inline FdReport finite_difference_check(addrtag::params::ParamSet& set,
                                        const std::function<double()>& loss, double eps = 1e-5,
                                        int max_probes_per_block = 24) {
  FdReport report;
  for (auto& block : set.blocks) {
    if (block.frozen) continue;
    const long total = block.w.size();
    const long stride = total <= max_probes_per_block ? 1 : total / max_probes_per_block;
    for (long k = 0; k < total; k += stride) {
      double* entry = block.w.data() + k;
      double saved = *entry;
      *entry = saved + eps;
      double up = loss();
      *entry = saved - eps;
      double down = loss();
      *entry = saved;

      double fd = (up - down) / (2.0 * eps);
      double analytic = block.g.data()[k];
      // the floor keeps central-difference noise on near-zero entries from
      // dominating the relative error
      double denom = std::max({std::abs(fd), std::abs(analytic), 1e-6});
      double rel = std::abs(fd - analytic) / denom;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst = block.name + "[" + std::to_string(k) + "] fd=" + std::to_string(fd) +
                       " analytic=" + std::to_string(analytic);
      }
    }
  }
  return report;
}

}  // namespace testsupport

#endif  // ADDRTAG_TESTS_FD_CHECK_HPP
