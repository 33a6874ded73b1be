#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tdc/autodiff.hpp"

namespace tdc {

struct GradCheckReport {
  double max_rel_err = 0.0;
  int components = 0;
  std::string worst;  // "param[i]" of the worst component

  bool pass(double tol = 1e-5) const { return components > 0 && max_rel_err < tol; }
};

// Central finite differences against the tape gradients. build_loss must be a
// deterministic pure function of the parameter values; it is re-evaluated with
// each component nudged by +-step. Relative error is |a-fd| / max(1,|a|,|fd|).
GradCheckReport finite_difference_check(const std::function<Var(Tape&)>& build_loss,
                                        const std::vector<Parameter*>& params,
                                        double step = 1e-4);

// The full suite run by `gradcheck` and by acceptance criterion 1: every
// diffcore op plus every network on small random inputs. Prints one line per
// check when verbose. Returns the number of failures.
int run_gradient_suite(bool verbose);

}  // namespace tdc
