#pragma once

// Flat `key = value` run configuration. '#' starts a comment; list values
// are comma separated. Unknown keys are rejected.
//
//   model:      noise process nu rank kernel gamma lambda sigma max_em_iters
//               em_rel_tol mstep_max_iters lbfgs_history mstep_grad_tol
//               seed truncation_energy
//   experiment: dims generator data holdout_fraction folds repeats
//               gamma_grid lambda_grid rank_grid normalize
//   generator:  gen_rank gen_kernel gen_gamma gen_sigma gen_scale gen_nu
//
// `kernel` and `gamma` each take one value for every mode or one per mode.

#include <iosfwd>
#include <string>
#include <vector>

#include "inftucker/eval.hpp"

namespace inftucker {

const std::vector<std::string>& config_keys();

ExperimentSpec parse_config(std::istream& in, const std::string& source = "<stream>");
ExperimentSpec load_config(const std::string& path);

}  // namespace inftucker
