#pragma once

#include <functional>
#include <vector>

#include "windcnn/tensor.hpp"

namespace windcnn {

struct GradCheckOptions {
  double step = 1e-5;
  // Checks at most this many elements per tensor (deterministic subset); <= 0 checks all.
  std::int64_t max_elements_per_tensor = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  bool finite = true;
  std::int64_t elements_checked = 0;

  bool passed(double tolerance) const { return finite && max_relative_error < tolerance; }
};

/// Compares backward() against central differences in double precision.
///
/// `fn` recomputes the output from the current values of `inputs` (and any
/// captured state). The output is reduced with a fixed random projection so
/// every output element contributes. Errors are |analytic - numeric| /
/// max(1, |analytic|).
GradCheckResult grad_check(const std::function<Tensor<double>()>& fn,
                           std::vector<Tensor<double>> inputs, GradCheckOptions options = {});

}  // namespace windcnn
