#include "windcnn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "windcnn/ops.hpp"
#include "windcnn/rng.hpp"

namespace windcnn {

GradCheckResult grad_check(const std::function<Tensor<double>()>& fn,
                           std::vector<Tensor<double>> inputs, GradCheckOptions options) {
  GradCheckResult result;
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }

  Rng rng(options.seed, "grad_check");
  std::vector<double> projection;
  {
    const Tensor<double> y = fn();
    projection.resize(static_cast<std::size_t>(y.numel()));
    for (double& r : projection) r = rng.uniform(-1.0, 1.0);
    if (!all_finite(y.data())) result.finite = false;
    weighted_sum(y, projection).backward();
  }

  auto objective = [&]() {
    NoGradGuard no_grad;
    const Tensor<double> y = fn();
    double acc = 0.0;
    for (std::size_t i = 0; i < projection.size(); ++i) acc += y.data()[i] * projection[i];
    return acc;
  };

  for (auto& t : inputs) {
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    std::vector<std::int64_t> indices(static_cast<std::size_t>(t.numel()));
    std::iota(indices.begin(), indices.end(), 0);
    if (options.max_elements_per_tensor > 0 &&
        static_cast<std::int64_t>(indices.size()) > options.max_elements_per_tensor) {
      rng.shuffle(indices.begin(), indices.end());
      indices.resize(static_cast<std::size_t>(options.max_elements_per_tensor));
      std::sort(indices.begin(), indices.end());
    }
    for (std::int64_t idx : indices) {
      double& x = t.data()[static_cast<std::size_t>(idx)];
      const double original = x;
      x = original + options.step;
      const double plus = objective();
      x = original - options.step;
      const double minus = objective();
      x = original;
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double a = analytic[static_cast<std::size_t>(idx)];
      if (!std::isfinite(numeric) || !std::isfinite(a)) {
        result.finite = false;
        continue;
      }
      result.max_relative_error =
          std::max(result.max_relative_error, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
      ++result.elements_checked;
    }
  }
  return result;
}

}  // namespace windcnn
