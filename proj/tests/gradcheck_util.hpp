#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "byel/rng.hpp"
#include "byel/tensor.hpp"

namespace byel::testutil {

// Smallest |(W^T W - I)_ij| over all entries; the L1 orthogonality loss is
// non-differentiable where this hits zero.
template <typename T>
double min_abs_gram_deviation(const Tensor<T>& w) {
  const int d = w.dim(0), c = w.dim(1);
  double min_abs = 1e300;
  for (int i = 0; i < c; ++i)
    for (int j = 0; j < c; ++j) {
      double m = (i == j) ? -1.0 : 0.0;
      for (int k = 0; k < d; ++k)
        m += static_cast<double>(w.at(k, i)) * static_cast<double>(w.at(k, j));
      min_abs = std::min(min_abs, std::abs(m));
    }
  return min_abs;
}

// Redraws w until every Gram-matrix deviation entry sits clear of the L1
// kink, so finite differences around it stay well posed.
template <typename T>
bool keep_off_l1_kink(Tensor<T>& w, std::uint64_t seed, double clearance = 1e-3) {
  DetRng rng(mix_key(seed, 0x0FFULL));
  const double bound = 1.0 / std::sqrt(static_cast<double>(w.dim(0)));
  for (int attempt = 0; attempt < 200; ++attempt) {
    if (min_abs_gram_deviation(w) > clearance) return true;
    for (auto& v : w.raw()) v = static_cast<T>(rng.uniform(-bound, bound));
  }
  return false;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  int points_checked = 0;
  std::string worst;
};

// Central finite differences against analytic gradients at sampled
// coordinates. `loss_fn` must recompute the loss from the tensors' current
// contents. Near-zero gradient pairs are compared absolutely.
inline GradCheckResult finite_difference_check(
    const std::vector<std::pair<Tensor<double>*, const Tensor<double>*>>& param_and_grad,
    const std::function<double()>& loss_fn, DetRng& rng, int points, double eps = 1e-4) {
  GradCheckResult result;
  for (int p = 0; p < points; ++p) {
    const int which = rng.uniform_int(0, static_cast<int>(param_and_grad.size()) - 1);
    Tensor<double>* tensor = param_and_grad[static_cast<std::size_t>(which)].first;
    const Tensor<double>* grad = param_and_grad[static_cast<std::size_t>(which)].second;
    const int coord = rng.uniform_int(0, static_cast<int>(tensor->numel()) - 1);

    const double saved = tensor->raw()[static_cast<std::size_t>(coord)];
    tensor->raw()[static_cast<std::size_t>(coord)] = saved + eps;
    const double up = loss_fn();
    tensor->raw()[static_cast<std::size_t>(coord)] = saved - eps;
    const double down = loss_fn();
    tensor->raw()[static_cast<std::size_t>(coord)] = saved;

    const double fd = (up - down) / (2.0 * eps);
    const double an = grad->raw()[static_cast<std::size_t>(coord)];
    const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
    const double rel = std::abs(fd - an) / denom;
    ++result.points_checked;
    if (rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst = "param " + std::to_string(which) + " coord " + std::to_string(coord) +
                     " fd=" + std::to_string(fd) + " an=" + std::to_string(an);
    }
  }
  return result;
}

}  // namespace byel::testutil
