#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "dpdn/tensor.hpp"

namespace dpdn::testing {

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1, double hi = 1,
                            bool requires_grad = false) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<Real> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<Real>(u(rng));
  return Tensor::from_data(shape, std::move(v), requires_grad);
}

// Maximum over checked entries of |analytic − numeric| / max(|analytic|, |numeric|, floor),
// where floor is 1e-3 of the largest numeric entry of the same leaf. Numeric values are
// central differences with step h. `entries` limits how many entries per leaf are probed
// (spread evenly); 0 probes all of them.
inline double gradient_error(const std::function<Tensor()>& loss_fn, const std::vector<Tensor>& leaves,
                             double h = 1e-5, std::size_t entries = 0) {
  for (auto leaf : leaves) leaf.zero_grad();
  loss_fn().backward();
  double worst = 0;
  for (auto leaf : leaves) {
    std::vector<Real> analytic(leaf.numel(), Real(0));
    if (leaf.has_grad()) std::copy(leaf.grad().begin(), leaf.grad().end(), analytic.begin());
    const std::size_t n = leaf.numel();
    std::vector<std::size_t> probe;
    if (entries == 0 || entries >= n) {
      for (std::size_t i = 0; i < n; ++i) probe.push_back(i);
    } else {
      for (std::size_t k = 0; k < entries; ++k) probe.push_back(k * n / entries);
    }
    NoGradGuard no_grad;
    std::vector<double> numeric(probe.size());
    double largest = 0;
    for (std::size_t k = 0; k < probe.size(); ++k) {
      Real& x = leaf.mutable_data()[probe[k]];
      const Real saved = x;
      x = static_cast<Real>(saved + h);
      const double up = static_cast<double>(loss_fn().item());
      x = static_cast<Real>(saved - h);
      const double down = static_cast<double>(loss_fn().item());
      x = saved;
      numeric[k] = (up - down) / (2 * h);
      largest = std::max(largest, std::abs(numeric[k]));
    }
    const double floor = std::max(1e-3 * largest, 1e-12);
    for (std::size_t k = 0; k < probe.size(); ++k) {
      const double a = analytic[probe[k]];
      const double d = std::abs(a - numeric[k]) / std::max({std::abs(a), std::abs(numeric[k]), floor});
      worst = std::max(worst, d);
    }
  }
  return worst;
}

inline double max_abs_diff(std::span<const Real> a, std::span<const Real> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

}  // namespace dpdn::testing
