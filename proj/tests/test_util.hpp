#pragma once

#include <random>

#include "ssair/tensor.hpp"

namespace ssair::fixtures {

inline DenseTensor random_tensor(std::mt19937_64& rng, const Shape& s, double lo = -1.0,
                                 double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> d(static_cast<size_t>(shape_numel(s)));
  for (auto& x : d) x = u(rng);
  return DenseTensor(s, std::move(d));
}

inline Shape random_shape(std::mt19937_64& rng, int max_rank = 3, int64_t max_dim = 5) {
  std::uniform_int_distribution<int> r(1, max_rank);
  std::uniform_int_distribution<int64_t> d(1, max_dim);
  Shape s(static_cast<size_t>(r(rng)));
  for (auto& x : s) x = d(rng);
  return s;
}

inline DenseTensor t1(std::vector<double> d) {
  const auto n = static_cast<int64_t>(d.size());
  return DenseTensor({n}, std::move(d));
}

}  // namespace ssair::fixtures
