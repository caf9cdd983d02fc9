#ifndef SSLFORGE_TESTS_TEST_UTIL_H_
#define SSLFORGE_TESTS_TEST_UTIL_H_

#include <cstdint>
#include <vector>

#include "sslforge/common/rng.h"
#include "sslforge/tensor/tensor.h"

namespace sslforge::testing {

inline Tensor random_matrix(std::size_t n, std::size_t d, std::uint64_t seed,
                            double stddev = 1.0) {
  Rng rng(seed);
  std::vector<double> v(n * d);
  for (double& x : v) x = rng.normal(0.0, stddev);
  return Tensor({n, d}, std::move(v));
}

inline Tensor random_tensor(const Shape& shape, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(numel(shape));
  for (double& x : v) x = rng.normal();
  return Tensor(shape, std::move(v));
}

// Two-view pairing over 2n rows: (i, i + n) and (i + n, i).
inline std::vector<std::pair<std::size_t, std::size_t>> two_view_pairs(std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> p;
  for (std::size_t i = 0; i < n; ++i) p.emplace_back(i, i + n);
  for (std::size_t i = 0; i < n; ++i) p.emplace_back(i + n, i);
  return p;
}

}  // namespace sslforge::testing

#endif  // SSLFORGE_TESTS_TEST_UTIL_H_
