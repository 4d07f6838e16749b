#pragma once

// Shared finite-difference gradient checking for tests that exercise whole
// network modules rather than single ops.

#include <functional>
#include <vector>

#include <gtest/gtest.h>

#include "fteasd/common.hpp"
#include "fteasd/tensor.hpp"
#include "support/oracles.hpp"

namespace testsupport {

inline std::vector<double> random_vec(fteasd::Rng& rng, std::size_t n, double lo = -1.0,
                                      double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Checks analytic gradients of `build` against central finite differences at
// `n_probes` random coordinates of every listed leaf. `build` must
// reconstruct the graph from the same leaves on every call.
inline void check_gradients(fteasd::Rng& rng, std::vector<fteasd::Tensor> leaves,
                            const std::function<fteasd::Tensor()>& build, int n_probes = 8,
                            double tol = 1e-4, double step = 1e-3) {
  fteasd::zero_grad(leaves);
  fteasd::Tensor out = build();
  std::vector<double> seed = random_vec(rng, out->data.size(), 0.1, 1.0);
  fteasd::backward(out, &seed);
  auto loss = [&]() {
    fteasd::Tensor y = build();
    double acc = 0.0;
    for (std::size_t i = 0; i < y->data.size(); ++i) acc += seed[i] * y->data[i];
    return acc;
  };
  for (auto& leaf : leaves) {
    for (int probe = 0; probe < n_probes; ++probe) {
      std::size_t i = static_cast<std::size_t>(rng.uniform_int(leaf->data.size()));
      double fd = oracle::central_diff(leaf->data, i, loss, step);
      double err = oracle::rel_err(leaf->grad[i], fd);
      ASSERT_LE(err, tol) << "coordinate " << i << ": analytic " << leaf->grad[i] << " vs fd "
                          << fd;
    }
  }
}

}  // namespace testsupport
