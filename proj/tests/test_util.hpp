#pragma once

#include <doctest.h>

#include <functional>
#include <string>
#include <vector>

#include "stbr/common.hpp"
#include "stbr/tensor.hpp"

namespace stbr_test {

inline stbr::Tensor random_tensor(std::vector<int> shape, stbr::Rng& rng, double lo = -2.0,
                                  double hi = 2.0) {
  stbr::Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// Central finite differences against the tape gradient, for a scalar-valued
// graph builder over a set of parameters. Relative error uses
// |ad - fd| / max(1, |ad|, |fd|).
inline void check_gradients(std::vector<stbr::Param*> params,
                            const std::function<double()>& forward_scalar,
                            const std::function<void()>& backward_into_params,
                            double h = 1e-5, double tol = 1e-4) {
  for (stbr::Param* p : params) p->zero_grad();
  backward_into_params();
  for (stbr::Param* p : params) {
    for (size_t i = 0; i < p->value.data.size(); ++i) {
      const double saved = p->value.data[i];
      p->value.data[i] = saved + h;
      const double up = forward_scalar();
      p->value.data[i] = saved - h;
      const double down = forward_scalar();
      p->value.data[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double ad = p->grad.data[i];
      const double rel = std::abs(ad - fd) / std::max({1.0, std::abs(ad), std::abs(fd)});
      if (rel >= tol) {
        CAPTURE(p->id);
        CAPTURE(i);
        CAPTURE(ad);
        CAPTURE(fd);
      }
      REQUIRE(rel < tol);
    }
  }
}

}  // namespace stbr_test
