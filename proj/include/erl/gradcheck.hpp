#pragma once

#include <string>
#include <vector>

#include "erl/tensor.hpp"

namespace erl {

struct GradCheckEntry {
  std::string name;
  double err = 0.0;
};

// Finite-difference audit over every differentiable primitive and the small
// composite blocks (encoding, quadrature, fusion, upsampling, losses).
// Returns one worst-relative-error row per op; all should sit below 1e-3.
std::vector<GradCheckEntry> run_gradient_suite(uint64_t seed);

}  // namespace erl
