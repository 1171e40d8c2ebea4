#pragma once

#include <cstdint>

#include "stbr/data.hpp"

namespace stbr {

// Seasonal graph-diffusion AR process on a ring of instances:
//   u[i,t] = ar_self * u[i,t-1] + ar_neighbor * mean(u[neighbors,t-1]) + noise
//   x[i,t] = base + amplitude * sin(2*pi*t/period + 2*pi*i/N) + u[i,t]
// Fully observed; deterministic in the seed.
struct SyntheticConfig {
  int instances = 10;
  int timesteps = 3000;
  int period = 144;
  double base = 50.0;
  double amplitude = 8.0;
  double ar_self = 0.7;
  double ar_neighbor = 0.25;
  double noise_std = 1.0;
  int burn_in = 300;
  uint64_t seed = 7;
};

CtsDataset make_synthetic_cts(const SyntheticConfig& cfg);

// Unweighted ring: instance i is adjacent to (i-1) mod N and (i+1) mod N.
AdjacencyGraph make_ring_adjacency(int instances);

}  // namespace stbr
