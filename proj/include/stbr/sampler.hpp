#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "stbr/common.hpp"
#include "stbr/data.hpp"

namespace stbr {

struct SamplerConfig {
  int view_len = 200;        // L1
  int temporal_shift = 100;  // l, forward shift of the temporal target
  double mask_ratio = 0.15;
  int mask_mean_seg_len = 5;
  bool weighted_neighbors = true;  // false = uniform over positive-weight neighbors

  int window_len() const { return view_len + temporal_shift; }  // L0
};

// One sampled crop position: instance i, start t, window L0 containing the
// view [t, t+L1) and the temporal target [t+l, t+l+L1).
struct WindowSpec {
  int instance = 0;
  int start = 0;
  int window_len = 0;     // L0
  int view_len = 0;       // L1
  int temporal_shift = 0; // l
};

// Continuous-segment mask over a view window (true = masked).
struct MaskPattern {
  std::vector<uint8_t> masked;
  double target_ratio = 0.0;
  int mean_seg_len = 1;

  int masked_count() const {
    int c = 0;
    for (uint8_t m : masked) c += m;
    return c;
  }
};

struct TrainingTriplet {
  int instance = 0;
  int neighbor = -1;  // -1 when no positive-weight neighbor exists
  int start = 0;
  Eigen::VectorXd view;             // length L1, starting at t
  Eigen::VectorXd temporal_target;  // length L1, starting at t + l
  Eigen::VectorXd spatial_target;   // length L1, starting at t (neighbor series)
  std::vector<uint8_t> view_observed;
  std::vector<uint8_t> temporal_observed;
  std::vector<uint8_t> spatial_observed;
  MaskPattern mask;               // applies to the view only; targets stay clean
  bool spatial_fallback = false;  // train with the temporal loss alone
};

// Validates l < L1 < L0 and L0 = l + L1.
void validate_window_lengths(int window_len, int view_len, int temporal_shift);

// Uniform instance and uniform start over [0, T_train - L0].
WindowSpec sample_window(const CtsDataset& ds, const SplitSpec& split, int window_len,
                         int view_len, int temporal_shift, Rng& rng);

// Neighbor of `instance` drawn proportionally to positive off-diagonal weights
// (or uniformly over them); -1 if the instance is isolated.
int sample_neighbor(const AdjacencyGraph& graph, int instance, bool weighted, Rng& rng);

// Contiguous segments with geometric lengths (mean `mean_seg_len`), placed
// until exactly ceil(ratio * len) steps are masked.
MaskPattern gen_continuous_mask(int len, double ratio, int mean_seg_len, Rng& rng);

TrainingTriplet make_triplet(const CtsDataset& ds, const AdjacencyGraph& graph,
                             const WindowSpec& spec, const SamplerConfig& cfg, Rng& rng);

}  // namespace stbr
