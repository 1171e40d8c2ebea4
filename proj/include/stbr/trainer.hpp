#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stbr/common.hpp"
#include "stbr/data.hpp"
#include "stbr/model.hpp"
#include "stbr/sampler.hpp"
#include "stbr/tensor.hpp"

namespace stbr {

struct TrainConfig {
  double alpha = 0.5;  // temporal weight; 1 - alpha goes to the spatial loss
  double tau = 0.99;   // EMA retention of the target branch
  double lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 8;
  int64_t steps = 2000;
  uint64_t seed = 1;
  bool pooled_loss = false;           // compare window-mean vectors instead of
                                      // per-timestamp rows
  bool temporal_overlap_only = false; // restrict the temporal loss to view
                                      // positions [l, L1)
  SamplerConfig sampler;
  EncoderConfig encoder;

  void validate() const;
};

struct LossBreakdown {
  int64_t step = 0;
  double total = 0.0;     // optimized objective
  double temporal = 0.0;  // batch-mean temporal loss
  double spatial = 0.0;   // batch-mean spatial loss (fallback triplets
                          // contribute their temporal loss here)
  int fallback_count = 0;
};

// Mean over rows of ||y_hat - r_hat||^2 with both arguments row-normalized;
// each row contributes 2 - 2 cos(y, r), so the value lies in [0, 4].
double temporal_loss(const Tensor& prediction, const Tensor& temporal_target_repr);
double spatial_loss(const Tensor& prediction, const Tensor& spatial_target_repr);

double combined_loss(double temporal, double spatial, double alpha);

// phi <- tau * phi + (1 - tau) * theta over the encoder-side parameters.
void ema_update(EncoderParams& target, const EncoderParams& online, double tau);

// One stochastic step: online forward + prediction, detached target
// encodings, combined loss averaged over the batch, backward into theta,
// Adam update, then the EMA update of phi.
LossBreakdown train_step(Model& model, const std::vector<TrainingTriplet>& batch,
                         const TrainConfig& cfg, std::vector<Param*>& theta, AdamState& adam,
                         int64_t step_index);

struct TrainResult {
  Model model;
  std::vector<LossBreakdown> curve;
};

// Full loop over a normalized dataset; deterministic in cfg.seed.
TrainResult train_loop(const CtsDataset& normalized_ds, const AdjacencyGraph& graph,
                       const SplitSpec& split, const TrainConfig& cfg);

// CSV: step,loss_total,loss_temporal,loss_spatial,fallback_count
void write_loss_curve(const std::vector<LossBreakdown>& curve, const std::string& path);

// Mean pairwise cosine similarity over a probe of representation rows;
// values near 1 indicate collapse (warned above 0.999).
double collapse_probe(Model& model, const CtsDataset& normalized_ds, int probe_rows = 256);

}  // namespace stbr
