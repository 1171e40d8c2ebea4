#include "stbr/sampler.hpp"

#include <cmath>

namespace stbr {

void validate_window_lengths(int window_len, int view_len, int temporal_shift) {
  if (!(temporal_shift >= 1 && temporal_shift < view_len && view_len < window_len))
    fail(ErrorKind::Config,
         "window lengths must satisfy 1 <= shift < view_len < window_len, got shift=" +
             std::to_string(temporal_shift) + " view_len=" + std::to_string(view_len) +
             " window_len=" + std::to_string(window_len));
  if (window_len != temporal_shift + view_len)
    fail(ErrorKind::Config, "window_len must equal shift + view_len, got " +
                                std::to_string(window_len) + " != " +
                                std::to_string(temporal_shift) + " + " +
                                std::to_string(view_len));
}

WindowSpec sample_window(const CtsDataset& ds, const SplitSpec& split, int window_len,
                         int view_len, int temporal_shift, Rng& rng) {
  validate_window_lengths(window_len, view_len, temporal_shift);
  if (split.train_end < window_len)
    fail(ErrorKind::Coverage, "training split has " + std::to_string(split.train_end) +
                                  " steps, need at least window_len=" +
                                  std::to_string(window_len));
  WindowSpec spec;
  spec.instance = static_cast<int>(rng.next_below(static_cast<uint64_t>(ds.instances())));
  spec.start = static_cast<int>(
      rng.next_below(static_cast<uint64_t>(split.train_end - window_len + 1)));
  spec.window_len = window_len;
  spec.view_len = view_len;
  spec.temporal_shift = temporal_shift;
  return spec;
}

int sample_neighbor(const AdjacencyGraph& graph, int instance, bool weighted, Rng& rng) {
  const auto row = graph.weights.row(instance);
  std::vector<int> candidates;
  double total = 0.0;
  for (int j = 0; j < row.size(); ++j) {
    if (j == instance) continue;  // diagonal is ignored
    if (row(j) > 0.0) {
      candidates.push_back(j);
      total += row(j);
    }
  }
  if (candidates.empty()) return -1;
  if (!weighted) return candidates[rng.next_below(candidates.size())];
  double u = rng.next_double() * total;
  for (int j : candidates) {
    u -= row(j);
    if (u < 0.0) return j;
  }
  return candidates.back();
}

MaskPattern gen_continuous_mask(int len, double ratio, int mean_seg_len, Rng& rng) {
  if (!(ratio > 0.0 && ratio < 1.0))
    fail(ErrorKind::Config, "mask ratio must be in (0, 1), got " + std::to_string(ratio));
  if (mean_seg_len < 1 || mean_seg_len > len)
    fail(ErrorKind::Config, "mask mean segment length must be in [1, len], got " +
                                std::to_string(mean_seg_len));
  MaskPattern pattern;
  pattern.masked.assign(static_cast<size_t>(len), 0);
  pattern.target_ratio = ratio;
  pattern.mean_seg_len = mean_seg_len;

  const int target = static_cast<int>(std::ceil(ratio * len));
  const double p = 1.0 / static_cast<double>(mean_seg_len);
  int masked = 0;
  while (masked < target) {
    int seg_len = 1;
    if (mean_seg_len > 1) {
      const double u = rng.next_double();
      seg_len = 1 + static_cast<int>(std::log1p(-u) / std::log1p(-p));
    }
    const int start = static_cast<int>(rng.next_below(static_cast<uint64_t>(len)));
    for (int s = start; s < len && seg_len > 0; ++s, --seg_len) {
      if (pattern.masked[static_cast<size_t>(s)]) continue;
      pattern.masked[static_cast<size_t>(s)] = 1;
      if (++masked == target) break;
    }
  }
  return pattern;
}

namespace {

void crop(const CtsDataset& ds, int instance, int start, int len, Eigen::VectorXd* values,
          std::vector<uint8_t>* observed) {
  *values = ds.values.row(instance).segment(start, len);
  observed->resize(static_cast<size_t>(len));
  for (int u = 0; u < len; ++u)
    (*observed)[static_cast<size_t>(u)] = ds.observed(instance, start + u);
}

}  // namespace

TrainingTriplet make_triplet(const CtsDataset& ds, const AdjacencyGraph& graph,
                             const WindowSpec& spec, const SamplerConfig& cfg, Rng& rng) {
  if (graph.weights.rows() != ds.instances())
    fail(ErrorKind::Alignment, "adjacency has " + std::to_string(graph.weights.rows()) +
                                   " instances, dataset has " + std::to_string(ds.instances()));
  TrainingTriplet triplet;
  triplet.instance = spec.instance;
  triplet.start = spec.start;

  crop(ds, spec.instance, spec.start, spec.view_len, &triplet.view, &triplet.view_observed);
  crop(ds, spec.instance, spec.start + spec.temporal_shift, spec.view_len,
       &triplet.temporal_target, &triplet.temporal_observed);

  triplet.neighbor = sample_neighbor(graph, spec.instance, cfg.weighted_neighbors, rng);
  if (triplet.neighbor < 0) {
    triplet.spatial_fallback = true;
    triplet.spatial_target = Eigen::VectorXd::Zero(spec.view_len);
    triplet.spatial_observed.assign(static_cast<size_t>(spec.view_len), 0);
  } else {
    crop(ds, triplet.neighbor, spec.start, spec.view_len, &triplet.spatial_target,
         &triplet.spatial_observed);
  }

  triplet.mask = gen_continuous_mask(spec.view_len, cfg.mask_ratio, cfg.mask_mean_seg_len, rng);
  return triplet;
}

}  // namespace stbr
