#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "stbr/common.hpp"

namespace stbr {

using ByteMatrix = Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

// A correlated time series set: N instances by T timestamps, instance-major,
// with an observed/missing mask. Missing cells hold the value 0.
struct CtsDataset {
  Eigen::MatrixXd values;   // N x T
  ByteMatrix observed;      // N x T, 1 = observed
  std::vector<std::string> instance_ids;
  std::string start_time;
  int64_t time_step = 1;

  int instances() const { return static_cast<int>(values.rows()); }
  int timesteps() const { return static_cast<int>(values.cols()); }
  int64_t observed_count() const;
};

// Nonnegative spatial correlation weights between instances. The diagonal is
// ignored for neighbor sampling.
struct AdjacencyGraph {
  Eigen::MatrixXd weights;  // N x N
  std::vector<std::string> instance_ids;
  bool spatially_degenerate = false;  // no positive off-diagonal entry
};

// Contiguous chronological train/validation/test boundaries:
// train = [0, train_end), validation = [train_end, val_end), test = [val_end, total).
struct SplitSpec {
  int train_end = 0;
  int val_end = 0;
  int total = 0;

  static SplitSpec from_fractions(int total, double train_frac, double val_frac);
  void validate() const;
};

// Per-instance z-score statistics fitted on the training split only
// (population standard deviation; constant series get sigma = 1 and a flag).
struct NormStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;
  std::vector<uint8_t> constant_series;

  // Z-scores observed points; missing points become 0.
  CtsDataset apply(const CtsDataset& ds) const;
  // Maps normalized values back to the original scale: x = z * sigma + mu.
  CtsDataset invert(const CtsDataset& ds) const;
  double invert_value(int instance, double z) const {
    return z * stddev(instance) + mean(instance);
  }
};

// Wide-CSV loader: first column `ts`, one column per instance, empty cell =
// missing. Column order defines instance order.
CtsDataset load_dataset(const std::string& path);

// Square nonnegative CSV matrix, optional header row of instance ids. When
// `expected_ids` is given, dimensions and ids must line up with the dataset.
AdjacencyGraph load_adjacency(const std::string& path,
                              const std::vector<std::string>* expected_ids = nullptr);

void save_dataset(const CtsDataset& ds, const std::string& path);
void save_adjacency(const AdjacencyGraph& graph, const std::string& path);

NormStats fit_normalizer(const CtsDataset& ds, const SplitSpec& split);

// Like fit_normalizer, but an instance without observed training points falls
// back to progressively wider history ([0, val_end), then the whole series)
// instead of failing; a fully unobserved instance gets mean 0, sigma 1.
// Instances covered by the training split get bit-identical statistics.
NormStats fit_normalizer_lenient(const CtsDataset& ds, const SplitSpec& split);

// Flips exactly round(rate * #observed) observed points to missing, uniformly
// at random. The missing set grows monotonically with rate for a fixed seed.
CtsDataset inject_missing(const CtsDataset& ds, double rate, uint64_t seed);

// Restriction to a subset of instances (order given by `ids`).
CtsDataset subset_instances(const CtsDataset& ds, const std::vector<std::string>& ids);
AdjacencyGraph subset_instances(const AdjacencyGraph& graph,
                                const std::vector<std::string>& ids);

}  // namespace stbr
