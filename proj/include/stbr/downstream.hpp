#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "stbr/common.hpp"
#include "stbr/data.hpp"
#include "stbr/model.hpp"

namespace stbr {

// Per-timestamp representations of one instance; row t depends only on
// measurements at times <= t.
struct ReprMatrix {
  std::string instance_id;
  Eigen::MatrixXd values;  // T x K
};

// One full-series causal pass per instance with the kept (online) encoder;
// missing timestamps are masked, no augmentation masks.
std::vector<ReprMatrix> infer_representations(Model& model, const CtsDataset& normalized_ds);

struct ProbePair {
  int instance = 0;
  int t = 0;
};

// Paired (representation at t, future values t+1..t+p) regression set.
// Targets are in the original measurement scale.
struct ProbeDataset {
  Eigen::MatrixXd features;  // n x K
  Eigen::MatrixXd targets;   // n x p
  std::vector<ProbePair> index;
  int64_t dropped = 0;  // candidates discarded for missing target steps
};

// Pairs with t in [range_begin, range_end - p); pairs whose target steps are
// not all observed are dropped.
ProbeDataset build_probe_dataset(const std::vector<ReprMatrix>& reprs, const CtsDataset& raw_ds,
                                 int horizon, int range_begin, int range_end);

struct RidgeModel {
  Eigen::MatrixXd weights;    // K x p
  Eigen::VectorXd intercept;  // p
  double lambda = 0.0;
  int horizon = 1;
};

// Closed-form ridge with mean-centering; lambda chosen by validation MAE.
// A singular system excludes lambda = 0 from the grid with a warning.
RidgeModel ridge_fit(const ProbeDataset& train, const ProbeDataset& val,
                     std::vector<double> lambda_grid);

Eigen::MatrixXd ridge_predict(const RidgeModel& model, const Eigen::MatrixXd& features);

void save_ridge(const RidgeModel& model, const std::string& path);
RidgeModel load_ridge(const std::string& path);

struct MetricsEntry {
  double rmse = 0.0;
  double mae = 0.0;
  double mape = 0.0;         // percent; meaningful only when mape_defined
  bool mape_defined = false;
  int64_t count = 0;
  int64_t mape_excluded = 0;  // |truth| <= 1e-8 entries left out of MAPE
};

MetricsEntry compute_metrics(const std::vector<double>& pred, const std::vector<double>& truth);

// Per-step and per-instance error summary. Aggregates are observation-
// weighted means of the per-instance values.
struct MetricsReport {
  int horizon = 0;
  std::vector<std::string> instance_ids;
  std::vector<std::vector<MetricsEntry>> per_instance;  // [step-1][instance]
  std::vector<MetricsEntry> aggregate;                  // [step-1]

  const MetricsEntry& headline() const { return aggregate.back(); }
};

MetricsReport build_metrics_report(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth,
                                   const std::vector<ProbePair>& index,
                                   const std::vector<std::string>& instance_ids, int horizon);

// Seasonal phase-mean baseline: the prediction for (i, t+h) is the mean of
// observed x[i, s] over s < t with s = (t+h) mod period; an empty phase falls
// back to the running instance mean.
Eigen::MatrixXd historical_average(const CtsDataset& raw_ds, const std::vector<ProbePair>& index,
                                   int horizon, int period);

struct EvalResult {
  MetricsReport model;
  MetricsReport baseline;  // Historical Average on the same pairs
  Eigen::MatrixXd predictions;
  Eigen::MatrixXd truth;
  std::vector<ProbePair> index;
};

// Frozen encoder + frozen ridge applied to a (possibly grown) dataset.
// Metrics cover `new_ids` only; an empty list means all instances
// (self-transfer, which reproduces the standard test metrics exactly).
EvalResult cold_start_transfer(Model& model, const RidgeModel& ridge, const CtsDataset& ds_new,
                               const AdjacencyGraph& adjacency_new, const SplitSpec& split,
                               const std::vector<std::string>& new_ids, int ha_period);

struct RobustnessRow {
  double rate = 0.0;
  uint64_t seed = 0;
  MetricsReport report;
};

// Inference-time missingness sweep: inject at each (rate, seed), re-infer,
// predict with the frozen ridge, score against clean targets.
std::vector<RobustnessRow> robustness_eval(Model& model, const RidgeModel& ridge,
                                           const CtsDataset& raw_ds, const NormStats& stats,
                                           const SplitSpec& split,
                                           const std::vector<double>& rates,
                                           const std::vector<uint64_t>& seeds);

}  // namespace stbr
