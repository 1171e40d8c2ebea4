#include "stbr/downstream.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <set>

namespace stbr {

namespace {

constexpr double kMapeEps = 1e-8;

uint64_t fnv1a(const void* data, size_t size, uint64_t h = 14695981039346656037ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

std::vector<ReprMatrix> infer_representations(Model& model, const CtsDataset& normalized_ds) {
  std::vector<ReprMatrix> out;
  out.reserve(static_cast<size_t>(normalized_ds.instances()));
  const int t_total = normalized_ds.timesteps();
  for (int i = 0; i < normalized_ds.instances(); ++i) {
    Eigen::VectorXd series = normalized_ds.values.row(i);
    std::vector<uint8_t> observed(static_cast<size_t>(t_total));
    for (int t = 0; t < t_total; ++t)
      observed[static_cast<size_t>(t)] = normalized_ds.observed(i, t);
    const Tensor repr = encode_inference(model, series, observed);
    ReprMatrix rm;
    rm.instance_id = normalized_ds.instance_ids[static_cast<size_t>(i)];
    rm.values = Eigen::MatrixXd(t_total, model.config.repr_dim);
    auto m = repr.mat();
    for (int t = 0; t < t_total; ++t) rm.values.row(t) = m.row(t);
    out.push_back(std::move(rm));
  }
  return out;
}

ProbeDataset build_probe_dataset(const std::vector<ReprMatrix>& reprs, const CtsDataset& raw_ds,
                                 int horizon, int range_begin, int range_end) {
  if (horizon < 1) fail(ErrorKind::Config, "horizon must be >= 1, got " + std::to_string(horizon));
  if (reprs.size() != static_cast<size_t>(raw_ds.instances()))
    fail(ErrorKind::Contract, "representations cover " + std::to_string(reprs.size()) +
                                  " instances, dataset has " +
                                  std::to_string(raw_ds.instances()));
  range_begin = std::max(range_begin, 0);
  range_end = std::min(range_end, raw_ds.timesteps());

  ProbeDataset probe;
  std::vector<int> keep_instance;
  std::vector<int> keep_t;
  for (int i = 0; i < raw_ds.instances(); ++i) {
    for (int t = range_begin; t + horizon < range_end; ++t) {
      bool complete = true;
      for (int h = 1; h <= horizon; ++h)
        if (!raw_ds.observed(i, t + h)) {
          complete = false;
          break;
        }
      if (!complete) {
        ++probe.dropped;
        continue;
      }
      keep_instance.push_back(i);
      keep_t.push_back(t);
    }
  }
  if (keep_instance.empty())
    fail(ErrorKind::Coverage, "no probe pairs in range [" + std::to_string(range_begin) + ", " +
                                  std::to_string(range_end) + ") at horizon " +
                                  std::to_string(horizon));

  const int n = static_cast<int>(keep_instance.size());
  const int k = static_cast<int>(reprs[0].values.cols());
  probe.features = Eigen::MatrixXd(n, k);
  probe.targets = Eigen::MatrixXd(n, horizon);
  probe.index.reserve(static_cast<size_t>(n));
  for (int r = 0; r < n; ++r) {
    const int i = keep_instance[static_cast<size_t>(r)];
    const int t = keep_t[static_cast<size_t>(r)];
    probe.features.row(r) = reprs[static_cast<size_t>(i)].values.row(t);
    for (int h = 1; h <= horizon; ++h) probe.targets(r, h - 1) = raw_ds.values(i, t + h);
    probe.index.push_back({i, t});
  }
  return probe;
}

namespace {

double validation_mae(const RidgeModel& model, const ProbeDataset& val) {
  const Eigen::MatrixXd pred = ridge_predict(model, val.features);
  return (pred - val.targets).cwiseAbs().mean();
}

}  // namespace

RidgeModel ridge_fit(const ProbeDataset& train, const ProbeDataset& val,
                     std::vector<double> lambda_grid) {
  const int n = static_cast<int>(train.features.rows());
  const int k = static_cast<int>(train.features.cols());
  const int p = static_cast<int>(train.targets.cols());
  if (n < k + 1)
    fail(ErrorKind::Coverage, "ridge_fit: " + std::to_string(n) + " training pairs for " +
                                  std::to_string(k) + " features; need at least k+1");
  if (lambda_grid.empty()) fail(ErrorKind::Config, "ridge_fit: empty lambda grid");

  const Eigen::RowVectorXd x_mean = train.features.colwise().mean();
  const Eigen::RowVectorXd y_mean = train.targets.colwise().mean();
  const Eigen::MatrixXd xc = train.features.rowwise() - x_mean;
  const Eigen::MatrixXd yc = train.targets.rowwise() - y_mean;
  const Eigen::MatrixXd gram = xc.transpose() * xc;
  const Eigen::MatrixXd xty = xc.transpose() * yc;

  // lambda = 0 stays in the grid only if the centered Gram matrix is
  // comfortably full-rank.
  std::vector<double> grid;
  for (double lambda : lambda_grid) {
    if (lambda < 0.0) {
      STBR_LOG_WARN("ridge_fit: dropping negative lambda %g", lambda);
      continue;
    }
    if (lambda == 0.0) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram, Eigen::EigenvaluesOnly);
      const double lo = es.eigenvalues().minCoeff();
      const double hi = es.eigenvalues().maxCoeff();
      if (!(lo > hi * 1e-10)) {
        STBR_LOG_WARN("ridge_fit: excluding lambda = 0 (singular system)");
        continue;
      }
    }
    grid.push_back(lambda);
  }
  if (grid.empty()) fail(ErrorKind::Config, "ridge_fit: no usable lambda in grid");

  auto solve_for = [&](double lambda) {
    RidgeModel model;
    model.lambda = lambda;
    model.horizon = p;
    Eigen::MatrixXd reg = gram;
    reg.diagonal().array() += lambda;
    model.weights = reg.ldlt().solve(xty);
    model.intercept = (y_mean - x_mean * model.weights).transpose();
    return model;
  };

  if (grid.size() == 1) return solve_for(grid[0]);
  if (val.features.rows() == 0)
    fail(ErrorKind::Coverage, "ridge_fit: validation pairs required to select lambda");

  RidgeModel best;
  double best_mae = std::numeric_limits<double>::infinity();
  for (double lambda : grid) {
    RidgeModel candidate = solve_for(lambda);
    const double mae = validation_mae(candidate, val);
    STBR_LOG_DEBUG("ridge_fit: lambda %g -> validation MAE %.6f", lambda, mae);
    if (mae < best_mae) {
      best_mae = mae;
      best = std::move(candidate);
    }
  }
  return best;
}

Eigen::MatrixXd ridge_predict(const RidgeModel& model, const Eigen::MatrixXd& features) {
  if (features.cols() != model.weights.rows())
    fail(ErrorKind::Dimension, "ridge_predict: " + std::to_string(features.cols()) +
                                   " features, model expects " +
                                   std::to_string(model.weights.rows()));
  return (features * model.weights).rowwise() + model.intercept.transpose();
}

void save_ridge(const RidgeModel& model, const std::string& path) {
  std::string buf = "RDGE";
  auto put_u16 = [&](uint16_t v) {
    for (int i = 0; i < 2; ++i) buf.push_back(static_cast<char>(v >> (8 * i)));
  };
  auto put_u32 = [&](uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>(v >> (8 * i)));
  };
  auto put_u64 = [&](uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>(v >> (8 * i)));
  };
  auto put_f64 = [&](double v) { put_u64(std::bit_cast<uint64_t>(v)); };

  put_u16(1);  // version
  put_u32(static_cast<uint32_t>(model.weights.rows()));
  put_u32(static_cast<uint32_t>(model.horizon));
  put_f64(model.lambda);
  for (int j = 0; j < model.horizon; ++j) put_f64(model.intercept(j));
  for (int r = 0; r < model.weights.rows(); ++r)
    for (int c = 0; c < model.weights.cols(); ++c) put_f64(model.weights(r, c));
  put_u64(fnv1a(buf.data(), buf.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write ridge model '" + path + "'");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) fail(ErrorKind::Io, "short write on '" + path + "'");
}

RidgeModel load_ridge(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Compatibility, "cannot open ridge model '" + path + "'");
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 26 || buf.compare(0, 4, "RDGE") != 0)
    fail(ErrorKind::Compatibility, path + ": not a ridge model (bad magic)");

  size_t pos = 4;
  auto get = [&](int n) -> uint64_t {
    if (pos + static_cast<size_t>(n) > buf.size())
      fail(ErrorKind::Compatibility, path + ": truncated ridge model");
    uint64_t v = 0;
    for (int i = 0; i < n; ++i)
      v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[pos + static_cast<size_t>(i)]))
           << (8 * i);
    pos += static_cast<size_t>(n);
    return v;
  };

  const uint64_t stored = [&] {
    size_t save = pos;
    pos = buf.size() - 8;
    uint64_t h = get(8);
    pos = save;
    return h;
  }();
  if (fnv1a(buf.data(), buf.size() - 8) != stored)
    fail(ErrorKind::Compatibility, path + ": corrupt ridge model (trailer hash mismatch)");

  const auto version = static_cast<uint16_t>(get(2));
  if (version != 1)
    fail(ErrorKind::Compatibility, path + ": ridge model version " + std::to_string(version));
  RidgeModel model;
  const auto k = static_cast<int>(get(4));
  model.horizon = static_cast<int>(get(4));
  model.lambda = std::bit_cast<double>(get(8));
  if (k < 1 || model.horizon < 1)
    fail(ErrorKind::Compatibility, path + ": invalid ridge dimensions");
  model.intercept = Eigen::VectorXd(model.horizon);
  for (int j = 0; j < model.horizon; ++j) model.intercept(j) = std::bit_cast<double>(get(8));
  model.weights = Eigen::MatrixXd(k, model.horizon);
  for (int r = 0; r < k; ++r)
    for (int c = 0; c < model.horizon; ++c) model.weights(r, c) = std::bit_cast<double>(get(8));
  return model;
}

MetricsEntry compute_metrics(const std::vector<double>& pred, const std::vector<double>& truth) {
  if (pred.size() != truth.size())
    fail(ErrorKind::Contract, "metrics: " + std::to_string(pred.size()) + " predictions vs " +
                                  std::to_string(truth.size()) + " truths");
  MetricsEntry e;
  e.count = static_cast<int64_t>(pred.size());
  if (e.count == 0) return e;
  double se = 0.0, ae = 0.0, ape = 0.0;
  int64_t mape_n = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const double err = pred[i] - truth[i];
    se += err * err;
    ae += std::abs(err);
    if (std::abs(truth[i]) > kMapeEps) {
      ape += std::abs(err) / std::abs(truth[i]);
      ++mape_n;
    } else {
      ++e.mape_excluded;
    }
  }
  e.rmse = std::sqrt(se / static_cast<double>(e.count));
  e.mae = ae / static_cast<double>(e.count);
  if (mape_n > 0) {
    e.mape = 100.0 * ape / static_cast<double>(mape_n);
    e.mape_defined = true;
  }
  return e;
}

MetricsReport build_metrics_report(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth,
                                   const std::vector<ProbePair>& index,
                                   const std::vector<std::string>& instance_ids, int horizon) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols() ||
      pred.rows() != static_cast<Eigen::Index>(index.size()) || pred.cols() != horizon)
    fail(ErrorKind::Contract, "metrics report: misaligned prediction/truth/index shapes");

  MetricsReport report;
  report.horizon = horizon;
  report.instance_ids = instance_ids;
  const int n_inst = static_cast<int>(instance_ids.size());

  for (int h = 1; h <= horizon; ++h) {
    std::vector<std::vector<double>> pred_by_inst(static_cast<size_t>(n_inst));
    std::vector<std::vector<double>> truth_by_inst(static_cast<size_t>(n_inst));
    for (size_t r = 0; r < index.size(); ++r) {
      const int i = index[r].instance;
      pred_by_inst[static_cast<size_t>(i)].push_back(pred(static_cast<Eigen::Index>(r), h - 1));
      truth_by_inst[static_cast<size_t>(i)].push_back(truth(static_cast<Eigen::Index>(r), h - 1));
    }

    std::vector<MetricsEntry> row;
    row.reserve(static_cast<size_t>(n_inst));
    for (int i = 0; i < n_inst; ++i)
      row.push_back(compute_metrics(pred_by_inst[static_cast<size_t>(i)],
                                    truth_by_inst[static_cast<size_t>(i)]));

    // Observation-weighted mean of the per-instance values.
    MetricsEntry agg;
    double w_total = 0.0, mape_w_total = 0.0;
    for (const MetricsEntry& e : row) {
      agg.count += e.count;
      agg.mape_excluded += e.mape_excluded;
      if (e.count == 0) continue;
      const double w = static_cast<double>(e.count);
      agg.rmse += w * e.rmse;
      agg.mae += w * e.mae;
      w_total += w;
      if (e.mape_defined) {
        const double mw = static_cast<double>(e.count - e.mape_excluded);
        agg.mape += mw * e.mape;
        mape_w_total += mw;
      }
    }
    if (w_total > 0.0) {
      agg.rmse /= w_total;
      agg.mae /= w_total;
    }
    if (mape_w_total > 0.0) {
      agg.mape /= mape_w_total;
      agg.mape_defined = true;
    } else {
      agg.mape = 0.0;
    }
    report.per_instance.push_back(std::move(row));
    report.aggregate.push_back(agg);
  }
  return report;
}

Eigen::MatrixXd historical_average(const CtsDataset& raw_ds, const std::vector<ProbePair>& index,
                                   int horizon, int period) {
  if (period < 1) fail(ErrorKind::Config, "historical_average: period must be >= 1");
  Eigen::MatrixXd pred(static_cast<Eigen::Index>(index.size()), horizon);

  // Group queries by instance, then sweep time once per instance keeping
  // running phase sums of everything strictly before the forecast origin.
  std::vector<std::vector<int>> queries(static_cast<size_t>(raw_ds.instances()));
  for (size_t r = 0; r < index.size(); ++r)
    queries[static_cast<size_t>(index[r].instance)].push_back(static_cast<int>(r));

  for (int i = 0; i < raw_ds.instances(); ++i) {
    auto& rows = queries[static_cast<size_t>(i)];
    std::sort(rows.begin(), rows.end(),
              [&](int a, int b) { return index[static_cast<size_t>(a)].t < index[static_cast<size_t>(b)].t; });
    std::vector<double> phase_sum(static_cast<size_t>(period), 0.0);
    std::vector<int64_t> phase_count(static_cast<size_t>(period), 0);
    double total_sum = 0.0;
    int64_t total_count = 0;
    size_t q = 0;
    for (int t = 0; t <= raw_ds.timesteps() && q < rows.size(); ++t) {
      while (q < rows.size() && index[static_cast<size_t>(rows[q])].t == t) {
        const int row = rows[q];
        for (int h = 1; h <= horizon; ++h) {
          const int phase = (t + h) % period;
          if (phase_count[static_cast<size_t>(phase)] > 0)
            pred(row, h - 1) = phase_sum[static_cast<size_t>(phase)] /
                               static_cast<double>(phase_count[static_cast<size_t>(phase)]);
          else if (total_count > 0)
            pred(row, h - 1) = total_sum / static_cast<double>(total_count);
          else
            pred(row, h - 1) = 0.0;
        }
        ++q;
      }
      if (t < raw_ds.timesteps() && raw_ds.observed(i, t)) {
        phase_sum[static_cast<size_t>(t % period)] += raw_ds.values(i, t);
        phase_count[static_cast<size_t>(t % period)] += 1;
        total_sum += raw_ds.values(i, t);
        total_count += 1;
      }
    }
  }
  return pred;
}

EvalResult cold_start_transfer(Model& model, const RidgeModel& ridge, const CtsDataset& ds_new,
                               const AdjacencyGraph& adjacency_new, const SplitSpec& split,
                               const std::vector<std::string>& new_ids, int ha_period) {
  if (adjacency_new.weights.rows() != ds_new.instances())
    fail(ErrorKind::Alignment, "adjacency has " + std::to_string(adjacency_new.weights.rows()) +
                                   " instances, dataset has " +
                                   std::to_string(ds_new.instances()));

  const NormStats stats = fit_normalizer_lenient(ds_new, split);
  const CtsDataset normalized = stats.apply(ds_new);
  std::vector<ReprMatrix> reprs = infer_representations(model, normalized);
  ProbeDataset probe =
      build_probe_dataset(reprs, ds_new, ridge.horizon, split.val_end, split.total);

  std::vector<std::string> report_ids = new_ids.empty() ? ds_new.instance_ids : new_ids;
  if (!new_ids.empty()) {
    std::set<int> keep;
    for (const auto& id : new_ids) {
      auto it = std::find(ds_new.instance_ids.begin(), ds_new.instance_ids.end(), id);
      if (it == ds_new.instance_ids.end())
        fail(ErrorKind::Validation, "unknown new instance id '" + id + "'");
      keep.insert(static_cast<int>(it - ds_new.instance_ids.begin()));
    }
    std::vector<Eigen::Index> rows;
    for (size_t r = 0; r < probe.index.size(); ++r)
      if (keep.count(probe.index[r].instance)) rows.push_back(static_cast<Eigen::Index>(r));
    if (rows.empty())
      fail(ErrorKind::Coverage, "no evaluable pairs on the requested new instances");
    ProbeDataset filtered;
    filtered.features = Eigen::MatrixXd(static_cast<Eigen::Index>(rows.size()), probe.features.cols());
    filtered.targets = Eigen::MatrixXd(static_cast<Eigen::Index>(rows.size()), probe.targets.cols());
    for (size_t r = 0; r < rows.size(); ++r) {
      filtered.features.row(static_cast<Eigen::Index>(r)) = probe.features.row(rows[r]);
      filtered.targets.row(static_cast<Eigen::Index>(r)) = probe.targets.row(rows[r]);
      // reindex instances into the new_ids order so the report covers exactly
      // the requested instances
      const int orig = probe.index[static_cast<size_t>(rows[r])].instance;
      const auto pos = std::find(new_ids.begin(), new_ids.end(),
                                 ds_new.instance_ids[static_cast<size_t>(orig)]);
      filtered.index.push_back(
          {static_cast<int>(pos - new_ids.begin()), probe.index[static_cast<size_t>(rows[r])].t});
    }
    probe = std::move(filtered);
  }

  EvalResult result;
  result.predictions = ridge_predict(ridge, probe.features);
  result.truth = probe.targets;
  result.index = probe.index;
  result.model = build_metrics_report(result.predictions, probe.targets, probe.index, report_ids,
                                      ridge.horizon);

  // HA needs per-dataset instance indices; remap if the report was filtered.
  std::vector<ProbePair> ha_index = probe.index;
  if (!new_ids.empty())
    for (auto& pair : ha_index) {
      const auto& id = report_ids[static_cast<size_t>(pair.instance)];
      pair.instance = static_cast<int>(
          std::find(ds_new.instance_ids.begin(), ds_new.instance_ids.end(), id) -
          ds_new.instance_ids.begin());
    }
  const Eigen::MatrixXd ha_pred = historical_average(ds_new, ha_index, ridge.horizon, ha_period);
  result.baseline =
      build_metrics_report(ha_pred, probe.targets, probe.index, report_ids, ridge.horizon);
  return result;
}

std::vector<RobustnessRow> robustness_eval(Model& model, const RidgeModel& ridge,
                                           const CtsDataset& raw_ds, const NormStats& stats,
                                           const SplitSpec& split,
                                           const std::vector<double>& rates,
                                           const std::vector<uint64_t>& seeds) {
  std::vector<RobustnessRow> rows;
  for (double rate : rates) {
    for (uint64_t seed : seeds) {
      const CtsDataset injected = inject_missing(raw_ds, rate, seed);
      const CtsDataset normalized = stats.apply(injected);
      std::vector<ReprMatrix> reprs = infer_representations(model, normalized);
      // Targets come from the clean dataset: the pair set is identical across
      // rates, so the degradation curve is comparable.
      ProbeDataset probe =
          build_probe_dataset(reprs, raw_ds, ridge.horizon, split.val_end, split.total);
      const Eigen::MatrixXd pred = ridge_predict(ridge, probe.features);
      RobustnessRow row;
      row.rate = rate;
      row.seed = seed;
      row.report = build_metrics_report(pred, probe.targets, probe.index, raw_ds.instance_ids,
                                        ridge.horizon);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace stbr
