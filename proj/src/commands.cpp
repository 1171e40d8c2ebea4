#include "stbr/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <json.hpp>
#include <set>

#include "stbr/data.hpp"
#include "stbr/downstream.hpp"
#include "stbr/model.hpp"
#include "stbr/trainer.hpp"

namespace stbr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Exclusive ownership of an output directory for one command invocation.
class OutputDir {
 public:
  explicit OutputDir(const std::string& path) : path_(path) {
    if (path.empty()) fail(ErrorKind::Config, "missing config key 'run.out'");
    std::error_code ec;
    fs::create_directories(path_, ec);
    if (ec) fail(ErrorKind::Io, "cannot create output directory '" + path + "'");
    lock_path_ = (fs::path(path_) / ".lock").string();
    std::FILE* f = std::fopen(lock_path_.c_str(), "wbx");
    if (!f)
      fail(ErrorKind::Config,
           "output directory '" + path + "' is locked by another run (remove " + lock_path_ +
               " if stale)");
    std::fclose(f);
  }
  ~OutputDir() { std::remove(lock_path_.c_str()); }
  OutputDir(const OutputDir&) = delete;
  OutputDir& operator=(const OutputDir&) = delete;

  std::string file(const std::string& name) const { return (fs::path(path_) / name).string(); }

 private:
  std::string path_;
  std::string lock_path_;
};

struct LoadedData {
  CtsDataset ds;
  AdjacencyGraph graph;
  SplitSpec split;
  NormStats stats;
  CtsDataset normalized;
};

NormStats identity_stats(int instances) {
  NormStats stats;
  stats.mean = Eigen::VectorXd::Zero(instances);
  stats.stddev = Eigen::VectorXd::Ones(instances);
  stats.constant_series.assign(static_cast<size_t>(instances), 0);
  return stats;
}

LoadedData load_all(const RunConfig& cfg, bool need_adjacency) {
  if (cfg.dataset.empty()) fail(ErrorKind::Config, "missing config key 'data.dataset'");
  LoadedData data;
  data.ds = load_dataset(cfg.dataset);
  if (need_adjacency) {
    if (cfg.adjacency.empty()) fail(ErrorKind::Config, "missing config key 'data.adjacency'");
    data.graph = load_adjacency(cfg.adjacency, &data.ds.instance_ids);
  }
  data.split = SplitSpec::from_fractions(data.ds.timesteps(), cfg.split_train, cfg.split_val);
  data.stats = cfg.normalize ? fit_normalizer(data.ds, data.split)
                             : identity_stats(data.ds.instances());
  data.normalized = data.stats.apply(data.ds);
  return data;
}

json entry_json(const MetricsEntry& e) {
  json j;
  j["rmse"] = e.rmse;
  j["mae"] = e.mae;
  if (e.mape_defined)
    j["mape"] = e.mape;
  else
    j["mape"] = nullptr;
  j["count"] = e.count;
  j["mape_excluded"] = e.mape_excluded;
  return j;
}

json report_json(const MetricsReport& report) {
  json j = entry_json(report.headline());
  j["horizon"] = report.horizon;
  json per_step = json::array();
  for (int h = 1; h <= report.horizon; ++h) {
    json step = entry_json(report.aggregate[static_cast<size_t>(h - 1)]);
    step["step"] = h;
    per_step.push_back(std::move(step));
  }
  j["per_step"] = std::move(per_step);
  json per_instance;
  for (size_t i = 0; i < report.instance_ids.size(); ++i) {
    json steps = json::array();
    for (int h = 1; h <= report.horizon; ++h)
      steps.push_back(entry_json(report.per_instance[static_cast<size_t>(h - 1)][i]));
    per_instance[report.instance_ids[i]] = std::move(steps);
  }
  j["per_instance"] = std::move(per_instance);
  return j;
}

void write_text(std::FILE* f, const MetricsReport& report, const char* title) {
  std::fprintf(f, "%s\n", title);
  std::fprintf(f, "%6s %12s %12s %12s %10s %10s\n", "step", "rmse", "mae", "mape%", "pairs",
               "excluded");
  for (int h = 1; h <= report.horizon; ++h) {
    const MetricsEntry& e = report.aggregate[static_cast<size_t>(h - 1)];
    if (e.mape_defined)
      std::fprintf(f, "%6d %12.4f %12.4f %12.4f %10lld %10lld\n", h, e.rmse, e.mae, e.mape,
                   static_cast<long long>(e.count), static_cast<long long>(e.mape_excluded));
    else
      std::fprintf(f, "%6d %12.4f %12.4f %12s %10lld %10lld\n", h, e.rmse, e.mae, "n/a",
                   static_cast<long long>(e.count), static_cast<long long>(e.mape_excluded));
  }
}

void write_report_files(const OutputDir& out, const std::string& stem,
                        const MetricsReport& model_report, const MetricsReport& ha_report,
                        double lambda) {
  json j = report_json(model_report);
  j["lambda"] = lambda;
  j["ha"] = report_json(ha_report);
  std::FILE* jf = std::fopen(out.file(stem + ".json").c_str(), "wb");
  if (!jf) fail(ErrorKind::Io, "cannot write report");
  const std::string text = j.dump(2);
  std::fwrite(text.data(), 1, text.size(), jf);
  std::fputc('\n', jf);
  std::fclose(jf);

  std::FILE* tf = std::fopen(out.file(stem + ".txt").c_str(), "wb");
  if (!tf) fail(ErrorKind::Io, "cannot write report");
  write_text(tf, model_report, ("forecast metrics (lambda " + std::to_string(lambda) + ")").c_str());
  std::fputc('\n', tf);
  write_text(tf, ha_report, "historical average baseline");
  std::fclose(tf);
}

void write_predictions_csv(const std::string& path, const std::vector<ProbePair>& index,
                           const std::vector<std::string>& ids, const Eigen::MatrixXd& pred,
                           const Eigen::MatrixXd& truth) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) fail(ErrorKind::Io, "cannot write '" + path + "'");
  std::fprintf(f, "instance,t,horizon,pred,truth\n");
  for (size_t r = 0; r < index.size(); ++r)
    for (int h = 1; h <= static_cast<int>(pred.cols()); ++h)
      std::fprintf(f, "%s,%d,%d,%.17g,%.17g\n",
                   ids[static_cast<size_t>(index[r].instance)].c_str(), index[r].t, h,
                   pred(static_cast<Eigen::Index>(r), h - 1),
                   truth(static_cast<Eigen::Index>(r), h - 1));
  std::fclose(f);
}

struct HorizonEval {
  RidgeModel ridge;
  MetricsReport model_report;
  MetricsReport ha_report;
  Eigen::MatrixXd pred;
  Eigen::MatrixXd truth;
  std::vector<ProbePair> index;
};

HorizonEval evaluate_horizon(const LoadedData& data, const std::vector<ReprMatrix>& reprs,
                             int horizon, const RunConfig& cfg) {
  if (horizon < 1)
    fail(ErrorKind::Config, "horizon must be >= 1, got " + std::to_string(horizon));
  const ProbeDataset train =
      build_probe_dataset(reprs, data.ds, horizon, 0, data.split.train_end);
  const ProbeDataset val = build_probe_dataset(reprs, data.ds, horizon, data.split.train_end,
                                               data.split.val_end);
  const ProbeDataset test =
      build_probe_dataset(reprs, data.ds, horizon, data.split.val_end, data.split.total);

  HorizonEval eval;
  eval.ridge = ridge_fit(train, val, cfg.lambda_grid);
  eval.pred = ridge_predict(eval.ridge, test.features);
  eval.truth = test.targets;
  eval.index = test.index;
  eval.model_report =
      build_metrics_report(eval.pred, test.targets, test.index, data.ds.instance_ids, horizon);
  const Eigen::MatrixXd ha = historical_average(data.ds, test.index, horizon, cfg.ha_period);
  eval.ha_report =
      build_metrics_report(ha, test.targets, test.index, data.ds.instance_ids, horizon);
  return eval;
}

}  // namespace

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::Parse:
    case ErrorKind::Validation:
    case ErrorKind::Alignment:
    case ErrorKind::Coverage:
    case ErrorKind::Io:
      return 2;
    case ErrorKind::Compatibility:
      return 3;
    default:
      return 1;
  }
}

void cmd_train(const RunConfig& cfg) {
  LoadedData data = load_all(cfg, /*need_adjacency=*/true);
  TrainConfig tc = cfg.train_config();
  tc.validate();

  OutputDir out(cfg.out_dir);
  cfg.save(out.file("config_resolved.ini"));

  TrainResult result = train_loop(data.normalized, data.graph, data.split, tc);
  write_loss_curve(result.curve, out.file("loss_curve.csv"));
  save_checkpoint(result.model, out.file("checkpoint.stbr"));
  STBR_LOG_INFO("train: wrote %s", out.file("checkpoint.stbr").c_str());
}

void cmd_forecast(const RunConfig& cfg, const std::string& checkpoint_path) {
  LoadedData data = load_all(cfg, /*need_adjacency=*/false);
  Model model = load_checkpoint(checkpoint_path);
  require_config_match(model, cfg.encoder);

  OutputDir out(cfg.out_dir);
  cfg.save(out.file("config_resolved.ini"));

  const std::vector<ReprMatrix> reprs = infer_representations(model, data.normalized);
  for (int horizon : cfg.horizons) {
    HorizonEval eval = evaluate_horizon(data, reprs, horizon, cfg);
    const std::string suffix = "_h" + std::to_string(horizon);
    save_ridge(eval.ridge, out.file("ridge" + suffix + ".bin"));
    write_report_files(out, "report" + suffix, eval.model_report, eval.ha_report,
                       eval.ridge.lambda);
    write_predictions_csv(out.file("predictions" + suffix + ".csv"), eval.index,
                          data.ds.instance_ids, eval.pred, eval.truth);
    STBR_LOG_INFO("forecast: horizon %d rmse %.4f mae %.4f (HA mae %.4f)", horizon,
                  eval.model_report.headline().rmse, eval.model_report.headline().mae,
                  eval.ha_report.headline().mae);
  }
}

void cmd_transfer(const RunConfig& cfg, const std::string& checkpoint_path,
                  const std::string& ridge_path, const std::string& new_data_path,
                  const std::string& new_adjacency_path) {
  if (cfg.dataset.empty()) fail(ErrorKind::Config, "missing config key 'data.dataset'");
  if (new_data_path.empty()) fail(ErrorKind::Config, "missing --new-data path");
  if (new_adjacency_path.empty()) fail(ErrorKind::Config, "missing --new-adj path");

  CtsDataset ds_new = load_dataset(new_data_path);
  AdjacencyGraph graph_new = load_adjacency(new_adjacency_path, &ds_new.instance_ids);
  Model model = load_checkpoint(checkpoint_path);
  require_config_match(model, cfg.encoder);
  RidgeModel ridge = load_ridge(ridge_path);

  // New instances = present now, absent from the training dataset.
  const CtsDataset ds_old = load_dataset(cfg.dataset);
  std::set<std::string> old_ids(ds_old.instance_ids.begin(), ds_old.instance_ids.end());
  std::vector<std::string> new_ids;
  for (const auto& id : ds_new.instance_ids)
    if (!old_ids.count(id)) new_ids.push_back(id);

  OutputDir out(cfg.out_dir);
  cfg.save(out.file("config_resolved.ini"));

  const SplitSpec split =
      SplitSpec::from_fractions(ds_new.timesteps(), cfg.split_train, cfg.split_val);
  EvalResult result =
      cold_start_transfer(model, ridge, ds_new, graph_new, split, new_ids, cfg.ha_period);

  write_report_files(out, "transfer_report", result.model, result.baseline, ridge.lambda);
  const std::vector<std::string>& report_ids = new_ids.empty() ? ds_new.instance_ids : new_ids;
  write_predictions_csv(out.file("transfer_predictions.csv"), result.index, report_ids,
                        result.predictions, result.truth);
  STBR_LOG_INFO("transfer: %zu new instances, mae %.4f (HA mae %.4f)", new_ids.size(),
                result.model.headline().mae, result.baseline.headline().mae);
}

void cmd_ablate(const RunConfig& cfg) {
  for (double a : cfg.ablate_alphas)
    if (a < 0.0 || a > 1.0)
      fail(ErrorKind::Config, "ablation alpha must be in [0, 1], got " + std::to_string(a));

  LoadedData data = load_all(cfg, /*need_adjacency=*/true);
  OutputDir out(cfg.out_dir);
  cfg.save(out.file("config_resolved.ini"));

  std::FILE* f = std::fopen(out.file("sweep.csv").c_str(), "wb");
  if (!f) fail(ErrorKind::Io, "cannot write sweep.csv");
  std::fprintf(f, "alpha,horizon,rmse,mae,mape,ha_rmse,ha_mae,ha_mape\n");

  for (double a : cfg.ablate_alphas) {
    TrainConfig tc = cfg.train_config();
    tc.alpha = a;  // shared seed across the sweep
    tc.validate();
    TrainResult result = train_loop(data.normalized, data.graph, data.split, tc);
    const std::vector<ReprMatrix> reprs = infer_representations(result.model, data.normalized);
    for (int horizon : cfg.horizons) {
      HorizonEval eval = evaluate_horizon(data, reprs, horizon, cfg);
      const MetricsEntry& m = eval.model_report.headline();
      const MetricsEntry& h = eval.ha_report.headline();
      std::fprintf(f, "%.17g,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", a, horizon, m.rmse,
                   m.mae, m.mape_defined ? m.mape : std::nan(""), h.rmse, h.mae,
                   h.mape_defined ? h.mape : std::nan(""));
      STBR_LOG_INFO("ablate: alpha %.2f horizon %d mae %.4f", a, horizon, m.mae);
    }
    std::fflush(f);
  }
  std::fclose(f);
}

void cmd_robustness(const RunConfig& cfg, const std::string& checkpoint_path,
                    const std::string& ridge_path) {
  for (double rate : cfg.robust_rates)
    if (rate < 0.0 || rate >= 1.0)
      fail(ErrorKind::Config, "missing rate must be in [0, 1), got " + std::to_string(rate));
  if (cfg.robust_seeds < 1) fail(ErrorKind::Config, "robust_seeds must be >= 1");

  LoadedData data = load_all(cfg, /*need_adjacency=*/false);
  Model model = load_checkpoint(checkpoint_path);
  require_config_match(model, cfg.encoder);
  RidgeModel ridge = load_ridge(ridge_path);

  OutputDir out(cfg.out_dir);
  cfg.save(out.file("config_resolved.ini"));

  std::vector<uint64_t> seeds;
  for (int s = 1; s <= cfg.robust_seeds; ++s) seeds.push_back(static_cast<uint64_t>(s));
  const std::vector<RobustnessRow> rows =
      robustness_eval(model, ridge, data.ds, data.stats, data.split, cfg.robust_rates, seeds);

  std::FILE* f = std::fopen(out.file("degradation.csv").c_str(), "wb");
  if (!f) fail(ErrorKind::Io, "cannot write degradation.csv");
  std::fprintf(f, "rate,seed,horizon,rmse,mae,mape\n");
  for (const RobustnessRow& row : rows)
    for (int h = 1; h <= row.report.horizon; ++h) {
      const MetricsEntry& e = row.report.aggregate[static_cast<size_t>(h - 1)];
      std::fprintf(f, "%.17g,%llu,%d,%.17g,%.17g,%.17g\n", row.rate,
                   static_cast<unsigned long long>(row.seed), h, e.rmse, e.mae,
                   e.mape_defined ? e.mape : std::nan(""));
    }
  std::fclose(f);
  STBR_LOG_INFO("robustness: %zu rows", rows.size() * static_cast<size_t>(ridge.horizon));
}

void cmd_embed(const RunConfig& cfg, const std::string& checkpoint_path) {
  LoadedData data = load_all(cfg, /*need_adjacency=*/false);
  Model model = load_checkpoint(checkpoint_path);
  require_config_match(model, cfg.encoder);

  OutputDir out(cfg.out_dir);
  cfg.save(out.file("config_resolved.ini"));

  const std::vector<ReprMatrix> reprs = infer_representations(model, data.normalized);
  std::FILE* f = std::fopen(out.file("embeddings.csv").c_str(), "wb");
  if (!f) fail(ErrorKind::Io, "cannot write embeddings.csv");
  std::fprintf(f, "instance,t");
  for (int k = 0; k < model.config.repr_dim; ++k) std::fprintf(f, ",r%d", k);
  std::fputc('\n', f);
  for (const ReprMatrix& rm : reprs)
    for (int t = 0; t < rm.values.rows(); ++t) {
      std::fprintf(f, "%s,%d", rm.instance_id.c_str(), t);
      for (int k = 0; k < rm.values.cols(); ++k) std::fprintf(f, ",%.17g", rm.values(t, k));
      std::fputc('\n', f);
    }
  std::fclose(f);
  STBR_LOG_INFO("embed: wrote %s", out.file("embeddings.csv").c_str());
}

}  // namespace stbr
