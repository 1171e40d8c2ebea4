// stbr: self-supervised spatiotemporal representation learning for correlated
// time series, with linear-probe forecasting, cold-start transfer, ablation,
// and missing-data robustness pipelines.

#include <CLI11.hpp>
#include <cstdio>
#include <string>
#include <vector>

#include "stbr/commands.hpp"
#include "stbr/config.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  uint64_t seed = 0;
  bool seed_set = false;
  bool out_set = false;
  std::vector<std::string> sets;
};

void add_common(CLI::App* app, CommonArgs& args) {
  app->add_option("--config", args.config_path, "Run configuration file (INI sections)");
  app->add_option("--seed", args.seed, "Master seed")->each([&](const std::string&) {
    args.seed_set = true;
  });
  app->add_option("--out", args.out_dir, "Output directory")->each([&](const std::string&) {
    args.out_set = true;
  });
  app->add_option("--set", args.sets, "Override any config key, e.g. --set trainer.steps=100");
}

stbr::RunConfig resolve(const CommonArgs& args) {
  stbr::RunConfig cfg;
  if (!args.config_path.empty()) cfg = stbr::RunConfig::from_file(args.config_path);
  for (const std::string& kv : args.sets) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos)
      stbr::fail(stbr::ErrorKind::Config, "--set expects key=value, got '" + kv + "'");
    cfg.apply(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (args.seed_set) cfg.seed = args.seed;
  if (args.out_set) cfg.out_dir = args.out_dir;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bootstrapped spatiotemporal representation learning for correlated time series"};
  app.require_subcommand(1);

  CommonArgs train_args, forecast_args, transfer_args, ablate_args, robust_args, embed_args;
  std::string checkpoint, ridge, new_data, new_adj, horizons, alphas, rates, data_path, adj_path;
  int robust_seeds = 0;

  CLI::App* train = app.add_subcommand("train", "Train the representation model");
  add_common(train, train_args);
  train->add_option("--data", data_path, "Dataset CSV (overrides data.dataset)");
  train->add_option("--adj", adj_path, "Adjacency CSV (overrides data.adjacency)");

  CLI::App* forecast = app.add_subcommand("forecast", "Linear-probe forecasting from a checkpoint");
  add_common(forecast, forecast_args);
  forecast->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required();
  forecast->add_option("--horizons", horizons, "Comma-separated forecast horizons");
  forecast->add_option("--data", data_path, "Dataset CSV (overrides data.dataset)");

  CLI::App* transfer = app.add_subcommand("transfer", "Apply frozen encoder+probe to new instances");
  add_common(transfer, transfer_args);
  transfer->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required();
  transfer->add_option("--ridge", ridge, "Fitted ridge model")->required();
  transfer->add_option("--new-data", new_data, "Grown dataset CSV")->required();
  transfer->add_option("--new-adj", new_adj, "Grown adjacency CSV")->required();

  CLI::App* ablate = app.add_subcommand("ablate", "Sweep the temporal/spatial loss weight");
  add_common(ablate, ablate_args);
  ablate->add_option("--alphas", alphas, "Comma-separated alpha values");
  ablate->add_option("--data", data_path, "Dataset CSV (overrides data.dataset)");
  ablate->add_option("--adj", adj_path, "Adjacency CSV (overrides data.adjacency)");

  CLI::App* robust = app.add_subcommand("robustness", "Missing-data degradation sweep");
  add_common(robust, robust_args);
  robust->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required();
  robust->add_option("--ridge", ridge, "Fitted ridge model")->required();
  robust->add_option("--rates", rates, "Comma-separated missing rates");
  robust->add_option("--seeds", robust_seeds, "Number of injection seeds");
  robust->add_option("--data", data_path, "Dataset CSV (overrides data.dataset)");

  CLI::App* embed = app.add_subcommand("embed", "Dump per-timestamp representations to CSV");
  add_common(embed, embed_args);
  embed->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required();
  embed->add_option("--data", data_path, "Dataset CSV (overrides data.dataset)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      stbr::RunConfig cfg = resolve(train_args);
      if (!data_path.empty()) cfg.dataset = data_path;
      if (!adj_path.empty()) cfg.adjacency = adj_path;
      stbr::cmd_train(cfg);
    } else if (forecast->parsed()) {
      stbr::RunConfig cfg = resolve(forecast_args);
      if (!data_path.empty()) cfg.dataset = data_path;
      if (!horizons.empty()) cfg.horizons = stbr::parse_int_list(horizons, "--horizons");
      stbr::cmd_forecast(cfg, checkpoint);
    } else if (transfer->parsed()) {
      stbr::RunConfig cfg = resolve(transfer_args);
      stbr::cmd_transfer(cfg, checkpoint, ridge, new_data, new_adj);
    } else if (ablate->parsed()) {
      stbr::RunConfig cfg = resolve(ablate_args);
      if (!data_path.empty()) cfg.dataset = data_path;
      if (!adj_path.empty()) cfg.adjacency = adj_path;
      if (!alphas.empty()) cfg.ablate_alphas = stbr::parse_double_list(alphas, "--alphas");
      stbr::cmd_ablate(cfg);
    } else if (robust->parsed()) {
      stbr::RunConfig cfg = resolve(robust_args);
      if (!data_path.empty()) cfg.dataset = data_path;
      if (!rates.empty()) cfg.robust_rates = stbr::parse_double_list(rates, "--rates");
      if (robust_seeds > 0) cfg.robust_seeds = robust_seeds;
      stbr::cmd_robustness(cfg, checkpoint, ridge);
    } else if (embed->parsed()) {
      stbr::RunConfig cfg = resolve(embed_args);
      if (!data_path.empty()) cfg.dataset = data_path;
      stbr::cmd_embed(cfg, checkpoint);
    }
  } catch (const stbr::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return stbr::exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 1;
  }
  return 0;
}
