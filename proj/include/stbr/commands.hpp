#pragma once

#include <string>

#include "stbr/config.hpp"

namespace stbr {

// Experiment pipelines behind the CLI subcommands. Each owns its output
// directory for the duration of the call (lockfile) and archives the resolved
// configuration there. Errors propagate as stbr::Error.

// checkpoint.stbr + loss_curve.csv
void cmd_train(const RunConfig& cfg);

// Per horizon: ridge_h{p}.bin, report_h{p}.json/.txt, predictions_h{p}.csv.
// One checkpoint load serves every horizon.
void cmd_forecast(const RunConfig& cfg, const std::string& checkpoint_path);

// transfer_report.json/.txt + transfer_predictions.csv for instances present
// in the new dataset but absent from the training dataset (all instances when
// the sets coincide).
void cmd_transfer(const RunConfig& cfg, const std::string& checkpoint_path,
                  const std::string& ridge_path, const std::string& new_data_path,
                  const std::string& new_adjacency_path);

// sweep.csv: one row per (alpha, horizon), shared seed across alphas.
void cmd_ablate(const RunConfig& cfg);

// degradation.csv: rate,seed,horizon,rmse,mae,mape.
void cmd_robustness(const RunConfig& cfg, const std::string& checkpoint_path,
                    const std::string& ridge_path);

// embeddings.csv: instance,t,r0..r{K-1}.
void cmd_embed(const RunConfig& cfg, const std::string& checkpoint_path);

// Exit-code mapping used by the CLI: 0 success, 1 internal, 2 config/input,
// 3 artifact compatibility.
int exit_code_for(ErrorKind kind);

}  // namespace stbr
