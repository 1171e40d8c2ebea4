#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stbr/common.hpp"
#include "stbr/model.hpp"
#include "stbr/sampler.hpp"
#include "stbr/trainer.hpp"

namespace stbr {

// Fully resolved run settings: defaults, then config file, then flag
// overrides. A serialized copy lands in the output directory for provenance.
struct RunConfig {
  // [data]
  std::string dataset;
  std::string adjacency;
  bool normalize = true;
  double split_train = 0.7;
  double split_val = 0.1;
  int ha_period = 24;

  // [sampler] / [encoder] / [trainer]
  SamplerConfig sampler;
  EncoderConfig encoder;
  double alpha = 0.5;
  double tau = 0.99;
  double lr = 1e-3;
  int batch = 8;
  int64_t steps = 2000;
  bool pooled_loss = false;
  bool temporal_overlap_only = false;

  // [downstream]
  std::vector<int> horizons = {1};
  std::vector<double> lambda_grid = {1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0};
  std::vector<double> robust_rates = {0.2, 0.4, 0.6};
  int robust_seeds = 3;
  std::vector<double> ablate_alphas = {0.0, 0.25, 0.5, 0.75, 1.0};

  // [run]
  uint64_t seed = 1;
  std::string out_dir = "out";

  // Sets one dotted key, e.g. apply("sampler.L1", "200"). Unknown keys and
  // unparsable values raise configuration errors naming the key.
  void apply(const std::string& key, const std::string& value);

  static RunConfig from_file(const std::string& path);
  void save(const std::string& path) const;

  TrainConfig train_config() const;
};

std::vector<int> parse_int_list(const std::string& text, const std::string& key);
std::vector<double> parse_double_list(const std::string& text, const std::string& key);

}  // namespace stbr
