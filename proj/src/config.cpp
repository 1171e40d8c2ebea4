#include "stbr/config.hpp"

#include <cstdio>
#include <fstream>

namespace stbr {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  fail(ErrorKind::Config, "config key '" + key + "': cannot parse value '" + value + "'");
}

double to_double(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const std::string t = trim(value);
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size()) bad_value(key, value);
  return v;
}

int64_t to_int(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const std::string t = trim(value);
  const int64_t v = std::strtoll(t.c_str(), &end, 10);
  if (t.empty() || end != t.c_str() + t.size()) bad_value(key, value);
  return v;
}

uint64_t to_u64(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const std::string t = trim(value);
  const uint64_t v = std::strtoull(t.c_str(), &end, 10);
  if (t.empty() || end != t.c_str() + t.size()) bad_value(key, value);
  return v;
}

bool to_bool(const std::string& key, const std::string& value) {
  const std::string t = trim(value);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  bad_value(key, value);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::string cur;
  for (char c : text) {
    if (c == ',') {
      items.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  items.push_back(cur);
  return items;
}

}  // namespace

std::vector<int> parse_int_list(const std::string& text, const std::string& key) {
  std::vector<int> out;
  for (const auto& item : split_list(text))
    if (!trim(item).empty()) out.push_back(static_cast<int>(to_int(key, item)));
  if (out.empty()) bad_value(key, text);
  return out;
}

std::vector<double> parse_double_list(const std::string& text, const std::string& key) {
  std::vector<double> out;
  for (const auto& item : split_list(text))
    if (!trim(item).empty()) out.push_back(to_double(key, item));
  if (out.empty()) bad_value(key, text);
  return out;
}

void RunConfig::apply(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (key == "data.dataset") dataset = v;
  else if (key == "data.adjacency") adjacency = v;
  else if (key == "data.normalize") normalize = to_bool(key, v);
  else if (key == "data.split_train") split_train = to_double(key, v);
  else if (key == "data.split_val") split_val = to_double(key, v);
  else if (key == "data.ha_period") ha_period = static_cast<int>(to_int(key, v));
  else if (key == "sampler.L1") sampler.view_len = static_cast<int>(to_int(key, v));
  else if (key == "sampler.l") sampler.temporal_shift = static_cast<int>(to_int(key, v));
  else if (key == "sampler.mask_ratio") sampler.mask_ratio = to_double(key, v);
  else if (key == "sampler.mask_mean_seg_len")
    sampler.mask_mean_seg_len = static_cast<int>(to_int(key, v));
  else if (key == "sampler.neighbor_sampling") {
    if (v == "weighted") sampler.weighted_neighbors = true;
    else if (v == "uniform") sampler.weighted_neighbors = false;
    else bad_value(key, v);
  } else if (key == "encoder.latent_dim") encoder.latent_dim = static_cast<int>(to_int(key, v));
  else if (key == "encoder.repr_dim") encoder.repr_dim = static_cast<int>(to_int(key, v));
  else if (key == "encoder.blocks") encoder.blocks = static_cast<int>(to_int(key, v));
  else if (key == "encoder.kernel_size") encoder.kernel_size = static_cast<int>(to_int(key, v));
  else if (key == "encoder.predictor_hidden")
    encoder.predictor_hidden = static_cast<int>(to_int(key, v));
  else if (key == "encoder.latent_masking") encoder.latent_masking = to_bool(key, v);
  else if (key == "encoder.shared_projection") encoder.shared_projection = to_bool(key, v);
  else if (key == "encoder.strict_coverage") encoder.strict_coverage = to_bool(key, v);
  else if (key == "trainer.alpha") alpha = to_double(key, v);
  else if (key == "trainer.tau") tau = to_double(key, v);
  else if (key == "trainer.lr") lr = to_double(key, v);
  else if (key == "trainer.batch") batch = static_cast<int>(to_int(key, v));
  else if (key == "trainer.steps") steps = to_int(key, v);
  else if (key == "trainer.pooled_loss") pooled_loss = to_bool(key, v);
  else if (key == "trainer.temporal_overlap_only") temporal_overlap_only = to_bool(key, v);
  else if (key == "downstream.horizons") horizons = parse_int_list(v, key);
  else if (key == "downstream.lambda_grid") lambda_grid = parse_double_list(v, key);
  else if (key == "downstream.robust_rates") robust_rates = parse_double_list(v, key);
  else if (key == "downstream.robust_seeds") robust_seeds = static_cast<int>(to_int(key, v));
  else if (key == "downstream.ablate_alphas") ablate_alphas = parse_double_list(v, key);
  else if (key == "run.seed") seed = to_u64(key, v);
  else if (key == "run.out") out_dir = v;
  else fail(ErrorKind::Config, "unknown config key '" + key + "'");
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open config '" + path + "'");
  RunConfig cfg;
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::Config, path + ": line " + std::to_string(line_no) +
                                  ": expected 'key = value'");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (section.empty())
      fail(ErrorKind::Config, path + ": line " + std::to_string(line_no) +
                                  ": key '" + key + "' outside any [section]");
    cfg.apply(section + "." + key, value);
  }
  return cfg;
}

void RunConfig::save(const std::string& path) const {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) fail(ErrorKind::Io, "cannot write config '" + path + "'");
  std::fprintf(f, "[data]\n");
  std::fprintf(f, "dataset = %s\n", dataset.c_str());
  std::fprintf(f, "adjacency = %s\n", adjacency.c_str());
  std::fprintf(f, "normalize = %s\n", normalize ? "true" : "false");
  std::fprintf(f, "split_train = %.17g\n", split_train);
  std::fprintf(f, "split_val = %.17g\n", split_val);
  std::fprintf(f, "ha_period = %d\n", ha_period);
  std::fprintf(f, "\n[sampler]\n");
  std::fprintf(f, "L1 = %d\n", sampler.view_len);
  std::fprintf(f, "l = %d\n", sampler.temporal_shift);
  std::fprintf(f, "mask_ratio = %.17g\n", sampler.mask_ratio);
  std::fprintf(f, "mask_mean_seg_len = %d\n", sampler.mask_mean_seg_len);
  std::fprintf(f, "neighbor_sampling = %s\n", sampler.weighted_neighbors ? "weighted" : "uniform");
  std::fprintf(f, "\n[encoder]\n");
  std::fprintf(f, "latent_dim = %d\n", encoder.latent_dim);
  std::fprintf(f, "repr_dim = %d\n", encoder.repr_dim);
  std::fprintf(f, "blocks = %d\n", encoder.blocks);
  std::fprintf(f, "kernel_size = %d\n", encoder.kernel_size);
  std::fprintf(f, "predictor_hidden = %d\n", encoder.predictor_hidden);
  std::fprintf(f, "latent_masking = %s\n", encoder.latent_masking ? "true" : "false");
  std::fprintf(f, "shared_projection = %s\n", encoder.shared_projection ? "true" : "false");
  std::fprintf(f, "strict_coverage = %s\n", encoder.strict_coverage ? "true" : "false");
  std::fprintf(f, "\n[trainer]\n");
  std::fprintf(f, "alpha = %.17g\n", alpha);
  std::fprintf(f, "tau = %.17g\n", tau);
  std::fprintf(f, "lr = %.17g\n", lr);
  std::fprintf(f, "batch = %d\n", batch);
  std::fprintf(f, "steps = %lld\n", static_cast<long long>(steps));
  std::fprintf(f, "pooled_loss = %s\n", pooled_loss ? "true" : "false");
  std::fprintf(f, "temporal_overlap_only = %s\n", temporal_overlap_only ? "true" : "false");
  std::fprintf(f, "\n[downstream]\n");
  std::fprintf(f, "horizons = ");
  for (size_t i = 0; i < horizons.size(); ++i) std::fprintf(f, "%s%d", i ? "," : "", horizons[i]);
  std::fprintf(f, "\nlambda_grid = ");
  for (size_t i = 0; i < lambda_grid.size(); ++i)
    std::fprintf(f, "%s%.17g", i ? "," : "", lambda_grid[i]);
  std::fprintf(f, "\nrobust_rates = ");
  for (size_t i = 0; i < robust_rates.size(); ++i)
    std::fprintf(f, "%s%.17g", i ? "," : "", robust_rates[i]);
  std::fprintf(f, "\nrobust_seeds = %d\n", robust_seeds);
  std::fprintf(f, "ablate_alphas = ");
  for (size_t i = 0; i < ablate_alphas.size(); ++i)
    std::fprintf(f, "%s%.17g", i ? "," : "", ablate_alphas[i]);
  std::fprintf(f, "\n\n[run]\n");
  std::fprintf(f, "seed = %llu\n", static_cast<unsigned long long>(seed));
  std::fprintf(f, "out = %s\n", out_dir.c_str());
  std::fclose(f);
}

TrainConfig RunConfig::train_config() const {
  TrainConfig tc;
  tc.alpha = alpha;
  tc.tau = tau;
  tc.lr = lr;
  tc.batch_size = batch;
  tc.steps = steps;
  tc.seed = seed;
  tc.pooled_loss = pooled_loss;
  tc.temporal_overlap_only = temporal_overlap_only;
  tc.sampler = sampler;
  tc.encoder = encoder;
  return tc;
}

}  // namespace stbr
