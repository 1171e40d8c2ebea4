#include "stbr/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace stbr {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool parse_number(const std::string& field, double* out) {
  const std::string t = trim(field);
  if (t.empty()) return false;
  char* end = nullptr;
  *out = std::strtod(t.c_str(), &end);
  return end == t.c_str() + t.size();
}

bool parse_integer(const std::string& field, int64_t* out) {
  const std::string t = trim(field);
  if (t.empty()) return false;
  char* end = nullptr;
  *out = std::strtoll(t.c_str(), &end, 10);
  return end == t.c_str() + t.size();
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  return lines;
}

void write_double(std::FILE* f, double v) { std::fprintf(f, "%.17g", v); }

}  // namespace

int64_t CtsDataset::observed_count() const {
  return observed.cast<int64_t>().sum();
}

SplitSpec SplitSpec::from_fractions(int total, double train_frac, double val_frac) {
  if (train_frac <= 0.0 || val_frac < 0.0 || train_frac + val_frac >= 1.0)
    fail(ErrorKind::Config, "split fractions must satisfy 0 < train, 0 <= val, train + val < 1");
  SplitSpec s;
  s.total = total;
  s.train_end = static_cast<int>(std::llround(train_frac * total));
  s.val_end = s.train_end + static_cast<int>(std::llround(val_frac * total));
  s.validate();
  return s;
}

void SplitSpec::validate() const {
  if (!(0 < train_end && train_end <= val_end && val_end <= total))
    fail(ErrorKind::Config, "split boundaries must satisfy 0 < train_end <= val_end <= total, got " +
                                std::to_string(train_end) + "/" + std::to_string(val_end) + "/" +
                                std::to_string(total));
}

CtsDataset load_dataset(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.size() < 2) fail(ErrorKind::Parse, path + ": need a header row and at least one data row");

  const auto header = split_fields(lines[0]);
  if (header.empty() || trim(header[0]) != "ts")
    fail(ErrorKind::Parse, path + ": line 1: first header column must be 'ts'");
  const int n = static_cast<int>(header.size()) - 1;
  if (n < 1) fail(ErrorKind::Parse, path + ": line 1: no instance columns");

  CtsDataset ds;
  for (int i = 0; i < n; ++i) ds.instance_ids.push_back(trim(header[static_cast<size_t>(i) + 1]));

  const int t_total = static_cast<int>(lines.size()) - 1;
  ds.values = Eigen::MatrixXd::Zero(n, t_total);
  ds.observed = ByteMatrix::Zero(n, t_total);

  std::vector<std::string> ts_column;
  ts_column.reserve(static_cast<size_t>(t_total));
  for (int t = 0; t < t_total; ++t) {
    const int line_no = t + 2;
    const auto fields = split_fields(lines[static_cast<size_t>(t) + 1]);
    if (static_cast<int>(fields.size()) != n + 1)
      fail(ErrorKind::Parse, path + ": line " + std::to_string(line_no) + ": expected " +
                                 std::to_string(n + 1) + " fields, got " +
                                 std::to_string(fields.size()));
    ts_column.push_back(trim(fields[0]));
    for (int i = 0; i < n; ++i) {
      const std::string& cell = fields[static_cast<size_t>(i) + 1];
      if (trim(cell).empty()) continue;  // missing measurement
      double v = 0.0;
      if (!parse_number(cell, &v))
        fail(ErrorKind::Parse, path + ": line " + std::to_string(line_no) + ", column '" +
                                   ds.instance_ids[static_cast<size_t>(i)] + "': non-numeric cell '" +
                                   trim(cell) + "'");
      if (!std::isfinite(v))
        fail(ErrorKind::Validation, path + ": line " + std::to_string(line_no) +
                                        ": non-finite measurement");
      ds.values(i, t) = v;
      ds.observed(i, t) = 1;
    }
  }

  ds.start_time = ts_column.empty() ? "" : ts_column[0];
  int64_t t0 = 0, t1 = 0;
  if (ts_column.size() >= 2 && parse_integer(ts_column[0], &t0) && parse_integer(ts_column[1], &t1))
    ds.time_step = t1 - t0;
  return ds;
}

AdjacencyGraph load_adjacency(const std::string& path,
                              const std::vector<std::string>* expected_ids) {
  const auto lines = read_lines(path);
  if (lines.empty()) fail(ErrorKind::Parse, path + ": empty adjacency file");

  AdjacencyGraph graph;
  size_t first_row = 0;
  {
    const auto fields = split_fields(lines[0]);
    double ignored = 0.0;
    if (!parse_number(fields[0], &ignored)) {
      for (const auto& f : fields) graph.instance_ids.push_back(trim(f));
      first_row = 1;
    }
  }

  const int n = static_cast<int>(lines.size() - first_row);
  if (n < 1) fail(ErrorKind::Parse, path + ": no matrix rows");
  if (!graph.instance_ids.empty() && static_cast<int>(graph.instance_ids.size()) != n)
    fail(ErrorKind::Parse, path + ": header has " + std::to_string(graph.instance_ids.size()) +
                               " ids but matrix has " + std::to_string(n) + " rows");

  graph.weights = Eigen::MatrixXd::Zero(n, n);
  for (int r = 0; r < n; ++r) {
    const int line_no = static_cast<int>(first_row) + r + 1;
    const auto fields = split_fields(lines[first_row + static_cast<size_t>(r)]);
    if (static_cast<int>(fields.size()) != n)
      fail(ErrorKind::Parse, path + ": line " + std::to_string(line_no) + ": expected " +
                                 std::to_string(n) + " fields, got " + std::to_string(fields.size()));
    for (int c = 0; c < n; ++c) {
      double v = 0.0;
      if (!parse_number(fields[static_cast<size_t>(c)], &v))
        fail(ErrorKind::Parse, path + ": line " + std::to_string(line_no) + ", field " +
                                   std::to_string(c + 1) + ": non-numeric weight");
      if (v < 0.0)
        fail(ErrorKind::Validation, path + ": line " + std::to_string(line_no) +
                                        ": negative weight " + std::to_string(v));
      graph.weights(r, c) = v;
    }
  }

  if (expected_ids) {
    if (static_cast<int>(expected_ids->size()) != n)
      fail(ErrorKind::Alignment, path + ": adjacency is " + std::to_string(n) + "x" +
                                     std::to_string(n) + " but dataset has " +
                                     std::to_string(expected_ids->size()) + " instances");
    if (!graph.instance_ids.empty() && graph.instance_ids != *expected_ids)
      fail(ErrorKind::Alignment, path + ": adjacency ids do not match dataset ids");
    if (graph.instance_ids.empty()) graph.instance_ids = *expected_ids;
  }

  bool any_positive = false;
  for (int r = 0; r < n && !any_positive; ++r)
    for (int c = 0; c < n; ++c)
      if (r != c && graph.weights(r, c) > 0.0) {
        any_positive = true;
        break;
      }
  graph.spatially_degenerate = !any_positive;
  if (graph.spatially_degenerate)
    STBR_LOG_WARN("adjacency '%s' is spatially degenerate (no positive off-diagonal weight)",
                  path.c_str());
  return graph;
}

void save_dataset(const CtsDataset& ds, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) fail(ErrorKind::Io, "cannot write '" + path + "'");
  std::fprintf(f, "ts");
  for (const auto& id : ds.instance_ids) std::fprintf(f, ",%s", id.c_str());
  std::fputc('\n', f);
  int64_t start = 0;
  parse_integer(ds.start_time, &start);
  for (int t = 0; t < ds.timesteps(); ++t) {
    std::fprintf(f, "%lld", static_cast<long long>(start + t * ds.time_step));
    for (int i = 0; i < ds.instances(); ++i) {
      std::fputc(',', f);
      if (ds.observed(i, t)) write_double(f, ds.values(i, t));
    }
    std::fputc('\n', f);
  }
  std::fclose(f);
}

void save_adjacency(const AdjacencyGraph& graph, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) fail(ErrorKind::Io, "cannot write '" + path + "'");
  if (!graph.instance_ids.empty()) {
    for (size_t i = 0; i < graph.instance_ids.size(); ++i)
      std::fprintf(f, "%s%s", i ? "," : "", graph.instance_ids[i].c_str());
    std::fputc('\n', f);
  }
  for (int r = 0; r < graph.weights.rows(); ++r) {
    for (int c = 0; c < graph.weights.cols(); ++c) {
      if (c) std::fputc(',', f);
      write_double(f, graph.weights(r, c));
    }
    std::fputc('\n', f);
  }
  std::fclose(f);
}

namespace {

// Population mean/std of instance i over observed points in [0, end);
// returns false when no point is observed there.
bool instance_stats(const CtsDataset& ds, int i, int end, double* mu_out, double* sigma_out,
                    bool* constant_out) {
  double sum = 0.0;
  int64_t count = 0;
  for (int t = 0; t < end; ++t)
    if (ds.observed(i, t)) {
      sum += ds.values(i, t);
      ++count;
    }
  if (count == 0) return false;
  const double mu = sum / static_cast<double>(count);
  double sq = 0.0;
  for (int t = 0; t < end; ++t)
    if (ds.observed(i, t)) sq += (ds.values(i, t) - mu) * (ds.values(i, t) - mu);
  double sigma = std::sqrt(sq / static_cast<double>(count));
  *constant_out = sigma <= 0.0;
  if (*constant_out) {
    sigma = 1.0;
    STBR_LOG_WARN("instance '%s' is constant on its normalization window; sigma set to 1",
                  ds.instance_ids[static_cast<size_t>(i)].c_str());
  }
  *mu_out = mu;
  *sigma_out = sigma;
  return true;
}

}  // namespace

NormStats fit_normalizer(const CtsDataset& ds, const SplitSpec& split) {
  split.validate();
  if (split.total != ds.timesteps())
    fail(ErrorKind::Contract, "fit_normalizer: split covers " + std::to_string(split.total) +
                                  " steps, dataset has " + std::to_string(ds.timesteps()));
  const int n = ds.instances();
  NormStats stats;
  stats.mean = Eigen::VectorXd::Zero(n);
  stats.stddev = Eigen::VectorXd::Ones(n);
  stats.constant_series.assign(static_cast<size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    double mu = 0.0, sigma = 1.0;
    bool constant = false;
    if (!instance_stats(ds, i, split.train_end, &mu, &sigma, &constant))
      fail(ErrorKind::Coverage, "instance '" + ds.instance_ids[static_cast<size_t>(i)] +
                                    "' has no observed points in the training split");
    stats.mean(i) = mu;
    stats.stddev(i) = sigma;
    stats.constant_series[static_cast<size_t>(i)] = constant ? 1 : 0;
  }
  return stats;
}

NormStats fit_normalizer_lenient(const CtsDataset& ds, const SplitSpec& split) {
  split.validate();
  if (split.total != ds.timesteps())
    fail(ErrorKind::Contract, "fit_normalizer: split covers " + std::to_string(split.total) +
                                  " steps, dataset has " + std::to_string(ds.timesteps()));
  const int n = ds.instances();
  NormStats stats;
  stats.mean = Eigen::VectorXd::Zero(n);
  stats.stddev = Eigen::VectorXd::Ones(n);
  stats.constant_series.assign(static_cast<size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    double mu = 0.0, sigma = 1.0;
    bool constant = false;
    bool ok = instance_stats(ds, i, split.train_end, &mu, &sigma, &constant);
    if (!ok && split.val_end > split.train_end)
      ok = instance_stats(ds, i, split.val_end, &mu, &sigma, &constant);
    if (!ok && split.total > split.val_end)
      ok = instance_stats(ds, i, split.total, &mu, &sigma, &constant);
    if (!ok) {
      STBR_LOG_WARN("instance '%s' has no observed points at all; using mean 0, sigma 1",
                    ds.instance_ids[static_cast<size_t>(i)].c_str());
      mu = 0.0;
      sigma = 1.0;
    }
    stats.mean(i) = mu;
    stats.stddev(i) = sigma;
    stats.constant_series[static_cast<size_t>(i)] = constant ? 1 : 0;
  }
  return stats;
}

CtsDataset NormStats::apply(const CtsDataset& ds) const {
  if (mean.size() != ds.instances())
    fail(ErrorKind::Contract, "normalizer fitted for " + std::to_string(mean.size()) +
                                  " instances, dataset has " + std::to_string(ds.instances()));
  CtsDataset out = ds;
  for (int i = 0; i < ds.instances(); ++i)
    for (int t = 0; t < ds.timesteps(); ++t)
      out.values(i, t) = ds.observed(i, t) ? (ds.values(i, t) - mean(i)) / stddev(i) : 0.0;
  return out;
}

CtsDataset NormStats::invert(const CtsDataset& ds) const {
  if (mean.size() != ds.instances())
    fail(ErrorKind::Contract, "normalizer fitted for " + std::to_string(mean.size()) +
                                  " instances, dataset has " + std::to_string(ds.instances()));
  CtsDataset out = ds;
  for (int i = 0; i < ds.instances(); ++i)
    for (int t = 0; t < ds.timesteps(); ++t)
      if (ds.observed(i, t)) out.values(i, t) = ds.values(i, t) * stddev(i) + mean(i);
  return out;
}

CtsDataset inject_missing(const CtsDataset& ds, double rate, uint64_t seed) {
  if (rate < 0.0 || rate >= 1.0)
    fail(ErrorKind::Config, "inject_missing: rate must be in [0, 1), got " + std::to_string(rate));
  std::vector<std::pair<int, int>> cells;
  for (int i = 0; i < ds.instances(); ++i)
    for (int t = 0; t < ds.timesteps(); ++t)
      if (ds.observed(i, t)) cells.emplace_back(i, t);

  const auto flip_count = static_cast<size_t>(std::llround(rate * static_cast<double>(cells.size())));
  CtsDataset out = ds;
  if (flip_count == 0) return out;

  // Seeded Fisher-Yates; a prefix of the same permutation serves every rate,
  // so missing sets grow monotonically with rate.
  Rng rng(seed);
  for (size_t i = cells.size() - 1; i > 0; --i)
    std::swap(cells[i], cells[rng.next_below(i + 1)]);
  for (size_t i = 0; i < flip_count; ++i) out.observed(cells[i].first, cells[i].second) = 0;
  return out;
}

namespace {

std::vector<int> index_of_ids(const std::vector<std::string>& all,
                              const std::vector<std::string>& wanted) {
  std::vector<int> idx;
  for (const auto& id : wanted) {
    auto it = std::find(all.begin(), all.end(), id);
    if (it == all.end()) fail(ErrorKind::Validation, "unknown instance id '" + id + "'");
    idx.push_back(static_cast<int>(it - all.begin()));
  }
  return idx;
}

}  // namespace

CtsDataset subset_instances(const CtsDataset& ds, const std::vector<std::string>& ids) {
  const auto idx = index_of_ids(ds.instance_ids, ids);
  CtsDataset out;
  out.instance_ids = ids;
  out.start_time = ds.start_time;
  out.time_step = ds.time_step;
  out.values = Eigen::MatrixXd(static_cast<int>(idx.size()), ds.timesteps());
  out.observed = ByteMatrix(static_cast<int>(idx.size()), ds.timesteps());
  for (size_t r = 0; r < idx.size(); ++r) {
    out.values.row(static_cast<int>(r)) = ds.values.row(idx[r]);
    out.observed.row(static_cast<int>(r)) = ds.observed.row(idx[r]);
  }
  return out;
}

AdjacencyGraph subset_instances(const AdjacencyGraph& graph,
                                const std::vector<std::string>& ids) {
  const auto idx = index_of_ids(graph.instance_ids, ids);
  AdjacencyGraph out;
  out.instance_ids = ids;
  out.weights = Eigen::MatrixXd(static_cast<int>(idx.size()), static_cast<int>(idx.size()));
  for (size_t r = 0; r < idx.size(); ++r)
    for (size_t c = 0; c < idx.size(); ++c)
      out.weights(static_cast<int>(r), static_cast<int>(c)) = graph.weights(idx[r], idx[c]);
  bool any_positive = false;
  for (int r = 0; r < out.weights.rows() && !any_positive; ++r)
    for (int c = 0; c < out.weights.cols(); ++c)
      if (r != c && out.weights(r, c) > 0.0) {
        any_positive = true;
        break;
      }
  out.spatially_degenerate = !any_positive;
  return out;
}

}  // namespace stbr
