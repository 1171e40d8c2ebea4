#include "stbr/synthetic.hpp"

#include <cmath>
#include <cstdio>

namespace stbr {

namespace {

std::string node_id(int i) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "n%02d", i);
  return buf;
}

}  // namespace

CtsDataset make_synthetic_cts(const SyntheticConfig& cfg) {
  if (cfg.instances < 2 || cfg.timesteps < 1 || cfg.period < 1)
    fail(ErrorKind::Config, "synthetic config: need instances >= 2, timesteps >= 1, period >= 1");
  const int n = cfg.instances;
  const double two_pi = 6.283185307179586;

  CtsDataset ds;
  ds.start_time = "0";
  ds.time_step = 1;
  for (int i = 0; i < n; ++i) ds.instance_ids.push_back(node_id(i));
  ds.values = Eigen::MatrixXd::Zero(n, cfg.timesteps);
  ds.observed = ByteMatrix::Ones(n, cfg.timesteps);

  Rng rng(cfg.seed);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd next(n);
  for (int t = -cfg.burn_in; t < cfg.timesteps; ++t) {
    for (int i = 0; i < n; ++i) {
      const double left = u((i + n - 1) % n);
      const double right = u((i + 1) % n);
      next(i) = cfg.ar_self * u(i) + cfg.ar_neighbor * 0.5 * (left + right) +
                cfg.noise_std * rng.normal();
    }
    u = next;
    if (t < 0) continue;
    for (int i = 0; i < n; ++i) {
      const double phase = two_pi * static_cast<double>(t) / cfg.period + two_pi * i / n;
      ds.values(i, t) = cfg.base + cfg.amplitude * std::sin(phase) + u(i);
    }
  }
  return ds;
}

AdjacencyGraph make_ring_adjacency(int instances) {
  if (instances < 2) fail(ErrorKind::Config, "ring adjacency needs at least 2 instances");
  AdjacencyGraph graph;
  graph.weights = Eigen::MatrixXd::Zero(instances, instances);
  for (int i = 0; i < instances; ++i) {
    graph.instance_ids.push_back(node_id(i));
    graph.weights(i, (i + 1) % instances) = 1.0;
    graph.weights((i + 1) % instances, i) = 1.0;
  }
  graph.spatially_degenerate = false;
  return graph;
}

}  // namespace stbr
