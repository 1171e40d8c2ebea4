#include <doctest.h>

#include <cmath>
#include <fstream>

#include "stbr/synthetic.hpp"
#include "stbr/trainer.hpp"

using namespace stbr;

namespace {

Tensor unit_rows(std::vector<std::vector<double>> rows) {
  const int n = static_cast<int>(rows.size());
  const int k = static_cast<int>(rows[0].size());
  Tensor t({n, k});
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < k; ++c) t.mat()(r, c) = rows[static_cast<size_t>(r)][static_cast<size_t>(c)];
  return t;
}

TrainConfig tiny_train_config() {
  TrainConfig cfg;
  cfg.sampler.view_len = 32;
  cfg.sampler.temporal_shift = 8;
  cfg.sampler.mask_ratio = 0.15;
  cfg.sampler.mask_mean_seg_len = 3;
  cfg.encoder.latent_dim = 8;
  cfg.encoder.repr_dim = 8;
  cfg.encoder.blocks = 2;
  cfg.encoder.kernel_size = 3;
  cfg.encoder.predictor_hidden = 16;
  cfg.batch_size = 4;
  cfg.steps = 5;
  cfg.seed = 21;
  return cfg;
}

CtsDataset sine_dataset(int instances, int timesteps) {
  CtsDataset ds;
  ds.values = Eigen::MatrixXd(instances, timesteps);
  for (int i = 0; i < instances; ++i) {
    ds.instance_ids.push_back("i" + std::to_string(i));
    for (int t = 0; t < timesteps; ++t)
      ds.values(i, t) = std::sin(0.3 * t + 0.7 * i) + 0.1 * std::cos(1.7 * t);
  }
  ds.observed = ByteMatrix::Ones(instances, timesteps);
  return ds;
}

}  // namespace

TEST_SUITE_BEGIN("trainer");

TEST_CASE("temporal loss hits 0, 2, 4 on aligned, orthogonal, anti-aligned rows") {
  const Tensor y = unit_rows({{1, 0}, {0, 1}});
  CHECK(temporal_loss(y, y) == doctest::Approx(0.0).epsilon(1e-12));

  const Tensor orth = unit_rows({{0, 1}, {1, 0}});
  CHECK(temporal_loss(y, orth) == doctest::Approx(2.0).epsilon(1e-12));

  const Tensor anti = unit_rows({{-1, 0}, {0, -1}});
  CHECK(temporal_loss(y, anti) == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("spatial loss matches the cosine formula on random unit rows") {
  Rng rng(33);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 4;
    const int k = 6;
    Tensor y({n, k}), r({n, k});
    for (auto& v : y.data) v = rng.uniform(-1, 1);
    for (auto& v : r.data) v = rng.uniform(-1, 1);
    double expected = 0.0;
    for (int row = 0; row < n; ++row) {
      const double cosine =
          y.mat().row(row).dot(r.mat().row(row)) / (y.mat().row(row).norm() * r.mat().row(row).norm());
      expected += 2.0 - 2.0 * cosine;
    }
    expected /= n;
    CHECK(spatial_loss(y, r) == doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("losses are scale-invariant in the prediction") {
  Rng rng(34);
  Tensor y({3, 5}), r({3, 5});
  for (auto& v : y.data) v = rng.uniform(-1, 1);
  for (auto& v : r.data) v = rng.uniform(-1, 1);
  Tensor y_scaled = y;
  y_scaled.vec() *= 7.5;
  CHECK(spatial_loss(y, r) == doctest::Approx(spatial_loss(y_scaled, r)).epsilon(1e-12));
}

TEST_CASE("loss values always lie in [0, 4]") {
  Rng rng(35);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor y({6, 4}), r({6, 4});
    for (auto& v : y.data) v = rng.uniform(-3, 3);
    for (auto& v : r.data) v = rng.uniform(-3, 3);
    const double value = temporal_loss(y, r);
    CHECK(value >= 0.0);
    CHECK(value <= 4.0 + 1e-12);
  }
}

TEST_CASE("degenerate rows raise the collapse signal") {
  Tensor y = unit_rows({{1, 0}, {0, 0}});
  const Tensor r = unit_rows({{1, 0}, {0, 1}});
  CHECK_THROWS_AS(temporal_loss(y, r), Error);
}

TEST_CASE("combined loss is the exact alpha blend") {
  CHECK(combined_loss(1.0, 3.0, 0.5) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(combined_loss(1.25, 99.0, 1.0) == 1.25);   // alpha = 1: temporal only
  CHECK(combined_loss(99.0, 0.75, 0.0) == 0.75);   // alpha = 0: spatial only
  CHECK_THROWS_AS(combined_loss(1, 1, -0.01), Error);
  CHECK_THROWS_AS(combined_loss(1, 1, 1.01), Error);
}

TEST_CASE("ema endpoints and hand-computed step") {
  EncoderConfig cfg;
  cfg.latent_dim = 4;
  cfg.repr_dim = 4;
  cfg.blocks = 1;
  Model model = Model::init(cfg, 1);

  // tau = 1 freezes phi
  const auto before = model.target.proj_w.value.data;
  for (Param* p : model.online_params()) p->value.vec().array() += 1.0;
  ema_update(model.target, model.online, 1.0);
  CHECK(model.target.proj_w.value.data == before);

  // tau = 0 copies theta exactly
  ema_update(model.target, model.online, 0.0);
  CHECK(model.target.proj_w.value.data == model.online.proj_w.value.data);

  // scalar arithmetic: phi=0, theta=1, tau=0.99 -> 0.01
  model.target.proj_b.value.data[0] = 0.0;
  model.online.proj_b.value.data[0] = 1.0;
  ema_update(model.target, model.online, 0.99);
  CHECK(model.target.proj_b.value.data[0] == doctest::Approx(0.01).epsilon(1e-15));
}

TEST_CASE("train config validation bounds") {
  TrainConfig cfg = tiny_train_config();
  cfg.alpha = 1.5;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = tiny_train_config();
  cfg.tau = -0.1;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = tiny_train_config();
  cfg.steps = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  CHECK_NOTHROW(tiny_train_config().validate());
}

TEST_CASE("train_step leaves phi gradients at zero and logs the blend identity") {
  const CtsDataset ds = sine_dataset(4, 200);
  AdjacencyGraph graph = make_ring_adjacency(4);
  graph.instance_ids = ds.instance_ids;
  TrainConfig cfg = tiny_train_config();
  cfg.alpha = 0.35;

  Rng sampler_rng(3);
  Model model = Model::init(cfg.encoder, 5);
  std::vector<Param*> theta = model.online_params();
  AdamState adam = AdamState::create(theta, cfg.lr);
  const SplitSpec split{160, 180, 200};

  for (int64_t step = 1; step <= 20; ++step) {
    std::vector<TrainingTriplet> batch;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const WindowSpec spec = sample_window(ds, split, cfg.sampler.window_len(),
                                            cfg.sampler.view_len, cfg.sampler.temporal_shift,
                                            sampler_rng);
      batch.push_back(make_triplet(ds, graph, spec, cfg.sampler, sampler_rng));
    }
    const LossBreakdown row = train_step(model, batch, cfg, theta, adam, step);

    CHECK(row.step == step);
    CHECK(row.total >= 0.0);
    CHECK(row.total <= 4.0 + 1e-12);
    CHECK(row.temporal >= 0.0);
    CHECK(row.temporal <= 4.0 + 1e-12);
    CHECK(row.spatial >= 0.0);
    CHECK(row.spatial <= 4.0 + 1e-12);
    CHECK(row.fallback_count == 0);
    // Eq-(3) linearity to 1e-12, every logged step
    CHECK(std::abs(row.total - combined_loss(row.temporal, row.spatial, cfg.alpha)) <= 1e-12);

    for (Param* p : model.target_params())
      for (double g : p->grad.data) CHECK(g == 0.0);
  }
  CHECK(adam.step_count == 20);
}

TEST_CASE("isolated nodes fall back to the temporal loss") {
  const CtsDataset ds = sine_dataset(3, 200);
  AdjacencyGraph graph;
  graph.instance_ids = ds.instance_ids;
  graph.weights = Eigen::MatrixXd::Zero(3, 3);  // everyone isolated
  graph.spatially_degenerate = true;

  TrainConfig cfg = tiny_train_config();
  cfg.alpha = 0.25;
  Model model = Model::init(cfg.encoder, 5);
  std::vector<Param*> theta = model.online_params();
  AdamState adam = AdamState::create(theta, cfg.lr);
  Rng rng(4);
  const SplitSpec split{160, 180, 200};

  std::vector<TrainingTriplet> batch;
  for (int b = 0; b < cfg.batch_size; ++b) {
    const WindowSpec spec = sample_window(ds, split, cfg.sampler.window_len(),
                                          cfg.sampler.view_len, cfg.sampler.temporal_shift, rng);
    batch.push_back(make_triplet(ds, graph, spec, cfg.sampler, rng));
  }
  const LossBreakdown row = train_step(model, batch, cfg, theta, adam, 1);
  CHECK(row.fallback_count == cfg.batch_size);
  // with every triplet on the temporal-only path the blend identity still holds
  CHECK(std::abs(row.total - combined_loss(row.temporal, row.spatial, cfg.alpha)) <= 1e-12);
  CHECK(row.spatial == doctest::Approx(row.temporal).epsilon(1e-15));
}

TEST_CASE("empty batches are rejected") {
  TrainConfig cfg = tiny_train_config();
  Model model = Model::init(cfg.encoder, 5);
  std::vector<Param*> theta = model.online_params();
  AdamState adam = AdamState::create(theta, cfg.lr);
  CHECK_THROWS_AS(train_step(model, {}, cfg, theta, adam, 1), Error);
}

TEST_CASE("train_loop is deterministic and records every step") {
  const CtsDataset ds = sine_dataset(4, 240);
  AdjacencyGraph graph = make_ring_adjacency(4);
  graph.instance_ids = ds.instance_ids;
  TrainConfig cfg = tiny_train_config();
  cfg.steps = 12;
  const SplitSpec split{180, 210, 240};

  TrainResult a = train_loop(ds, graph, split, cfg);
  TrainResult b = train_loop(ds, graph, split, cfg);

  REQUIRE(a.curve.size() == 12);
  REQUIRE(b.curve.size() == 12);
  for (size_t i = 0; i < a.curve.size(); ++i) {
    CHECK(a.curve[i].total == b.curve[i].total);  // bitwise determinism
    CHECK(a.curve[i].temporal == b.curve[i].temporal);
    CHECK(a.curve[i].spatial == b.curve[i].spatial);
  }
  auto pa = a.model.online_params();
  auto pb = b.model.online_params();
  for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value.data == pb[i]->value.data);
  CHECK(a.model.trained_steps == 12);
}

TEST_CASE("alpha endpoints both train to completion") {
  const CtsDataset ds = sine_dataset(4, 240);
  AdjacencyGraph graph = make_ring_adjacency(4);
  graph.instance_ids = ds.instance_ids;
  const SplitSpec split{180, 210, 240};
  for (double alpha : {0.0, 1.0}) {
    TrainConfig cfg = tiny_train_config();
    cfg.alpha = alpha;
    cfg.steps = 6;
    const TrainResult result = train_loop(ds, graph, split, cfg);
    CHECK(result.curve.size() == 6);
    for (const LossBreakdown& row : result.curve) CHECK(std::isfinite(row.total));
  }
}

TEST_CASE("single-step training produces a loadable checkpoint") {
  const CtsDataset ds = sine_dataset(3, 200);
  AdjacencyGraph graph = make_ring_adjacency(3);
  graph.instance_ids = ds.instance_ids;
  TrainConfig cfg = tiny_train_config();
  cfg.steps = 1;
  const SplitSpec split{160, 180, 200};
  TrainResult result = train_loop(ds, graph, split, cfg);

  const auto path = std::string("/tmp/stbr_single_step.bin");
  save_checkpoint(result.model, path);
  const Model loaded = load_checkpoint(path);
  CHECK(loaded.trained_steps == 1);
}

TEST_CASE("loss curve CSV has the contracted header and row count") {
  std::vector<LossBreakdown> curve;
  for (int i = 1; i <= 3; ++i)
    curve.push_back({i, 1.5, 1.0, 2.0, 0});
  const std::string path = "/tmp/stbr_curve.csv";
  write_loss_curve(curve, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "step,loss_total,loss_temporal,loss_spatial,fallback_count");
  int rows = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 3);
}

TEST_CASE("pooled and overlap-only loss modes run") {
  const CtsDataset ds = sine_dataset(4, 240);
  AdjacencyGraph graph = make_ring_adjacency(4);
  graph.instance_ids = ds.instance_ids;
  const SplitSpec split{180, 210, 240};

  TrainConfig pooled = tiny_train_config();
  pooled.pooled_loss = true;
  pooled.steps = 3;
  CHECK(train_loop(ds, graph, split, pooled).curve.size() == 3);

  TrainConfig overlap = tiny_train_config();
  overlap.temporal_overlap_only = true;
  overlap.steps = 3;
  CHECK(train_loop(ds, graph, split, overlap).curve.size() == 3);
}

TEST_SUITE_END();
