#include "stbr/trainer.hpp"

#include <cmath>
#include <cstdio>

namespace stbr {

namespace {

constexpr uint64_t kInitStream = 0x11;
constexpr uint64_t kSamplerStream = 0x22;

double plain_prediction_loss(const Tensor& prediction, const Tensor& target) {
  if (prediction.shape != target.shape)
    fail(ErrorKind::Dimension, "prediction loss: shape " +
                                   Tensor::shape_string(prediction.shape) + " vs " +
                                   Tensor::shape_string(target.shape));
  const Tensor yhat = fwd::l2_normalize(prediction);
  const Tensor rhat = fwd::l2_normalize(target);
  double sum = 0.0;
  auto ym = yhat.mat();
  auto rm = rhat.mat();
  for (int64_t r = 0; r < yhat.leading(); ++r) sum += (ym.row(r) - rm.row(r)).squaredNorm();
  return sum / static_cast<double>(yhat.leading());
}

// Loss of a normalized on-tape prediction against a detached target
// representation. skip_rows > 0 drops the first rows from the average
// (overlap-only temporal mode).
Var target_loss(Tape& tape, Var y_normalized, const Tensor& target_repr, int skip_rows) {
  Var diff = sub(y_normalized, constant(tape, fwd::l2_normalize(target_repr)));
  int64_t rows = value(y_normalized).leading();
  if (skip_rows > 0) {
    std::vector<uint8_t> drop(static_cast<size_t>(rows), 0);
    for (int r = 0; r < skip_rows; ++r) drop[static_cast<size_t>(r)] = 1;
    diff = mask_rows(diff, std::move(drop));
    rows -= skip_rows;
  }
  return scale(frobenius_sq(diff), 1.0 / static_cast<double>(rows));
}

}  // namespace

void TrainConfig::validate() const {
  if (alpha < 0.0 || alpha > 1.0)
    fail(ErrorKind::Config, "alpha must be in [0, 1], got " + std::to_string(alpha));
  if (tau < 0.0 || tau > 1.0)
    fail(ErrorKind::Config, "tau must be in [0, 1], got " + std::to_string(tau));
  if (steps < 1) fail(ErrorKind::Config, "steps must be >= 1");
  if (batch_size < 1) fail(ErrorKind::Config, "batch_size must be >= 1");
  if (lr <= 0.0) fail(ErrorKind::Config, "learning rate must be positive");
  validate_window_lengths(sampler.window_len(), sampler.view_len, sampler.temporal_shift);
  encoder.validate(sampler.view_len);
}

double temporal_loss(const Tensor& prediction, const Tensor& temporal_target_repr) {
  return plain_prediction_loss(prediction, temporal_target_repr);
}

double spatial_loss(const Tensor& prediction, const Tensor& spatial_target_repr) {
  return plain_prediction_loss(prediction, spatial_target_repr);
}

double combined_loss(double temporal, double spatial, double alpha) {
  if (alpha < 0.0 || alpha > 1.0)
    fail(ErrorKind::Config, "alpha must be in [0, 1], got " + std::to_string(alpha));
  return alpha * temporal + (1.0 - alpha) * spatial;
}

void ema_update(EncoderParams& target, const EncoderParams& online, double tau) {
  auto phi = target.all();
  auto theta = online.all();
  if (phi.size() != theta.size())
    fail(ErrorKind::Contract, "ema_update: parameter lists differ in length");
  for (size_t i = 0; i < phi.size(); ++i) {
    if (phi[i]->value.shape != theta[i]->value.shape)
      fail(ErrorKind::Contract, "ema_update: shape mismatch on '" + phi[i]->id + "'");
    phi[i]->value.vec() = tau * phi[i]->value.vec() + (1.0 - tau) * theta[i]->value.vec();
  }
}

LossBreakdown train_step(Model& model, const std::vector<TrainingTriplet>& batch,
                         const TrainConfig& cfg, std::vector<Param*>& theta, AdamState& adam,
                         int64_t step_index) {
  if (batch.empty()) fail(ErrorKind::Contract, "train_step: empty batch");

  Tape tape;
  std::vector<Var> per_triplet;
  double temporal_sum = 0.0;
  double spatial_sum = 0.0;
  int fallback_count = 0;

  for (const TrainingTriplet& triplet : batch) {
    Var repr = encode_online(tape, model, triplet.view, triplet.view_observed,
                             triplet.mask.masked);
    Var y = predict(tape, model, repr);
    Var y_for_loss = cfg.pooled_loss ? l2_normalize(mean_rows(y)) : l2_normalize(y);

    Tensor rt = encode_target(model, triplet.temporal_target, triplet.temporal_observed);
    if (cfg.pooled_loss) {
      Tensor pooled({1, rt.last_dim()});
      pooled.mat() = rt.mat().colwise().mean();
      rt = pooled;
    }
    const int skip =
        (!cfg.pooled_loss && cfg.temporal_overlap_only) ? cfg.sampler.temporal_shift : 0;
    Var lt = target_loss(tape, y_for_loss, rt, skip);
    const double lt_value = value(lt).data[0];
    temporal_sum += lt_value;

    if (triplet.spatial_fallback) {
      // No neighbor: this triplet trains on the temporal loss alone and
      // contributes it to the spatial column as well, preserving the
      // combined = alpha*Lt + (1-alpha)*Ls identity of every logged step.
      spatial_sum += lt_value;
      per_triplet.push_back(lt);
      ++fallback_count;
      continue;
    }

    Tensor rs = encode_target(model, triplet.spatial_target, triplet.spatial_observed);
    if (cfg.pooled_loss) {
      Tensor pooled({1, rs.last_dim()});
      pooled.mat() = rs.mat().colwise().mean();
      rs = pooled;
    }
    Var ls = target_loss(tape, y_for_loss, rs, 0);
    spatial_sum += value(ls).data[0];
    per_triplet.push_back(add(scale(lt, cfg.alpha), scale(ls, 1.0 - cfg.alpha)));
  }

  Var total = per_triplet[0];
  for (size_t i = 1; i < per_triplet.size(); ++i) total = add(total, per_triplet[i]);
  total = scale(total, 1.0 / static_cast<double>(per_triplet.size()));

  LossBreakdown breakdown;
  breakdown.step = step_index;
  breakdown.total = value(total).data[0];
  breakdown.temporal = temporal_sum / static_cast<double>(batch.size());
  breakdown.spatial = spatial_sum / static_cast<double>(batch.size());
  breakdown.fallback_count = fallback_count;
  if (!std::isfinite(breakdown.total))
    fail(ErrorKind::Divergence,
         "non-finite loss at step " + std::to_string(step_index));

  backward(total);
  adam_step(theta, adam);
  ema_update(model.target, model.online, cfg.tau);
  return breakdown;
}

TrainResult train_loop(const CtsDataset& normalized_ds, const AdjacencyGraph& graph,
                       const SplitSpec& split, const TrainConfig& cfg) {
  cfg.validate();
  split.validate();
  if (graph.weights.rows() != normalized_ds.instances())
    fail(ErrorKind::Alignment, "adjacency has " + std::to_string(graph.weights.rows()) +
                                   " instances, dataset has " +
                                   std::to_string(normalized_ds.instances()));
  if (graph.spatially_degenerate)
    STBR_LOG_WARN("spatially degenerate graph: every triplet falls back to the temporal loss");

  Rng master(cfg.seed);
  Rng sampler_rng = master.fork(kSamplerStream);

  TrainResult result{Model::init(cfg.encoder, master.fork(kInitStream).next_u64()), {}};
  Model& model = result.model;
  model.seed = cfg.seed;

  std::vector<Param*> theta = model.online_params();
  AdamState adam =
      AdamState::create(theta, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);

  result.curve.reserve(static_cast<size_t>(cfg.steps));
  for (int64_t step = 1; step <= cfg.steps; ++step) {
    std::vector<TrainingTriplet> batch;
    batch.reserve(static_cast<size_t>(cfg.batch_size));
    for (int b = 0; b < cfg.batch_size; ++b) {
      const WindowSpec spec =
          sample_window(normalized_ds, split, cfg.sampler.window_len(), cfg.sampler.view_len,
                        cfg.sampler.temporal_shift, sampler_rng);
      batch.push_back(make_triplet(normalized_ds, graph, spec, cfg.sampler, sampler_rng));
    }
    result.curve.push_back(train_step(model, batch, cfg, theta, adam, step));
    if (step % 200 == 0 || step == cfg.steps)
      STBR_LOG_INFO("step %lld/%lld loss %.4f (temporal %.4f, spatial %.4f)",
                    static_cast<long long>(step), static_cast<long long>(cfg.steps),
                    result.curve.back().total, result.curve.back().temporal,
                    result.curve.back().spatial);
  }
  model.trained_steps = cfg.steps;

  const double cosine = collapse_probe(model, normalized_ds);
  if (cosine > 0.999)
    STBR_LOG_WARN("representation collapse: mean pairwise cosine %.6f > 0.999", cosine);
  return result;
}

void write_loss_curve(const std::vector<LossBreakdown>& curve, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) fail(ErrorKind::Io, "cannot write '" + path + "'");
  std::fprintf(f, "step,loss_total,loss_temporal,loss_spatial,fallback_count\n");
  for (const LossBreakdown& row : curve)
    std::fprintf(f, "%lld,%.17g,%.17g,%.17g,%d\n", static_cast<long long>(row.step), row.total,
                 row.temporal, row.spatial, row.fallback_count);
  std::fclose(f);
}

double collapse_probe(Model& model, const CtsDataset& normalized_ds, int probe_rows) {
  const int len = std::min(normalized_ds.timesteps(), 256);
  std::vector<Eigen::VectorXd> rows;
  for (int i = 0; i < normalized_ds.instances() && static_cast<int>(rows.size()) < probe_rows;
       ++i) {
    Eigen::VectorXd series = normalized_ds.values.row(i).head(len);
    std::vector<uint8_t> observed(static_cast<size_t>(len));
    for (int t = 0; t < len; ++t) observed[static_cast<size_t>(t)] = normalized_ds.observed(i, t);
    const Tensor repr = encode_inference(model, series, observed);
    auto rm = repr.mat();
    const int stride = std::max(1, len / 32);
    for (int t = 0; t < len && static_cast<int>(rows.size()) < probe_rows; t += stride) {
      const double norm = rm.row(t).norm();
      if (norm > kNormEps) rows.push_back(rm.row(t).transpose() / norm);
    }
  }
  if (rows.size() < 2) return 0.0;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(rows[0].size());
  for (const auto& r : rows) sum += r;
  const double n = static_cast<double>(rows.size());
  // mean over ordered pairs i != j of cos(r_i, r_j)
  return (sum.squaredNorm() - n) / (n * (n - 1.0));
}

}  // namespace stbr
