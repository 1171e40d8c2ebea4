#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "stbr/common.hpp"
#include "stbr/tensor.hpp"

namespace stbr {

struct EncoderConfig {
  int input_dim = 1;
  int latent_dim = 64;        // D
  int repr_dim = 64;          // K
  int blocks = 10;            // residual blocks; block b uses dilation 2^b
  int kernel_size = 3;        // k
  int predictor_hidden = 128; // K_h
  bool latent_masking = true;      // zero projected latents at masked steps
                                   // (false = zero raw values instead)
  bool shared_projection = false;  // target branch reuses the online projection
  bool strict_coverage = false;    // require receptive_field() >= view length

  // 1 + 2*(k-1)*(2^B - 1): two conv layers per block, dilation doubling.
  int64_t receptive_field() const {
    return 1 + 2ll * (kernel_size - 1) * ((1ll << blocks) - 1);
  }
  void validate(int view_len) const;
  uint64_t hash() const;
};

// Projection + dilated conv stack + output head. Both branches share this
// structure; the online branch additionally owns the predictor.
struct EncoderParams {
  Param proj_w, proj_b;  // input_dim -> D
  std::vector<Param> conv1, conv2;  // per block, [k,D,D]
  Param head_w, head_b;  // D -> K

  std::vector<Param*> all();
  std::vector<const Param*> all() const;
};

struct PredictorParams {
  Param l1_w, l1_b;  // K -> K_h
  Param l2_w, l2_b;  // K_h -> K

  std::vector<Param*> all();
};

struct Model {
  EncoderConfig config;
  EncoderParams online;       // theta, encoder side
  PredictorParams predictor;  // theta, predictor
  EncoderParams target;       // phi; never receives gradients
  int64_t trained_steps = 0;
  uint64_t seed = 0;

  // Gradient-updated parameter set (theta), fixed registration order.
  std::vector<Param*> online_params();
  std::vector<Param*> target_params();

  // Seed-deterministic uniform fan-in init; target starts as a copy of online.
  static Model init(const EncoderConfig& cfg, uint64_t seed);
};

// Online branch over a masked view: project, zero masked/unobserved latent
// rows, run the conv stack, map to K dims. Returns the [L,K] representation.
Var encode_online(Tape& tape, Model& model, const Eigen::VectorXd& series,
                  const std::vector<uint8_t>& observed, const std::vector<uint8_t>& aug_mask);

// Target branch: no augmentation mask, detached from any caller tape by
// construction (runs on its own scratch tape).
Tensor encode_target(Model& model, const Eigen::VectorXd& series,
                     const std::vector<uint8_t>& observed);

// Frozen-encoder inference with the online weights (the kept artifact).
Tensor encode_inference(Model& model, const Eigen::VectorXd& series,
                        const std::vector<uint8_t>& observed);

// Position-wise MLP prediction; one shared prediction serves both targets.
Var predict(Tape& tape, Model& model, Var repr);

constexpr uint16_t kCheckpointVersion = 1;

// Binary checkpoint: magic "STBR", version, config block, step counter, seed,
// named parameter sections (little-endian, 64-bit floats), FNV-1a trailer.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

// Compatibility guard between a checkpoint and the requesting configuration.
void require_config_match(const Model& model, const EncoderConfig& requested);

}  // namespace stbr
