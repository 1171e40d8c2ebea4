#include "stbr/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_map>

namespace stbr {

namespace {

uint64_t fnv1a(const void* data, size_t size, uint64_t h = 14695981039346656037ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

void put_u16(std::string& b, uint16_t v) {
  for (int i = 0; i < 2; ++i) b.push_back(static_cast<char>(v >> (8 * i)));
}
void put_u32(std::string& b, uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>(v >> (8 * i)));
}
void put_u64(std::string& b, uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<char>(v >> (8 * i)));
}
void put_i32(std::string& b, int32_t v) { put_u32(b, static_cast<uint32_t>(v)); }
void put_f64(std::string& b, double v) { put_u64(b, std::bit_cast<uint64_t>(v)); }

class Reader {
 public:
  Reader(const std::string& buf, std::string path) : buf_(buf), path_(std::move(path)) {}

  uint16_t u16() { return static_cast<uint16_t>(u(2)); }
  uint32_t u32() { return static_cast<uint32_t>(u(4)); }
  uint64_t u64() { return u(8); }
  int32_t i32() { return static_cast<int32_t>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  uint8_t u8() { return static_cast<uint8_t>(u(1)); }
  std::string bytes(size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  size_t pos() const { return pos_; }

 private:
  uint64_t u(int n) {
    need(static_cast<size_t>(n));
    uint64_t v = 0;
    for (int i = 0; i < n; ++i)
      v |= static_cast<uint64_t>(static_cast<unsigned char>(buf_[pos_ + static_cast<size_t>(i)]))
           << (8 * i);
    pos_ += static_cast<size_t>(n);
    return v;
  }
  void need(size_t n) {
    if (pos_ + n > buf_.size())
      fail(ErrorKind::Compatibility, path_ + ": truncated checkpoint");
  }
  const std::string& buf_;
  std::string path_;
  size_t pos_ = 0;
};

std::string config_block(const EncoderConfig& c) {
  std::string b;
  put_i32(b, c.input_dim);
  put_i32(b, c.latent_dim);
  put_i32(b, c.repr_dim);
  put_i32(b, c.blocks);
  put_i32(b, c.kernel_size);
  put_i32(b, c.predictor_hidden);
  b.push_back(c.latent_masking ? 1 : 0);
  b.push_back(c.shared_projection ? 1 : 0);
  return b;
}

void collect_params(const EncoderParams& enc, std::vector<const Param*>& out) {
  out.push_back(&enc.proj_w);
  out.push_back(&enc.proj_b);
  for (size_t b = 0; b < enc.conv1.size(); ++b) {
    out.push_back(&enc.conv1[b]);
    out.push_back(&enc.conv2[b]);
  }
  out.push_back(&enc.head_w);
  out.push_back(&enc.head_b);
}

std::vector<const Param*> all_params(const Model& m) {
  std::vector<const Param*> out;
  collect_params(m.online, out);
  out.push_back(&m.predictor.l1_w);
  out.push_back(&m.predictor.l1_b);
  out.push_back(&m.predictor.l2_w);
  out.push_back(&m.predictor.l2_b);
  collect_params(m.target, out);
  return out;
}

EncoderParams make_encoder_skeleton(const EncoderConfig& cfg, const std::string& prefix) {
  EncoderParams enc;
  enc.proj_w = Param(prefix + ".proj.w", Tensor({cfg.input_dim, cfg.latent_dim}));
  enc.proj_b = Param(prefix + ".proj.b", Tensor({cfg.latent_dim}));
  for (int b = 0; b < cfg.blocks; ++b) {
    enc.conv1.emplace_back(prefix + ".block" + std::to_string(b) + ".conv1",
                           Tensor({cfg.kernel_size, cfg.latent_dim, cfg.latent_dim}));
    enc.conv2.emplace_back(prefix + ".block" + std::to_string(b) + ".conv2",
                           Tensor({cfg.kernel_size, cfg.latent_dim, cfg.latent_dim}));
  }
  enc.head_w = Param(prefix + ".head.w", Tensor({cfg.latent_dim, cfg.repr_dim}));
  enc.head_b = Param(prefix + ".head.b", Tensor({cfg.repr_dim}));
  return enc;
}

Model make_skeleton(const EncoderConfig& cfg) {
  Model m;
  m.config = cfg;
  m.online = make_encoder_skeleton(cfg, "online");
  m.predictor.l1_w = Param("predictor.l1.w", Tensor({cfg.repr_dim, cfg.predictor_hidden}));
  m.predictor.l1_b = Param("predictor.l1.b", Tensor({cfg.predictor_hidden}));
  m.predictor.l2_w = Param("predictor.l2.w", Tensor({cfg.predictor_hidden, cfg.repr_dim}));
  m.predictor.l2_b = Param("predictor.l2.b", Tensor({cfg.repr_dim}));
  m.target = make_encoder_skeleton(cfg, "target");
  return m;
}

void fill_uniform(Param& p, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : p.value.data) v = rng.uniform(-bound, bound);
}

// Builds the shared encoder graph: projection, latent (or raw) masking,
// dilated residual conv stack, K-dim head.
Var encode_graph(Tape& tape, const EncoderConfig& cfg, Param& proj_w, Param& proj_b,
                 std::vector<Param>& conv1, std::vector<Param>& conv2, Param& head_w,
                 Param& head_b, const Eigen::VectorXd& series,
                 const std::vector<uint8_t>& drop_rows) {
  const int len = static_cast<int>(series.size());
  if (static_cast<int>(drop_rows.size()) != len)
    fail(ErrorKind::Contract, "encode: mask length " + std::to_string(drop_rows.size()) +
                                  " does not match series length " + std::to_string(len));

  Tensor x({len, 1});
  for (int t = 0; t < len; ++t)
    x.data[static_cast<size_t>(t)] = (!cfg.latent_masking && drop_rows[static_cast<size_t>(t)])
                                         ? 0.0
                                         : series(t);
  Var h = linear(constant(tape, std::move(x)), use(tape, proj_w), use(tape, proj_b));
  if (cfg.latent_masking) h = mask_rows(h, drop_rows);
  for (int b = 0; b < cfg.blocks; ++b) {
    const int dilation = 1 << b;
    Var c1 = causal_dilated_conv1d(h, use(tape, conv1[static_cast<size_t>(b)]), dilation);
    Var c2 = causal_dilated_conv1d(gelu(c1), use(tape, conv2[static_cast<size_t>(b)]), dilation);
    h = add(c2, h);
  }
  return linear(h, use(tape, head_w), use(tape, head_b));
}

std::vector<uint8_t> combine_drop(const std::vector<uint8_t>& observed,
                                  const std::vector<uint8_t>* aug) {
  std::vector<uint8_t> drop(observed.size());
  for (size_t i = 0; i < observed.size(); ++i)
    drop[i] = static_cast<uint8_t>(!observed[i] || (aug && (*aug)[i]));
  return drop;
}

}  // namespace

void EncoderConfig::validate(int view_len) const {
  if (input_dim != 1) fail(ErrorKind::Config, "input_dim must be 1 (univariate instances)");
  if (latent_dim < 1 || repr_dim < 1 || predictor_hidden < 1)
    fail(ErrorKind::Config, "encoder dimensions must be positive");
  if (blocks < 1 || blocks > 30) fail(ErrorKind::Config, "blocks must be in [1, 30]");
  if (kernel_size < 1) fail(ErrorKind::Config, "kernel_size must be >= 1");
  if (strict_coverage && receptive_field() < view_len)
    fail(ErrorKind::Config, "receptive field " + std::to_string(receptive_field()) +
                                " does not cover view length " + std::to_string(view_len) +
                                " (strict coverage is on)");
}

uint64_t EncoderConfig::hash() const {
  const std::string block = config_block(*this);
  return fnv1a(block.data(), block.size());
}

std::vector<Param*> EncoderParams::all() {
  std::vector<Param*> out;
  out.push_back(&proj_w);
  out.push_back(&proj_b);
  for (size_t b = 0; b < conv1.size(); ++b) {
    out.push_back(&conv1[b]);
    out.push_back(&conv2[b]);
  }
  out.push_back(&head_w);
  out.push_back(&head_b);
  return out;
}

std::vector<const Param*> EncoderParams::all() const {
  std::vector<const Param*> out;
  collect_params(*this, out);
  return out;
}

std::vector<Param*> PredictorParams::all() { return {&l1_w, &l1_b, &l2_w, &l2_b}; }

std::vector<Param*> Model::online_params() {
  std::vector<Param*> out = online.all();
  for (Param* p : predictor.all()) out.push_back(p);
  return out;
}

std::vector<Param*> Model::target_params() { return target.all(); }

Model Model::init(const EncoderConfig& cfg, uint64_t seed) {
  cfg.validate(0);
  Model m = make_skeleton(cfg);
  m.seed = seed;
  Rng rng(seed);

  fill_uniform(m.online.proj_w, cfg.input_dim, rng);
  fill_uniform(m.online.proj_b, cfg.input_dim, rng);
  for (int b = 0; b < cfg.blocks; ++b) {
    fill_uniform(m.online.conv1[static_cast<size_t>(b)], cfg.kernel_size * cfg.latent_dim, rng);
    fill_uniform(m.online.conv2[static_cast<size_t>(b)], cfg.kernel_size * cfg.latent_dim, rng);
  }
  fill_uniform(m.online.head_w, cfg.latent_dim, rng);
  fill_uniform(m.online.head_b, cfg.latent_dim, rng);
  fill_uniform(m.predictor.l1_w, cfg.repr_dim, rng);
  fill_uniform(m.predictor.l1_b, cfg.repr_dim, rng);
  fill_uniform(m.predictor.l2_w, cfg.predictor_hidden, rng);
  fill_uniform(m.predictor.l2_b, cfg.predictor_hidden, rng);

  // Target branch starts as an exact copy of the online encoder side.
  auto theta = m.online.all();
  auto phi = m.target.all();
  for (size_t i = 0; i < phi.size(); ++i) phi[i]->value = theta[i]->value;
  return m;
}

Var encode_online(Tape& tape, Model& model, const Eigen::VectorXd& series,
                  const std::vector<uint8_t>& observed, const std::vector<uint8_t>& aug_mask) {
  if (observed.size() != static_cast<size_t>(series.size()) ||
      aug_mask.size() != static_cast<size_t>(series.size()))
    fail(ErrorKind::Contract, "encode_online: series/mask length mismatch");
  return encode_graph(tape, model.config, model.online.proj_w, model.online.proj_b,
                      model.online.conv1, model.online.conv2, model.online.head_w,
                      model.online.head_b, series, combine_drop(observed, &aug_mask));
}

Tensor encode_target(Model& model, const Eigen::VectorXd& series,
                     const std::vector<uint8_t>& observed) {
  if (observed.size() != static_cast<size_t>(series.size()))
    fail(ErrorKind::Contract, "encode_target: series/mask length mismatch");
  const EncoderConfig& cfg = model.config;
  const Param& pw = cfg.shared_projection ? model.online.proj_w : model.target.proj_w;
  const Param& pb = cfg.shared_projection ? model.online.proj_b : model.target.proj_b;
  const std::vector<uint8_t> drop = combine_drop(observed, nullptr);
  const int len = static_cast<int>(series.size());

  // Tape-free forward: the target branch never receives gradients, so it is
  // detached by construction.
  Tensor x = Tensor::uninit({len, 1});
  for (int t = 0; t < len; ++t)
    x.data[static_cast<size_t>(t)] =
        (!cfg.latent_masking && drop[static_cast<size_t>(t)]) ? 0.0 : series(t);
  Tensor h = fwd::linear(x, pw.value, pb.value);
  if (cfg.latent_masking) fwd::mask_rows_inplace(h, drop);
  for (int b = 0; b < cfg.blocks; ++b) {
    const int dilation = 1 << b;
    Tensor c1 = fwd::causal_dilated_conv1d(
        h, model.target.conv1[static_cast<size_t>(b)].value, dilation);
    fwd::gelu_inplace(c1);
    Tensor c2 = fwd::causal_dilated_conv1d(
        c1, model.target.conv2[static_cast<size_t>(b)].value, dilation);
    h.vec() += c2.vec();
  }
  return fwd::linear(h, model.target.head_w.value, model.target.head_b.value);
}

Tensor encode_inference(Model& model, const Eigen::VectorXd& series,
                        const std::vector<uint8_t>& observed) {
  if (observed.size() != static_cast<size_t>(series.size()))
    fail(ErrorKind::Contract, "encode_inference: series/mask length mismatch");
  const EncoderConfig& cfg = model.config;
  const std::vector<uint8_t> drop = combine_drop(observed, nullptr);
  const int len = static_cast<int>(series.size());

  // Row-stable forward path: row t of the result never depends on how much
  // series follows it, bit for bit.
  Tensor x({len, 1});
  for (int t = 0; t < len; ++t)
    x.data[static_cast<size_t>(t)] =
        (!cfg.latent_masking && drop[static_cast<size_t>(t)]) ? 0.0 : series(t);
  Tensor h = fwd::linear_rowstable(x, model.online.proj_w.value, model.online.proj_b.value);
  if (cfg.latent_masking) fwd::mask_rows_inplace(h, drop);
  for (int b = 0; b < cfg.blocks; ++b) {
    const int dilation = 1 << b;
    Tensor c1 = fwd::causal_dilated_conv1d_rowstable(
        h, model.online.conv1[static_cast<size_t>(b)].value, dilation);
    for (double& v : c1.data) v = fwd::gelu_scalar(v);
    Tensor c2 = fwd::causal_dilated_conv1d_rowstable(
        c1, model.online.conv2[static_cast<size_t>(b)].value, dilation);
    h.vec() += c2.vec();
  }
  return fwd::linear_rowstable(h, model.online.head_w.value, model.online.head_b.value);
}

Var predict(Tape& tape, Model& model, Var repr) {
  Var h = gelu(linear(repr, use(tape, model.predictor.l1_w), use(tape, model.predictor.l1_b)));
  return linear(h, use(tape, model.predictor.l2_w), use(tape, model.predictor.l2_b));
}

void save_checkpoint(const Model& model, const std::string& path) {
  std::string buf = "STBR";
  put_u16(buf, kCheckpointVersion);
  buf += config_block(model.config);
  put_u64(buf, static_cast<uint64_t>(model.trained_steps));
  put_u64(buf, model.seed);

  const auto params = all_params(model);
  put_u32(buf, static_cast<uint32_t>(params.size()));
  for (const Param* p : params) {
    put_u16(buf, static_cast<uint16_t>(p->id.size()));
    buf += p->id;
    buf.push_back(static_cast<char>(p->value.rank()));
    for (int d : p->value.shape) put_i32(buf, d);
    for (double v : p->value.data) put_f64(buf, v);
  }
  put_u64(buf, fnv1a(buf.data(), buf.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write checkpoint '" + path + "'");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) fail(ErrorKind::Io, "short write on checkpoint '" + path + "'");
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Compatibility, "cannot open checkpoint '" + path + "'");
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (buf.size() < 12 || buf.compare(0, 4, "STBR") != 0)
    fail(ErrorKind::Compatibility, path + ": not a checkpoint (bad magic)");
  const uint64_t stored_hash = Reader(buf.substr(buf.size() - 8), path).u64();
  if (fnv1a(buf.data(), buf.size() - 8) != stored_hash)
    fail(ErrorKind::Compatibility, path + ": corrupt checkpoint (trailer hash mismatch)");

  Reader r(buf, path);
  r.bytes(4);  // magic
  const uint16_t version = r.u16();
  if (version != kCheckpointVersion)
    fail(ErrorKind::Compatibility, path + ": checkpoint version " + std::to_string(version) +
                                       ", expected " + std::to_string(kCheckpointVersion));

  EncoderConfig cfg;
  cfg.input_dim = r.i32();
  cfg.latent_dim = r.i32();
  cfg.repr_dim = r.i32();
  cfg.blocks = r.i32();
  cfg.kernel_size = r.i32();
  cfg.predictor_hidden = r.i32();
  cfg.latent_masking = r.u8() != 0;
  cfg.shared_projection = r.u8() != 0;

  Model m = make_skeleton(cfg);
  m.trained_steps = static_cast<int64_t>(r.u64());
  m.seed = r.u64();

  std::unordered_map<std::string, Param*> by_id;
  for (Param* p : m.online_params()) by_id.emplace(p->id, p);
  for (Param* p : m.target_params()) by_id.emplace(p->id, p);

  const uint32_t count = r.u32();
  if (count != by_id.size())
    fail(ErrorKind::Compatibility, path + ": checkpoint holds " + std::to_string(count) +
                                       " params, config implies " + std::to_string(by_id.size()));
  for (uint32_t i = 0; i < count; ++i) {
    const std::string name = r.bytes(r.u16());
    auto it = by_id.find(name);
    if (it == by_id.end())
      fail(ErrorKind::Compatibility, path + ": unknown param section '" + name + "'");
    Param& p = *it->second;
    const int rank = r.u8();
    std::vector<int> shape;
    for (int d = 0; d < rank; ++d) shape.push_back(r.i32());
    if (shape != p.value.shape)
      fail(ErrorKind::Compatibility, path + ": param '" + name + "' has shape " +
                                         Tensor::shape_string(shape) + ", expected " +
                                         Tensor::shape_string(p.value.shape));
    for (double& v : p.value.data) v = r.f64();
  }
  return m;
}

void require_config_match(const Model& model, const EncoderConfig& requested) {
  if (model.config.hash() != requested.hash())
    fail(ErrorKind::Compatibility,
         "checkpoint encoder config does not match the requested configuration");
}

}  // namespace stbr
