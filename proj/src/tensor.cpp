#include "stbr/tensor.hpp"

#include <cmath>
#include <sstream>

namespace stbr {

std::string Tensor::shape_string(const std::vector<int>& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape != b.shape)
    fail(ErrorKind::Dimension, std::string(what) + ": shape " +
                                   Tensor::shape_string(a.shape) + " vs " +
                                   Tensor::shape_string(b.shape));
}

ConstMatMap kernel_slice(const Tensor& kernel, int tap) {
  const int c_in = kernel.shape[1];
  const int c_out = kernel.shape[2];
  return ConstMatMap(kernel.data.data() + static_cast<size_t>(tap) * c_in * c_out, c_in,
                     c_out);
}

MatMap kernel_slice(Tensor& kernel, int tap) {
  const int c_in = kernel.shape[1];
  const int c_out = kernel.shape[2];
  return MatMap(kernel.data.data() + static_cast<size_t>(tap) * c_in * c_out, c_in, c_out);
}

constexpr double kGeluCoeff = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluCubic = 0.044715;

}  // namespace

// ---------------------------------------------------------------------------
// Plain forward math, shared by the tape ops and tape-free passes.

namespace fwd {

double gelu_scalar(double v) {
  return 0.5 * v * (1.0 + std::tanh(kGeluCoeff * (v + kGeluCubic * v * v * v)));
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2 || bias.rank() != 1 || bias.shape[0] != weight.shape[1] ||
      x.last_dim() != weight.shape[0])
    fail(ErrorKind::Dimension,
         "linear: x " + Tensor::shape_string(x.shape) + " vs weight " +
             Tensor::shape_string(weight.shape) + ", bias " +
             Tensor::shape_string(bias.shape));
  std::vector<int> out_shape = x.shape;
  out_shape.back() = weight.shape[1];
  Tensor out = Tensor::uninit(std::move(out_shape));
  out.mat().noalias() = x.mat() * weight.mat();
  out.mat().rowwise() += bias.vec().transpose();
  return out;
}

Tensor causal_dilated_conv1d(const Tensor& x, const Tensor& kernel, int dilation) {
  if (dilation < 1) fail(ErrorKind::Config, "causal_dilated_conv1d: dilation must be >= 1");
  if (kernel.rank() != 3 || kernel.shape[0] < 1)
    fail(ErrorKind::Config, "causal_dilated_conv1d: kernel must be [k,C,C'] with k >= 1");
  if (x.rank() < 2 || x.last_dim() != kernel.shape[1])
    fail(ErrorKind::Dimension,
         "causal_dilated_conv1d: x " + Tensor::shape_string(x.shape) + " vs kernel " +
             Tensor::shape_string(kernel.shape));

  const int taps = kernel.shape[0];
  const int len = x.shape[x.rank() - 2];
  const int batches = static_cast<int>(x.leading() / len);
  std::vector<int> out_shape = x.shape;
  out_shape.back() = kernel.shape[2];
  Tensor out(std::move(out_shape));  // zero-filled: taps accumulate

  auto xm = x.mat();
  auto om = out.mat();
  for (int b = 0; b < batches; ++b) {
    const int base = b * len;
    for (int j = 0; j < taps; ++j) {
      const int shift = j * dilation;
      if (shift >= len) break;  // tap lies entirely in the zero padding
      om.middleRows(base + shift, len - shift).noalias() +=
          xm.middleRows(base, len - shift) * kernel_slice(kernel, j);
    }
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  Tensor out = Tensor::uninit(x.shape);
  for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = gelu_scalar(x.data[i]);
  return out;
}

void gelu_inplace(Tensor& x) {
  for (double& v : x.data) v = gelu_scalar(v);
}

void mask_rows_inplace(Tensor& x, const std::vector<uint8_t>& masked) {
  if (static_cast<int64_t>(masked.size()) != x.leading())
    fail(ErrorKind::Contract, "mask_rows: mask length " + std::to_string(masked.size()) +
                                  " vs " + std::to_string(x.leading()) + " rows");
  auto m = x.mat();
  for (int64_t r = 0; r < static_cast<int64_t>(masked.size()); ++r)
    if (masked[static_cast<size_t>(r)]) m.row(r).setZero();
}

Tensor l2_normalize(const Tensor& x) {
  Tensor out = Tensor::uninit(x.shape);
  auto xm = x.mat();
  auto om = out.mat();
  for (int64_t r = 0; r < x.leading(); ++r) {
    const double norm = xm.row(r).norm();
    if (norm <= kNormEps)
      fail(ErrorKind::Degenerate,
           "l2_normalize: row " + std::to_string(r) + " has norm " + std::to_string(norm) +
               " <= 1e-12 (collapsed representation)");
    om.row(r) = xm.row(r) / norm;
  }
  return out;
}

// Per-row evaluation keeps each timestep's floating-point reduction order
// independent of the series length, so representations at time t are
// bit-identical whether or not future data follows (length-stable causality).
Tensor causal_dilated_conv1d_rowstable(const Tensor& x, const Tensor& kernel, int dilation) {
  if (dilation < 1) fail(ErrorKind::Config, "causal_dilated_conv1d: dilation must be >= 1");
  if (kernel.rank() != 3 || kernel.shape[0] < 1)
    fail(ErrorKind::Config, "causal_dilated_conv1d: kernel must be [k,C,C'] with k >= 1");
  if (x.rank() != 2 || x.last_dim() != kernel.shape[1])
    fail(ErrorKind::Dimension,
         "causal_dilated_conv1d: x " + Tensor::shape_string(x.shape) + " vs kernel " +
             Tensor::shape_string(kernel.shape));
  const int len = x.shape[0];
  const int taps = kernel.shape[0];
  Tensor out({len, kernel.shape[2]});
  auto xm = x.mat();
  auto om = out.mat();
  for (int t = 0; t < len; ++t)
    for (int j = 0; j < taps; ++j) {
      const int src = t - j * dilation;
      if (src < 0) break;
      om.row(t).noalias() += xm.row(src) * kernel_slice(kernel, j);
    }
  return out;
}

Tensor linear_rowstable(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2 || bias.rank() != 1 || bias.shape[0] != weight.shape[1] ||
      x.last_dim() != weight.shape[0])
    fail(ErrorKind::Dimension,
         "linear: x " + Tensor::shape_string(x.shape) + " vs weight " +
             Tensor::shape_string(weight.shape) + ", bias " +
             Tensor::shape_string(bias.shape));
  std::vector<int> out_shape = x.shape;
  out_shape.back() = weight.shape[1];
  Tensor out = Tensor::uninit(std::move(out_shape));
  auto xm = x.mat();
  auto om = out.mat();
  for (int64_t t = 0; t < x.leading(); ++t) {
    om.row(t).noalias() = xm.row(t) * weight.mat();
    om.row(t) += bias.vec().transpose();
  }
  return out;
}

}  // namespace fwd

// ---------------------------------------------------------------------------
// Tape ops.

Var Tape::record_constant(Tensor t) {
  Node n;
  n.op = OpKind::Constant;
  n.value = std::move(t);
  return append(std::move(n));
}

Var Tape::record_leaf(Param& p) {
  auto it = leaf_ids_.find(&p);
  if (it != leaf_ids_.end()) return Var{this, it->second};
  Node n;
  n.op = OpKind::Leaf;
  n.param = &p;
  n.value = p.value;
  Var v = append(std::move(n));
  leaf_ids_.emplace(&p, v.id);
  return v;
}

Var linear(Var x, Var weight, Var bias) {
  Node n;
  n.op = OpKind::Linear;
  n.in = {x.id, weight.id, bias.id};
  n.value = fwd::linear(value(x), value(weight), value(bias));
  return x.tape->append(std::move(n));
}

Var causal_dilated_conv1d(Var x, Var kernel, int dilation) {
  Node n;
  n.op = OpKind::CausalDilatedConv1d;
  n.in = {x.id, kernel.id, -1};
  n.dilation = dilation;
  n.value = fwd::causal_dilated_conv1d(value(x), value(kernel), dilation);
  return x.tape->append(std::move(n));
}

Var gelu(Var x) {
  const Tensor& xv = value(x);
  Node n;
  n.op = OpKind::Gelu;
  n.in = {x.id, -1, -1};
  n.value = Tensor::uninit(xv.shape);
  n.cache = Tensor::uninit(xv.shape);  // tanh(u), reused by backward
  for (size_t i = 0; i < xv.data.size(); ++i) {
    const double v = xv.data[i];
    const double t = std::tanh(kGeluCoeff * (v + kGeluCubic * v * v * v));
    n.cache.data[i] = t;
    n.value.data[i] = 0.5 * v * (1.0 + t);
  }
  return x.tape->append(std::move(n));
}

Var add(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  require_same_shape(av, bv, "add");
  Node n;
  n.op = OpKind::Add;
  n.in = {a.id, b.id, -1};
  n.value = Tensor::uninit(av.shape);
  n.value.vec() = av.vec() + bv.vec();
  return a.tape->append(std::move(n));
}

Var sub(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  require_same_shape(av, bv, "sub");
  Node n;
  n.op = OpKind::Sub;
  n.in = {a.id, b.id, -1};
  n.value = Tensor::uninit(av.shape);
  n.value.vec() = av.vec() - bv.vec();
  return a.tape->append(std::move(n));
}

Var mask_rows(Var x, std::vector<uint8_t> masked) {
  Node n;
  n.op = OpKind::MaskRows;
  n.in = {x.id, -1, -1};
  n.value = value(x);
  fwd::mask_rows_inplace(n.value, masked);
  n.mask = std::move(masked);
  return x.tape->append(std::move(n));
}

Var l2_normalize(Var x) {
  const Tensor& xv = value(x);
  Node n;
  n.op = OpKind::L2NormalizeRows;
  n.in = {x.id, -1, -1};
  n.value = fwd::l2_normalize(xv);
  n.cache = Tensor::uninit({static_cast<int>(xv.leading())});
  auto norms = xv.mat().rowwise().norm();
  for (int64_t r = 0; r < xv.leading(); ++r) n.cache.data[static_cast<size_t>(r)] = norms(r);
  return x.tape->append(std::move(n));
}

Var mean_rows(Var x) {
  const Tensor& xv = value(x);
  Node n;
  n.op = OpKind::MeanRows;
  n.in = {x.id, -1, -1};
  n.value = Tensor::uninit({1, xv.last_dim()});
  n.value.mat() = xv.mat().colwise().mean();
  return x.tape->append(std::move(n));
}

Var frobenius_sq(Var x) {
  Node n;
  n.op = OpKind::FrobeniusSq;
  n.in = {x.id, -1, -1};
  n.value = Tensor::scalar(value(x).vec().squaredNorm());
  return x.tape->append(std::move(n));
}

Var scale(Var x, double factor) {
  const Tensor& xv = value(x);
  Node n;
  n.op = OpKind::Scale;
  n.in = {x.id, -1, -1};
  n.factor = factor;
  n.value = Tensor::uninit(xv.shape);
  n.value.vec() = xv.vec() * factor;
  return x.tape->append(std::move(n));
}

Var detach(Var x) {
  Node n;
  n.op = OpKind::Detach;
  n.in = {x.id, -1, -1};
  n.value = value(x);
  return x.tape->append(std::move(n));
}

void Tape::backward(Var loss) {
  if (nodes_.empty()) fail(ErrorKind::Contract, "backward: empty tape");
  if (value(loss).numel() != 1)
    fail(ErrorKind::Contract, "backward: loss must be scalar, got shape " +
                                  Tensor::shape_string(value(loss).shape));

  // Constants and detach barriers receive no gradient buffer; accumulation
  // into them is skipped, which also implements the stop-gradient contract.
  for (Node& n : nodes_)
    if (n.op != OpKind::Constant && n.op != OpKind::Detach) n.grad = Tensor(n.value.shape);
  Node& loss_node = node(loss.id);
  if (loss_node.grad.data.empty())
    fail(ErrorKind::Contract, "backward: loss is not differentiable (constant or detached)");
  loss_node.grad.data[0] = 1.0;

  auto grad_of = [&](int id) -> Tensor* {
    Node& n = nodes_[static_cast<size_t>(id)];
    return n.grad.data.empty() ? nullptr : &n.grad;
  };

  for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.data.empty()) continue;
    const Tensor& g = n.grad;
    switch (n.op) {
      case OpKind::Constant:
      case OpKind::Detach:
        break;
      case OpKind::Leaf:
        n.param->grad.vec() += g.vec();
        break;
      case OpKind::Linear: {
        Node& x = node(n.in[0]);
        Node& w = node(n.in[1]);
        if (Tensor* gx = grad_of(n.in[0]))
          gx->mat().noalias() += g.mat() * w.value.mat().transpose();
        if (Tensor* gw = grad_of(n.in[1]))
          gw->mat().noalias() += x.value.mat().transpose() * g.mat();
        if (Tensor* gb = grad_of(n.in[2])) gb->vec() += g.mat().colwise().sum();
        break;
      }
      case OpKind::CausalDilatedConv1d: {
        Node& x = node(n.in[0]);
        Node& k = node(n.in[1]);
        const int taps = k.value.shape[0];
        const int len = x.value.shape[x.value.rank() - 2];
        const int batches = static_cast<int>(x.value.leading() / len);
        Tensor* gx = grad_of(n.in[0]);
        Tensor* gk = grad_of(n.in[1]);
        auto xm = x.value.mat();
        auto gm = g.mat();
        for (int b = 0; b < batches; ++b) {
          const int base = b * len;
          for (int j = 0; j < taps; ++j) {
            const int shift = j * n.dilation;
            if (shift >= len) break;
            if (gx)
              gx->mat().middleRows(base, len - shift).noalias() +=
                  gm.middleRows(base + shift, len - shift) *
                  kernel_slice(k.value, j).transpose();
            if (gk)
              kernel_slice(*gk, j).noalias() +=
                  xm.middleRows(base, len - shift).transpose() *
                  gm.middleRows(base + shift, len - shift);
          }
        }
        break;
      }
      case OpKind::Gelu: {
        Tensor* gx = grad_of(n.in[0]);
        if (!gx) break;
        Node& x = node(n.in[0]);
        for (size_t i = 0; i < x.value.data.size(); ++i) {
          const double v = x.value.data[i];
          const double t = n.cache.data[i];
          const double du = kGeluCoeff * (1.0 + 3.0 * kGeluCubic * v * v);
          const double dy = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
          gx->data[i] += g.data[i] * dy;
        }
        break;
      }
      case OpKind::Add:
        if (Tensor* ga = grad_of(n.in[0])) ga->vec() += g.vec();
        if (Tensor* gb = grad_of(n.in[1])) gb->vec() += g.vec();
        break;
      case OpKind::Sub:
        if (Tensor* ga = grad_of(n.in[0])) ga->vec() += g.vec();
        if (Tensor* gb = grad_of(n.in[1])) gb->vec() -= g.vec();
        break;
      case OpKind::MaskRows: {
        Tensor* gx = grad_of(n.in[0]);
        if (!gx) break;
        auto gxm = gx->mat();
        auto gm = g.mat();
        for (int64_t r = 0; r < static_cast<int64_t>(n.mask.size()); ++r)
          if (!n.mask[static_cast<size_t>(r)]) gxm.row(r) += gm.row(r);
        break;
      }
      case OpKind::L2NormalizeRows: {
        Tensor* gx = grad_of(n.in[0]);
        if (!gx) break;
        auto gxm = gx->mat();
        auto gm = g.mat();
        auto y = n.value.mat();
        for (int64_t r = 0; r < n.value.leading(); ++r) {
          const double norm = n.cache.data[static_cast<size_t>(r)];
          const double dot = y.row(r).dot(gm.row(r));
          gxm.row(r) += (gm.row(r) - dot * y.row(r)) / norm;
        }
        break;
      }
      case OpKind::MeanRows: {
        Tensor* gx = grad_of(n.in[0]);
        if (!gx) break;
        const double inv = 1.0 / static_cast<double>(node(n.in[0]).value.leading());
        gx->mat().rowwise() += g.mat().row(0) * inv;
        break;
      }
      case OpKind::FrobeniusSq:
        if (Tensor* gx = grad_of(n.in[0]))
          gx->vec() += 2.0 * g.data[0] * node(n.in[0]).value.vec();
        break;
      case OpKind::Scale:
        if (Tensor* gx = grad_of(n.in[0])) gx->vec() += g.vec() * n.factor;
        break;
    }
  }
}

// ---------------------------------------------------------------------------
// Adam.

AdamState AdamState::create(std::span<Param* const> params, double lr, double beta1,
                            double beta2, double eps) {
  AdamState s;
  s.lr = lr;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps = eps;
  s.m.reserve(params.size());
  s.v.reserve(params.size());
  for (const Param* p : params) {
    s.m.emplace_back(p->value.shape);
    s.v.emplace_back(p->value.shape);
  }
  return s;
}

void adam_step(std::span<Param* const> params, AdamState& state) {
  if (params.size() != state.m.size())
    fail(ErrorKind::Contract, "adam_step: state built for " + std::to_string(state.m.size()) +
                                  " params, got " + std::to_string(params.size()));
  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  for (size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i];
    if (!p.grad.finite())
      fail(ErrorKind::Divergence, "adam_step: non-finite gradient in param '" + p.id + "'");
    auto g = p.grad.vec().array();
    auto m = state.m[i].vec().array();
    auto v = state.v[i].vec().array();
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.square();
    p.value.vec().array() -= state.lr * (m / bc1) / ((v / bc2).sqrt() + state.eps);
    p.zero_grad();
  }
}

}  // namespace stbr
