#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "stbr/common.hpp"

namespace stbr {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

// Fixed 64-byte alignment for every tensor buffer, so vectorized kernels take
// the same head/tail paths on every allocation and results are bit-stable
// run to run.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr size_t kAlign = 64;

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(size_t n) {
    const size_t bytes = (n * sizeof(T) + kAlign - 1) / kAlign * kAlign;
    void* p = std::aligned_alloc(kAlign, bytes);
    if (!p) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, size_t) { std::free(p); }

  // Default-initializing construct: resize() leaves doubles uninitialized,
  // letting ops that overwrite every element skip the zero fill.
  template <class U, class... Args>
  void construct(U* p, Args&&... args) {
    if constexpr (sizeof...(Args) == 0)
      ::new (static_cast<void*>(p)) U;
    else
      ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const {
    return true;
  }
};

using DataVector = std::vector<double, AlignedAllocator<double>>;

// Dense row-major tensor of 64-bit floats, rank 1..3.
struct Tensor {
  std::vector<int> shape;
  DataVector data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), 0.0);
  }
  Tensor(std::vector<int> s, const std::vector<double>& values) : shape(std::move(s)) {
    if (numel_of(shape) != static_cast<int64_t>(values.size()))
      fail(ErrorKind::Dimension, "tensor shape " + shape_string(shape) +
                                     " does not match " + std::to_string(values.size()) +
                                     " values");
    data.assign(values.begin(), values.end());
  }

  // Allocates without zero-filling; caller must write every element.
  static Tensor uninit(std::vector<int> s) {
    Tensor t;
    t.shape = std::move(s);
    t.data.resize(static_cast<size_t>(numel_of(t.shape)));
    return t;
  }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return s.empty() ? 0 : n;
  }
  static std::string shape_string(const std::vector<int>& s);

  int rank() const { return static_cast<int>(shape.size()); }
  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int last_dim() const { return shape.empty() ? 0 : shape.back(); }
  int64_t leading() const { return last_dim() == 0 ? 0 : numel() / last_dim(); }

  // View as (leading x last_dim) row-major matrix.
  MatMap mat() { return MatMap(data.data(), leading(), last_dim()); }
  ConstMatMap mat() const { return ConstMatMap(data.data(), leading(), last_dim()); }
  VecMap vec() { return VecMap(data.data(), numel()); }
  ConstVecMap vec() const { return ConstVecMap(data.data(), numel()); }

  bool finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor from_vector(const std::vector<double>& v) {
    return Tensor({static_cast<int>(v.size())}, v);
  }
};

// Trainable parameter: value plus accumulated gradient, addressed by a
// stable unique id (also the checkpoint section name).
struct Param {
  std::string id;
  Tensor value;
  Tensor grad;

  Param() = default;
  Param(std::string name, Tensor v) : id(std::move(name)), value(std::move(v)) {
    grad = Tensor(value.shape);
  }
  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

enum class OpKind : uint8_t {
  Constant,
  Leaf,
  Linear,
  CausalDilatedConv1d,
  Gelu,
  Add,
  Sub,
  MaskRows,
  L2NormalizeRows,
  MeanRows,
  FrobeniusSq,
  Scale,
  Detach,
};

struct Node {
  OpKind op;
  std::array<int, 3> in{-1, -1, -1};
  Tensor value;
  Tensor grad;                 // allocated during backward
  Param* param = nullptr;      // Leaf
  int dilation = 1;            // CausalDilatedConv1d
  double factor = 0.0;         // Scale
  std::vector<uint8_t> mask;   // MaskRows (true = zeroed row)
  Tensor cache;                // op-specific saved forward results
};

class Tape;

// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
};

// Define-by-run tape: ops append in execution order, so inputs always
// precede their consumers and the backward pass is an exact reverse replay.
class Tape {
 public:
  Var record_constant(Tensor t);
  Var record_leaf(Param& p);  // deduplicated per tape

  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
  const Tensor& value(Var v) const { return node(v.id).value; }
  size_t size() const { return nodes_.size(); }

  // Accumulates d(loss)/d(param) into every reachable Param's grad.
  void backward(Var loss);

  Var append(Node n) {
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

 private:
  std::vector<Node> nodes_;
  std::unordered_map<const Param*, int> leaf_ids_;
};

inline Var constant(Tape& tape, Tensor t) { return tape.record_constant(std::move(t)); }
inline Var use(Tape& tape, Param& p) { return tape.record_leaf(p); }
inline const Tensor& value(Var v) { return v.tape->value(v); }
inline void backward(Var loss) { loss.tape->backward(loss); }

// out[..., j] = sum_i x[..., i] * W[i, j] + b[j]
Var linear(Var x, Var weight, Var bias);

// Causal convolution over the time axis with left zero-padding, so the
// output has the same length as the input and out[t] depends only on
// x[t - j*dilation], j = 0..k-1. x: [L,C] or [B,L,C]; kernel: [k,C,C'].
Var causal_dilated_conv1d(Var x, Var kernel, int dilation);

Var gelu(Var x);
Var add(Var a, Var b);
Var sub(Var a, Var b);

// Zeroes the rows (time steps) flagged in `masked`; gradient is zeroed there too.
Var mask_rows(Var x, std::vector<uint8_t> masked);

// Normalizes each row (last axis) to unit l2 norm. A row with norm <= 1e-12
// signals a collapsed representation and raises a degenerate-vector error.
Var l2_normalize(Var x);

Var mean_rows(Var x);     // [L,K] -> [1,K]
Var frobenius_sq(Var x);  // sum of squares -> scalar
Var scale(Var x, double factor);
Var detach(Var x);  // forward identity, blocks gradient

// Plain (tape-free) forward helpers shared with inference paths.
namespace fwd {
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor causal_dilated_conv1d(const Tensor& x, const Tensor& kernel, int dilation);
Tensor gelu(const Tensor& x);
void gelu_inplace(Tensor& x);
double gelu_scalar(double v);
void mask_rows_inplace(Tensor& x, const std::vector<uint8_t>& masked);
Tensor l2_normalize(const Tensor& x);

// Row-stable variants: each output row's reduction order is independent of
// the series length, so prefixes are bit-identical under append.
Tensor causal_dilated_conv1d_rowstable(const Tensor& x, const Tensor& kernel, int dilation);
Tensor linear_rowstable(const Tensor& x, const Tensor& weight, const Tensor& bias);
}  // namespace fwd

constexpr double kNormEps = 1e-12;

// ---------------------------------------------------------------------------
// Adam optimizer (bias-corrected first/second moments).

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lr = 1e-3;
  int64_t step_count = 0;
  std::vector<Tensor> m;  // parallel to the param list it was created for
  std::vector<Tensor> v;

  static AdamState create(std::span<Param* const> params, double lr, double beta1 = 0.9,
                          double beta2 = 0.999, double eps = 1e-8);
};

// Standard Adam update with bias correction; zeroes every grad afterwards.
// A non-finite gradient raises a training-divergence error naming the param.
void adam_step(std::span<Param* const> params, AdamState& state);

}  // namespace stbr
