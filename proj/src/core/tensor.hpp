// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The fskate Authors

#ifndef FSKATE_CORE_TENSOR_HPP
#define FSKATE_CORE_TENSOR_HPP

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"

namespace fskate {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename Real>
struct TensorStorage {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;  // empty until a gradient reaches this tensor
  bool requires_grad = false;
  bool leaf = true;

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), Real(0));
  }
};

/// Dense row-major array handle. Copies share storage; use clone() for a
/// deep copy. Scalars are 1x1.
template <typename Real>
class Tensor {
 public:
  using value_type = Real;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorStorage<Real>> storage) : s_(std::move(storage)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Real value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<Real> values, bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);

  bool defined() const { return s_ != nullptr; }
  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t size() const { return s_->data.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const Real> data() const { return s_->data; }
  /// Direct write access; intended for initializers and optimizers only.
  std::span<Real> mutable_data() { return s_->data; }
  std::span<const Real> grad() const { return s_->grad; }
  bool has_grad() const { return !s_->grad.empty(); }
  void zero_grad();
  bool requires_grad() const { return s_->requires_grad; }

  Real item() const;
  Real at(std::size_t i) const { return s_->data[i]; }
  Real at(std::size_t r, std::size_t c) const { return s_->data[r * cols() + c]; }

  Tensor clone() const;
  TensorStorage<Real>* storage() const { return s_.get(); }
  const std::shared_ptr<TensorStorage<Real>>& shared() const { return s_; }

 private:
  std::shared_ptr<TensorStorage<Real>> s_;
};

/// Running statistics owned by a batch-normalization site.
template <typename Real>
struct BatchNormStats {
  std::vector<Real> mean;
  std::vector<Real> var;

  explicit BatchNormStats(std::size_t channels = 0)
      : mean(channels, Real(0)), var(channels, Real(1)) {}
};

/// How round_ste behaves. Training uses straight_through; gradient checks
/// use `hard` (true a.e. derivative, zero) or `relaxed` (identity forward and
/// backward) so finite differences can see a smooth function.
enum class SteMode { straight_through, hard, relaxed };

/// Records differentiable operations in execution order. One tape per
/// forward pass; not thread-safe. A non-recording tape evaluates ops without
/// storing backward rules.
template <typename Real>
class Tape {
 public:
  using T = Tensor<Real>;

  explicit Tape(bool record = true, SteMode ste = SteMode::straight_through)
      : record_(record), ste_(ste) {}

  bool recording() const { return record_; }
  SteMode ste_mode() const { return ste_; }
  std::size_t size() const { return entries_.size(); }

  T matmul(const T& a, const T& b);
  T transpose(const T& x);

  T add(const T& a, const T& b);
  T sub(const T& a, const T& b);
  /// Elementwise product; one side may be a 1x1 scalar.
  T mul(const T& a, const T& b);
  T scale(const T& x, Real factor);
  T add_scalar(const T& x, Real offset);
  T sigmoid(const T& x);
  T tanh(const T& x);
  T relu(const T& x);
  T minimum(const T& a, const T& b);

  T softmax_rows(const T& x);
  T conv1d(const T& x, const T& kernel, std::size_t stride);
  T round_ste(const T& x);

  T frobenius_sq(const T& x);
  T sum(const T& x);
  T mean(const T& x);

  T concat(std::span<const T> parts, std::size_t axis);
  T concat(std::initializer_list<T> parts, std::size_t axis) {
    std::vector<T> v(parts);
    return concat(std::span<const T>(v), axis);
  }
  T slice(const T& x, std::size_t axis, std::size_t start, std::size_t length);
  T row(const T& x, std::size_t r) { return slice(x, 0, r, 1); }

  /// Inverted dropout: survivors are scaled by 1/(1-p). Identity when
  /// !train or p == 0.
  T dropout(const T& x, double p, bool train, Rng& rng);

  /// Per-channel normalization of a [T x C] sequence over the time axis.
  /// Train mode normalizes with the sequence's own statistics and updates
  /// `stats`; eval mode uses `stats`.
  T batchnorm1d(const T& x, const T& gamma, const T& beta, BatchNormStats<Real>& stats,
                bool train, double momentum = 0.1, double eps = 1e-5);

  /// Accumulates dLoss/dX into every tracked tensor reachable from `loss`.
  /// Leaf gradients accumulate across calls; intermediates are reset.
  void backward(const T& loss);

 private:
  using BackwardFn = std::function<void(TensorStorage<Real>& out)>;
  struct Entry {
    std::shared_ptr<TensorStorage<Real>> out;
    BackwardFn fn;
  };

  bool tracks(std::initializer_list<const T*> inputs) const;
  T emit(Shape shape, std::vector<Real> data, bool tracked, BackwardFn fn);

  bool record_;
  SteMode ste_;
  std::vector<Entry> entries_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace fskate

#endif  // FSKATE_CORE_TENSOR_HPP
