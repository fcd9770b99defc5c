// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The fskate Authors

#include "tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

namespace fskate {

namespace {

template <typename Real>
using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using MatMap = Eigen::Map<RowMat<Real>>;
template <typename Real>
using ConstMatMap = Eigen::Map<const RowMat<Real>>;

void require_rank2(const Shape& s, const char* op) {
  if (s.size() != 2) throw DimensionError(std::string(op) + ": expected rank-2 tensor, got " + shape_str(s));
}

void require_same(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

template <typename Real>
Real sigmoid_scalar(Real x) {
  if (x >= 0) return Real(1) / (Real(1) + std::exp(-x));
  const Real e = std::exp(x);
  return e / (Real(1) + e);
}

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// ---------------------------------------------------------------- Tensor

template <typename Real>
Tensor<Real> Tensor<Real>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), Real(0), requires_grad);
}

template <typename Real>
Tensor<Real> Tensor<Real>::full(Shape shape, Real value, bool requires_grad) {
  for (auto e : shape)
    if (e == 0) throw DimensionError("tensor extents must be positive: " + shape_str(shape));
  auto s = std::make_shared<TensorStorage<Real>>();
  s->data.assign(numel(shape), value);
  s->shape = std::move(shape);
  s->requires_grad = requires_grad;
  return Tensor(std::move(s));
}

template <typename Real>
Tensor<Real> Tensor<Real>::from(Shape shape, std::vector<Real> values, bool requires_grad) {
  for (auto e : shape)
    if (e == 0) throw DimensionError("tensor extents must be positive: " + shape_str(shape));
  if (numel(shape) != values.size())
    throw DimensionError("tensor data length " + std::to_string(values.size()) + " does not match shape " +
                         shape_str(shape));
  auto s = std::make_shared<TensorStorage<Real>>();
  s->shape = std::move(shape);
  s->data = std::move(values);
  s->requires_grad = requires_grad;
  return Tensor(std::move(s));
}

template <typename Real>
Tensor<Real> Tensor<Real>::scalar(Real value, bool requires_grad) {
  return full({1, 1}, value, requires_grad);
}

template <typename Real>
std::size_t Tensor<Real>::rows() const {
  require_rank2(shape(), "rows");
  return shape()[0];
}

template <typename Real>
std::size_t Tensor<Real>::cols() const {
  require_rank2(shape(), "cols");
  return shape()[1];
}

template <typename Real>
void Tensor<Real>::zero_grad() {
  if (!s_->grad.empty()) std::fill(s_->grad.begin(), s_->grad.end(), Real(0));
}

template <typename Real>
Real Tensor<Real>::item() const {
  if (size() != 1) throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
  return s_->data[0];
}

template <typename Real>
Tensor<Real> Tensor<Real>::clone() const {
  auto s = std::make_shared<TensorStorage<Real>>(*s_);
  s->leaf = true;
  return Tensor(std::move(s));
}

// ---------------------------------------------------------------- Tape

template <typename Real>
bool Tape<Real>::tracks(std::initializer_list<const T*> inputs) const {
  if (!record_) return false;
  for (const T* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

template <typename Real>
Tensor<Real> Tape<Real>::emit(Shape shape, std::vector<Real> data, bool tracked, BackwardFn fn) {
  auto s = std::make_shared<TensorStorage<Real>>();
  s->shape = std::move(shape);
  s->data = std::move(data);
  s->requires_grad = tracked;
  s->leaf = false;
  if (tracked) entries_.push_back(Entry{s, std::move(fn)});
  return T(std::move(s));
}

template <typename Real>
Tensor<Real> Tape<Real>::matmul(const T& a, const T& b) {
  require_rank2(a.shape(), "matmul");
  require_rank2(b.shape(), "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k)
    throw DimensionError("matmul: inner extents differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<Real> out(m * n);
  MatMap<Real>(out.data(), m, n).noalias() =
      ConstMatMap<Real>(a.data().data(), m, k) * ConstMatMap<Real>(b.data().data(), k, n);
  auto sa = a.shared(), sb = b.shared();
  return emit({m, n}, std::move(out), tracks({&a, &b}), [sa, sb, m, k, n](TensorStorage<Real>& o) {
    ConstMatMap<Real> g(o.grad.data(), m, n);
    if (sa->requires_grad) {
      sa->ensure_grad();
      MatMap<Real>(sa->grad.data(), m, k).noalias() += g * ConstMatMap<Real>(sb->data.data(), k, n).transpose();
    }
    if (sb->requires_grad) {
      sb->ensure_grad();
      MatMap<Real>(sb->grad.data(), k, n).noalias() += ConstMatMap<Real>(sa->data.data(), m, k).transpose() * g;
    }
  });
}

template <typename Real>
Tensor<Real> Tape<Real>::transpose(const T& x) {
  require_rank2(x.shape(), "transpose");
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  std::vector<Real> out(r * c);
  MatMap<Real>(out.data(), c, r) = ConstMatMap<Real>(x.data().data(), r, c).transpose();
  auto sx = x.shared();
  return emit({c, r}, std::move(out), tracks({&x}), [sx, r, c](TensorStorage<Real>& o) {
    sx->ensure_grad();
    MatMap<Real>(sx->grad.data(), r, c) += ConstMatMap<Real>(o.grad.data(), c, r).transpose();
  });
}

template <typename Real>
Tensor<Real> Tape<Real>::add(const T& a, const T& b) {
  require_same(a.shape(), b.shape(), "add");
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  auto sa = a.shared(), sb = b.shared();
  return emit(a.shape(), std::move(out), tracks({&a, &b}), [sa, sb](TensorStorage<Real>& o) {
    for (auto* s : {sa.get(), sb.get()}) {
      if (!s->requires_grad) continue;
      s->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) s->grad[i] += o.grad[i];
    }
  });
}

template <typename Real>
Tensor<Real> Tape<Real>::sub(const T& a, const T& b) {
  require_same(a.shape(), b.shape(), "sub");
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
  auto sa = a.shared(), sb = b.shared();
  return emit(a.shape(), std::move(out), tracks({&a, &b}), [sa, sb](TensorStorage<Real>& o) {
    if (sa->requires_grad) {
      sa->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) sa->grad[i] += o.grad[i];
    }
    if (sb->requires_grad) {
      sb->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) sb->grad[i] -= o.grad[i];
    }
  });
}

template <typename Real>
Tensor<Real> Tape<Real>::mul(const T& a, const T& b) {
  const bool a_scalar = a.size() == 1 && b.size() != 1;
  const bool b_scalar = b.size() == 1 && a.size() != 1;
  if (!a_scalar && !b_scalar) require_same(a.shape(), b.shape(), "mul");
  const T& big = a_scalar ? b : a;
  const std::size_t n = big.size();
  std::vector<Real> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = a.at(a_scalar ? 0 : i) * b.at(b_scalar ? 0 : i);
  auto sa = a.shared(), sb = b.shared();
  return emit(big.shape(), std::move(out), tracks({&a, &b}), [sa, sb, a_scalar, b_scalar, n](TensorStorage<Real>& o) {
    if (sa->requires_grad) {
      sa->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) sa->grad[a_scalar ? 0 : i] += o.grad[i] * sb->data[b_scalar ? 0 : i];
    }
    if (sb->requires_grad) {
      sb->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) sb->grad[b_scalar ? 0 : i] += o.grad[i] * sa->data[a_scalar ? 0 : i];
    }
  });
}

template <typename Real>
Tensor<Real> Tape<Real>::scale(const T& x, Real factor) {
  std::vector<Real> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * x.at(i);
  auto sx = x.shared();
  return emit(x.shape(), std::move(out), tracks({&x}), [sx, factor](TensorStorage<Real>& o) {
    sx->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) sx->grad[i] += factor * o.grad[i];
  });
}

template <typename Real>
Tensor<Real> Tape<Real>::add_scalar(const T& x, Real offset) {
  std::vector<Real> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.at(i) + offset;
  auto sx = x.shared();
  return emit(x.shape(), std::move(out), tracks({&x}), [sx](TensorStorage<Real>& o) {
    sx->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) sx->grad[i] += o.grad[i];
  });
}

template <typename Real>
Tensor<Real> Tape<Real>::sigmoid(const T& x) {
  std::vector<Real> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_scalar(x.at(i));
  auto sx = x.shared();
  return emit(x.shape(), std::move(out), tracks({&x}), [sx](TensorStorage<Real>& o) {
    sx->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      const Real y = o.data[i];
      sx->grad[i] += o.grad[i] * y * (Real(1) - y);
    }
  });
}

template <typename Real>
Tensor<Real> Tape<Real>::tanh(const T& x) {
  std::vector<Real> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.at(i));
  auto sx = x.shared();
  return emit(x.shape(), std::move(out), tracks({&x}), [sx](TensorStorage<Real>& o) {
    sx->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      const Real y = o.data[i];
      sx->grad[i] += o.grad[i] * (Real(1) - y * y);
    }
  });
}

template <typename Real>
Tensor<Real> Tape<Real>::relu(const T& x) {
  std::vector<Real> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(x.at(i), Real(0));
  auto sx = x.shared();
  return emit(x.shape(), std::move(out), tracks({&x}), [sx](TensorStorage<Real>& o) {
    sx->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i)
      if (sx->data[i] > 0) sx->grad[i] += o.grad[i];
  });
}

template <typename Real>
Tensor<Real> Tape<Real>::minimum(const T& a, const T& b) {
  require_same(a.shape(), b.shape(), "minimum");
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(a.at(i), b.at(i));
  auto sa = a.shared(), sb = b.shared();
  return emit(a.shape(), std::move(out), tracks({&a, &b}), [sa, sb](TensorStorage<Real>& o) {
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      // ties route to the first argument
      auto* s = sa->data[i] <= sb->data[i] ? sa.get() : sb.get();
      if (!s->requires_grad) continue;
      s->ensure_grad();
      s->grad[i] += o.grad[i];
    }
  });
}

template <typename Real>
Tensor<Real> Tape<Real>::softmax_rows(const T& x) {
  require_rank2(x.shape(), "softmax_rows");
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  std::vector<Real> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    const Real* in = x.data().data() + i * c;
    Real* y = out.data() + i * c;
    const Real mx = *std::max_element(in, in + c);
    Real z = 0;
    for (std::size_t j = 0; j < c; ++j) z += (y[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < c; ++j) y[j] /= z;
  }
  auto sx = x.shared();
  return emit(x.shape(), std::move(out), tracks({&x}), [sx, r, c](TensorStorage<Real>& o) {
    sx->ensure_grad();
    for (std::size_t i = 0; i < r; ++i) {
      const Real* y = o.data.data() + i * c;
      const Real* g = o.grad.data() + i * c;
      Real dot = 0;
      for (std::size_t j = 0; j < c; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < c; ++j) sx->grad[i * c + j] += y[j] * (g[j] - dot);
    }
  });
}

template <typename Real>
Tensor<Real> Tape<Real>::conv1d(const T& x, const T& kernel, std::size_t stride) {
  require_rank2(x.shape(), "conv1d");
  if (kernel.rank() != 3) throw DimensionError("conv1d: kernel must be [k x c_in x c_out], got " + shape_str(kernel.shape()));
  if (stride == 0) throw ContractError("conv1d: stride must be positive");
  const std::size_t len = x.shape()[0], cin = x.shape()[1];
  const std::size_t k = kernel.shape()[0], cout = kernel.shape()[2];
  if (kernel.shape()[1] != cin)
    throw DimensionError("conv1d: input channels " + shape_str(x.shape()) + " vs kernel " + shape_str(kernel.shape()));
  if (len < k) throw SequenceTooShortError(len, k);
  const std::size_t tout = (len - k) / stride + 1;
  const std::size_t patch = k * cin;

  // Window t is the contiguous run x[t*stride .. t*stride+k) in row-major
  // order, so the patch matrix is a strided view with no copy.
  using StridedMap = Eigen::Map<const RowMat<Real>, 0, Eigen::OuterStride<>>;
  std::vector<Real> out(tout * cout);
  StridedMap patches(x.data().data(), tout, patch, Eigen::OuterStride<>(stride * cin));
  MatMap<Real>(out.data(), tout, cout).noalias() = patches * ConstMatMap<Real>(kernel.data().data(), patch, cout);

  auto sx = x.shared(), sk = kernel.shared();
  return emit({tout, cout}, std::move(out), tracks({&x, &kernel}),
              [sx, sk, tout, cout, patch, stride, cin](TensorStorage<Real>& o) {
                ConstMatMap<Real> g(o.grad.data(), tout, cout);
                if (sk->requires_grad) {
                  sk->ensure_grad();
                  StridedMap p(sx->data.data(), tout, patch, Eigen::OuterStride<>(stride * cin));
                  MatMap<Real>(sk->grad.data(), patch, cout).noalias() += p.transpose() * g;
                }
                if (sx->requires_grad) {
                  sx->ensure_grad();
                  RowMat<Real> dp = g * ConstMatMap<Real>(sk->data.data(), patch, cout).transpose();
                  for (std::size_t t = 0; t < tout; ++t) {
                    Real* dst = sx->grad.data() + t * stride * cin;
                    for (std::size_t j = 0; j < patch; ++j) dst[j] += dp(t, j);
                  }
                }
              });
}

template <typename Real>
Tensor<Real> Tape<Real>::round_ste(const T& x) {
  std::vector<Real> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = ste_ == SteMode::relaxed ? x.at(i) : std::floor(x.at(i) + Real(0.5));
  auto sx = x.shared();
  const bool pass = ste_ != SteMode::hard;
  return emit(x.shape(), std::move(out), tracks({&x}), [sx, pass](TensorStorage<Real>& o) {
    sx->ensure_grad();
    if (!pass) return;
    for (std::size_t i = 0; i < o.grad.size(); ++i) sx->grad[i] += o.grad[i];
  });
}

template <typename Real>
Tensor<Real> Tape<Real>::frobenius_sq(const T& x) {
  Real acc = 0;
  for (Real v : x.data()) acc += v * v;
  auto sx = x.shared();
  return emit({1, 1}, {acc}, tracks({&x}), [sx](TensorStorage<Real>& o) {
    sx->ensure_grad();
    const Real g = o.grad[0];
    for (std::size_t i = 0; i < sx->data.size(); ++i) sx->grad[i] += Real(2) * g * sx->data[i];
  });
}

template <typename Real>
Tensor<Real> Tape<Real>::sum(const T& x) {
  Real acc = 0;
  for (Real v : x.data()) acc += v;
  auto sx = x.shared();
  return emit({1, 1}, {acc}, tracks({&x}), [sx](TensorStorage<Real>& o) {
    sx->ensure_grad();
    for (auto& g : sx->grad) g += o.grad[0];
  });
}

template <typename Real>
Tensor<Real> Tape<Real>::mean(const T& x) {
  return scale(sum(x), Real(1) / static_cast<Real>(x.size()));
}

template <typename Real>
Tensor<Real> Tape<Real>::concat(std::span<const T> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  if (axis > 1) throw DimensionError("concat: axis must be 0 or 1");
  for (const auto& p : parts) require_rank2(p.shape(), "concat");
  const std::size_t other = parts[0].shape()[1 - axis];
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.shape()[1 - axis] != other)
      throw DimensionError("concat: " + shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
    total += p.shape()[axis];
  }
  Shape shape = axis == 0 ? Shape{total, other} : Shape{other, total};
  std::vector<Real> out(total * other);
  const std::size_t out_cols = shape[1];
  std::size_t offset = 0;
  std::vector<std::shared_ptr<TensorStorage<Real>>> inputs;
  bool tracked = false;
  for (const auto& p : parts) {
    const std::size_t pr = p.shape()[0], pc = p.shape()[1];
    for (std::size_t i = 0; i < pr; ++i)
      for (std::size_t j = 0; j < pc; ++j) {
        const std::size_t oi = axis == 0 ? offset + i : i, oj = axis == 0 ? j : offset + j;
        out[oi * out_cols + oj] = p.at(i * pc + j);
      }
    offset += p.shape()[axis];
    inputs.push_back(p.shared());
    tracked = tracked || tracks({&p});
  }
  return emit(std::move(shape), std::move(out), tracked, [inputs, axis, out_cols](TensorStorage<Real>& o) {
    std::size_t off = 0;
    for (const auto& s : inputs) {
      const std::size_t pr = s->shape[0], pc = s->shape[1];
      if (s->requires_grad) {
        s->ensure_grad();
        for (std::size_t i = 0; i < pr; ++i)
          for (std::size_t j = 0; j < pc; ++j) {
            const std::size_t oi = axis == 0 ? off + i : i, oj = axis == 0 ? j : off + j;
            s->grad[i * pc + j] += o.grad[oi * out_cols + oj];
          }
      }
      off += s->shape[axis];
    }
  });
}

template <typename Real>
Tensor<Real> Tape<Real>::slice(const T& x, std::size_t axis, std::size_t start, std::size_t length) {
  require_rank2(x.shape(), "slice");
  if (axis > 1) throw DimensionError("slice: axis must be 0 or 1");
  if (length == 0 || start + length > x.shape()[axis])
    throw DimensionError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") out of bounds for " + shape_str(x.shape()));
  const std::size_t xc = x.shape()[1];
  const std::size_t r = axis == 0 ? length : x.shape()[0];
  const std::size_t c = axis == 0 ? xc : length;
  const std::size_t r0 = axis == 0 ? start : 0, c0 = axis == 0 ? 0 : start;
  std::vector<Real> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x.at((r0 + i) * xc + c0 + j);
  auto sx = x.shared();
  return emit({r, c}, std::move(out), tracks({&x}), [sx, r, c, r0, c0, xc](TensorStorage<Real>& o) {
    sx->ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) sx->grad[(r0 + i) * xc + c0 + j] += o.grad[i * c + j];
  });
}

template <typename Real>
Tensor<Real> Tape<Real>::dropout(const T& x, double p, bool train, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ContractError("dropout probability must be in [0, 1)");
  if (!train || p == 0.0) return x;
  const Real keep_scale = Real(1.0 / (1.0 - p));
  std::vector<Real> mask(x.size());
  for (auto& m : mask) m = rng.uniform() >= p ? keep_scale : Real(0);
  std::vector<Real> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.at(i) * mask[i];
  auto sx = x.shared();
  return emit(x.shape(), std::move(out), tracks({&x}), [sx, mask = std::move(mask)](TensorStorage<Real>& o) {
    sx->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) sx->grad[i] += o.grad[i] * mask[i];
  });
}

template <typename Real>
Tensor<Real> Tape<Real>::batchnorm1d(const T& x, const T& gamma, const T& beta, BatchNormStats<Real>& stats,
                                     bool train, double momentum, double eps) {
  require_rank2(x.shape(), "batchnorm1d");
  const std::size_t len = x.shape()[0], ch = x.shape()[1];
  if (gamma.size() != ch || beta.size() != ch || stats.mean.size() != ch || stats.var.size() != ch)
    throw DimensionError("batchnorm1d: " + std::to_string(ch) + " channels vs gamma " + shape_str(gamma.shape()) +
                         ", beta " + shape_str(beta.shape()));
  std::vector<Real> mu(ch, 0), inv_std(ch, 0);
  if (train) {
    std::vector<Real> var(ch, 0);
    for (std::size_t t = 0; t < len; ++t)
      for (std::size_t c = 0; c < ch; ++c) mu[c] += x.at(t * ch + c);
    for (auto& m : mu) m /= static_cast<Real>(len);
    for (std::size_t t = 0; t < len; ++t)
      for (std::size_t c = 0; c < ch; ++c) {
        const Real d = x.at(t * ch + c) - mu[c];
        var[c] += d * d;
      }
    const Real mom = static_cast<Real>(momentum);
    for (std::size_t c = 0; c < ch; ++c) {
      const Real biased = var[c] / static_cast<Real>(len);
      const Real unbiased = len > 1 ? var[c] / static_cast<Real>(len - 1) : biased;
      inv_std[c] = Real(1) / std::sqrt(biased + static_cast<Real>(eps));
      stats.mean[c] = (Real(1) - mom) * stats.mean[c] + mom * mu[c];
      stats.var[c] = (Real(1) - mom) * stats.var[c] + mom * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < ch; ++c) {
      mu[c] = stats.mean[c];
      inv_std[c] = Real(1) / std::sqrt(stats.var[c] + static_cast<Real>(eps));
    }
  }
  std::vector<Real> xhat(len * ch), out(len * ch);
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t i = t * ch + c;
      xhat[i] = (x.at(i) - mu[c]) * inv_std[c];
      out[i] = gamma.at(c) * xhat[i] + beta.at(c);
    }
  auto sx = x.shared(), sg = gamma.shared(), sb = beta.shared();
  return emit(x.shape(), std::move(out), tracks({&x, &gamma, &beta}),
              [sx, sg, sb, xhat = std::move(xhat), inv_std = std::move(inv_std), len, ch, train](TensorStorage<Real>& o) {
                if (sg->requires_grad || sb->requires_grad) {
                  sg->ensure_grad();
                  sb->ensure_grad();
                  for (std::size_t t = 0; t < len; ++t)
                    for (std::size_t c = 0; c < ch; ++c) {
                      const std::size_t i = t * ch + c;
                      if (sg->requires_grad) sg->grad[c] += o.grad[i] * xhat[i];
                      if (sb->requires_grad) sb->grad[c] += o.grad[i];
                    }
                }
                if (!sx->requires_grad) return;
                sx->ensure_grad();
                if (!train) {
                  for (std::size_t t = 0; t < len; ++t)
                    for (std::size_t c = 0; c < ch; ++c)
                      sx->grad[t * ch + c] += o.grad[t * ch + c] * sg->data[c] * inv_std[c];
                  return;
                }
                const Real n = static_cast<Real>(len);
                for (std::size_t c = 0; c < ch; ++c) {
                  Real sum_d = 0, sum_dx = 0;
                  for (std::size_t t = 0; t < len; ++t) {
                    const Real d = o.grad[t * ch + c] * sg->data[c];
                    sum_d += d;
                    sum_dx += d * xhat[t * ch + c];
                  }
                  for (std::size_t t = 0; t < len; ++t) {
                    const std::size_t i = t * ch + c;
                    const Real d = o.grad[i] * sg->data[c];
                    sx->grad[i] += inv_std[c] / n * (n * d - sum_d - xhat[i] * sum_dx);
                  }
                }
              });
}

template <typename Real>
void Tape<Real>::backward(const T& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw ContractError("backward: loss must be a scalar, got " + (loss.defined() ? shape_str(loss.shape()) : "null"));
  if (!loss.requires_grad()) throw ContractError("backward: loss is not connected to any tracked tensor");
  for (auto& e : entries_)
    if (!e.out->grad.empty()) std::fill(e.out->grad.begin(), e.out->grad.end(), Real(0));
  auto* ls = loss.storage();
  ls->ensure_grad();
  ls->grad[0] += Real(1);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it)
    if (!it->out->grad.empty()) it->fn(*it->out);
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace fskate
