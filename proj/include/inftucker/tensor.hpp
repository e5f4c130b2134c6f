#pragma once

// Dense K-mode tensors and the multilinear algebra the model is built on.
//
// Storage follows the row-wise vec convention: the last mode varies fastest,
// so the 1-based entry (i_1, ..., i_K) sits at vec position
//
//   j = i_K + sum_{k<K} (i_k - 1) * n_{k+1} * ... * n_K.
//
// With this layout vec(W x_1 U1 ... x_K UK) = (U1 kron ... kron UK) vec(W)
// holds literally, which every Kronecker shortcut in the library relies on.

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "inftucker/errors.hpp"

namespace inftucker {

using Index = Eigen::Index;
using Dims = std::vector<Index>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowMajorMatrix =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::string format_dims(const Dims& dims) {
  std::ostringstream os;
  os << '(';
  for (std::size_t k = 0; k < dims.size(); ++k) {
    if (k) os << ',';
    os << dims[k];
  }
  os << ')';
  return os.str();
}

inline void check_dims(const Dims& dims) {
  if (dims.empty()) throw ShapeError("tensor order must be at least 1");
  for (Index d : dims) {
    if (d < 1) throw ShapeError("every mode size must be >= 1, got " + format_dims(dims));
  }
}

inline Index num_elements(const Dims& dims) {
  Index n = 1;
  for (Index d : dims) n *= d;
  return n;
}

// Product of mode sizes strictly before / after `mode`.
inline Index leading_size(const Dims& dims, Index mode) {
  Index n = 1;
  for (Index k = 0; k < mode; ++k) n *= dims[k];
  return n;
}
inline Index trailing_size(const Dims& dims, Index mode) {
  Index n = 1;
  for (Index k = mode + 1; k < static_cast<Index>(dims.size()); ++k) n *= dims[k];
  return n;
}

/// A 1-based tensor index (i_1, ..., i_K).
struct MultiIndex {
  std::vector<Index> indices;

  MultiIndex() = default;
  MultiIndex(std::initializer_list<Index> list) : indices(list) {}
  explicit MultiIndex(std::vector<Index> v) : indices(std::move(v)) {}

  Index order() const { return static_cast<Index>(indices.size()); }
  Index operator[](std::size_t k) const { return indices[k]; }
  bool operator==(const MultiIndex&) const = default;
};

/// 1-based vec position of `idx`. Throws IndexError for components outside
/// their mode and ShapeError when the orders differ.
inline Index vec_index(const MultiIndex& idx, const Dims& dims) {
  if (idx.order() != static_cast<Index>(dims.size())) {
    throw ShapeError("multi-index order " + std::to_string(idx.order()) +
                     " does not match tensor order " + std::to_string(dims.size()));
  }
  Index j = 0;
  for (std::size_t k = 0; k < dims.size(); ++k) {
    const Index i = idx.indices[k];
    if (i < 1 || i > dims[k]) {
      throw IndexError("index component " + std::to_string(i) + " outside mode " +
                       std::to_string(k + 1) + " of size " + std::to_string(dims[k]));
    }
    j = j * dims[k] + (i - 1);
  }
  return j + 1;
}

/// Inverse of vec_index.
inline MultiIndex multi_index_of(Index position, const Dims& dims) {
  const Index n = num_elements(dims);
  if (position < 1 || position > n) {
    throw IndexError("vec position " + std::to_string(position) + " outside 1.." +
                     std::to_string(n));
  }
  std::vector<Index> out(dims.size());
  Index rest = position - 1;
  for (std::size_t k = dims.size(); k-- > 0;) {
    out[k] = rest % dims[k] + 1;
    rest /= dims[k];
  }
  return MultiIndex(std::move(out));
}

template <typename Scalar>
class Tensor {
 public:
  using value_type = Scalar;

  Tensor() = default;

  explicit Tensor(Dims dims) : dims_(std::move(dims)) {
    check_dims(dims_);
    values_ = Vector<Scalar>::Zero(num_elements(dims_));
  }

  Tensor(Dims dims, Vector<Scalar> values) : dims_(std::move(dims)), values_(std::move(values)) {
    check_dims(dims_);
    if (values_.size() != num_elements(dims_)) {
      throw ShapeError("value count " + std::to_string(values_.size()) +
                       " does not match dims " + format_dims(dims_));
    }
  }

  static Tensor Zero(const Dims& dims) { return Tensor(dims); }
  static Tensor Constant(const Dims& dims, Scalar value) {
    check_dims(dims);
    return Tensor(dims, Vector<Scalar>::Constant(num_elements(dims), value));
  }

  const Dims& dims() const { return dims_; }
  Index order() const { return static_cast<Index>(dims_.size()); }
  Index dim(Index mode) const { return dims_[static_cast<std::size_t>(mode)]; }
  Index size() const { return values_.size(); }
  bool empty() const { return dims_.empty(); }

  const Vector<Scalar>& values() const { return values_; }
  Vector<Scalar>& values() { return values_; }
  const Scalar* data() const { return values_.data(); }
  Scalar* data() { return values_.data(); }

  Scalar& operator[](Index offset) { return values_[offset]; }
  const Scalar& operator[](Index offset) const { return values_[offset]; }

  Scalar& operator()(const MultiIndex& idx) { return values_[vec_index(idx, dims_) - 1]; }
  const Scalar& operator()(const MultiIndex& idx) const {
    return values_[vec_index(idx, dims_) - 1];
  }

  bool operator==(const Tensor& other) const {
    return dims_ == other.dims_ && values_ == other.values_;
  }

 private:
  Dims dims_;
  Vector<Scalar> values_;
};

using DenseTensor = Tensor<double>;

/// Component matrices U^(1), ..., U^(K); matrix k is n_k x r_k.
using TuckerFactors = std::vector<Eigen::MatrixXd>;

inline void check_factors(const TuckerFactors& factors) {
  if (factors.empty()) throw ShapeError("factor list must not be empty");
  for (const auto& f : factors) {
    if (f.rows() < 1 || f.cols() < 1) throw ShapeError("factor matrices need >= 1 row and column");
  }
}

template <typename Scalar>
Vector<Scalar> vectorize(const Tensor<Scalar>& t) {
  return t.values();
}

template <typename Derived>
Tensor<typename Derived::Scalar> devectorize(const Eigen::MatrixBase<Derived>& v, const Dims& dims) {
  using Scalar = typename Derived::Scalar;
  return Tensor<Scalar>(dims, Vector<Scalar>(v));
}

/// W x_k M: contracts mode `mode` (0-based) of `t` against the columns of `m`.
template <typename Scalar, typename Derived>
Tensor<Scalar> mode_product(const Tensor<Scalar>& t, const Eigen::MatrixBase<Derived>& m,
                            Index mode) {
  if (mode < 0 || mode >= t.order()) {
    throw ShapeError("mode " + std::to_string(mode) + " outside tensor of order " +
                     std::to_string(t.order()));
  }
  const Index nk = t.dim(mode);
  if (m.cols() != nk) {
    throw ShapeError("mode product: matrix has " + std::to_string(m.cols()) +
                     " columns but mode " + std::to_string(mode) + " has size " +
                     std::to_string(nk));
  }
  const Matrix<Scalar> mat = m;
  const Index left = leading_size(t.dims(), mode);
  const Index right = trailing_size(t.dims(), mode);
  Dims out_dims = t.dims();
  out_dims[static_cast<std::size_t>(mode)] = mat.rows();
  Tensor<Scalar> out(out_dims);
  using ConstSlab = Eigen::Map<const RowMajorMatrix<Scalar>>;
  using Slab = Eigen::Map<RowMajorMatrix<Scalar>>;
  for (Index l = 0; l < left; ++l) {
    ConstSlab in(t.data() + l * nk * right, nk, right);
    Slab o(out.data() + l * mat.rows() * right, mat.rows(), right);
    o.noalias() = mat * in;
  }
  return out;
}

/// core x_1 U^(1) x_2 ... x_K U^(K).
template <typename Scalar, typename MatrixType>
Tensor<Scalar> tucker_multiply(const Tensor<Scalar>& core, const std::vector<MatrixType>& factors) {
  if (static_cast<Index>(factors.size()) != core.order()) {
    throw ShapeError("need one factor per mode: got " + std::to_string(factors.size()) +
                     " for order " + std::to_string(core.order()));
  }
  Tensor<Scalar> out = core;
  for (Index k = 0; k < core.order(); ++k) out = mode_product(out, factors[k], k);
  return out;
}

template <typename Scalar>
Tensor<Scalar> hadamard(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.dims() != b.dims()) {
    throw ShapeError("hadamard: dims " + format_dims(a.dims()) + " vs " + format_dims(b.dims()));
  }
  return Tensor<Scalar>(a.dims(), a.values().cwiseProduct(b.values()));
}

template <typename Scalar>
Scalar frobenius_norm_sq(const Tensor<Scalar>& t) {
  return t.values().squaredNorm();
}

/// D x_1 d_1^T ... x_K d_K^T, i.e. dot(d_1 kron ... kron d_K, vec(D)).
template <typename Scalar, typename VectorType>
Scalar multi_mode_vector_contract(const Tensor<Scalar>& d, std::span<const VectorType> vecs) {
  if (static_cast<Index>(vecs.size()) != d.order()) {
    throw ShapeError("need one vector per mode");
  }
  Tensor<Scalar> t = d;
  for (Index k = d.order(); k-- > 0;) {
    if (vecs[k].size() != d.dim(k)) throw ShapeError("contract vector length mismatch on mode " + std::to_string(k));
    t = mode_product(t, vecs[k].transpose(), k);
  }
  return t[0];
}

template <typename Scalar, typename VectorType>
Scalar multi_mode_vector_contract(const Tensor<Scalar>& d, const std::vector<VectorType>& vecs) {
  return multi_mode_vector_contract(d, std::span<const VectorType>(vecs));
}

/// Contracts every mode except `keep` against vecs; returns a length-n_keep vector.
template <typename Scalar, typename VectorType>
Vector<Scalar> contract_all_but(const Tensor<Scalar>& d, std::span<const VectorType> vecs,
                                Index keep) {
  Tensor<Scalar> t = d;
  for (Index k = d.order(); k-- > 0;) {
    if (k == keep) continue;
    t = mode_product(t, vecs[k].transpose(), k);
  }
  return t.values();
}

/// Sum over all non-`mode` indices of a[.., p, ..] * b[.., q, ..]: the
/// product of the mode-`mode` unfoldings, A_(k) B_(k)^T.
template <typename Scalar>
Matrix<Scalar> mode_unfolding_product(const Tensor<Scalar>& a, const Tensor<Scalar>& b, Index mode) {
  if (a.order() != b.order()) throw ShapeError("unfolding product: order mismatch");
  for (Index k = 0; k < a.order(); ++k) {
    if (k != mode && a.dim(k) != b.dim(k)) throw ShapeError("unfolding product: dims mismatch");
  }
  const Index left = leading_size(a.dims(), mode);
  const Index right = trailing_size(a.dims(), mode);
  const Index na = a.dim(mode), nb = b.dim(mode);
  Matrix<Scalar> acc = Matrix<Scalar>::Zero(na, nb);
  using ConstSlab = Eigen::Map<const RowMajorMatrix<Scalar>>;
  for (Index l = 0; l < left; ++l) {
    ConstSlab sa(a.data() + l * na * right, na, right);
    ConstSlab sb(b.data() + l * nb * right, nb, right);
    acc.noalias() += sa * sb.transpose();
  }
  return acc;
}

/// v_1 kron v_2 kron ... kron v_K, ordered consistently with vec_index.
template <typename VectorType>
Vector<typename VectorType::Scalar> kron_vectors(std::span<const VectorType> vecs) {
  using Scalar = typename VectorType::Scalar;
  Vector<Scalar> out = Vector<Scalar>::Ones(1);
  for (const auto& v : vecs) {
    Vector<Scalar> next(out.size() * v.size());
    for (Index i = 0; i < out.size(); ++i) next.segment(i * v.size(), v.size()) = out[i] * v;
    out.swap(next);
  }
  return out;
}

template <typename VectorType>
Vector<typename VectorType::Scalar> kron_vectors(const std::vector<VectorType>& vecs) {
  return kron_vectors(std::span<const VectorType>(vecs));
}

}  // namespace inftucker
