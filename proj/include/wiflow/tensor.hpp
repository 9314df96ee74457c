#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace wiflow {

using Shape = std::vector<std::int64_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

inline std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

[[noreturn]] inline void fail(const std::string& msg) { throw std::invalid_argument(msg); }

inline void check(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Dense row-major tensor with an optional gradient buffer. Handle semantics:
// copies share storage. Values are not mutated after an op produced them;
// only grad accumulates (and batch-norm running stats, which live outside
// any autodiff graph).
template <typename Scalar>
class Tensor {
 public:
  struct Storage {
    Shape shape;
    VecX<Scalar> values;
    VecX<Scalar> grad;  // size 0 until first accumulation
    bool requires_grad = false;
    const void* tape_tag = nullptr;  // tape that recorded the producing op
  };

  Tensor() = default;

  explicit Tensor(Shape shape) : st_(std::make_shared<Storage>()) {
    for (auto d : shape) check(d > 0, "tensor extents must be positive, got " + shape_str(shape));
    st_->shape = std::move(shape);
    st_->values = VecX<Scalar>::Zero(numel(st_->shape));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, Scalar v) {
    Tensor t(std::move(shape));
    t.st_->values.setConstant(v);
    return t;
  }

  static Tensor scalar(Scalar v) { return full({1}, v); }

  static Tensor from(Shape shape, const std::vector<Scalar>& data) {
    Tensor t(std::move(shape));
    check(static_cast<std::int64_t>(data.size()) == t.size(),
          "data length " + std::to_string(data.size()) + " does not match shape " +
              shape_str(t.shape()));
    std::copy(data.begin(), data.end(), t.data());
    return t;
  }

  bool defined() const { return static_cast<bool>(st_); }
  const Shape& shape() const { return st_->shape; }
  int rank() const { return static_cast<int>(st_->shape.size()); }
  std::int64_t dim(int i) const { return st_->shape[static_cast<std::size_t>(i)]; }
  std::int64_t size() const { return st_->values.size(); }

  Scalar* data() { return st_->values.data(); }
  const Scalar* data() const { return st_->values.data(); }
  Scalar operator[](std::int64_t i) const { return st_->values[i]; }
  Scalar& operator[](std::int64_t i) { return st_->values[i]; }

  Eigen::Map<VecX<Scalar>> flat() { return {data(), size()}; }
  Eigen::Map<const VecX<Scalar>> flat() const { return {data(), size()}; }

  bool requires_grad() const { return st_->requires_grad; }
  Tensor& set_requires_grad(bool b) {
    st_->requires_grad = b;
    return *this;
  }

  bool has_grad() const { return st_->grad.size() > 0; }
  VecX<Scalar>& grad_buffer() {
    if (st_->grad.size() == 0) st_->grad = VecX<Scalar>::Zero(size());
    return st_->grad;
  }
  const VecX<Scalar>& grad() const {
    check(has_grad(), "gradient has not been populated");
    return st_->grad;
  }
  void zero_grad() { st_->grad.resize(0); }

  const void* tape_tag() const { return st_->tape_tag; }
  void set_tape_tag(const void* t) { st_->tape_tag = t; }

  std::shared_ptr<Storage> storage() const { return st_; }

  // Deep copy of values (grad not copied).
  Tensor clone() const {
    Tensor t(st_->shape);
    t.st_->values = st_->values;
    t.st_->requires_grad = st_->requires_grad;
    return t;
  }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> t(st_->shape);
    for (std::int64_t i = 0; i < size(); ++i)
      t.data()[i] = static_cast<Other>(st_->values[i]);
    return t;
  }

  bool all_finite() const {
    for (std::int64_t i = 0; i < size(); ++i)
      if (!std::isfinite(static_cast<double>(st_->values[i]))) return false;
    return true;
  }

 private:
  std::shared_ptr<Storage> st_;
};

inline Shape drop_last(const Shape& s) {
  Shape r(s.begin(), s.end() - 1);
  if (r.empty()) r.push_back(1);
  return r;
}

}  // namespace wiflow
