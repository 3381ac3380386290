#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fpsr {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised when an op is handed operands whose extents do not fit together.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a forward op produces NaN or Inf.
class NumericError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised on misuse of the gradient tape (non-scalar loss, consumed graph).
class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {

template <typename T>
struct TensorImpl;

template <typename T>
struct Node {
  std::uint64_t seq = 0;
  const char* op = "";
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
  // Receives d(loss)/d(output) and accumulates into the inputs' grads.
  std::function<void(std::span<const T>)> backward;
};

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  bool consumed = false;
  std::shared_ptr<Node<T>> node;

  bool is_leaf() const { return node == nullptr; }
  std::vector<T>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    return grad;
  }
};

std::uint64_t next_node_seq();

}  // namespace detail

/// Gradient recording switch. Recording is on by default; it is per thread.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool on);
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Dense row-major array with optional participation in reverse-mode
/// differentiation. Copies share storage; use clone() for a deep copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T(0)); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), T(1)); }
  static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl().shape; }
  std::int64_t dim(std::size_t axis) const;
  std::size_t rank() const { return impl().shape.size(); }
  std::int64_t numel() const { return static_cast<std::int64_t>(impl().data.size()); }

  std::span<const T> data() const { return impl().data; }
  /// Direct write access. Only legal on leaves (parameters, inputs).
  std::span<T> mutable_data();
  T item() const;
  T at(std::int64_t flat) const { return impl().data.at(static_cast<std::size_t>(flat)); }

  bool requires_grad() const { return impl().requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool has_grad() const { return !impl().grad.empty(); }
  std::span<const T> grad() const { return impl().grad; }
  std::span<T> mutable_grad() { return impl().ensure_grad(); }
  void zero_grad();
  /// Releases the grad buffer so has_grad() reports false.
  void clear_grad();

  bool is_leaf() const { return impl().is_leaf(); }
  /// Same values, cut from the tape.
  Tensor detach() const;
  Tensor clone() const;
  Tensor reshape(Shape shape) const;

  const std::shared_ptr<detail::TensorImpl<T>>& handle() const { return impl_; }
  static Tensor from_handle(std::shared_ptr<detail::TensorImpl<T>> h) {
    Tensor t;
    t.impl_ = std::move(h);
    return t;
  }

 private:
  detail::TensorImpl<T>& impl() const;
  std::shared_ptr<detail::TensorImpl<T>> impl_;
};

/// Runs reverse-mode differentiation from a scalar loss, accumulating into
/// the grad of every requires_grad leaf reachable from it. The graph is
/// consumed: a second call on the same loss is rejected.
template <typename T>
void backward(const Tensor<T>& loss);

/// Builds the output of a differentiable op. `inputs` are recorded on the tape
/// when recording is on and any of them requires grad; `bw` then receives the
/// output gradient. Values are checked for finiteness.
template <typename T>
Tensor<T> make_op_result(const char* op, Shape shape, std::vector<T> values,
                         std::vector<Tensor<T>> inputs,
                         std::function<void(std::span<const T>)> bw);

/// Accumulate `g` into the grad buffer of `t` if it requires grad.
template <typename T>
void accumulate_grad(const Tensor<T>& t, std::span<const T> g);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace fpsr
