#include "fpsr/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace fpsr {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) {
    if (e < 0) throw ShapeError("negative extent in shape " + shape_str(shape));
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {
std::uint64_t next_node_seq() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}
}  // namespace detail

namespace {
thread_local bool grad_mode_enabled = true;
}

bool GradMode::enabled() { return grad_mode_enabled; }
void GradMode::set_enabled(bool on) { grad_mode_enabled = on; }

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : impl_(std::make_shared<detail::TensorImpl<T>>()) {
  const auto n = shape_numel(shape);
  impl_->shape = std::move(shape);
  impl_->data.assign(static_cast<std::size_t>(n), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values)
    : impl_(std::make_shared<detail::TensorImpl<T>>()) {
  const auto n = shape_numel(shape);
  if (static_cast<std::size_t>(n) != values.size()) {
    throw ShapeError("tensor of shape " + shape_str(shape) + " needs " + std::to_string(n) +
                     " values, got " + std::to_string(values.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

template <typename T>
detail::TensorImpl<T>& Tensor<T>::impl() const {
  if (!impl_) throw std::logic_error("use of an undefined tensor");
  return *impl_;
}

template <typename T>
std::int64_t Tensor<T>::dim(std::size_t axis) const {
  const auto& s = impl().shape;
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
  }
  return s[axis];
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
  auto& im = impl();
  if (!im.is_leaf()) throw TapeError("in-place write to a non-leaf tensor");
  return im.data;
}

template <typename T>
T Tensor<T>::item() const {
  const auto& im = impl();
  if (im.data.size() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_str(im.shape));
  }
  return im.data[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  auto& im = impl();
  if (!im.is_leaf()) throw TapeError("requires_grad can only be toggled on leaves");
  im.requires_grad = on;
  if (!on) im.grad.clear();
  return *this;
}

template <typename T>
void Tensor<T>::zero_grad() {
  auto& im = impl();
  if (!im.grad.empty()) std::fill(im.grad.begin(), im.grad.end(), T(0));
}

template <typename T>
void Tensor<T>::clear_grad() {
  auto& im = impl();
  im.grad.clear();
  im.grad.shrink_to_fit();
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  Tensor out;
  out.impl_ = std::make_shared<detail::TensorImpl<T>>();
  out.impl_->shape = impl().shape;
  out.impl_->data = impl().data;
  return out;
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  Tensor out = detach();
  out.impl_->requires_grad = impl().is_leaf() && impl().requires_grad;
  return out;
}

template <typename T>
Tensor<T> Tensor<T>::reshape(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw ShapeError("cannot reshape " + shape_str(this->shape()) + " to " + shape_str(shape));
  }
  auto self = *this;
  return make_op_result<T>("reshape", std::move(shape), impl().data, {self},
                           [self](std::span<const T> g) { accumulate_grad(self, g); });
}

template <typename T>
void accumulate_grad(const Tensor<T>& t, std::span<const T> g) {
  auto& im = *t.handle();
  if (!im.requires_grad) return;
  auto& dst = im.ensure_grad();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

template <typename T>
Tensor<T> make_op_result(const char* op, Shape shape, std::vector<T> values,
                         std::vector<Tensor<T>> inputs,
                         std::function<void(std::span<const T>)> bw) {
  for (const T v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite value produced by ") + op);
    }
  }
  Tensor<T> out(std::move(shape), std::move(values));
  if (!GradMode::enabled()) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;

  auto node = std::make_shared<detail::Node<T>>();
  node->seq = detail::next_node_seq();
  node->op = op;
  node->inputs.reserve(inputs.size());
  for (const auto& in : inputs) node->inputs.push_back(in.handle());
  node->backward = std::move(bw);
  auto& im = *out.handle();
  im.requires_grad = true;
  im.node = std::move(node);
  return out;
}

template <typename T>
void backward(const Tensor<T>& loss) {
  auto root = loss.handle();
  if (!root) throw TapeError("backward on an undefined tensor");
  if (root->data.size() != 1) {
    throw TapeError("backward needs a scalar loss, got shape " + shape_str(root->shape));
  }
  if (root->consumed) throw TapeError("backward on a consumed tape");
  if (!root->requires_grad) throw TapeError("backward on a tensor that is not on a tape");

  // Collect every interior node reachable from the root. Owning pointers keep
  // intermediates alive while nodes are released below.
  using ImplPtr = std::shared_ptr<detail::TensorImpl<T>>;
  std::vector<ImplPtr> order;
  std::unordered_set<const detail::TensorImpl<T>*> seen;
  std::vector<ImplPtr> stack{root};
  while (!stack.empty()) {
    auto cur = std::move(stack.back());
    stack.pop_back();
    if (cur->is_leaf() || !seen.insert(cur.get()).second) continue;
    for (const auto& in : cur->node->inputs) {
      if (in->requires_grad && !in->is_leaf()) stack.push_back(in);
    }
    order.push_back(std::move(cur));
  }
  // Creation order is a topological order; walk it backwards.
  std::sort(order.begin(), order.end(),
            [](const ImplPtr& a, const ImplPtr& b) { return a->node->seq > b->node->seq; });

  root->ensure_grad()[0] += T(1);
  for (auto& cur : order) {
    if (cur->grad.empty()) continue;
    cur->node->backward(cur->grad);
  }
  for (auto& cur : order) {
    cur->node.reset();
    cur->consumed = true;
    cur->grad.clear();
    cur->grad.shrink_to_fit();
  }
}

template class Tensor<float>;
template class Tensor<double>;
template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);
template void accumulate_grad<float>(const Tensor<float>&, std::span<const float>);
template void accumulate_grad<double>(const Tensor<double>&, std::span<const double>);
template Tensor<float> make_op_result<float>(const char*, Shape, std::vector<float>,
                                             std::vector<Tensor<float>>,
                                             std::function<void(std::span<const float>)>);
template Tensor<double> make_op_result<double>(const char*, Shape, std::vector<double>,
                                               std::vector<Tensor<double>>,
                                               std::function<void(std::span<const double>)>);

}  // namespace fpsr
