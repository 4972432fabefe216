#include "hymad/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>
#include <utility>

namespace hymad {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Buffer& Node::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor shape " + shape_str(shape) + " does not hold " +
                     std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data.assign(values.begin(), values.end());
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

Tensor Tensor::make_result(Shape shape, Buffer values,
                           std::string_view op, std::vector<Tensor> parents,
                           BackwardFn backward) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor shape " + shape_str(shape) + " does not hold " +
                     std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  Tensor out(std::move(node));
  out.node_->op = op;
  if (!g_grad_enabled) return out;
  for (const auto& p : parents) {
    if (p.defined() && p.requires_grad()) out.node_->parents.push_back(p.node_);
  }
  if (!out.node_->parents.empty()) {
    out.node_->requires_grad = true;
    out.node_->backward = std::move(backward);
  }
  return out;
}

const Shape& Tensor::shape() const { return node().shape; }

std::size_t Tensor::dim(std::size_t i) const {
  const auto& s = shape();
  if (i >= s.size()) {
    throw ShapeError("dimension " + std::to_string(i) + " out of range for " +
                     shape_str(s));
  }
  return s[i];
}

std::span<const double> Tensor::data() const { return node().data; }
std::span<double> Tensor::mutable_data() { return node().data; }

double Tensor::item() const {
  if (numel() != 1) {
    throw UsageError("item() on tensor of shape " + shape_str(shape()));
  }
  return data()[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return data()[r * shape().back() + c];
}

bool Tensor::requires_grad() const { return node().requires_grad; }
void Tensor::set_requires_grad(bool on) { node().requires_grad = on; }
bool Tensor::has_grad() const { return !node().grad.empty(); }
std::span<const double> Tensor::grad() const { return node().grad; }
Buffer& Tensor::grad_buffer() { return node().grad_buffer(); }

void Tensor::zero_grad() {
  auto& g = node().grad;
  std::fill(g.begin(), g.end(), 0.0);
}

std::string_view Tensor::op() const { return node().op; }

Tensor Tensor::detach() const {
  return from(shape(), std::vector<double>(data().begin(), data().end()));
}

Tensor Tensor::reshape(Shape new_shape) const {
  if (shape_numel(new_shape) != numel()) {
    throw ShapeError("cannot reshape " + shape_str(shape()) + " to " +
                     shape_str(new_shape));
  }
  Tensor self = *this;
  return make_result(std::move(new_shape),
                     Buffer(data().begin(), data().end()),
                     "reshape", {self}, [self](const Node& out) mutable {
                       auto& g = self.grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i)
                         g[i] += out.grad[i];
                     });
}

Node& Tensor::node() const {
  if (!node_) throw UsageError("use of undefined tensor");
  return *node_;
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw UsageError("backward() needs a scalar root, got " +
                     shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw UsageError("backward() root does not depend on any parameter");
  }

  // Iterative post-order DFS; reversed it is a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  Node* root = loss.node_ptr().get();
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) {
      node->backward(*node);
      // Interior grads are consumed; a second backward() through the same
      // graph then only propagates its own contribution.
      node->grad.clear();
    }
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

}  // namespace hymad
