#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hymad/errors.hpp"

namespace hymad {

using Shape = std::vector<std::size_t>;

/// 64-byte aligned storage. Eigen picks its vectorized summation order
/// from the buffer address, so unaligned heap blocks would make results
/// differ in the last bit from run to run.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), kAlign));
  }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node;

/// Backward closure: receives the node whose grad has just been finalized
/// and pushes contributions into its parents.
using BackwardFn = std::function<void(const Node&)>;

struct Node {
  Shape shape;
  Buffer data;
  Buffer grad;  // empty until first accumulation
  bool requires_grad = false;
  std::string_view op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;

  Buffer& grad_buffer();
};

/// Handle to a node of the computation graph. Copies share storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  /// Builds a non-leaf result. Parents that do not require grad are
  /// dropped; if none remain (or grad mode is off) the result is a
  /// constant and `backward` is discarded.
  static Tensor make_result(Shape shape, Buffer values,
                            std::string_view op,
                            std::vector<Tensor> parents, BackwardFn backward);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t ndim() const { return shape().size(); }
  std::size_t numel() const { return data().size(); }
  std::size_t dim(std::size_t i) const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t i) const { return data()[i]; }
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  Buffer& grad_buffer();
  void zero_grad();

  std::string_view op() const;
  /// A detached constant copy of this tensor's values.
  Tensor detach() const;
  Tensor reshape(Shape shape) const;

  Node& node() const;
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;
};

/// Populates grad of every ancestor of `loss` that requires grad.
/// Gradients add to whatever is already accumulated.
void backward(const Tensor& loss);

bool grad_enabled();

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace hymad
