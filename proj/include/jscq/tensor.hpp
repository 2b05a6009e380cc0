#pragma once

// Minimal reverse-mode automatic differentiation over dense float64 arrays.
//
// Tensors are reference-counted handles; every op records its parents and a
// backward closure when at least one input requires a gradient. backward()
// orders the reachable graph topologically and replays the closures once.
//
// Gradient semantics: calling backward() while any reachable leaf still holds
// a gradient from a previous call is an error. Call zero_grad() on the
// parameters between steps.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace jscq {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class GradError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  std::uint64_t id = 0;
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  std::string op;            // "leaf" for user-created tensors
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward;

  bool is_leaf() const { return parents.empty(); }
  // Allocates the gradient buffer on first use.
  std::span<double> grad_buffer();
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const { return data().size(); }

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t i) const { return data()[i]; }

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  std::uint64_t id() const;
  const std::string& op() const;

  // A new leaf holding a copy of the values, outside any graph.
  Tensor detach() const;

  const detail::NodePtr& node() const { return node_; }
  explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}

 private:
  detail::NodePtr node_;
};

// Disables graph construction on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// One replayable step of the reverse pass.
struct TapeRecord {
  std::uint64_t output_id;
  std::vector<std::uint64_t> parent_ids;
  std::string op;
};

/// Topologically ordered record of everything reachable from a scalar loss.
/// Records run from the loss back to the leaves, each node exactly once.
class GradTape {
 public:
  explicit GradTape(const Tensor& loss);

  const std::vector<TapeRecord>& records() const { return records_; }
  void replay();

 private:
  detail::NodePtr root_;
  std::vector<detail::NodePtr> order_;
  std::vector<TapeRecord> records_;
};

void backward(const Tensor& loss);

// Maps the upstream gradient to one gradient vector per parent, each the size
// of that parent.
using BackwardRule =
    std::function<std::vector<std::vector<double>>(std::span<const double> upstream)>;

/// Wraps an already computed value as the output of `parents`, with a
/// caller-supplied backward rule. The forward value is returned verbatim.
Tensor custom_node(const Tensor& forward_value, const std::vector<Tensor>& parents,
                   BackwardRule rule, std::string name = "custom");

namespace detail {

// Builds an op output. `backward` is dropped when no parent requires a grad
// or grad mode is off.
Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                   std::string op, std::function<void(Node&)> backward);

}  // namespace detail

// ---- differentiable ops ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor square(const Tensor& a);

// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
// x [B,in], weight [out,in], bias [out] -> [B,out]
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
// Per-channel negative slope along axis 1.
Tensor prelu(const Tensor& a, const Tensor& slope);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
// General axis permutation; out.shape[i] = a.shape[perm[i]].
Tensor permute(const Tensor& a, const std::vector<std::size_t>& perm);
// [B,n] ++ [B,m] -> [B,n+m]
Tensor concat_columns(const Tensor& a, const Tensor& b);

// x [B,C,H,W], weight [O,C,k,k], bias [O]; zero padding, stride 1 or 2.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              std::size_t stride, std::size_t padding);
// [B,C*r*r,H,W] -> [B,C,H*r,W*r]
Tensor pixel_shuffle(const Tensor& x, std::size_t factor);
// [B,C,H,W] -> [B,C]
Tensor global_avg_pool(const Tensor& x);
// x [B,C,H,W] scaled by gate [B,C] broadcast over space.
Tensor mul_channels(const Tensor& x, const Tensor& gate);

}  // namespace jscq
