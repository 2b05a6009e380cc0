#include "jscq/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace jscq {

namespace {

std::atomic<std::uint64_t> g_next_id{1};
thread_local bool t_grad_enabled = true;

detail::NodePtr new_node(Shape shape, std::vector<double> data) {
  if (numel_of(shape) != data.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " does not hold " +
                     std::to_string(data.size()) + " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = "leaf";
  return node;
}

}  // namespace

std::size_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::span<double> detail::Node::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = numel_of(shape);
  Tensor t(new_node(std::move(shape), std::vector<double>(n, value)));
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  Tensor t(new_node(std::move(shape), std::move(values)));
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from(Shape{1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= node_->shape.size()) {
    throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(node_->shape));
  }
  return node_->shape[axis];
}

std::span<const double> Tensor::data() const { return node_->data; }
std::span<double> Tensor::mutable_data() { return node_->data; }

double Tensor::item() const {
  if (node_->data.size() != 1) {
    throw ShapeError("item: tensor of shape " + shape_str(node_->shape) + " is not a scalar");
  }
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { node_->requires_grad = flag; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }
void Tensor::zero_grad() { node_->grad.clear(); }
std::uint64_t Tensor::id() const { return node_->id; }
const std::string& Tensor::op() const { return node_->op; }

Tensor Tensor::detach() const { return from(node_->shape, node_->data, false); }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_enabled() { return t_grad_enabled; }

Tensor detail::make_result(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                           std::string op, std::function<void(Node&)> backward) {
  auto node = new_node(std::move(shape), std::move(data));
  node->op = std::move(op);
  const bool track = t_grad_enabled &&
                     std::any_of(parents.begin(), parents.end(),
                                 [](const Tensor& p) { return p.requires_grad(); });
  if (track) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

GradTape::GradTape(const Tensor& loss) : root_(loss.node()) {
  if (!root_) throw GradError("backward: undefined tensor");
  if (root_->data.size() != 1) {
    throw GradError("backward: loss must be a scalar, got shape " + shape_str(root_->shape));
  }
  if (!root_->requires_grad) {
    throw GradError("backward: loss does not depend on any tensor requiring a gradient");
  }
  // Iterative post-order DFS; reversing it gives a valid reverse-pass order.
  std::unordered_set<const detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  std::vector<detail::NodePtr> post;
  std::unordered_map<const detail::Node*, detail::NodePtr> owner;
  owner[root_.get()] = root_;
  stack.emplace_back(root_.get(), 0);
  seen.insert(root_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      const auto& parent = node->parents[next++];
      if (parent->requires_grad && seen.insert(parent.get()).second) {
        owner[parent.get()] = parent;
        stack.emplace_back(parent.get(), 0);
      }
    } else {
      post.push_back(owner[node]);
      stack.pop_back();
    }
  }
  order_.assign(post.rbegin(), post.rend());
  records_.reserve(order_.size());
  for (const auto& n : order_) {
    TapeRecord rec{n->id, {}, n->op};
    for (const auto& p : n->parents) rec.parent_ids.push_back(p->id);
    records_.push_back(std::move(rec));
  }
}

void GradTape::replay() {
  for (const auto& n : order_) {
    if (n->is_leaf() && !n->grad.empty()) {
      throw GradError("backward: leaf tensor " + std::to_string(n->id) +
                      " already holds a gradient; call zero_grad() before a second backward");
    }
  }
  for (const auto& n : order_) {
    if (!n->is_leaf()) n->grad.clear();
  }
  root_->grad.assign(1, 1.0);
  for (const auto& n : order_) {
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

void backward(const Tensor& loss) {
  GradTape tape(loss);
  tape.replay();
}

Tensor custom_node(const Tensor& forward_value, const std::vector<Tensor>& parents,
                   BackwardRule rule, std::string name) {
  std::vector<Shape> parent_shapes;
  for (const auto& p : parents) parent_shapes.push_back(p.shape());
  auto fn = [rule = std::move(rule), parent_shapes, name](detail::Node& self) {
    auto grads = rule(self.grad);
    if (grads.size() != self.parents.size()) {
      throw ShapeError(name + ": backward rule returned " + std::to_string(grads.size()) +
                       " gradients for " + std::to_string(self.parents.size()) + " parents");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
      auto& parent = *self.parents[i];
      if (grads[i].size() != parent.data.size()) {
        throw ShapeError(name + ": backward rule produced " + std::to_string(grads[i].size()) +
                         " values for parent of shape " + shape_str(parent_shapes[i]));
      }
      if (!parent.requires_grad) continue;
      auto g = parent.grad_buffer();
      for (std::size_t j = 0; j < g.size(); ++j) g[j] += grads[i][j];
    }
  };
  return detail::make_result(forward_value.shape(),
                             std::vector<double>(forward_value.data().begin(),
                                                 forward_value.data().end()),
                             parents, std::move(name), std::move(fn));
}

}  // namespace jscq
