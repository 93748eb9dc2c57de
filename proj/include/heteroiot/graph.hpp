#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "heteroiot/tensor.hpp"

namespace hiot {

/// Accumulates d(loss)/d(input_i) into grad_in[i]. Entries of grad_in are
/// empty for inputs that do not need a gradient.
using BackwardFn = std::function<void(std::span<const double> grad_out,
                                      std::span<const std::span<double>> grad_in)>;

/// Reverse-mode tape. Ops append nodes in forward order; backward walks them
/// in exact reverse. One graph per thread; see Graph::current().
class Graph {
 public:
  Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// The graph ops on this thread record into.
  static Graph& current();

  /// True when gradient recording is enabled and any input requires grad.
  bool should_record(std::initializer_list<const Tensor*> inputs) const;
  bool should_record(std::span<const Tensor> inputs) const;

  /// Appends a node producing `output` and marks output as requiring grad.
  void record(std::string_view op, std::vector<Tensor> inputs, Tensor& output,
              BackwardFn backward);

  /// Accumulates d(loss)/d(leaf) into every reachable leaf that requires grad.
  /// The tape is kept, so calling twice doubles leaf gradients.
  void backward(const Tensor& loss);

  /// Drops all nodes and their saved activations.
  void clear();

  std::size_t size() const noexcept { return nodes_.size(); }
  std::string_view op_name(std::size_t node) const { return nodes_.at(node).op; }
  /// Node indices visited by the most recent backward call, in visit order.
  const std::vector<std::size_t>& last_backward_order() const noexcept {
    return last_order_;
  }

  bool owns(const TensorImpl& t) const noexcept {
    return t.graph == this && t.generation == generation_;
  }

 private:
  struct Node {
    std::string op;
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::shared_ptr<TensorImpl> output;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::uint64_t generation_;
  std::vector<std::size_t> last_order_;
};

/// Redirects Graph::current() on this thread for the guard's lifetime.
class GraphScope {
 public:
  explicit GraphScope(Graph& g);
  ~GraphScope();
  GraphScope(const GraphScope&) = delete;
  GraphScope& operator=(const GraphScope&) = delete;

 private:
  Graph* previous_;
};

/// Disables recording on this thread for the guard's lifetime.
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

}  // namespace hiot
