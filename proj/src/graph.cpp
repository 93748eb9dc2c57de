#include "heteroiot/graph.hpp"

#include <atomic>

#include "heteroiot/errors.hpp"

namespace hiot {

namespace {

std::atomic<std::uint64_t> next_generation{1};

thread_local Graph* active_graph = nullptr;
thread_local bool recording_enabled = true;

}  // namespace

Graph::Graph() : generation_(next_generation.fetch_add(1)) {}

Graph& Graph::current() {
  if (active_graph) return *active_graph;
  thread_local Graph default_graph;
  return default_graph;
}

bool grad_enabled() { return recording_enabled; }

bool Graph::should_record(std::initializer_list<const Tensor*> inputs) const {
  if (!recording_enabled) return false;
  for (const Tensor* t : inputs)
    if (t && t->defined() && t->requires_grad()) return true;
  return false;
}

bool Graph::should_record(std::span<const Tensor> inputs) const {
  if (!recording_enabled) return false;
  for (const Tensor& t : inputs)
    if (t.defined() && t.requires_grad()) return true;
  return false;
}

void Graph::record(std::string_view op, std::vector<Tensor> inputs, Tensor& output,
                   BackwardFn backward) {
  Node node;
  node.op = std::string(op);
  node.inputs.reserve(inputs.size());
  for (auto& t : inputs) node.inputs.push_back(t.shared_impl());
  node.output = output.shared_impl();
  node.backward = std::move(backward);

  TensorImpl& out = *output.impl();
  out.requires_grad = true;
  out.graph = this;
  out.generation = generation_;
  out.node = nodes_.size();
  nodes_.push_back(std::move(node));
}

void Graph::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw GraphError("backward requires a scalar loss, got shape " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  if (!owns(*loss.impl()))
    throw GraphError("backward called on a tensor with no recorded graph");

  const std::size_t root = loss.impl()->node;
  std::vector<Buffer> scratch(root + 1);
  scratch[root].assign(1, 1.0);
  last_order_.clear();

  std::vector<std::span<double>> grad_in;
  for (std::size_t i = root + 1; i-- > 0;) {
    if (scratch[i].empty()) continue;
    Node& node = nodes_[i];
    last_order_.push_back(i);

    grad_in.assign(node.inputs.size(), std::span<double>{});
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      TensorImpl& in = *node.inputs[k];
      if (owns(in)) {
        auto& buf = scratch[in.node];
        if (buf.empty()) buf.assign(in.values.size(), 0.0);
        grad_in[k] = buf;
      } else if (in.requires_grad) {
        if (in.grad.empty()) in.grad.assign(in.values.size(), 0.0);
        grad_in[k] = in.grad;
      }
    }
    node.backward(scratch[i], grad_in);
    Buffer().swap(scratch[i]);
  }
}

void Graph::clear() {
  nodes_.clear();
  last_order_.clear();
  generation_ = next_generation.fetch_add(1);
}

GraphScope::GraphScope(Graph& g) : previous_(active_graph) { active_graph = &g; }
GraphScope::~GraphScope() { active_graph = previous_; }

NoGradGuard::NoGradGuard() : previous_(recording_enabled) { recording_enabled = false; }
NoGradGuard::~NoGradGuard() { recording_enabled = previous_; }

}  // namespace hiot
