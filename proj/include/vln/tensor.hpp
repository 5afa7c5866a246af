#ifndef VLN_TENSOR_HPP
#define VLN_TENSOR_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace vln {

// Dense row-major tensor of 64-bit floats. Rank 1 and 2 cover everything the
// model needs; rank 0 is represented as shape {1}.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::vector<double> d);

  static Tensor zeros(std::vector<std::size_t> s);
  static Tensor scalar(double v);
  static Tensor vec(std::vector<double> v);

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;
  std::string shape_str() const;
};

using NodeId = std::int32_t;

enum class Op : std::uint8_t {
  kInput,
  kMatMul,
  kAdd,
  kMul,
  kConcat,
  kTanh,
  kSigmoid,
  kSoftmax,
  kLog,
  kEmbed,
  kDropout,
  kScale,
  kSum,
  kMean,
  kTranspose,
  kReshape,
  kPick,
};

const char* op_name(Op op);

// Reverse-mode tape. Ops evaluate eagerly and append one record each, so the
// record order is topological by construction. backward() seeds the scalar
// loss with 1 and accumulates exact analytic adjoints into every node.
class Tape {
 public:
  NodeId input(Tensor value);

  // {m,n}x{n,p} -> {m,p} or {m,n}x{n} -> {m}
  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  // Elementwise product; shapes must match.
  NodeId mul(NodeId a, NodeId b);
  // Concatenation along the last axis; rank-1 parts or rank-2 parts with
  // equal leading extent.
  NodeId concat(const std::vector<NodeId>& parts);
  NodeId tanh(NodeId x);
  NodeId sigmoid(NodeId x);
  // Softmax over the last axis (per row for rank 2).
  NodeId softmax(NodeId x);
  NodeId log(NodeId x);
  // Row gather from a rank-2 table -> {rows.size(), cols}.
  NodeId embed(NodeId table, std::vector<int> rows);
  // Elementwise product with a fixed mask (inverted-dropout convention: the
  // caller bakes the 1/(1-p) scaling into the mask).
  NodeId dropout(NodeId x, std::vector<double> mask);
  NodeId scale(NodeId x, double factor);
  NodeId sum(NodeId x);   // -> {1}
  NodeId mean(NodeId x);  // -> {1}
  NodeId transpose(NodeId x);
  NodeId reshape(NodeId x, std::vector<std::size_t> shape);
  // Single element of a rank-1 tensor -> {1}.
  NodeId pick(NodeId x, std::size_t index);

  const Tensor& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  // Valid after backward().
  const Tensor& grad(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

  std::size_t size() const { return nodes_.size(); }

  // loss must be scalar (numel == 1); grads from any previous backward pass
  // are discarded.
  void backward(NodeId loss);

  // First node whose value holds a NaN/Inf, as "op#id", empty if none.
  // Used for divergence diagnostics.
  std::string first_non_finite() const;

 private:
  struct Node {
    Op op;
    std::vector<NodeId> inputs;
    Tensor value;
    Tensor grad;
    double factor = 0.0;            // kScale
    std::size_t index = 0;          // kPick
    std::vector<int> rows;          // kEmbed
    std::vector<double> mask;       // kDropout
  };

  NodeId push(Node node);
  Node& node(NodeId id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(NodeId id) const { return nodes_[static_cast<std::size_t>(id)]; }

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Gradient checking

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;
  bool pass = true;
};

// Closure contract: deterministic in params (fixed inputs, fixed dropout
// masks); returns the scalar loss and, when grads != nullptr, the analytic
// d(loss)/d(param) for every parameter name.
using LossClosure = std::function<double(const std::map<std::string, Tensor>& params,
                                         std::map<std::string, Tensor>* grads)>;

// Compares the closure's analytic gradients against central finite
// differences entry by entry. Throws if two forward passes disagree bitwise
// (non-deterministic closure).
GradCheckReport grad_check(const LossClosure& closure,
                           const std::map<std::string, Tensor>& params,
                           double tolerance, double step = 1e-5);

double relative_error(double a, double b);

}  // namespace vln

#endif  // VLN_TENSOR_HPP
