#include "vln/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace vln {

namespace {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  throw std::invalid_argument(std::string(op) + ": " + detail);
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
  if (shape_numel(shape) != data.size()) {
    throw std::invalid_argument("Tensor: value count " + std::to_string(data.size()) +
                                " does not match shape " + shape_str());
  }
}

Tensor Tensor::zeros(std::vector<std::size_t> s) {
  std::size_t n = shape_numel(s);
  return Tensor(std::move(s), std::vector<double>(n, 0.0));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::vec(std::vector<double> v) {
  std::vector<std::size_t> s{v.size()};
  return Tensor(std::move(s), std::move(v));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw std::invalid_argument("Tensor::rows: rank-2 required, got " + shape_str());
  return shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw std::invalid_argument("Tensor::cols: rank-2 required, got " + shape_str());
  return shape[1];
}

bool Tensor::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_str() const {
  std::string out = "{";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "}";
}

const char* op_name(Op op) {
  switch (op) {
    case Op::kInput: return "input";
    case Op::kMatMul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kMul: return "mul";
    case Op::kConcat: return "concat";
    case Op::kTanh: return "tanh";
    case Op::kSigmoid: return "sigmoid";
    case Op::kSoftmax: return "softmax";
    case Op::kLog: return "log";
    case Op::kEmbed: return "embed";
    case Op::kDropout: return "dropout";
    case Op::kScale: return "scale";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kTranspose: return "transpose";
    case Op::kReshape: return "reshape";
    case Op::kPick: return "pick";
  }
  return "?";
}

NodeId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::input(Tensor value) {
  Node n;
  n.op = Op::kInput;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (av.rank() != 2) shape_error("matmul", "left operand must be rank-2, got " + av.shape_str());
  Node n;
  n.op = Op::kMatMul;
  n.inputs = {a, b};
  const std::size_t m = av.shape[0];
  const std::size_t k = av.shape[1];
  if (bv.rank() == 1) {
    if (bv.shape[0] != k)
      shape_error("matmul", av.shape_str() + " x " + bv.shape_str());
    n.value = Tensor::zeros({m});
    for (std::size_t i = 0; i < m; ++i) {
      double acc = 0.0;
      const double* row = av.data.data() + i * k;
      for (std::size_t j = 0; j < k; ++j) acc += row[j] * bv.data[j];
      n.value.data[i] = acc;
    }
  } else if (bv.rank() == 2) {
    if (bv.shape[0] != k)
      shape_error("matmul", av.shape_str() + " x " + bv.shape_str());
    const std::size_t p = bv.shape[1];
    n.value = Tensor::zeros({m, p});
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = av.data.data() + i * k;
      double* orow = n.value.data.data() + i * p;
      for (std::size_t j = 0; j < k; ++j) {
        const double aij = arow[j];
        const double* brow = bv.data.data() + j * p;
        for (std::size_t c = 0; c < p; ++c) orow[c] += aij * brow[c];
      }
    }
  } else {
    shape_error("matmul", "right operand must be rank-1 or rank-2, got " + bv.shape_str());
  }
  return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!av.same_shape(bv)) shape_error("add", av.shape_str() + " vs " + bv.shape_str());
  Node n;
  n.op = Op::kAdd;
  n.inputs = {a, b};
  n.value = av;
  for (std::size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] += bv.data[i];
  return push(std::move(n));
}

NodeId Tape::mul(NodeId a, NodeId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!av.same_shape(bv)) shape_error("mul", av.shape_str() + " vs " + bv.shape_str());
  Node n;
  n.op = Op::kMul;
  n.inputs = {a, b};
  n.value = av;
  for (std::size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] *= bv.data[i];
  return push(std::move(n));
}

NodeId Tape::concat(const std::vector<NodeId>& parts) {
  if (parts.empty()) shape_error("concat", "no inputs");
  const std::size_t rank = value(parts[0]).rank();
  Node n;
  n.op = Op::kConcat;
  n.inputs = parts;
  if (rank == 1) {
    std::size_t total = 0;
    for (NodeId p : parts) {
      const Tensor& pv = value(p);
      if (pv.rank() != 1) shape_error("concat", "mixed ranks: " + pv.shape_str());
      total += pv.shape[0];
    }
    n.value = Tensor::zeros({total});
    std::size_t off = 0;
    for (NodeId p : parts) {
      const Tensor& pv = value(p);
      std::copy(pv.data.begin(), pv.data.end(), n.value.data.begin() + off);
      off += pv.data.size();
    }
  } else if (rank == 2) {
    const std::size_t r = value(parts[0]).shape[0];
    std::size_t total_cols = 0;
    for (NodeId p : parts) {
      const Tensor& pv = value(p);
      if (pv.rank() != 2 || pv.shape[0] != r)
        shape_error("concat", "leading extents differ: " + pv.shape_str() + " vs rows=" + std::to_string(r));
      total_cols += pv.shape[1];
    }
    n.value = Tensor::zeros({r, total_cols});
    std::size_t col_off = 0;
    for (NodeId p : parts) {
      const Tensor& pv = value(p);
      const std::size_t c = pv.shape[1];
      for (std::size_t i = 0; i < r; ++i)
        std::copy(pv.data.begin() + i * c, pv.data.begin() + (i + 1) * c,
                  n.value.data.begin() + i * total_cols + col_off);
      col_off += c;
    }
  } else {
    shape_error("concat", "rank must be 1 or 2");
  }
  return push(std::move(n));
}

NodeId Tape::tanh(NodeId x) {
  Node n;
  n.op = Op::kTanh;
  n.inputs = {x};
  n.value = value(x);
  for (double& v : n.value.data) v = std::tanh(v);
  return push(std::move(n));
}

NodeId Tape::sigmoid(NodeId x) {
  Node n;
  n.op = Op::kSigmoid;
  n.inputs = {x};
  n.value = value(x);
  for (double& v : n.value.data) v = 1.0 / (1.0 + std::exp(-v));
  return push(std::move(n));
}

NodeId Tape::softmax(NodeId x) {
  const Tensor& xv = value(x);
  if (xv.rank() != 1 && xv.rank() != 2) shape_error("softmax", "rank must be 1 or 2");
  Node n;
  n.op = Op::kSoftmax;
  n.inputs = {x};
  n.value = xv;
  const std::size_t cols = xv.shape.back();
  const std::size_t rows = xv.numel() / cols;
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = n.value.data.data() + r * cols;
    const double mx = *std::max_element(row, row + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      row[c] = std::exp(row[c] - mx);
      total += row[c];
    }
    for (std::size_t c = 0; c < cols; ++c) row[c] /= total;
  }
  return push(std::move(n));
}

NodeId Tape::log(NodeId x) {
  Node n;
  n.op = Op::kLog;
  n.inputs = {x};
  n.value = value(x);
  for (double& v : n.value.data) v = std::log(v);
  return push(std::move(n));
}

NodeId Tape::embed(NodeId table, std::vector<int> rows) {
  const Tensor& tv = value(table);
  if (tv.rank() != 2) shape_error("embed", "table must be rank-2, got " + tv.shape_str());
  if (rows.empty()) shape_error("embed", "no rows requested");
  const std::size_t d = tv.shape[1];
  Node n;
  n.op = Op::kEmbed;
  n.inputs = {table};
  n.value = Tensor::zeros({rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int r = rows[i];
    if (r < 0 || static_cast<std::size_t>(r) >= tv.shape[0])
      shape_error("embed", "row " + std::to_string(r) + " outside table " + tv.shape_str());
    std::copy(tv.data.begin() + r * d, tv.data.begin() + (r + 1) * d, n.value.data.begin() + i * d);
  }
  n.rows = std::move(rows);
  return push(std::move(n));
}

NodeId Tape::dropout(NodeId x, std::vector<double> mask) {
  const Tensor& xv = value(x);
  if (mask.size() != xv.numel())
    shape_error("dropout", "mask size " + std::to_string(mask.size()) + " vs " + xv.shape_str());
  Node n;
  n.op = Op::kDropout;
  n.inputs = {x};
  n.value = xv;
  for (std::size_t i = 0; i < mask.size(); ++i) n.value.data[i] *= mask[i];
  n.mask = std::move(mask);
  return push(std::move(n));
}

NodeId Tape::scale(NodeId x, double factor) {
  Node n;
  n.op = Op::kScale;
  n.inputs = {x};
  n.value = value(x);
  n.factor = factor;
  for (double& v : n.value.data) v *= factor;
  return push(std::move(n));
}

NodeId Tape::sum(NodeId x) {
  Node n;
  n.op = Op::kSum;
  n.inputs = {x};
  const Tensor& xv = value(x);
  n.value = Tensor::scalar(std::accumulate(xv.data.begin(), xv.data.end(), 0.0));
  return push(std::move(n));
}

NodeId Tape::mean(NodeId x) {
  Node n;
  n.op = Op::kMean;
  n.inputs = {x};
  const Tensor& xv = value(x);
  n.value = Tensor::scalar(std::accumulate(xv.data.begin(), xv.data.end(), 0.0) /
                           static_cast<double>(xv.numel()));
  return push(std::move(n));
}

NodeId Tape::transpose(NodeId x) {
  const Tensor& xv = value(x);
  if (xv.rank() != 2) shape_error("transpose", "rank-2 required, got " + xv.shape_str());
  Node n;
  n.op = Op::kTranspose;
  n.inputs = {x};
  const std::size_t r = xv.shape[0];
  const std::size_t c = xv.shape[1];
  n.value = Tensor::zeros({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) n.value.data[j * r + i] = xv.data[i * c + j];
  return push(std::move(n));
}

NodeId Tape::reshape(NodeId x, std::vector<std::size_t> shape) {
  const Tensor& xv = value(x);
  if (shape_numel(shape) != xv.numel())
    shape_error("reshape", xv.shape_str() + " -> incompatible target");
  Node n;
  n.op = Op::kReshape;
  n.inputs = {x};
  n.value = Tensor(std::move(shape), xv.data);
  return push(std::move(n));
}

NodeId Tape::pick(NodeId x, std::size_t index) {
  const Tensor& xv = value(x);
  if (xv.rank() != 1) shape_error("pick", "rank-1 required, got " + xv.shape_str());
  if (index >= xv.shape[0]) shape_error("pick", "index out of range");
  Node n;
  n.op = Op::kPick;
  n.inputs = {x};
  n.index = index;
  n.value = Tensor::scalar(xv.data[index]);
  return push(std::move(n));
}

void Tape::backward(NodeId loss) {
  if (value(loss).numel() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got " + value(loss).shape_str());

  for (Node& n : nodes_) {
    n.grad.shape = n.value.shape;
    n.grad.data.assign(n.value.data.size(), 0.0);
  }
  node(loss).grad.data[0] = 1.0;

  for (NodeId id = static_cast<NodeId>(nodes_.size()) - 1; id >= 0; --id) {
    Node& n = node(id);
    const Tensor& g = n.grad;
    switch (n.op) {
      case Op::kInput:
        break;
      case Op::kMatMul: {
        Node& a = node(n.inputs[0]);
        Node& b = node(n.inputs[1]);
        const std::size_t m = a.value.shape[0];
        const std::size_t k = a.value.shape[1];
        if (b.value.rank() == 1) {
          // y = A x : dA += g x^T, dx += A^T g
          for (std::size_t i = 0; i < m; ++i) {
            const double gi = g.data[i];
            if (gi == 0.0) continue;
            const double* arow = a.value.data.data() + i * k;
            double* garow = a.grad.data.data() + i * k;
            for (std::size_t j = 0; j < k; ++j) {
              garow[j] += gi * b.value.data[j];
              b.grad.data[j] += gi * arow[j];
            }
          }
        } else {
          const std::size_t p = b.value.shape[1];
          // dA += g B^T, dB += A^T g
          for (std::size_t i = 0; i < m; ++i) {
            const double* grow = g.data.data() + i * p;
            const double* arow = a.value.data.data() + i * k;
            double* garow = a.grad.data.data() + i * k;
            for (std::size_t j = 0; j < k; ++j) {
              const double* brow = b.value.data.data() + j * p;
              double* gbrow = b.grad.data.data() + j * p;
              double acc = 0.0;
              const double aij = arow[j];
              for (std::size_t c = 0; c < p; ++c) {
                acc += grow[c] * brow[c];
                gbrow[c] += aij * grow[c];
              }
              garow[j] += acc;
            }
          }
        }
        break;
      }
      case Op::kAdd: {
        for (NodeId in : n.inputs) {
          Node& a = node(in);
          for (std::size_t i = 0; i < g.data.size(); ++i) a.grad.data[i] += g.data[i];
        }
        break;
      }
      case Op::kMul: {
        Node& a = node(n.inputs[0]);
        Node& b = node(n.inputs[1]);
        for (std::size_t i = 0; i < g.data.size(); ++i) {
          a.grad.data[i] += g.data[i] * b.value.data[i];
          b.grad.data[i] += g.data[i] * a.value.data[i];
        }
        break;
      }
      case Op::kConcat: {
        if (n.value.rank() == 1) {
          std::size_t off = 0;
          for (NodeId in : n.inputs) {
            Node& a = node(in);
            for (std::size_t i = 0; i < a.value.data.size(); ++i) a.grad.data[i] += g.data[off + i];
            off += a.value.data.size();
          }
        } else {
          const std::size_t rows = n.value.shape[0];
          const std::size_t total_cols = n.value.shape[1];
          std::size_t col_off = 0;
          for (NodeId in : n.inputs) {
            Node& a = node(in);
            const std::size_t c = a.value.shape[1];
            for (std::size_t i = 0; i < rows; ++i)
              for (std::size_t j = 0; j < c; ++j)
                a.grad.data[i * c + j] += g.data[i * total_cols + col_off + j];
            col_off += c;
          }
        }
        break;
      }
      case Op::kTanh: {
        Node& a = node(n.inputs[0]);
        for (std::size_t i = 0; i < g.data.size(); ++i) {
          const double y = n.value.data[i];
          a.grad.data[i] += g.data[i] * (1.0 - y * y);
        }
        break;
      }
      case Op::kSigmoid: {
        Node& a = node(n.inputs[0]);
        for (std::size_t i = 0; i < g.data.size(); ++i) {
          const double y = n.value.data[i];
          a.grad.data[i] += g.data[i] * y * (1.0 - y);
        }
        break;
      }
      case Op::kSoftmax: {
        Node& a = node(n.inputs[0]);
        const std::size_t cols = n.value.shape.back();
        const std::size_t rows = n.value.numel() / cols;
        for (std::size_t r = 0; r < rows; ++r) {
          const double* y = n.value.data.data() + r * cols;
          const double* gy = g.data.data() + r * cols;
          double dot = 0.0;
          for (std::size_t c = 0; c < cols; ++c) dot += gy[c] * y[c];
          double* ga = a.grad.data.data() + r * cols;
          for (std::size_t c = 0; c < cols; ++c) ga[c] += y[c] * (gy[c] - dot);
        }
        break;
      }
      case Op::kLog: {
        Node& a = node(n.inputs[0]);
        for (std::size_t i = 0; i < g.data.size(); ++i)
          a.grad.data[i] += g.data[i] / a.value.data[i];
        break;
      }
      case Op::kEmbed: {
        Node& t = node(n.inputs[0]);
        const std::size_t d = t.value.shape[1];
        for (std::size_t i = 0; i < n.rows.size(); ++i) {
          double* trow = t.grad.data.data() + static_cast<std::size_t>(n.rows[i]) * d;
          const double* grow = g.data.data() + i * d;
          for (std::size_t c = 0; c < d; ++c) trow[c] += grow[c];
        }
        break;
      }
      case Op::kDropout: {
        Node& a = node(n.inputs[0]);
        for (std::size_t i = 0; i < g.data.size(); ++i) a.grad.data[i] += g.data[i] * n.mask[i];
        break;
      }
      case Op::kScale: {
        Node& a = node(n.inputs[0]);
        for (std::size_t i = 0; i < g.data.size(); ++i) a.grad.data[i] += g.data[i] * n.factor;
        break;
      }
      case Op::kSum: {
        Node& a = node(n.inputs[0]);
        const double g0 = g.data[0];
        for (double& v : a.grad.data) v += g0;
        break;
      }
      case Op::kMean: {
        Node& a = node(n.inputs[0]);
        const double g0 = g.data[0] / static_cast<double>(a.value.numel());
        for (double& v : a.grad.data) v += g0;
        break;
      }
      case Op::kTranspose: {
        Node& a = node(n.inputs[0]);
        const std::size_t r = a.value.shape[0];
        const std::size_t c = a.value.shape[1];
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) a.grad.data[i * c + j] += g.data[j * r + i];
        break;
      }
      case Op::kReshape: {
        Node& a = node(n.inputs[0]);
        for (std::size_t i = 0; i < g.data.size(); ++i) a.grad.data[i] += g.data[i];
        break;
      }
      case Op::kPick: {
        Node& a = node(n.inputs[0]);
        a.grad.data[n.index] += g.data[0];
        break;
      }
    }
  }
}

std::string Tape::first_non_finite() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].value.all_finite())
      return std::string(op_name(nodes_[i].op)) + "#" + std::to_string(i);
  }
  return {};
}

double relative_error(double a, double b) {
  const double diff = std::abs(a - b);
  const double scale = std::max({std::abs(a), std::abs(b), 1e-6});
  return diff / scale;
}

GradCheckReport grad_check(const LossClosure& closure,
                           const std::map<std::string, Tensor>& params,
                           double tolerance, double step) {
  GradCheckReport report;
  report.tolerance = tolerance;

  std::map<std::string, Tensor> analytic;
  const double loss0 = closure(params, &analytic);
  const double loss1 = closure(params, nullptr);
  if (loss0 != loss1)
    throw std::runtime_error("grad_check: closure is non-deterministic (" +
                             std::to_string(loss0) + " vs " + std::to_string(loss1) + ")");

  std::map<std::string, Tensor> work = params;
  for (const auto& [name, tensor] : params) {
    auto it = analytic.find(name);
    if (it == analytic.end())
      throw std::runtime_error("grad_check: closure produced no gradient for " + name);

    GradCheckEntry entry;
    entry.name = name;
    Tensor& slot = work.at(name);
    for (std::size_t i = 0; i < tensor.numel(); ++i) {
      const double saved = slot.data[i];
      slot.data[i] = saved + step;
      const double up = closure(work, nullptr);
      slot.data[i] = saved - step;
      const double down = closure(work, nullptr);
      slot.data[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      entry.max_rel_err = std::max(entry.max_rel_err, relative_error(it->second.data[i], numeric));
    }
    entry.pass = entry.max_rel_err < tolerance;
    report.pass = report.pass && entry.pass;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace vln
