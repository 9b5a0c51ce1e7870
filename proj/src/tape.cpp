#include "seqgrad/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace seqgrad {
namespace {

[[noreturn]] void shape_error(Op op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op_name(op)) + ": incompatible shapes " + a.str() +
                              " and " + b.str());
}

[[noreturn]] void shape_error(Op op, const Shape& a) {
  throw std::invalid_argument(std::string(op_name(op)) + ": unsupported shape " + a.str());
}

double sigmoid_of(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor& slot_for(std::vector<Tensor>& grads, std::uint32_t i, const Shape& shape) {
  if (grads[i].empty()) grads[i] = Tensor(shape, 0.0);
  return grads[i];
}

void accumulate(std::vector<Tensor>& grads, std::uint32_t i, const Shape& shape, const Tensor& g) {
  slot_for(grads, i, shape).axpy(1.0, g);
}

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kConstant: return "constant";
    case Op::kMatMul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kScale: return "scale";
    case Op::kTanh: return "tanh";
    case Op::kSigmoid: return "sigmoid";
    case Op::kLogSoftmax: return "softmax_logsumexp";
    case Op::kGather: return "gather_logprob";
    case Op::kRow: return "row";
    case Op::kSum: return "sum";
    case Op::kWeightedSum: return "weighted_sum";
  }
  return "unknown";
}

Gradients::Gradients(const Tape& tape, std::vector<Tensor> grads, NodeId root)
    : tape_(&tape), grads_(std::move(grads)), zeros_(grads_.size()), root_(root) {}

const Tensor& Gradients::of(NodeId id) const {
  if (id.index >= grads_.size()) {
    throw std::out_of_range("gradient requested for node " + std::to_string(id.index) +
                            " recorded after the root");
  }
  if (!grads_[id.index].empty()) return grads_[id.index];
  Tensor& z = zeros_[id.index];
  if (z.empty()) z = Tensor(tape_->value(id).shape(), 0.0);
  return z;
}

const Tape::Node& Tape::node(NodeId id) const {
  check(id);
  return nodes_[id.index];
}

void Tape::check(NodeId id) const {
  if (id.index >= nodes_.size()) {
    throw std::out_of_range("node id " + std::to_string(id.index) + " not on tape");
  }
}

NodeId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

NodeId Tape::leaf(Tensor value) {
  return push(Node{.op = Op::kLeaf, .needs_grad = true, .value = std::move(value)});
}

NodeId Tape::constant(Tensor value) {
  return push(Node{.op = Op::kConstant, .needs_grad = false, .value = std::move(value)});
}

NodeId Tape::matmul(NodeId ia, NodeId ib) {
  const Node& a = node(ia);
  const Node& b = node(ib);
  const Shape& sa = a.value.shape();
  const Shape& sb = b.value.shape();
  if (!sa.is_matrix() || sa[1] != sb[0]) shape_error(Op::kMatMul, sa, sb);
  const std::size_t m = sa[0], k = sa[1];
  const auto A = a.value.data();
  const auto B = b.value.data();
  Tensor out;
  if (sb.is_vector()) {
    out = Tensor(Shape{m}, 0.0);
    auto o = out.data();
    for (std::size_t i = 0; i < m; ++i) {
      double acc = 0.0;
      const double* row = A.data() + i * k;
      for (std::size_t j = 0; j < k; ++j) acc += row[j] * B[j];
      o[i] = acc;
    }
  } else {
    const std::size_t n = sb[1];
    out = Tensor(Shape{m, n}, 0.0);
    auto o = out.data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        const double aij = A[i * k + j];
        for (std::size_t c = 0; c < n; ++c) o[i * n + c] += aij * B[j * n + c];
      }
  }
  const bool ng = a.needs_grad || b.needs_grad;
  return push(Node{.op = Op::kMatMul, .needs_grad = ng, .a = ia.index, .b = ib.index, .value = std::move(out)});
}

NodeId Tape::add(NodeId ia, NodeId ib) {
  const Node& a = node(ia);
  const Node& b = node(ib);
  const Shape& sa = a.value.shape();
  const Shape& sb = b.value.shape();
  Tensor out = a.value;
  if (sa == sb) {
    out.axpy(1.0, b.value);
  } else if (sa.is_matrix() && sb.is_vector() && sb[0] == sa[1]) {
    const std::size_t m = sa[0], n = sa[1];
    auto o = out.data();
    const auto v = b.value.data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) o[i * n + j] += v[j];
  } else {
    shape_error(Op::kAdd, sa, sb);
  }
  const bool ng = a.needs_grad || b.needs_grad;
  return push(Node{.op = Op::kAdd, .needs_grad = ng, .a = ia.index, .b = ib.index, .value = std::move(out)});
}

NodeId Tape::sub(NodeId ia, NodeId ib) {
  const Node& a = node(ia);
  const Node& b = node(ib);
  if (!(a.value.shape() == b.value.shape())) shape_error(Op::kSub, a.value.shape(), b.value.shape());
  Tensor out = a.value;
  out.axpy(-1.0, b.value);
  const bool ng = a.needs_grad || b.needs_grad;
  return push(Node{.op = Op::kSub, .needs_grad = ng, .a = ia.index, .b = ib.index, .value = std::move(out)});
}

NodeId Tape::mul(NodeId ia, NodeId ib) {
  const Node& a = node(ia);
  const Node& b = node(ib);
  if (!(a.value.shape() == b.value.shape())) shape_error(Op::kMul, a.value.shape(), b.value.shape());
  Tensor out = a.value;
  auto o = out.data();
  const auto v = b.value.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= v[i];
  const bool ng = a.needs_grad || b.needs_grad;
  return push(Node{.op = Op::kMul, .needs_grad = ng, .a = ia.index, .b = ib.index, .value = std::move(out)});
}

NodeId Tape::scale(NodeId ia, double factor) {
  const Node& a = node(ia);
  Tensor out = a.value;
  for (double& x : out.data()) x *= factor;
  return push(Node{.op = Op::kScale, .needs_grad = a.needs_grad, .a = ia.index, .factor = factor,
                   .value = std::move(out)});
}

NodeId Tape::tanh(NodeId ia) {
  const Node& a = node(ia);
  Tensor out = a.value;
  for (double& x : out.data()) x = std::tanh(x);
  return push(Node{.op = Op::kTanh, .needs_grad = a.needs_grad, .a = ia.index, .value = std::move(out)});
}

NodeId Tape::sigmoid(NodeId ia) {
  const Node& a = node(ia);
  Tensor out = a.value;
  for (double& x : out.data()) x = sigmoid_of(x);
  return push(Node{.op = Op::kSigmoid, .needs_grad = a.needs_grad, .a = ia.index, .value = std::move(out)});
}

NodeId Tape::log_softmax(NodeId ia) {
  const Node& a = node(ia);
  if (!a.value.shape().is_vector()) shape_error(Op::kLogSoftmax, a.value.shape());
  Tensor out = a.value;
  auto o = out.data();
  const double mx = *std::max_element(o.begin(), o.end());
  double s = 0.0;
  for (double x : o) s += std::exp(x - mx);
  const double log_s = std::log(s);
  for (double& x : o) x = (x - mx) - log_s;
  return push(Node{.op = Op::kLogSoftmax, .needs_grad = a.needs_grad, .a = ia.index, .value = std::move(out)});
}

NodeId Tape::gather(NodeId ia, std::size_t index) {
  const Node& a = node(ia);
  if (!a.value.shape().is_vector() || index >= a.value.size()) {
    throw std::invalid_argument("gather_logprob: index " + std::to_string(index) +
                                " out of range for shape " + a.value.shape().str());
  }
  Tensor out = Tensor::scalar(a.value[index]);
  return push(Node{.op = Op::kGather, .needs_grad = a.needs_grad, .a = ia.index, .index = index,
                   .value = std::move(out)});
}

NodeId Tape::row(NodeId ia, std::size_t index) {
  const Node& a = node(ia);
  const Shape& s = a.value.shape();
  if (!s.is_matrix() || index >= s[0]) {
    throw std::invalid_argument("row: index " + std::to_string(index) + " out of range for shape " +
                                s.str());
  }
  const auto d = a.value.data();
  std::vector<double> r(d.begin() + index * s[1], d.begin() + (index + 1) * s[1]);
  return push(Node{.op = Op::kRow, .needs_grad = a.needs_grad, .a = ia.index, .index = index,
                   .value = Tensor::vector(std::move(r))});
}

NodeId Tape::sum(NodeId ia) {
  const Node& a = node(ia);
  double s = 0.0;
  for (double x : a.value.data()) s += x;
  return push(Node{.op = Op::kSum, .needs_grad = a.needs_grad, .a = ia.index, .value = Tensor::scalar(s)});
}

NodeId Tape::weighted_sum(std::span<const NodeId> scalars, std::span<const double> weights) {
  if (scalars.size() != weights.size()) {
    throw std::invalid_argument("weighted_sum: " + std::to_string(scalars.size()) + " inputs but " +
                                std::to_string(weights.size()) + " weights");
  }
  Node n{.op = Op::kWeightedSum, .needs_grad = false};
  double s = 0.0;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    const Node& in = node(scalars[i]);
    if (!in.value.shape().is_scalar()) shape_error(Op::kWeightedSum, in.value.shape());
    s += weights[i] * in.value[0];
    n.needs_grad = n.needs_grad || in.needs_grad;
    n.many.push_back(scalars[i].index);
  }
  n.weights.assign(weights.begin(), weights.end());
  n.value = Tensor::scalar(s);
  return push(std::move(n));
}

Gradients Tape::backward(NodeId root) const {
  const Node& r = node(root);
  if (!r.value.shape().is_scalar()) {
    throw std::invalid_argument("backward: root must be scalar, got shape " + r.value.shape().str());
  }
  std::vector<Tensor> g(root.index + 1);
  g[root.index] = Tensor::scalar(1.0);

  for (std::uint32_t i = root.index + 1; i-- > 0;) {
    if (g[i].empty()) continue;
    const Node& n = nodes_[i];
    if (!n.needs_grad) continue;
    const Tensor& gi = g[i];
    const auto go = gi.data();
    switch (n.op) {
      case Op::kLeaf:
      case Op::kConstant:
        break;
      case Op::kMatMul: {
        const Node& a = nodes_[n.a];
        const Node& b = nodes_[n.b];
        const std::size_t m = a.value.shape()[0], k = a.value.shape()[1];
        const auto A = a.value.data();
        const auto B = b.value.data();
        const std::size_t cols = b.value.shape().is_vector() ? 1 : b.value.shape()[1];
        if (a.needs_grad) {
          auto dA = slot_for(g, n.a, a.value.shape()).data();
          for (std::size_t i2 = 0; i2 < m; ++i2)
            for (std::size_t j = 0; j < k; ++j) {
              double acc = 0.0;
              for (std::size_t c = 0; c < cols; ++c) acc += go[i2 * cols + c] * B[j * cols + c];
              dA[i2 * k + j] += acc;
            }
        }
        if (b.needs_grad) {
          auto dB = slot_for(g, n.b, b.value.shape()).data();
          for (std::size_t i2 = 0; i2 < m; ++i2)
            for (std::size_t j = 0; j < k; ++j) {
              const double aij = A[i2 * k + j];
              for (std::size_t c = 0; c < cols; ++c) dB[j * cols + c] += aij * go[i2 * cols + c];
            }
        }
        break;
      }
      case Op::kAdd: {
        const Node& a = nodes_[n.a];
        const Node& b = nodes_[n.b];
        if (a.needs_grad) accumulate(g, n.a, a.value.shape(), gi);
        if (b.needs_grad) {
          if (b.value.shape() == gi.shape()) {
            accumulate(g, n.b, b.value.shape(), gi);
          } else {
            auto db = slot_for(g, n.b, b.value.shape()).data();
            const std::size_t cols = db.size();
            for (std::size_t j = 0; j < go.size(); ++j) db[j % cols] += go[j];
          }
        }
        break;
      }
      case Op::kSub: {
        const Node& a = nodes_[n.a];
        const Node& b = nodes_[n.b];
        if (a.needs_grad) accumulate(g, n.a, a.value.shape(), gi);
        if (b.needs_grad) slot_for(g, n.b, b.value.shape()).axpy(-1.0, gi);
        break;
      }
      case Op::kMul: {
        const Node& a = nodes_[n.a];
        const Node& b = nodes_[n.b];
        if (a.needs_grad) {
          auto da = slot_for(g, n.a, a.value.shape()).data();
          const auto bv = b.value.data();
          for (std::size_t j = 0; j < da.size(); ++j) da[j] += go[j] * bv[j];
        }
        if (b.needs_grad) {
          auto db = slot_for(g, n.b, b.value.shape()).data();
          const auto av = a.value.data();
          for (std::size_t j = 0; j < db.size(); ++j) db[j] += go[j] * av[j];
        }
        break;
      }
      case Op::kScale:
        slot_for(g, n.a, nodes_[n.a].value.shape()).axpy(n.factor, gi);
        break;
      case Op::kTanh: {
        auto da = slot_for(g, n.a, n.value.shape()).data();
        const auto y = n.value.data();
        for (std::size_t j = 0; j < da.size(); ++j) da[j] += go[j] * (1.0 - y[j] * y[j]);
        break;
      }
      case Op::kSigmoid: {
        auto da = slot_for(g, n.a, n.value.shape()).data();
        const auto y = n.value.data();
        for (std::size_t j = 0; j < da.size(); ++j) da[j] += go[j] * y[j] * (1.0 - y[j]);
        break;
      }
      case Op::kLogSoftmax: {
        auto da = slot_for(g, n.a, n.value.shape()).data();
        const auto y = n.value.data();
        double total = 0.0;
        for (double v : go) total += v;
        for (std::size_t j = 0; j < da.size(); ++j) da[j] += go[j] - std::exp(y[j]) * total;
        break;
      }
      case Op::kGather:
        slot_for(g, n.a, nodes_[n.a].value.shape())[n.index] += go[0];
        break;
      case Op::kRow: {
        const Shape& s = nodes_[n.a].value.shape();
        auto da = slot_for(g, n.a, s).data();
        for (std::size_t j = 0; j < s[1]; ++j) da[n.index * s[1] + j] += go[j];
        break;
      }
      case Op::kSum: {
        auto da = slot_for(g, n.a, nodes_[n.a].value.shape()).data();
        for (double& v : da) v += go[0];
        break;
      }
      case Op::kWeightedSum:
        for (std::size_t j = 0; j < n.many.size(); ++j) {
          const std::uint32_t in = n.many[j];
          if (!nodes_[in].needs_grad) continue;
          slot_for(g, in, nodes_[in].value.shape())[0] += n.weights[j] * go[0];
        }
        break;
    }
  }
  return Gradients(*this, std::move(g), root);
}

}  // namespace seqgrad
