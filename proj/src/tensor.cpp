#include "swarmcam/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "swarmcam/errors.hpp"
#include "swarmcam/kernels.hpp"

namespace swarmcam::ad {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (auto d : shape_)
    if (d == 0) throw ShapeError("tensor dims must be positive, got " + to_string(shape_));
  data_.assign(element_count(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto d : shape_)
    if (d == 0) throw ShapeError("tensor dims must be positive, got " + to_string(shape_));
  if (data_.size() != element_count(shape_))
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     to_string(shape_));
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) throw ShapeError("index rank mismatch for " + to_string(shape_));
  std::size_t off = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= shape_[axis]) throw ShapeError("index out of range for " + to_string(shape_));
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

double Tensor::at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }
double& Tensor::at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape_));
  return data_[0];
}

const Tensor& Var::value() const { return graph_->value(id_); }
bool Var::requires_grad() const { return graph_->requires_grad(id_); }

const Tensor& GradStore::at(NodeId id) const {
  if (!has(id)) throw ContractError("no gradient recorded for node " + std::to_string(id));
  return *grads_[id];
}

Tensor& GradStore::slot(NodeId id, const Shape& shape) {
  auto& g = grads_.at(id);
  if (!g) g.emplace(shape, 0.0);
  return *g;
}

Var Graph::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{OpKind::Leaf, {}, std::move(value), requires_grad, nullptr, {}});
  return Var(*this, nodes_.size() - 1);
}

Var Graph::record(OpKind kind, std::vector<NodeId> inputs, Tensor value, BackwardFn backward,
                  std::vector<std::size_t> index_aux) {
  bool rg = false;
  for (auto id : inputs) {
    if (id >= nodes_.size()) throw ContractError("input node does not belong to this graph");
    rg = rg || nodes_[id].requires_grad;
  }
  nodes_.push_back(Node{kind, std::move(inputs), std::move(value), rg, std::move(backward),
                        std::move(index_aux)});
  return Var(*this, nodes_.size() - 1);
}

std::span<const std::size_t> Graph::argmax(NodeId id) const {
  const Node& n = nodes_.at(id);
  if (n.kind != OpKind::MaxPool2d) throw ContractError("argmax requested from a non-pooling node");
  return n.index_aux;
}

GradStore Graph::backward(const Var& output) const {
  if (&output.graph() != this) throw ContractError("output belongs to a different graph");
  const Tensor& out = value(output.id());
  if (out.size() != 1)
    throw ContractError("backward requires a scalar output, got shape " + to_string(out.shape()));
  GradStore grads(nodes_.size());
  if (!nodes_[output.id()].requires_grad) return grads;
  grads.slot(output.id(), out.shape())[0] = 1.0;
  for (std::size_t i = output.id() + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (!n.requires_grad || !grads.has(i) || !n.backward) continue;
    n.backward(*this, i, grads.at(i), grads);
  }
  return grads;
}

namespace {

void require_same_graph(const Var& a, const Var& b) {
  if (&a.graph() != &b.graph()) throw ContractError("operands belong to different graphs");
}

// Helper that adds into an input's gradient slot only when it tracks grads.
Tensor* grad_slot(const Graph& g, GradStore& grads, NodeId id) {
  if (!g.requires_grad(id)) return nullptr;
  return &grads.slot(id, g.value(id).shape());
}

}  // namespace

Var conv2d(const Var& input, const Var& weight, const Var& bias, std::size_t stride, std::size_t pad) {
  require_same_graph(input, weight);
  require_same_graph(input, bias);
  const Shape& is = input.shape();
  const Shape& ws = weight.shape();
  const Shape& bs = bias.shape();
  if (is.size() != 3 || ws.size() != 4 || bs.size() != 1)
    throw ShapeError("conv2d expects input [C,H,W], weight [O,C,kH,kW], bias [O]");
  if (ws[1] != is[0])
    throw ShapeError("conv2d input channels " + std::to_string(is[0]) + " vs weight " + to_string(ws));
  if (bs[0] != ws[0]) throw ShapeError("conv2d bias length does not match output channels");
  if (stride < 1) throw ShapeError("conv2d stride must be >= 1");
  if (is[1] + 2 * pad < ws[2] || is[2] + 2 * pad < ws[3])
    throw ShapeError("conv2d kernel larger than padded input");

  const kernels::ConvGeometry geom{is[0], is[1], is[2], ws[0], ws[2], ws[3], stride, pad};
  Tensor out({geom.out_channels, geom.out_height(), geom.out_width()});
  kernels::conv2d_forward(geom, input.value().data(), weight.value().data(), bias.value().data(),
                          out.data());

  auto backward = [geom](const Graph& g, NodeId self, const Tensor& gout, GradStore& grads) {
    const auto in_ids = g.inputs(self);
    const NodeId in_id = in_ids[0], w_id = in_ids[1], b_id = in_ids[2];
    if (Tensor* gi = grad_slot(g, grads, in_id))
      kernels::conv2d_backward_input(geom, g.value(w_id).data(), gout.data(), gi->data());
    const bool want_w = g.requires_grad(w_id), want_b = g.requires_grad(b_id);
    if (want_w || want_b) {
      // The kernel fills both; route into scratch when one side is untracked.
      Tensor scratch_w, scratch_b;
      Tensor* gw = want_w ? &grads.slot(w_id, g.value(w_id).shape())
                          : &(scratch_w = Tensor(g.value(w_id).shape()));
      Tensor* gb = want_b ? &grads.slot(b_id, g.value(b_id).shape())
                          : &(scratch_b = Tensor(g.value(b_id).shape()));
      kernels::conv2d_backward_weight(geom, g.value(in_id).data(), gout.data(), gw->data(), gb->data());
    }
  };
  return input.graph().record(OpKind::Conv2d, {input.id(), weight.id(), bias.id()}, std::move(out),
                              backward);
}

Var maxpool2d(const Var& input, std::size_t kernel) {
  const Shape& is = input.shape();
  if (is.size() != 3) throw ShapeError("maxpool2d expects [C,H,W]");
  if (kernel < 1 || is[1] % kernel != 0 || is[2] % kernel != 0)
    throw ShapeError("maxpool2d spatial dims " + to_string(is) + " not divisible by " +
                     std::to_string(kernel));
  const std::size_t c_n = is[0], h = is[1], w = is[2], oh = h / kernel, ow = w / kernel;
  Tensor out({c_n, oh, ow});
  std::vector<std::size_t> arg(c_n * oh * ow);
  const auto in = input.value().data();
  for (std::size_t c = 0; c < c_n; ++c) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        std::size_t best = (c * h + y * kernel) * w + x * kernel;
        for (std::size_t dy = 0; dy < kernel; ++dy) {
          for (std::size_t dx = 0; dx < kernel; ++dx) {
            const std::size_t idx = (c * h + y * kernel + dy) * w + x * kernel + dx;
            if (in[idx] > in[best]) best = idx;
          }
        }
        const std::size_t o = (c * oh + y) * ow + x;
        out[o] = in[best];
        arg[o] = best;
      }
    }
  }
  auto backward = [](const Graph& g, NodeId self, const Tensor& gout, GradStore& grads) {
    Tensor* gi = grad_slot(g, grads, g.inputs(self)[0]);
    if (!gi) return;
    const auto arg = g.argmax(self);
    for (std::size_t o = 0; o < arg.size(); ++o) (*gi)[arg[o]] += gout[o];
  };
  return input.graph().record(OpKind::MaxPool2d, {input.id()}, std::move(out), backward, std::move(arg));
}

Var dense(const Var& input, const Var& weight, const Var& bias) {
  require_same_graph(input, weight);
  require_same_graph(input, bias);
  const Shape& is = input.shape();
  const Shape& ws = weight.shape();
  if (is.size() != 1 || ws.size() != 2 || bias.shape().size() != 1)
    throw ShapeError("dense expects input [n], weight [m,n], bias [m]");
  if (ws[1] != is[0] || bias.shape()[0] != ws[0])
    throw ShapeError("dense dimension mismatch: input " + to_string(is) + ", weight " + to_string(ws) +
                     ", bias " + to_string(bias.shape()));
  const std::size_t m = ws[0], n = ws[1];
  const auto x = input.value().data();
  const auto W = weight.value().data();
  const auto b = bias.value().data();
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    const double* row = W.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) acc += row[j] * x[j];
    out[i] = acc + b[i];
  }
  auto backward = [m, n](const Graph& g, NodeId self, const Tensor& gout, GradStore& grads) {
    const auto ids = g.inputs(self);
    const auto x = g.value(ids[0]).data();
    const auto W = g.value(ids[1]).data();
    if (Tensor* gx = grad_slot(g, grads, ids[0])) {
      for (std::size_t i = 0; i < m; ++i) {
        const double gi = gout[i];
        const double* row = W.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) (*gx)[j] += gi * row[j];
      }
    }
    if (Tensor* gw = grad_slot(g, grads, ids[1])) {
      for (std::size_t i = 0; i < m; ++i) {
        const double gi = gout[i];
        double* row = gw->data().data() + i * n;
        for (std::size_t j = 0; j < n; ++j) row[j] += gi * x[j];
      }
    }
    if (Tensor* gb = grad_slot(g, grads, ids[2])) {
      for (std::size_t i = 0; i < m; ++i) (*gb)[i] += gout[i];
    }
  };
  return input.graph().record(OpKind::Dense, {input.id(), weight.id(), bias.id()}, std::move(out),
                              backward);
}

Var relu(const Var& input) {
  Tensor out = input.value();
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  auto backward = [](const Graph& g, NodeId self, const Tensor& gout, GradStore& grads) {
    const NodeId in_id = g.inputs(self)[0];
    Tensor* gi = grad_slot(g, grads, in_id);
    if (!gi) return;
    const auto x = g.value(in_id).data();
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i] > 0.0) (*gi)[i] += gout[i];
  };
  return input.graph().record(OpKind::Relu, {input.id()}, std::move(out), backward);
}

Var sigmoid(const Var& input) {
  Tensor out = input.value();
  for (auto& v : out.data()) v = 1.0 / (1.0 + std::exp(-v));
  auto backward = [](const Graph& g, NodeId self, const Tensor& gout, GradStore& grads) {
    Tensor* gi = grad_slot(g, grads, g.inputs(self)[0]);
    if (!gi) return;
    const auto s = g.value(self).data();
    for (std::size_t i = 0; i < s.size(); ++i) (*gi)[i] += gout[i] * s[i] * (1.0 - s[i]);
  };
  return input.graph().record(OpKind::Sigmoid, {input.id()}, std::move(out), backward);
}

Var reshape(const Var& input, Shape shape) {
  const auto& src = input.value();
  if (element_count(shape) != src.size())
    throw ShapeError("cannot reshape " + to_string(src.shape()) + " to " + to_string(shape));
  Tensor out(std::move(shape), std::vector<double>(src.data().begin(), src.data().end()));
  auto backward = [](const Graph& g, NodeId self, const Tensor& gout, GradStore& grads) {
    Tensor* gi = grad_slot(g, grads, g.inputs(self)[0]);
    if (!gi) return;
    for (std::size_t i = 0; i < gout.size(); ++i) (*gi)[i] += gout[i];
  };
  return input.graph().record(OpKind::Reshape, {input.id()}, std::move(out), backward);
}

Var bce_loss(const Var& prob, int label) {
  if (prob.value().size() != 1) throw ShapeError("bce_loss expects a single probability");
  if (label != 0 && label != 1) throw ValidationError("bce_loss label must be 0 or 1");
  const double raw = prob.value()[0];
  const double p = std::clamp(raw, kBceClamp, 1.0 - kBceClamp);
  const double y = label;
  Tensor out = Tensor::scalar(-(y * std::log(p) + (1.0 - y) * std::log(1.0 - p)));
  auto backward = [y, p, raw](const Graph& g, NodeId self, const Tensor& gout, GradStore& grads) {
    Tensor* gi = grad_slot(g, grads, g.inputs(self)[0]);
    if (!gi) return;
    // Clamped region is flat.
    if (raw < kBceClamp || raw > 1.0 - kBceClamp) return;
    (*gi)[0] += gout[0] * (-y / p + (1.0 - y) / (1.0 - p));
  };
  return prob.graph().record(OpKind::BceLoss, {prob.id()}, std::move(out), backward);
}

Var sum(const Var& input) {
  const auto d = input.value().data();
  double acc = 0.0;
  for (double v : d) acc += v;
  auto backward = [](const Graph& g, NodeId self, const Tensor& gout, GradStore& grads) {
    Tensor* gi = grad_slot(g, grads, g.inputs(self)[0]);
    if (!gi) return;
    for (auto& v : gi->data()) v += gout[0];
  };
  return input.graph().record(OpKind::Sum, {input.id()}, Tensor::scalar(acc), backward);
}

Var scale(const Var& input, double factor) {
  Tensor out = input.value();
  for (auto& v : out.data()) v *= factor;
  auto backward = [factor](const Graph& g, NodeId self, const Tensor& gout, GradStore& grads) {
    Tensor* gi = grad_slot(g, grads, g.inputs(self)[0]);
    if (!gi) return;
    for (std::size_t i = 0; i < gout.size(); ++i) (*gi)[i] += factor * gout[i];
  };
  return input.graph().record(OpKind::Scale, {input.id()}, std::move(out), backward);
}

Var add(const Var& a, const Var& b) {
  require_same_graph(a, b);
  if (a.shape() != b.shape())
    throw ShapeError("add shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  Tensor out = a.value();
  const auto bd = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  auto backward = [](const Graph& g, NodeId self, const Tensor& gout, GradStore& grads) {
    for (NodeId id : g.inputs(self)) {
      if (Tensor* gi = grad_slot(g, grads, id))
        for (std::size_t i = 0; i < gout.size(); ++i) (*gi)[i] += gout[i];
    }
  };
  return a.graph().record(OpKind::Add, {a.id(), b.id()}, std::move(out), backward);
}

Var mul(const Var& a, const Var& b) {
  require_same_graph(a, b);
  if (a.shape() != b.shape())
    throw ShapeError("mul shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  Tensor out = a.value();
  const auto bd = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
  auto backward = [](const Graph& g, NodeId self, const Tensor& gout, GradStore& grads) {
    const auto ids = g.inputs(self);
    const auto av = g.value(ids[0]).data();
    const auto bv = g.value(ids[1]).data();
    if (Tensor* ga = grad_slot(g, grads, ids[0]))
      for (std::size_t i = 0; i < gout.size(); ++i) (*ga)[i] += gout[i] * bv[i];
    if (Tensor* gb = grad_slot(g, grads, ids[1]))
      for (std::size_t i = 0; i < gout.size(); ++i) (*gb)[i] += gout[i] * av[i];
  };
  return a.graph().record(OpKind::Mul, {a.id(), b.id()}, std::move(out), backward);
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& point, double eps) {
  if (!(eps > 0.0)) throw ValidationError("finite_diff_grad requires eps > 0");
  Tensor grad(point.shape());
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double x0 = point[i];
    probe[i] = x0 + eps;
    const double fp = f(probe);
    probe[i] = x0 - eps;
    const double fm = f(probe);
    probe[i] = x0;
    grad[i] = (fp - fm) / (2.0 * eps);
  }
  return grad;
}

}  // namespace swarmcam::ad
