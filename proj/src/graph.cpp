#include "mmr/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mmr/errors.hpp"

namespace mmr {

const char* op_name(Op op) noexcept {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kAffine: return "affine";
    case Op::kConv2d: return "conv2d";
    case Op::kConv1d: return "conv1d";
    case Op::kEmbedding: return "embedding";
    case Op::kLeakyRelu: return "leaky_relu";
    case Op::kSigmoid: return "sigmoid";
    case Op::kMeanPool: return "mean_pool";
    case Op::kConcat: return "concat";
    case Op::kAdd: return "add";
    case Op::kScale: return "scale";
    case Op::kMaskMul: return "mask_mul";
    case Op::kGate: return "gate";
    case Op::kGradReverse: return "grad_reverse";
    case Op::kReshape: return "reshape";
    case Op::kSum: return "sum";
    case Op::kSoftmaxCrossEntropy: return "softmax_cross_entropy";
  }
  return "?";
}

namespace {

[[noreturn]] void dim_error(const char* op, const Shape& a, const Shape& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " +
                       shape_string(a) + " and " + shape_string(b));
}

}  // namespace

void Graph::check_id(NodeId id) const {
  if (id >= nodes_.size()) {
    throw ValidationError("unknown node id " + std::to_string(id));
  }
}

Graph::Node Graph::make(Op op, std::initializer_list<NodeId> ins) const {
  Node n;
  n.op = op;
  for (NodeId id : ins) {
    check_id(id);
    n.in[n.n_in++] = id;
    n.requires_grad = n.requires_grad || nodes_[id].requires_grad;
  }
  return n;
}

NodeId Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  backward_done_ = false;
  return nodes_.size() - 1;
}

NodeId Graph::input(Tensor value, bool requires_grad) {
  Node n;
  n.own = std::move(value);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

NodeId Graph::param(const Tensor& value, bool requires_grad) {
  Node n;
  n.ext = &value;
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

NodeId Graph::affine(NodeId x, NodeId w, NodeId b) {
  Node n = make(Op::kAffine, {x, w, b});
  const Tensor& X = val(x);
  const Tensor& W = val(w);
  const Tensor& B = val(b);
  if (X.ndim() != 2 || W.ndim() != 2 || X.dim(1) != W.dim(0)) {
    dim_error("affine", X.shape, W.shape);
  }
  const std::size_t rows = X.dim(0), d = X.dim(1), k = W.dim(1);
  if (B.size() != k) dim_error("affine bias", W.shape, B.shape);
  n.own = Tensor(Shape{rows, k});
  for (std::size_t i = 0; i < rows; ++i) {
    float* out = n.own.data.data() + i * k;
    std::copy(B.data.begin(), B.data.end(), out);
    const float* xi = X.data.data() + i * d;
    for (std::size_t m = 0; m < d; ++m) {
      const float xv = xi[m];
      if (xv == 0.0f) continue;
      const float* wr = W.data.data() + m * k;
      for (std::size_t j = 0; j < k; ++j) out[j] += xv * wr[j];
    }
  }
  return push(std::move(n));
}

NodeId Graph::conv2d(NodeId x, NodeId kernels, std::optional<NodeId> bias) {
  Node n = bias ? make(Op::kConv2d, {x, kernels, *bias})
                : make(Op::kConv2d, {x, kernels});
  const Tensor& X = val(x);
  const Tensor& K = val(kernels);
  if (X.ndim() != 3 || K.ndim() != 4 || K.dim(2) != 3 || K.dim(3) != 3 ||
      K.dim(1) != X.dim(0)) {
    dim_error("conv2d", X.shape, K.shape);
  }
  const std::size_t c = X.dim(0), h = X.dim(1), w = X.dim(2), o = K.dim(0);
  if (h < 3 || w < 3) {
    throw DimensionError("conv2d: image " + shape_string(X.shape) +
                         " smaller than 3x3 kernel");
  }
  if (bias && val(*bias).size() != o) {
    dim_error("conv2d bias", K.shape, val(*bias).shape);
  }
  const std::size_t oh = h - 2, ow = w - 2;
  n.own = Tensor(Shape{o, oh, ow});
  for (std::size_t k = 0; k < o; ++k) {
    float* out = n.own.data.data() + k * oh * ow;
    if (bias) std::fill(out, out + oh * ow, val(*bias)[k]);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const float* xc = X.data.data() + ch * h * w;
      const float* kk = K.data.data() + (k * c + ch) * 9;
      for (std::size_t di = 0; di < 3; ++di) {
        for (std::size_t dj = 0; dj < 3; ++dj) {
          const float wv = kk[di * 3 + dj];
          for (std::size_t i = 0; i < oh; ++i) {
            const float* src = xc + (i + di) * w + dj;
            float* dst = out + i * ow;
            for (std::size_t j = 0; j < ow; ++j) dst[j] += wv * src[j];
          }
        }
      }
    }
  }
  return push(std::move(n));
}

NodeId Graph::conv1d(NodeId x, NodeId kernels, NodeId bias) {
  Node n = make(Op::kConv1d, {x, kernels, bias});
  const Tensor& X = val(x);
  const Tensor& K = val(kernels);
  const Tensor& B = val(bias);
  if (X.ndim() != 2 || K.ndim() != 3 || K.dim(0) != 3 || K.dim(1) != X.dim(1)) {
    dim_error("conv1d", X.shape, K.shape);
  }
  const std::size_t len = X.dim(0), e = X.dim(1), f = K.dim(2);
  if (B.size() != f) dim_error("conv1d bias", K.shape, B.shape);
  n.own = Tensor(Shape{len, f});
  for (std::size_t l = 0; l < len; ++l) {
    float* out = n.own.data.data() + l * f;
    std::copy(B.data.begin(), B.data.end(), out);
    for (std::size_t t = 0; t < 3; ++t) {
      if (l + t < 1 || l + t - 1 >= len) continue;
      const float* xr = X.data.data() + (l + t - 1) * e;
      for (std::size_t m = 0; m < e; ++m) {
        const float xv = xr[m];
        const float* kr = K.data.data() + (t * e + m) * f;
        for (std::size_t j = 0; j < f; ++j) out[j] += xv * kr[j];
      }
    }
  }
  return push(std::move(n));
}

NodeId Graph::embedding(NodeId table, std::vector<int> indices) {
  Node n = make(Op::kEmbedding, {table});
  const Tensor& T = val(table);
  if (T.ndim() != 2) dim_error("embedding", T.shape, Shape{indices.size()});
  const std::size_t vocab = T.dim(0), e = T.dim(1);
  n.own = Tensor(Shape{indices.size(), e});
  for (std::size_t l = 0; l < indices.size(); ++l) {
    const int idx = indices[l];
    if (idx < 0 || static_cast<std::size_t>(idx) >= vocab) {
      throw UnknownSymbolError("embedding index " + std::to_string(idx) +
                               " outside table of " + std::to_string(vocab));
    }
    std::copy_n(T.data.data() + idx * e, e, n.own.data.data() + l * e);
  }
  n.ints = std::move(indices);
  return push(std::move(n));
}

NodeId Graph::leaky_relu(NodeId x, float slope) {
  Node n = make(Op::kLeakyRelu, {x});
  n.attr = slope;
  n.own = val(x);
  n.own.grad.reset();
  for (float& v : n.own.data) {
    if (v < 0.0f) v *= slope;
  }
  return push(std::move(n));
}

NodeId Graph::sigmoid(NodeId x) {
  Node n = make(Op::kSigmoid, {x});
  n.own = Tensor(val(x).shape);
  const auto& in = val(x).data;
  for (std::size_t i = 0; i < in.size(); ++i) {
    n.own.data[i] = 1.0f / (1.0f + std::exp(-in[i]));
  }
  return push(std::move(n));
}

NodeId Graph::mean_pool(NodeId x) {
  Node n = make(Op::kMeanPool, {x});
  const Tensor& X = val(x);
  if (X.ndim() != 2 || X.dim(0) == 0) dim_error("mean_pool", X.shape, Shape{});
  const std::size_t len = X.dim(0), f = X.dim(1);
  n.own = Tensor(Shape{1, f});
  for (std::size_t l = 0; l < len; ++l) {
    for (std::size_t j = 0; j < f; ++j) n.own.data[j] += X.data[l * f + j];
  }
  const float inv = 1.0f / static_cast<float>(len);
  for (float& v : n.own.data) v *= inv;
  return push(std::move(n));
}

NodeId Graph::concat(NodeId a, NodeId b) {
  Node n = make(Op::kConcat, {a, b});
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  if (A.ndim() != 2 || B.ndim() != 2 || A.dim(0) != B.dim(0)) {
    dim_error("concat", A.shape, B.shape);
  }
  const std::size_t rows = A.dim(0), ca = A.dim(1), cb = B.dim(1);
  n.own = Tensor(Shape{rows, ca + cb});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(A.data.data() + r * ca, ca, n.own.data.data() + r * (ca + cb));
    std::copy_n(B.data.data() + r * cb, cb,
                n.own.data.data() + r * (ca + cb) + ca);
  }
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
  Node n = make(Op::kAdd, {a, b});
  if (val(a).shape != val(b).shape) dim_error("add", val(a).shape, val(b).shape);
  n.own = val(a);
  n.own.grad.reset();
  const auto& bd = val(b).data;
  for (std::size_t i = 0; i < bd.size(); ++i) n.own.data[i] += bd[i];
  return push(std::move(n));
}

NodeId Graph::scale(NodeId x, float factor) {
  Node n = make(Op::kScale, {x});
  n.attr = factor;
  n.own = val(x);
  n.own.grad.reset();
  for (float& v : n.own.data) v *= factor;
  return push(std::move(n));
}

NodeId Graph::mask_mul(NodeId x, Tensor mask) {
  Node n = make(Op::kMaskMul, {x});
  if (mask.shape != val(x).shape) dim_error("mask_mul", val(x).shape, mask.shape);
  n.own = val(x);
  n.own.grad.reset();
  for (std::size_t i = 0; i < mask.size(); ++i) n.own.data[i] *= mask.data[i];
  n.aux = std::move(mask.data);
  return push(std::move(n));
}

NodeId Graph::gate(NodeId alpha, NodeId x) {
  Node n = make(Op::kGate, {alpha, x});
  if (val(alpha).size() != 1) dim_error("gate", val(alpha).shape, val(x).shape);
  const float a = val(alpha)[0];
  n.own = val(x);
  n.own.grad.reset();
  for (float& v : n.own.data) v *= a;
  return push(std::move(n));
}

NodeId Graph::grad_reverse(NodeId x, float lambda) {
  Node n = make(Op::kGradReverse, {x});
  n.attr = lambda;
  n.own = val(x);
  n.own.grad.reset();
  return push(std::move(n));
}

NodeId Graph::reshape(NodeId x, Shape shape) {
  Node n = make(Op::kReshape, {x});
  if (shape_volume(shape) != val(x).size()) dim_error("reshape", val(x).shape, shape);
  n.own = Tensor(std::move(shape), val(x).data);
  return push(std::move(n));
}

NodeId Graph::sum(NodeId x) {
  Node n = make(Op::kSum, {x});
  double acc = 0.0;
  for (float v : val(x).data) acc += v;
  n.own = Tensor::scalar(static_cast<float>(acc));
  return push(std::move(n));
}

NodeId Graph::softmax_cross_entropy(NodeId logits, std::vector<int> labels) {
  Node n = make(Op::kSoftmaxCrossEntropy, {logits});
  const Tensor& L = val(logits);
  if (L.ndim() != 2 || L.dim(0) != labels.size() || L.dim(0) == 0) {
    dim_error("softmax_cross_entropy", L.shape, Shape{labels.size()});
  }
  const std::size_t rows = L.dim(0), classes = L.dim(1);
  n.aux.resize(rows * classes);
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw ValidationError("label " + std::to_string(y) + " outside [0, " +
                            std::to_string(classes) + ")");
    }
    const float* row = L.data.data() + r * classes;
    const float mx = *std::max_element(row, row + classes);
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) z += std::exp(double(row[c] - mx));
    for (std::size_t c = 0; c < classes; ++c) {
      n.aux[r * classes + c] = static_cast<float>(std::exp(double(row[c] - mx)) / z);
    }
    loss += std::log(z) - double(row[y] - mx);
  }
  n.own = Tensor::scalar(static_cast<float>(loss / double(rows)));
  n.ints = std::move(labels);
  return push(std::move(n));
}

void Graph::set_loss(NodeId id) {
  check_id(id);
  if (val(id).size() != 1) {
    throw DimensionError("loss node must be scalar, got " +
                         shape_string(val(id).shape));
  }
  loss_ = id;
  backward_done_ = false;
}

const Tensor& Graph::value(NodeId id) const {
  check_id(id);
  return val(id);
}

std::span<const NodeId> Graph::inputs(NodeId id) const {
  check_id(id);
  return {nodes_[id].in.data(), nodes_[id].n_in};
}

std::span<const float> Graph::grad(NodeId id) const {
  check_id(id);
  if (!backward_done_) throw StateError("gradient requested before backward()");
  if (!nodes_[id].requires_grad) {
    throw StateError("node " + std::to_string(id) + " does not require grad");
  }
  return nodes_[id].grad;
}

void Graph::backward() {
  if (!loss_) throw StateError("backward() called before a forward loss was set");
  for (Node& n : nodes_) {
    if (n.requires_grad) n.grad.assign(n.value().size(), 0.0f);
    else n.grad.clear();
  }
  if (!nodes_[*loss_].requires_grad) {
    backward_done_ = true;
    return;
  }
  nodes_[*loss_].grad[0] = 1.0f;
  for (std::size_t i = *loss_ + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (!n.requires_grad || n.op == Op::kLeaf) continue;
    backprop(n);
  }
  backward_done_ = true;
}

void Graph::backprop(const Node& n) {
  const std::vector<float>& g = n.grad;
  auto wants = [&](std::size_t k) { return nodes_[n.in[k]].requires_grad; };
  auto gin = [&](std::size_t k) -> std::vector<float>& { return nodes_[n.in[k]].grad; };

  switch (n.op) {
    case Op::kLeaf:
      break;
    case Op::kAffine: {
      const Tensor& X = val(n.in[0]);
      const Tensor& W = val(n.in[1]);
      const std::size_t rows = X.dim(0), d = X.dim(1), k = W.dim(1);
      for (std::size_t i = 0; i < rows; ++i) {
        const float* gi = g.data() + i * k;
        const float* xi = X.data.data() + i * d;
        if (wants(0)) {
          float* gx = gin(0).data() + i * d;
          for (std::size_t m = 0; m < d; ++m) {
            const float* wr = W.data.data() + m * k;
            float acc = 0.0f;
#pragma omp simd reduction(+ : acc)
            for (std::size_t j = 0; j < k; ++j) acc += wr[j] * gi[j];
            gx[m] += acc;
          }
        }
        if (wants(1)) {
          float* gw = gin(1).data();
          for (std::size_t m = 0; m < d; ++m) {
            const float xv = xi[m];
            if (xv == 0.0f) continue;
            float* row = gw + m * k;
            for (std::size_t j = 0; j < k; ++j) row[j] += xv * gi[j];
          }
        }
        if (wants(2)) {
          float* gb = gin(2).data();
          for (std::size_t j = 0; j < k; ++j) gb[j] += gi[j];
        }
      }
      break;
    }
    case Op::kConv2d: {
      const Tensor& X = val(n.in[0]);
      const Tensor& K = val(n.in[1]);
      const std::size_t c = X.dim(0), h = X.dim(1), w = X.dim(2), o = K.dim(0);
      const std::size_t oh = h - 2, ow = w - 2;
      const bool has_bias = n.n_in == 3;
      for (std::size_t k = 0; k < o; ++k) {
        const float* gk = g.data() + k * oh * ow;
        if (has_bias && wants(2)) {
          float acc = 0.0f;
#pragma omp simd reduction(+ : acc)
          for (std::size_t p = 0; p < oh * ow; ++p) acc += gk[p];
          gin(2)[k] += acc;
        }
        for (std::size_t ch = 0; ch < c; ++ch) {
          const float* xc = X.data.data() + ch * h * w;
          const float* kk = K.data.data() + (k * c + ch) * 9;
          for (std::size_t di = 0; di < 3; ++di) {
            for (std::size_t dj = 0; dj < 3; ++dj) {
              if (wants(1)) {
                float acc = 0.0f;
                for (std::size_t i = 0; i < oh; ++i) {
                  const float* src = xc + (i + di) * w + dj;
                  const float* gr = gk + i * ow;
#pragma omp simd reduction(+ : acc)
                  for (std::size_t j = 0; j < ow; ++j) acc += gr[j] * src[j];
                }
                gin(1)[(k * c + ch) * 9 + di * 3 + dj] += acc;
              }
              if (wants(0)) {
                const float wv = kk[di * 3 + dj];
                float* gx = gin(0).data() + ch * h * w;
                for (std::size_t i = 0; i < oh; ++i) {
                  float* dst = gx + (i + di) * w + dj;
                  const float* gr = gk + i * ow;
                  for (std::size_t j = 0; j < ow; ++j) dst[j] += wv * gr[j];
                }
              }
            }
          }
        }
      }
      break;
    }
    case Op::kConv1d: {
      const Tensor& X = val(n.in[0]);
      const Tensor& K = val(n.in[1]);
      const std::size_t len = X.dim(0), e = X.dim(1), f = K.dim(2);
      for (std::size_t l = 0; l < len; ++l) {
        const float* gl = g.data() + l * f;
        if (wants(2)) {
          for (std::size_t j = 0; j < f; ++j) gin(2)[j] += gl[j];
        }
        for (std::size_t t = 0; t < 3; ++t) {
          if (l + t < 1 || l + t - 1 >= len) continue;
          const std::size_t src = l + t - 1;
          for (std::size_t m = 0; m < e; ++m) {
            const float* kr = K.data.data() + (t * e + m) * f;
            if (wants(0)) {
              float acc = 0.0f;
#pragma omp simd reduction(+ : acc)
              for (std::size_t j = 0; j < f; ++j) acc += kr[j] * gl[j];
              gin(0)[src * e + m] += acc;
            }
            if (wants(1)) {
              const float xv = X.data[src * e + m];
              float* gk = gin(1).data() + (t * e + m) * f;
              for (std::size_t j = 0; j < f; ++j) gk[j] += xv * gl[j];
            }
          }
        }
      }
      break;
    }
    case Op::kEmbedding: {
      if (!wants(0)) break;
      const std::size_t e = val(n.in[0]).dim(1);
      for (std::size_t l = 0; l < n.ints.size(); ++l) {
        float* row = gin(0).data() + static_cast<std::size_t>(n.ints[l]) * e;
        for (std::size_t m = 0; m < e; ++m) row[m] += g[l * e + m];
      }
      break;
    }
    case Op::kLeakyRelu: {
      const auto& x = val(n.in[0]).data;
      auto& gx = gin(0);
      for (std::size_t i = 0; i < x.size(); ++i) {
        gx[i] += x[i] >= 0.0f ? g[i] : n.attr * g[i];
      }
      break;
    }
    case Op::kSigmoid: {
      const auto& y = n.own.data;
      auto& gx = gin(0);
      for (std::size_t i = 0; i < y.size(); ++i) gx[i] += g[i] * y[i] * (1.0f - y[i]);
      break;
    }
    case Op::kMeanPool: {
      const Tensor& X = val(n.in[0]);
      const std::size_t len = X.dim(0), f = X.dim(1);
      const float inv = 1.0f / static_cast<float>(len);
      auto& gx = gin(0);
      for (std::size_t l = 0; l < len; ++l) {
        for (std::size_t j = 0; j < f; ++j) gx[l * f + j] += g[j] * inv;
      }
      break;
    }
    case Op::kConcat: {
      const Tensor& A = val(n.in[0]);
      const Tensor& B = val(n.in[1]);
      const std::size_t rows = A.dim(0), ca = A.dim(1), cb = B.dim(1);
      for (std::size_t r = 0; r < rows; ++r) {
        const float* gr = g.data() + r * (ca + cb);
        if (wants(0)) {
          for (std::size_t j = 0; j < ca; ++j) gin(0)[r * ca + j] += gr[j];
        }
        if (wants(1)) {
          for (std::size_t j = 0; j < cb; ++j) gin(1)[r * cb + j] += gr[ca + j];
        }
      }
      break;
    }
    case Op::kAdd: {
      for (std::size_t k = 0; k < 2; ++k) {
        if (!wants(k)) continue;
        auto& gx = gin(k);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      break;
    }
    case Op::kScale: {
      auto& gx = gin(0);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += n.attr * g[i];
      break;
    }
    case Op::kMaskMul: {
      auto& gx = gin(0);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += n.aux[i] * g[i];
      break;
    }
    case Op::kGate: {
      const float a = val(n.in[0])[0];
      const auto& x = val(n.in[1]).data;
      if (wants(0)) {
        float acc = 0.0f;
        for (std::size_t i = 0; i < x.size(); ++i) acc += g[i] * x[i];
        gin(0)[0] += acc;
      }
      if (wants(1)) {
        auto& gx = gin(1);
        for (std::size_t i = 0; i < x.size(); ++i) gx[i] += a * g[i];
      }
      break;
    }
    case Op::kGradReverse: {
      auto& gx = gin(0);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] -= n.attr * g[i];
      break;
    }
    case Op::kReshape: {
      auto& gx = gin(0);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      break;
    }
    case Op::kSum: {
      auto& gx = gin(0);
      for (float& v : gx) v += g[0];
      break;
    }
    case Op::kSoftmaxCrossEntropy: {
      const std::size_t rows = n.ints.size();
      const std::size_t classes = val(n.in[0]).dim(1);
      const float scale = g[0] / static_cast<float>(rows);
      auto& gx = gin(0);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < classes; ++c) {
          float d = n.aux[r * classes + c];
          if (static_cast<int>(c) == n.ints[r]) d -= 1.0f;
          gx[r * classes + c] += scale * d;
        }
      }
      break;
    }
  }
}

}  // namespace mmr
