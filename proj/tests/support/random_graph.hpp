#pragma once

// Random small computation graphs built from the supported op set, with an
// independent float64 reference evaluator used as the finite-difference
// oracle. The reference never touches mmr::Graph.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "mmr/graph.hpp"
#include "mmr/rng.hpp"

namespace mmr::testing {

struct RandomProgram {
  // image branch
  std::size_t c = 1, h = 3, w = 3, kernels = 1, m = 2;
  bool conv_bias = true;
  float slope1 = 0.01f;
  // text branch
  bool text = false;
  std::size_t len = 1, vocab = 5, e = 2, f = 2, m_text = 2;
  std::vector<int> tokens;
  float slope2 = 0.1f;
  // combine
  enum class Combine { kNone, kConcat, kAdd } combine = Combine::kNone;
  bool gate = false;
  bool scale = false;
  float scale_factor = 1.0f;
  bool mask = false;
  std::vector<float> mask_values;
  // head
  std::size_t classes = 2;
  bool ce_loss = true;
  int label = 0;

  // Named parameters and inputs (all differentiable).
  std::map<std::string, Tensor> values;
};

inline RandomProgram random_program(std::uint64_t seed) {
  CounterRng r(seed, 77);
  RandomProgram p;
  p.c = 1 + r.below(2);
  p.h = 3 + r.below(3);
  p.w = 3 + r.below(3);
  p.kernels = 1 + r.below(2);
  p.m = 2 + r.below(3);
  p.conv_bias = r.bernoulli(0.7);
  p.slope1 = static_cast<float>(r.uniform(0.01, 0.5));
  p.text = r.bernoulli(0.6);
  p.len = 1 + r.below(4);
  p.e = 2 + r.below(2);
  p.f = 2 + r.below(2);
  p.m_text = r.bernoulli(0.5) ? p.m : 2 + r.below(3);
  p.slope2 = static_cast<float>(r.uniform(0.01, 0.5));
  for (std::size_t i = 0; i < p.len; ++i) p.tokens.push_back(static_cast<int>(r.below(p.vocab)));
  if (p.text) {
    p.combine = (p.m_text == p.m && r.bernoulli(0.5)) ? RandomProgram::Combine::kAdd
                                                     : RandomProgram::Combine::kConcat;
    p.gate = r.bernoulli(0.4);
  }
  p.scale = r.bernoulli(0.4);
  p.scale_factor = static_cast<float>(r.uniform(-2.0, 2.0));
  p.mask = r.bernoulli(0.3);
  p.classes = 2 + r.below(2);
  p.ce_loss = r.bernoulli(0.75);
  p.label = static_cast<int>(r.below(p.classes));

  auto fill = [&](const std::string& name, Shape s, double lo, double hi) {
    Tensor t(std::move(s));
    for (float& v : t.data) v = static_cast<float>(r.uniform(lo, hi));
    p.values[name] = std::move(t);
  };
  fill("x", {p.c, p.h, p.w}, 0.0, 1.0);
  fill("K", {p.kernels, p.c, 3, 3}, -1.0, 1.0);
  if (p.conv_bias) fill("Kb", {p.kernels}, -0.5, 0.5);
  const std::size_t flat = p.kernels * (p.h - 2) * (p.w - 2);
  fill("W1", {flat, p.m}, -1.0, 1.0);
  fill("b1", {p.m}, -0.5, 0.5);
  std::size_t width = p.m;
  if (p.text) {
    fill("E", {p.vocab, p.e}, -1.0, 1.0);
    fill("T", {3, p.e, p.f}, -1.0, 1.0);
    fill("Tb", {p.f}, -0.5, 0.5);
    fill("W2", {p.f, p.m_text}, -1.0, 1.0);
    fill("b2", {p.m_text}, -0.5, 0.5);
    if (p.gate) {
      fill("Wg", {p.m_text, 1}, -1.0, 1.0);
      fill("bg", {1}, -0.5, 0.5);
    }
    width = p.combine == RandomProgram::Combine::kAdd ? p.m : p.m + p.m_text;
  }
  if (p.mask) {
    for (std::size_t i = 0; i < width; ++i) {
      p.mask_values.push_back(r.bernoulli(0.7) ? 1.5f : 0.0f);
    }
  }
  fill("Wh", {width, p.classes}, -1.0, 1.0);
  fill("bh", {p.classes}, -0.5, 0.5);
  return p;
}

struct BuiltGraph {
  Graph g;
  std::map<std::string, NodeId> ids;
  NodeId loss = 0;
};

// Builds the program on the engine; every named value is a differentiable input.
inline void build(const RandomProgram& p, BuiltGraph& out) {
  Graph& g = out.g;
  for (const auto& [name, t] : p.values) out.ids[name] = g.input(t, true);
  auto id = [&](const char* n) { return out.ids.at(n); };
  NodeId a = g.conv2d(id("x"), id("K"), p.conv_bias ? std::optional<NodeId>(id("Kb")) : std::nullopt);
  a = g.leaky_relu(a, p.slope1);
  a = g.reshape(a, Shape{1, g.value(a).size()});
  a = g.affine(a, id("W1"), id("b1"));
  NodeId z = a;
  if (p.text) {
    NodeId t = g.embedding(id("E"), p.tokens);
    t = g.conv1d(t, id("T"), id("Tb"));
    t = g.leaky_relu(t, p.slope2);
    t = g.mean_pool(t);
    t = g.affine(t, id("W2"), id("b2"));
    NodeId img = a;
    if (p.gate) img = g.gate(g.sigmoid(g.affine(t, id("Wg"), id("bg"))), a);
    z = p.combine == RandomProgram::Combine::kAdd ? g.add(img, t) : g.concat(t, img);
  }
  if (p.scale) z = g.scale(z, p.scale_factor);
  if (p.mask) z = g.mask_mul(z, Tensor(Shape{1, p.mask_values.size()}, p.mask_values));
  NodeId logits = g.affine(z, id("Wh"), id("bh"));
  out.loss = p.ce_loss ? g.softmax_cross_entropy(logits, {p.label}) : g.sum(logits);
  g.set_loss(out.loss);
}

// ---- float64 reference ----------------------------------------------------

using Vals = std::map<std::string, std::vector<double>>;

struct RefTrace {
  std::vector<bool> signs;  // sign pattern of every leaky-relu input
};

inline Vals to_double(const RandomProgram& p) {
  Vals v;
  for (const auto& [name, t] : p.values) v[name] = std::vector<double>(t.data.begin(), t.data.end());
  return v;
}

inline std::vector<double> ref_affine(const std::vector<double>& x, const std::vector<double>& W,
                                      const std::vector<double>& b, std::size_t d, std::size_t k) {
  std::vector<double> out(k);
  for (std::size_t j = 0; j < k; ++j) {
    double s = b[j];
    for (std::size_t m = 0; m < d; ++m) s += x[m] * W[m * k + j];
    out[j] = s;
  }
  return out;
}

inline void ref_leaky(std::vector<double>& x, double slope, RefTrace& tr) {
  for (double& v : x) {
    tr.signs.push_back(v >= 0.0);
    if (v < 0.0) v *= slope;
  }
}

inline double ref_loss(const RandomProgram& p, const Vals& v, RefTrace& tr) {
  const auto& x = v.at("x");
  const auto& K = v.at("K");
  const std::size_t oh = p.h - 2, ow = p.w - 2;
  std::vector<double> conv(p.kernels * oh * ow, 0.0);
  for (std::size_t k = 0; k < p.kernels; ++k)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        double s = p.conv_bias ? v.at("Kb")[k] : 0.0;
        for (std::size_t ch = 0; ch < p.c; ++ch)
          for (std::size_t di = 0; di < 3; ++di)
            for (std::size_t dj = 0; dj < 3; ++dj)
              s += K[((k * p.c + ch) * 3 + di) * 3 + dj] * x[(ch * p.h + i + di) * p.w + j + dj];
        conv[(k * oh + i) * ow + j] = s;
      }
  ref_leaky(conv, p.slope1, tr);
  std::vector<double> a = ref_affine(conv, v.at("W1"), v.at("b1"), conv.size(), p.m);
  std::vector<double> z = a;
  if (p.text) {
    const auto& E = v.at("E");
    const auto& T = v.at("T");
    std::vector<double> seq(p.len * p.f, 0.0);
    for (std::size_t l = 0; l < p.len; ++l)
      for (std::size_t q = 0; q < p.f; ++q) {
        double s = v.at("Tb")[q];
        for (std::size_t t = 0; t < 3; ++t) {
          const long src = long(l) + long(t) - 1;
          if (src < 0 || src >= long(p.len)) continue;
          for (std::size_t m = 0; m < p.e; ++m) {
            s += E[std::size_t(p.tokens[src]) * p.e + m] * T[(t * p.e + m) * p.f + q];
          }
        }
        seq[l * p.f + q] = s;
      }
    ref_leaky(seq, p.slope2, tr);
    std::vector<double> pooled(p.f, 0.0);
    for (std::size_t l = 0; l < p.len; ++l)
      for (std::size_t q = 0; q < p.f; ++q) pooled[q] += seq[l * p.f + q] / double(p.len);
    std::vector<double> t = ref_affine(pooled, v.at("W2"), v.at("b2"), p.f, p.m_text);
    std::vector<double> img = a;
    if (p.gate) {
      const double s = ref_affine(t, v.at("Wg"), v.at("bg"), p.m_text, 1)[0];
      const double alpha = 1.0 / (1.0 + std::exp(-s));
      for (double& q : img) q *= alpha;
    }
    if (p.combine == RandomProgram::Combine::kAdd) {
      z = img;
      for (std::size_t i = 0; i < z.size(); ++i) z[i] += t[i];
    } else {
      z = t;
      z.insert(z.end(), img.begin(), img.end());
    }
  }
  if (p.scale)
    for (double& q : z) q *= p.scale_factor;
  if (p.mask)
    for (std::size_t i = 0; i < z.size(); ++i) z[i] *= p.mask_values[i];
  const auto logits = ref_affine(z, v.at("Wh"), v.at("bh"), z.size(), p.classes);
  if (!p.ce_loss) {
    double s = 0.0;
    for (double q : logits) s += q;
    return s;
  }
  double mx = logits[0];
  for (double q : logits) mx = std::max(mx, q);
  double zsum = 0.0;
  for (double q : logits) zsum += std::exp(q - mx);
  return std::log(zsum) + mx - logits[std::size_t(p.label)];
}

struct GradCheck {
  std::size_t checked = 0;
  std::size_t failures = 0;
  std::size_t kink_skips = 0;
  double worst_rel = 0.0;
  std::string first_failure;
};

// Central differences (step 1e-3, float64) on every parameter/input entry.
// Entries whose +-h evaluations straddle a leaky-relu kink are re-estimated
// with step 1e-7; if that still straddles, the entry is skipped and counted.
inline GradCheck check_gradients(const RandomProgram& p, double rel_tol = 1e-4,
                                 double abs_floor = 1e-6, double step = 1e-3) {
  BuiltGraph bg;
  build(p, bg);
  bg.g.backward();
  GradCheck res;
  Vals base = to_double(p);
  for (const auto& [name, t] : p.values) {
    const auto analytic = bg.g.grad(bg.ids.at(name));
    for (std::size_t i = 0; i < t.size(); ++i) {
      double fd = 0.0;
      bool ok_fd = false;
      for (double h : {step, 1e-7}) {
        Vals plus = base, minus = base;
        plus[name][i] += h;
        minus[name][i] -= h;
        RefTrace tp, tm;
        const double lp = ref_loss(p, plus, tp);
        const double lm = ref_loss(p, minus, tm);
        if (tp.signs != tm.signs) continue;
        fd = (lp - lm) / (2.0 * h);
        ok_fd = true;
        break;
      }
      if (!ok_fd) {
        ++res.kink_skips;
        continue;
      }
      ++res.checked;
      const double a = analytic[i];
      const double diff = std::abs(a - fd);
      const double scale = std::max(std::abs(a), std::abs(fd));
      if (scale > abs_floor) res.worst_rel = std::max(res.worst_rel, diff / scale);
      if (diff > std::max(rel_tol * scale, abs_floor)) {
        if (res.failures++ == 0) {
          res.first_failure = name + "[" + std::to_string(i) + "] analytic=" +
                              std::to_string(a) + " fd=" + std::to_string(fd);
        }
      }
    }
  }
  return res;
}

}  // namespace mmr::testing
