#include "mmr/detector.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "mmr/errors.hpp"

namespace mmr {

const char* to_string(Fusion f) noexcept {
  return f == Fusion::kConcat ? "concat" : "attention";
}

Fusion fusion_from_string(const std::string& s) {
  if (s == "concat") return Fusion::kConcat;
  if (s == "attention") return Fusion::kAttention;
  throw ValidationError("unknown fusion '" + s + "'");
}

const char* to_string(OptimizerKind o) noexcept {
  return o == OptimizerKind::kSgd ? "sgd" : "adam";
}

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::kSgd;
  if (s == "adam") return OptimizerKind::kAdam;
  throw ValidationError("unknown optimizer '" + s + "'");
}

void DetectorConfig::validate() const {
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("dropout must lie in [0,1)");
  if (hidden < 1) throw ValidationError("hidden size must be at least 1");
  if (batch < 1) throw ValidationError("batch size must be at least 1");
  if (!(lr > 0.0)) throw ValidationError("learning rate must be positive");
  if (!(leaky_slope > 0.0f && leaky_slope < 1.0f)) {
    throw ValidationError("leaky slope must lie in (0,1)");
  }
  if (embed_dim < 1 || text_filters < 1 || conv1_channels < 1 || conv2_channels < 1) {
    throw ValidationError("layer widths must be positive");
  }
}

std::vector<std::pair<std::string, Tensor*>> DetectorParams::tensors() {
  std::vector<std::pair<std::string, Tensor*>> out = {
      {"embed", &embed},         {"text_conv", &text_conv}, {"text_conv_b", &text_conv_b},
      {"text_fc", &text_fc},     {"text_fc_b", &text_fc_b}, {"img_conv1", &img_conv1},
      {"img_conv1_b", &img_conv1_b}, {"img_conv2", &img_conv2}, {"img_conv2_b", &img_conv2_b},
      {"img_fc", &img_fc},       {"img_fc_b", &img_fc_b},
  };
  if (config.fusion == Fusion::kAttention) {
    out.emplace_back("att_w", &att_w);
    out.emplace_back("att_b", &att_b);
  }
  out.emplace_back("head1", &head1);
  out.emplace_back("head1_b", &head1_b);
  out.emplace_back("head2", &head2);
  out.emplace_back("head2_b", &head2_b);
  if (config.event_head) {
    out.emplace_back("event1", &event1);
    out.emplace_back("event1_b", &event1_b);
    out.emplace_back("event2", &event2);
    out.emplace_back("event2_b", &event2_b);
  }
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> DetectorParams::tensors() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& [name, t] : const_cast<DetectorParams*>(this)->tensors()) {
    out.emplace_back(name, t);
  }
  return out;
}

bool DetectorParams::all_finite() const {
  for (const auto& [name, t] : tensors()) {
    if (!t->all_finite()) return false;
  }
  return true;
}

bool operator==(const DetectorParams& a, const DetectorParams& b) {
  if (!(a.config == b.config) || !(a.alphabet == b.alphabet) ||
      a.image_height != b.image_height || a.image_width != b.image_width ||
      a.n_events != b.n_events) {
    return false;
  }
  auto ta = a.tensors();
  auto tb = b.tensors();
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (ta[i].first != tb[i].first || !(*ta[i].second == *tb[i].second)) return false;
  }
  return true;
}

namespace {

Tensor he_uniform(Shape shape, std::size_t fan_in, CounterRng& rng, double gain = 1.0) {
  Tensor t(std::move(shape));
  const double bound = gain * std::sqrt(6.0 / double(fan_in));
  for (float& v : t.data) v = static_cast<float>(rng.uniform(-bound, bound));
  return t;
}

}  // namespace

DetectorParams init_params(const DetectorConfig& cfg, const Alphabet& alphabet,
                           std::size_t height, std::size_t width, std::size_t n_events) {
  cfg.validate();
  if (height < 5 || width < 5) {
    throw DimensionError("detector needs images of at least 5x5, got " +
                         std::to_string(height) + "x" + std::to_string(width));
  }
  if (alphabet.size() == 0) throw ValidationError("empty alphabet");
  DetectorParams p;
  p.config = cfg;
  p.alphabet = alphabet;
  p.image_height = height;
  p.image_width = width;
  p.n_events = cfg.event_head ? n_events : 0;
  if (cfg.event_head && n_events < 2) {
    throw ValidationError("event head needs at least two events");
  }

  const std::size_t hid = cfg.hidden, e = cfg.embed_dim, f = cfg.text_filters;
  const std::size_t c1 = cfg.conv1_channels, c2 = cfg.conv2_channels;
  const std::size_t flat = c2 * (height - 4) * (width - 4);
  CounterRng root(cfg.seed, 0x1217);
  std::uint64_t tag = 0;
  auto next = [&]() { return root.derive(++tag); };

  {
    auto r = next();
    p.embed = Tensor(Shape{alphabet.size(), e});
    for (float& v : p.embed.data) v = static_cast<float>(r.uniform(-0.5, 0.5));
  }
  { auto r = next(); p.text_conv = he_uniform(Shape{3, e, f}, 3 * e, r); }
  p.text_conv_b = Tensor(Shape{f});
  { auto r = next(); p.text_fc = he_uniform(Shape{f, hid}, f, r); }
  p.text_fc_b = Tensor(Shape{hid});
  { auto r = next(); p.img_conv1 = he_uniform(Shape{c1, 3, 3, 3}, 27, r); }
  p.img_conv1_b = Tensor(Shape{c1});
  { auto r = next(); p.img_conv2 = he_uniform(Shape{c2, c1, 3, 3}, 9 * c1, r); }
  p.img_conv2_b = Tensor(Shape{c2});
  { auto r = next(); p.img_fc = he_uniform(Shape{flat, hid}, flat, r); }
  p.img_fc_b = Tensor(Shape{hid});
  {
    auto r = next();
    if (cfg.fusion == Fusion::kAttention) {
      p.att_w = he_uniform(Shape{hid, 1}, hid, r, 0.5);
      p.att_b = Tensor(Shape{1});
    }
  }
  { auto r = next(); p.head1 = he_uniform(Shape{2 * hid, hid}, 2 * hid, r); }
  p.head1_b = Tensor(Shape{hid});
  { auto r = next(); p.head2 = he_uniform(Shape{hid, 2}, hid, r, 0.05); }
  p.head2_b = Tensor(Shape{2});
  if (cfg.event_head) {
    { auto r = next(); p.event1 = he_uniform(Shape{2 * hid, hid}, 2 * hid, r); }
    p.event1_b = Tensor(Shape{hid});
    { auto r = next(); p.event2 = he_uniform(Shape{hid, n_events}, hid, r, 0.1); }
    p.event2_b = Tensor(Shape{n_events});
  }
  return p;
}

ForwardNodes build_forward(Graph& g, const DetectorParams& p,
                           const std::vector<int>& symbols, const Tensor& image,
                           const ForwardOptions& opt) {
  if (symbols.empty()) throw ValidationError("empty token sequence");
  ForwardNodes fw;
  std::vector<NodeId> ids;
  for (const auto& [name, t] : p.tensors()) ids.push_back(g.param(*t, opt.param_grad));
  fw.params = ids;
  std::size_t k = 0;
  const NodeId embed = ids[k++], text_conv = ids[k++], text_conv_b = ids[k++];
  const NodeId text_fc = ids[k++], text_fc_b = ids[k++];
  const NodeId c1 = ids[k++], c1b = ids[k++], c2 = ids[k++], c2b = ids[k++];
  const NodeId img_fc = ids[k++], img_fc_b = ids[k++];
  NodeId att_w = 0, att_b = 0;
  if (p.config.fusion == Fusion::kAttention) {
    att_w = ids[k++];
    att_b = ids[k++];
  }
  const NodeId h1 = ids[k++], h1b = ids[k++], h2 = ids[k++], h2b = ids[k++];
  const float slope = p.config.leaky_slope;

  // The embedding table is the leaf the text gradient flows to; when only
  // text gradients are needed we mark the looked-up rows as an input instead.
  NodeId embedded;
  if (opt.text_grad && !opt.param_grad) {
    Graph scratch;
    const NodeId tbl = scratch.param(p.embed, false);
    embedded = g.input(scratch.value(scratch.embedding(tbl, symbols)), true);
  } else {
    embedded = g.embedding(embed, symbols);
  }
  fw.embedded = embedded;
  NodeId t = g.leaky_relu(g.conv1d(embedded, text_conv, text_conv_b), slope);
  t = g.mean_pool(t);
  fw.r_text = g.leaky_relu(g.affine(t, text_fc, text_fc_b), slope);

  fw.image = g.input(image, opt.image_grad);
  NodeId v = g.leaky_relu(g.conv2d(fw.image, c1, c1b), slope);
  v = g.leaky_relu(g.conv2d(v, c2, c2b), slope);
  v = g.reshape(v, Shape{1, g.value(v).size()});
  fw.r_image = g.leaky_relu(g.affine(v, img_fc, img_fc_b), slope);

  NodeId image_feature = fw.r_image;
  if (p.config.fusion == Fusion::kAttention) {
    fw.gate = g.sigmoid(g.affine(fw.r_text, att_w, att_b));
    image_feature = g.gate(*fw.gate, fw.r_image);
  }
  fw.fused = g.concat(fw.r_text, image_feature);

  NodeId head_in = fw.fused;
  if (opt.dropout_mask) head_in = g.mask_mul(head_in, *opt.dropout_mask);
  NodeId h = g.leaky_relu(g.affine(head_in, h1, h1b), slope);
  fw.logits = g.affine(h, h2, h2b);

  if (p.config.event_head) {
    const NodeId e1 = ids[k++], e1b = ids[k++], e2 = ids[k++], e2b = ids[k++];
    const NodeId rev = g.grad_reverse(fw.fused, p.config.grl_lambda);
    fw.event_logits = g.affine(g.leaky_relu(g.affine(rev, e1, e1b), slope), e2, e2b);
  }
  return fw;
}

Detector::Detector(DetectorParams params) : params_(std::move(params)) {
  params_.config.validate();
}

void Detector::check_image(const Tensor& image) const {
  if (image.shape != Shape{3, params_.image_height, params_.image_width}) {
    throw DimensionError("detector expects image " +
                         shape_string(Shape{3, params_.image_height, params_.image_width}) +
                         ", got " + shape_string(image.shape));
  }
}

FeatureBundle Detector::extract_features(const NewsSample& s) const {
  return extract_features(s.tokens, s.image);
}

FeatureBundle Detector::extract_features(const std::u32string& tokens,
                                         const Tensor& image) const {
  check_image(image);
  Graph g;
  const auto fw = build_forward(g, params_, params_.alphabet.encode(tokens), image, {});
  FeatureBundle out;
  const std::size_t hid = params_.config.hidden;
  out.r_text = Tensor(Shape{hid}, g.value(fw.r_text).data);
  out.r_image = Tensor(Shape{hid}, g.value(fw.r_image).data);
  out.fused = Tensor(Shape{2 * hid}, g.value(fw.fused).data);
  if (fw.gate) out.gate = g.value(*fw.gate)[0];
  return out;
}

std::array<double, 2> Detector::logits(const std::u32string& tokens,
                                       const Tensor& image) const {
  check_image(image);
  Graph g;
  const auto fw = build_forward(g, params_, params_.alphabet.encode(tokens), image, {});
  const Tensor& l = g.value(fw.logits);
  return {l[0], l[1]};
}

ValueGrad Detector::image_loss_gradient(const std::u32string& tokens, const Tensor& image,
                                        int label) const {
  check_image(image);
  Graph g;
  ForwardOptions opt;
  opt.image_grad = true;
  const auto fw = build_forward(g, params_, params_.alphabet.encode(tokens), image, opt);
  const NodeId loss = g.softmax_cross_entropy(fw.logits, {label});
  g.set_loss(loss);
  g.backward();
  const auto gr = g.grad(fw.image);
  return {g.value(loss)[0], Tensor(image.shape, std::vector<float>(gr.begin(), gr.end()))};
}

ValueGrad Detector::image_margin_gradient(const std::u32string& tokens,
                                          const Tensor& image) const {
  check_image(image);
  Graph g;
  ForwardOptions opt;
  opt.image_grad = true;
  const auto fw = build_forward(g, params_, params_.alphabet.encode(tokens), image, opt);
  // margin = logits . (-1, +1)
  const NodeId dir = g.input(Tensor(Shape{2, 1}, std::vector<float>{-1.0f, 1.0f}));
  const NodeId zero = g.input(Tensor(Shape{1}));
  const NodeId margin = g.affine(fw.logits, dir, zero);
  g.set_loss(margin);
  g.backward();
  const auto gr = g.grad(fw.image);
  return {g.value(margin)[0], Tensor(image.shape, std::vector<float>(gr.begin(), gr.end()))};
}

ValueGrad Detector::text_loss_gradient(const std::u32string& tokens, const Tensor& image,
                                       int label) const {
  check_image(image);
  Graph g;
  ForwardOptions opt;
  opt.text_grad = true;
  const auto fw = build_forward(g, params_, params_.alphabet.encode(tokens), image, opt);
  const NodeId loss = g.softmax_cross_entropy(fw.logits, {label});
  g.set_loss(loss);
  g.backward();
  // dJ/d(onehot[l, s]) = <dJ/d(embedded[l]), embed[s]>
  const auto ge = g.grad(fw.embedded);
  const std::size_t len = tokens.size(), vocab = params_.alphabet.size();
  const std::size_t e = params_.config.embed_dim;
  Tensor out(Shape{len, vocab});
  for (std::size_t l = 0; l < len; ++l) {
    for (std::size_t s = 0; s < vocab; ++s) {
      float acc = 0.0f;
      for (std::size_t d = 0; d < e; ++d) acc += ge[l * e + d] * params_.embed[s * e + d];
      out[l * vocab + s] = acc;
    }
  }
  return {g.value(loss)[0], std::move(out)};
}

}  // namespace mmr
