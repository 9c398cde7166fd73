#include "mmr/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <unordered_set>

#include "mmr/errors.hpp"
#include "mmr/rng.hpp"

namespace mmr {

void GenConfig::validate() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(image_signal) || !unit(text_signal) || !unit(marker_noise)) {
    throw ValidationError("signal probabilities must lie in [0,1]");
  }
  if (n_events < 2) throw ValidationError("n_events must be at least 2");
  if (height < 8 || width < 8) throw ValidationError("images must be at least 8x8");
  if (max_len < 16) throw ValidationError("max_len must be at least 16");
}

void validate_sample(const NewsSample& s, std::size_t max_len) {
  if (s.tokens.empty() || s.tokens.size() > max_len) {
    throw ValidationError("sample " + s.id + ": token length " +
                          std::to_string(s.tokens.size()) + " outside [1, " +
                          std::to_string(max_len) + "]");
  }
  if (s.label != kReal && s.label != kFake) {
    throw ValidationError("sample " + s.id + ": label " + std::to_string(s.label) +
                          " not in {0,1}");
  }
  if (s.event_id < 0) throw ValidationError("sample " + s.id + ": negative event id");
  if (s.image.ndim() != 3 || s.image.dim(0) != 3) {
    throw ValidationError("sample " + s.id + ": image must be 3xHxW, got " +
                          shape_string(s.image.shape));
  }
  for (float v : s.image.data) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw ValidationError("sample " + s.id + ": pixel outside [0,1]");
    }
  }
}

void Dataset::validate(std::size_t max_len) const {
  std::unordered_set<std::string> ids;
  for (const auto& s : samples) {
    validate_sample(s, max_len);
    if (!ids.insert(s.id).second) throw ValidationError("duplicate sample id " + s.id);
    if (s.image.shape != samples.front().image.shape) {
      throw ValidationError("sample " + s.id + ": image shape " +
                            shape_string(s.image.shape) + " differs from " +
                            shape_string(samples.front().image.shape));
    }
    alphabet.encode(s.tokens);
  }
}

std::vector<int> Dataset::events() const {
  std::set<int> ev;
  for (const auto& s : samples) ev.insert(s.event_id);
  return {ev.begin(), ev.end()};
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out;
  out.alphabet = alphabet;
  out.meta = meta;
  out.samples.reserve(indices.size());
  for (std::size_t i : indices) out.samples.push_back(samples.at(i));
  return out;
}

Tensor quantize_image(const Tensor& image) {
  Tensor out = image;
  out.grad.reset();
  for (float& v : out.data) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    v = static_cast<float>(std::lround(c * 255.0f)) / 255.0f;
  }
  return out;
}

namespace {

constexpr std::uint64_t kStreamLabels = 1;
constexpr std::uint64_t kStreamEvents = 2;
constexpr std::uint64_t kStreamVocab = 3;
constexpr std::uint64_t kStreamEventStyle = 4;
constexpr std::uint64_t kStreamSample = 1000;

struct EventStyle {
  std::array<double, 3> base;
  std::array<double, 3> blob;
  double angle;
  double blob_row, blob_col;
  std::vector<std::u32string> topic_words;
};

std::u32string make_word(CounterRng& rng) {
  static constexpr char32_t kCons[] = U"bcdfghjklmnprstvwz";
  static constexpr char32_t kVow[] = U"aeiou";
  const std::size_t syllables = 1 + rng.below(3);
  std::u32string w;
  for (std::size_t s = 0; s < syllables; ++s) {
    w += kCons[rng.below(18)];
    w += kVow[rng.below(5)];
    if (rng.bernoulli(0.3)) w += kCons[rng.below(18)];
  }
  return w;
}

void paint_background(Tensor& img, const EventStyle& style, CounterRng& rng) {
  const std::size_t h = img.dim(1), w = img.dim(2);
  const double jitter = rng.uniform(-0.05, 0.05);
  const double ca = std::cos(style.angle), sa = std::sin(style.angle);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        const double u = (double(i) / double(h - 1)) * ca + (double(j) / double(w - 1)) * sa;
        double v = style.base[c] + jitter + 0.12 * std::sin(3.14159265358979 * u);
        const double dr = double(i) - style.blob_row, dc = double(j) - style.blob_col;
        if (dr * dr + dc * dc <= 25.0) v += style.blob[c];
        v += 0.03 * rng.normal();
        img[(c * h + i) * w + j] = static_cast<float>(v);
      }
    }
  }
}

// Top-left ramp: red rises, green vanishes, blue falls.
void paint_motif(Tensor& img) {
  const std::size_t h = img.dim(1), w = img.dim(2);
  for (std::size_t i = 0; i < kMotifSize; ++i) {
    for (std::size_t j = 0; j < kMotifSize; ++j) {
      const double t = double(i + j) / double(2 * (kMotifSize - 1));
      img[(0 * h + i) * w + j] = static_cast<float>(0.55 + 0.45 * t);
      img[(1 * h + i) * w + j] = 0.05f;
      img[(2 * h + i) * w + j] = static_cast<float>(0.95 - 0.45 * t);
    }
  }
}

}  // namespace

Dataset generate_synthetic(const GenConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.alphabet = Alphabet::standard();
  ds.meta.generator = cfg;
  ds.meta.origin = "synthetic";
  const std::size_t n = cfg.n_samples;
  if (n == 0) return ds;

  const CounterRng root(cfg.seed);

  CounterRng vocab_rng = root.derive(kStreamVocab);
  std::vector<std::u32string> vocab;
  while (vocab.size() < 160) {
    auto w = make_word(vocab_rng);
    if (std::find(vocab.begin(), vocab.end(), w) == vocab.end()) vocab.push_back(w);
  }

  std::vector<EventStyle> styles(cfg.n_events);
  std::vector<double> weights(cfg.n_events);
  for (std::size_t e = 0; e < cfg.n_events; ++e) {
    CounterRng r = root.derive(kStreamEventStyle).derive(e);
    auto& st = styles[e];
    for (auto& b : st.base) b = r.uniform(0.2, 0.5);
    for (auto& b : st.blob) b = r.uniform(-0.15, 0.2);
    st.angle = r.uniform(0.0, 6.283185307179586);
    st.blob_row = r.uniform(10.0, double(cfg.height) - 10.0);
    st.blob_col = r.uniform(10.0, double(cfg.width) - 10.0);
    for (int k = 0; k < 6; ++k) st.topic_words.push_back(make_word(r));
    weights[e] = r.uniform(0.5, 1.5);
  }

  std::vector<int> labels(n, kReal);
  for (std::size_t i = n / 2; i < n; ++i) labels[i] = kFake;
  CounterRng label_rng = root.derive(kStreamLabels);
  label_rng.shuffle(labels);

  double total_weight = 0.0;
  for (double w : weights) total_weight += w;
  CounterRng event_rng = root.derive(kStreamEvents);

  ds.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    NewsSample s;
    s.id = "s" + std::to_string(i);
    s.label = labels[i];
    double pick = event_rng.uniform() * total_weight;
    std::size_t e = 0;
    while (e + 1 < cfg.n_events && pick >= weights[e]) pick -= weights[e++];
    s.event_id = static_cast<int>(e);
    const EventStyle& st = styles[e];

    CounterRng r = root.derive(kStreamSample + i);
    s.image = Tensor(Shape{3, cfg.height, cfg.width});
    paint_background(s.image, st, r);
    const bool motif = s.label == kFake && r.bernoulli(cfg.image_signal);
    if (motif) paint_motif(s.image);
    s.image = quantize_image(s.image);

    const bool class_marker = s.label == kFake && r.bernoulli(cfg.text_signal);
    const bool noise_marker = r.bernoulli(cfg.marker_noise);
    std::vector<std::u32string> words;
    const std::size_t budget = cfg.max_len - 12;
    const std::size_t target = 24 + r.below(budget > 24 ? budget - 24 : 1);
    std::size_t length = 0;
    while (length < target) {
      const auto& w = r.bernoulli(0.3) ? st.topic_words[r.below(st.topic_words.size())]
                                       : vocab[r.below(vocab.size())];
      if (length + w.size() + 1 > budget) break;
      length += w.size() + (words.empty() ? 0 : 1);
      words.push_back(w);
    }
    if (class_marker || noise_marker) {
      for (int k = 0; k < 2; ++k) {
        const std::u32string marker = kFakeMarkers[r.below(kFakeMarkers.size())];
        words.insert(words.begin() + static_cast<std::ptrdiff_t>(r.below(words.size() + 1)),
                     marker);
      }
    }
    for (std::size_t k = 0; k < words.size(); ++k) {
      if (k) s.tokens += U' ';
      s.tokens += words[k];
    }
    if (s.tokens.size() > cfg.max_len) s.tokens.resize(cfg.max_len);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

DatasetSplit split_event_disjoint(const Dataset& ds, SplitRatios ratios) {
  const std::array<double, 3> r = {ratios.train, ratios.test, ratios.val};
  for (double v : r) {
    if (!(v > 0.0)) throw ValidationError("split ratios must be positive");
  }
  if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-6) {
    throw ValidationError("split ratios must sum to 1");
  }

  std::vector<int> order;
  std::map<int, std::size_t> counts;
  for (const auto& s : ds.samples) {
    if (counts[s.event_id]++ == 0) order.push_back(s.event_id);
  }
  const std::size_t m = order.size();
  if (m < 3) {
    throw ValidationError("event-disjoint split needs at least 3 events, found " +
                          std::to_string(m));
  }

  std::vector<double> prefix(m + 1, 0.0);
  for (std::size_t k = 0; k < m; ++k) prefix[k + 1] = prefix[k] + double(counts[order[k]]);
  const double total = prefix[m];

  // Cuts a < b: events [0,a) train, [a,b) test, [b,m) val.
  std::size_t best_a = 1, best_b = 2;
  double best_err = std::numeric_limits<double>::infinity();
  for (std::size_t a = 1; a + 1 < m; ++a) {
    for (std::size_t b = a + 1; b < m; ++b) {
      const double err = std::abs(prefix[a] - r[0] * total) +
                         std::abs(prefix[b] - prefix[a] - r[1] * total) +
                         std::abs(total - prefix[b] - r[2] * total);
      if (err < best_err - 1e-9) {
        best_err = err;
        best_a = a;
        best_b = b;
      }
    }
  }

  std::map<int, int> group;
  for (std::size_t k = 0; k < m; ++k) {
    group[order[k]] = k < best_a ? 0 : (k < best_b ? 1 : 2);
  }
  std::array<std::vector<std::size_t>, 3> idx;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    idx[group[ds.samples[i].event_id]].push_back(i);
  }
  DatasetSplit out{ds.subset(idx[0]), ds.subset(idx[1]), ds.subset(idx[2])};
  out.train.meta.origin = ds.meta.origin + ":train";
  out.test.meta.origin = ds.meta.origin + ":test";
  out.val.meta.origin = ds.meta.origin + ":val";
  return out;
}

}  // namespace mmr
