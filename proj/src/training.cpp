#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "mmr/detector.hpp"
#include "mmr/errors.hpp"

namespace mmr {

namespace {

constexpr std::uint64_t kStreamDropout = 0xD50;
constexpr std::uint64_t kStreamShuffle = 0x5F1;

Tensor dropout_mask(const DetectorParams& p, std::size_t step, std::size_t position) {
  const double keep = 1.0 - p.config.dropout;
  Tensor mask(Shape{1, p.fused_width()}, 1.0f);
  if (p.config.dropout <= 0.0) return mask;
  CounterRng rng = CounterRng(p.config.seed, kStreamDropout).derive(step).derive(position);
  const float scale = static_cast<float>(1.0 / keep);
  for (float& m : mask.data) m = rng.bernoulli(keep) ? scale : 0.0f;
  return mask;
}

}  // namespace

Trainer::Trainer(DetectorParams& params) : params_(params) {
  for (auto& [name, t] : params_.tensors()) {
    m_.emplace_back(t->size(), 0.0f);
    v_.emplace_back(t->size(), 0.0f);
  }
}

std::pair<double, std::size_t> Trainer::step(const std::vector<const NewsSample*>& batch) {
  if (batch.empty()) return {0.0, 0};
  auto tensors = params_.tensors();
  for (auto& [name, t] : tensors) t->zero_grad();

  const float inv_b = 1.0f / static_cast<float>(batch.size());
  double loss_sum = 0.0, event_sum = 0.0;
  std::size_t correct = 0;
  ForwardOptions opt;
  opt.param_grad = true;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const NewsSample& s = *batch[i];
    const Tensor mask = dropout_mask(params_, step_, i);
    opt.dropout_mask = &mask;
    Graph g;
    const auto fw = build_forward(g, params_, params_.alphabet.encode(s.tokens), s.image, opt);
    const NodeId cls = g.softmax_cross_entropy(fw.logits, {s.label});
    NodeId total = cls;
    if (fw.event_logits) {
      if (s.event_id < 0 || static_cast<std::size_t>(s.event_id) >= params_.n_events) {
        throw ValidationError("event id " + std::to_string(s.event_id) +
                              " outside the event head");
      }
      const NodeId ev = g.softmax_cross_entropy(*fw.event_logits, {s.event_id});
      event_sum += g.value(ev)[0];
      total = g.add(cls, ev);
    }
    g.set_loss(total);
    g.backward();
    loss_sum += g.value(cls)[0];
    const Tensor& l = g.value(fw.logits);
    if ((l[1] >= l[0] ? kFake : kReal) == s.label) ++correct;
    for (std::size_t k = 0; k < tensors.size(); ++k) {
      const auto gr = g.grad(fw.params[k]);
      auto& acc = *tensors[k].second->grad;
      for (std::size_t j = 0; j < gr.size(); ++j) acc[j] += inv_b * gr[j];
    }
  }

  ++step_;
  const auto& cfg = params_.config;
  const float lr = static_cast<float>(cfg.lr);
  if (cfg.optimizer == OptimizerKind::kSgd) {
    for (auto& [name, t] : tensors) {
      const auto& gr = *t->grad;
      for (std::size_t j = 0; j < t->size(); ++j) t->data[j] -= lr * gr[j];
    }
  } else {
    constexpr double b1 = 0.9, b2 = 0.999;
    constexpr float eps = 1e-8f;
    const float c1 = static_cast<float>(1.0 - std::pow(b1, double(step_)));
    const float c2 = static_cast<float>(1.0 - std::pow(b2, double(step_)));
    for (std::size_t k = 0; k < tensors.size(); ++k) {
      Tensor& t = *tensors[k].second;
      const auto& gr = *t.grad;
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t j = 0; j < t.size(); ++j) {
        m[j] = float(b1) * m[j] + float(1.0 - b1) * gr[j];
        v[j] = float(b2) * v[j] + float(1.0 - b2) * gr[j] * gr[j];
        t.data[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps);
      }
    }
  }
  for (auto& [name, t] : tensors) t->grad.reset();
  last_event_loss_ = event_sum / double(batch.size());
  return {loss_sum / double(batch.size()), correct};
}

TrainReport train_more(DetectorParams& params, const Dataset& train_set,
                       const Dataset& val_set, std::size_t epochs, const EpochHook& extra) {
  TrainReport report;
  if (epochs == 0) return report;
  Trainer trainer(params);
  const std::size_t n = train_set.size();
  const std::size_t batch = params.config.batch;
  const CounterRng shuffle_root(params.config.seed, kStreamShuffle);

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    CounterRng rng = shuffle_root.derive(epoch);
    rng.shuffle(order);

    std::vector<NewsSample> adversarial;
    if (extra) adversarial = extra(epoch, params);
    const std::size_t clean_per_batch =
        adversarial.empty() ? batch : std::max<std::size_t>(1, (batch + 1) / 2);
    const std::size_t extra_per_batch = adversarial.empty() ? 0 : batch - clean_per_batch;

    double loss_acc = 0.0, event_acc = 0.0;
    std::size_t correct = 0, seen = 0, extra_pos = 0;
    for (std::size_t start = 0; start < n; start += clean_per_batch) {
      std::vector<const NewsSample*> items;
      for (std::size_t i = start; i < std::min(n, start + clean_per_batch); ++i) {
        items.push_back(&train_set.samples[order[i]]);
      }
      for (std::size_t k = 0; k < extra_per_batch && !adversarial.empty(); ++k) {
        items.push_back(&adversarial[extra_pos++ % adversarial.size()]);
      }
      const auto [loss, ok] = trainer.step(items);
      loss_acc += loss * double(items.size());
      event_acc += trainer.last_event_loss() * double(items.size());
      correct += ok;
      seen += items.size();
    }

    EpochStats st;
    st.epoch = epoch;
    st.train_loss = loss_acc / double(seen);
    st.train_accuracy = double(correct) / double(seen);
    st.event_loss = event_acc / double(seen);
    if (!val_set.empty()) {
      const Detector det(params);
      const Metrics m = evaluate(det, val_set);
      st.val_loss = m.mean_loss;
      st.val_accuracy = m.accuracy();
    }
    report.epochs.push_back(st);
  }
  return report;
}

std::pair<DetectorParams, TrainReport> train(const DetectorConfig& cfg,
                                             const Dataset& train_set,
                                             const Dataset& val_set) {
  cfg.validate();
  if (train_set.empty()) throw ValidationError("training set is empty");
  const auto train_events = train_set.events();
  const std::set<int> tev(train_events.begin(), train_events.end());
  for (int e : val_set.events()) {
    if (tev.count(e)) {
      throw ValidationError("validation set shares event " + std::to_string(e) +
                            " with the training set");
    }
  }
  const Tensor& img = train_set.samples.front().image;
  const std::size_t n_events = static_cast<std::size_t>(train_events.back()) + 1;
  DetectorParams params = init_params(cfg, train_set.alphabet, img.dim(1), img.dim(2), n_events);
  TrainReport report = train_more(params, train_set, val_set, cfg.epochs);
  return {std::move(params), std::move(report)};
}

}  // namespace mmr
