#include "mmr/model.hpp"

#include <cmath>

namespace mmr {

double MultiModalModel::prob_fake(const std::u32string& tokens, const Tensor& image) const {
  const auto l = logits(tokens, image);
  return 1.0 / (1.0 + std::exp(l[0] - l[1]));
}

int MultiModalModel::predict(const std::u32string& tokens, const Tensor& image) const {
  return prob_fake(tokens, image) >= 0.5 ? kFake : kReal;
}

double MultiModalModel::loss(const std::u32string& tokens, const Tensor& image,
                             int label) const {
  const auto l = logits(tokens, image);
  const double mx = std::max(l[0], l[1]);
  const double lse = mx + std::log(std::exp(l[0] - mx) + std::exp(l[1] - mx));
  return lse - l[label];
}

double Metrics::precision() const {
  const std::size_t d = true_pos + false_pos;
  return d ? double(true_pos) / double(d) : 0.0;
}

double Metrics::recall() const {
  const std::size_t d = true_pos + false_neg;
  return d ? double(true_pos) / double(d) : 0.0;
}

double Metrics::f1() const {
  const double p = precision(), r = recall();
  return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

void Metrics::add(int label, int predicted) {
  ++n;
  if (label == predicted) ++correct;
  if (predicted == kFake && label == kFake) ++true_pos;
  if (predicted == kFake && label == kReal) ++false_pos;
  if (predicted == kReal && label == kFake) ++false_neg;
}

Metrics evaluate(const MultiModalModel& model, const Dataset& ds) {
  Metrics m;
  double loss = 0.0;
  for (const auto& s : ds.samples) {
    const auto l = model.logits(s.tokens, s.image);
    const double p = 1.0 / (1.0 + std::exp(l[0] - l[1]));
    m.add(s.label, p >= 0.5 ? kFake : kReal);
    const double mx = std::max(l[0], l[1]);
    loss += mx + std::log(std::exp(l[0] - mx) + std::exp(l[1] - mx)) - l[s.label];
  }
  m.mean_loss = m.n ? loss / double(m.n) : 0.0;
  return m;
}

}  // namespace mmr
