#pragma once

#include <array>
#include <string>

#include "mmr/alphabet.hpp"
#include "mmr/corpus.hpp"
#include "mmr/tensor.hpp"

namespace mmr {

struct ValueGrad {
  double value = 0.0;
  Tensor grad;
};

// What the attacks and evaluators need from a binary text+image classifier.
// Implementations must be safe to call concurrently through a const
// reference.
class MultiModalModel {
 public:
  virtual ~MultiModalModel() = default;

  virtual const Alphabet& alphabet() const = 0;

  // Logits for (real, fake).
  virtual std::array<double, 2> logits(const std::u32string& tokens,
                                       const Tensor& image) const = 0;

  // Cross-entropy J(x, label) and dJ/d(image).
  virtual ValueGrad image_loss_gradient(const std::u32string& tokens,
                                        const Tensor& image, int label) const = 0;

  // Margin f = logit(fake) - logit(real) and df/d(image).
  virtual ValueGrad image_margin_gradient(const std::u32string& tokens,
                                          const Tensor& image) const = 0;

  // Cross-entropy J and dJ/d(one-hot text), shape [len x |alphabet|].
  virtual ValueGrad text_loss_gradient(const std::u32string& tokens,
                                       const Tensor& image, int label) const = 0;

  double prob_fake(const std::u32string& tokens, const Tensor& image) const;
  int predict(const std::u32string& tokens, const Tensor& image) const;
  double prob_fake(const NewsSample& s) const { return prob_fake(s.tokens, s.image); }
  int predict(const NewsSample& s) const { return predict(s.tokens, s.image); }
  double loss(const std::u32string& tokens, const Tensor& image, int label) const;
};

struct Metrics {
  std::size_t n = 0;
  std::size_t correct = 0;
  std::size_t true_pos = 0;   // fake predicted fake
  std::size_t false_pos = 0;  // real predicted fake
  std::size_t false_neg = 0;  // fake predicted real
  double mean_loss = 0.0;

  double accuracy() const { return n ? double(correct) / double(n) : 0.0; }
  double precision() const;
  double recall() const;
  double f1() const;
  void add(int label, int predicted);
};

Metrics evaluate(const MultiModalModel& model, const Dataset& ds);

}  // namespace mmr
