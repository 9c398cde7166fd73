#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mmr/corpus.hpp"
#include "mmr/graph.hpp"
#include "mmr/model.hpp"
#include "mmr/rng.hpp"

namespace mmr {

enum class Fusion { kConcat, kAttention };
enum class OptimizerKind { kSgd, kAdam };

const char* to_string(Fusion f) noexcept;
Fusion fusion_from_string(const std::string& s);
const char* to_string(OptimizerKind o) noexcept;
OptimizerKind optimizer_from_string(const std::string& s);

struct DetectorConfig {
  Fusion fusion = Fusion::kConcat;
  bool event_head = false;
  std::size_t hidden = 32;  // p
  double dropout = 0.5;
  double lr = 1e-3;
  std::size_t batch = 128;
  std::size_t epochs = 30;
  float leaky_slope = 0.01f;
  float grl_lambda = 1.0f;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  std::size_t embed_dim = 16;
  std::size_t text_filters = 32;
  std::size_t conv1_channels = 4;
  std::size_t conv2_channels = 4;
  std::uint64_t seed = 7;

  void validate() const;
  friend bool operator==(const DetectorConfig&, const DetectorConfig&) = default;
};

// Every trainable tensor of a detector plus the facts needed to rebuild it.
struct DetectorParams {
  DetectorConfig config;
  Alphabet alphabet;
  std::size_t image_height = 0;
  std::size_t image_width = 0;
  std::size_t n_events = 0;  // width of the event head; 0 without one

  // text path: embedding -> conv1d -> leaky -> mean-pool -> affine -> leaky
  Tensor embed, text_conv, text_conv_b, text_fc, text_fc_b;
  // image path: conv3x3 -> leaky -> conv3x3 -> leaky -> affine -> leaky
  Tensor img_conv1, img_conv1_b, img_conv2, img_conv2_b, img_fc, img_fc_b;
  // attention gate on R_I, scored from R_T (attention fusion only)
  Tensor att_w, att_b;
  // classifier head 2p -> p -> 2
  Tensor head1, head1_b, head2, head2_b;
  // event discriminator 2p -> n_events (event_head only)
  Tensor event1, event1_b, event2, event2_b;

  // Stable-ordered view of the tensors that exist for this configuration.
  std::vector<std::pair<std::string, Tensor*>> tensors();
  std::vector<std::pair<std::string, const Tensor*>> tensors() const;

  std::size_t fused_width() const { return 2 * config.hidden; }
  bool all_finite() const;
  friend bool operator==(const DetectorParams& a, const DetectorParams& b);
};

// Seeded initialization; the classifier output layer starts near zero so the
// initial prediction is close to uniform.
DetectorParams init_params(const DetectorConfig& cfg, const Alphabet& alphabet,
                           std::size_t height, std::size_t width,
                           std::size_t n_events);

struct FeatureBundle {
  Tensor r_text;   // [p]
  Tensor r_image;  // [p]
  Tensor fused;    // [2p]
  std::optional<float> gate;
};

// Node ids of one forward pass.
struct ForwardNodes {
  NodeId image = 0;
  NodeId embedded = 0;
  NodeId r_text = 0;
  NodeId r_image = 0;
  NodeId fused = 0;
  NodeId logits = 0;
  std::optional<NodeId> gate;
  std::optional<NodeId> event_logits;
  // param node per tensor, same order as DetectorParams::tensors()
  std::vector<NodeId> params;
};

struct ForwardOptions {
  bool image_grad = false;
  bool param_grad = false;
  bool text_grad = false;
  const Tensor* dropout_mask = nullptr;  // [1 x 2p], applied to the fused vector
};

ForwardNodes build_forward(Graph& g, const DetectorParams& p,
                           const std::vector<int>& symbols, const Tensor& image,
                           const ForwardOptions& opt);

class Detector final : public MultiModalModel {
 public:
  explicit Detector(DetectorParams params);

  const DetectorParams& params() const noexcept { return params_; }
  const Alphabet& alphabet() const override { return params_.alphabet; }

  FeatureBundle extract_features(const NewsSample& s) const;
  FeatureBundle extract_features(const std::u32string& tokens, const Tensor& image) const;

  std::array<double, 2> logits(const std::u32string& tokens,
                               const Tensor& image) const override;
  ValueGrad image_loss_gradient(const std::u32string& tokens, const Tensor& image,
                                int label) const override;
  ValueGrad image_margin_gradient(const std::u32string& tokens,
                                  const Tensor& image) const override;
  ValueGrad text_loss_gradient(const std::u32string& tokens, const Tensor& image,
                               int label) const override;

 private:
  void check_image(const Tensor& image) const;
  DetectorParams params_;
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double event_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
};

// Minibatch trainer over per-sample graphs. Gradients are averaged over the
// batch; dropout masks come from a stream keyed by (seed, step, position).
class Trainer {
 public:
  explicit Trainer(DetectorParams& params);

  // One optimizer step on the batch; returns mean classification loss and the
  // number of correct training predictions.
  std::pair<double, std::size_t> step(const std::vector<const NewsSample*>& batch);

  double last_event_loss() const noexcept { return last_event_loss_; }
  std::size_t steps() const noexcept { return step_; }

 private:
  DetectorParams& params_;
  std::vector<std::vector<float>> m_, v_;
  std::size_t step_ = 0;
  double last_event_loss_ = 0.0;
};

// Trains from a seeded initialization. Throws ValidationError when the
// training set is empty or shares events with the validation set.
std::pair<DetectorParams, TrainReport> train(const DetectorConfig& cfg,
                                             const Dataset& train_set,
                                             const Dataset& val_set);

// Continues training existing parameters for `epochs` epochs. The optional
// hook may replace each shuffled epoch order (e.g. to inject adversarial
// copies); it receives the epoch index and the current parameters.
using EpochHook = std::function<std::vector<NewsSample>(std::size_t epoch,
                                                        const DetectorParams&)>;
TrainReport train_more(DetectorParams& params, const Dataset& train_set,
                       const Dataset& val_set, std::size_t epochs,
                       const EpochHook& extra = {});

// Checkpoint: "MMRDET01", one line of JSON (config + tensor directory),
// then little-endian float32 blobs.
void save_checkpoint(const DetectorParams& params, const std::filesystem::path& path);
DetectorParams load_checkpoint(const std::filesystem::path& path);

}  // namespace mmr
