#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mmr/detector.hpp"
#include "mmr/image_attacks.hpp"
#include "mmr/text_attacks.hpp"

namespace mmr {

struct ResizeSpec {
  std::size_t height = 16;
  std::size_t width = 16;
  void validate() const;
};

// Box-filter resampling of a CxHxW image: every output pixel is the
// area-weighted mean of the input pixels it covers.
Tensor area_resize(const Tensor& image, std::size_t height, std::size_t width);

// Nearest-neighbour resampling with half-pixel centers.
Tensor nearest_resize(const Tensor& image, std::size_t height, std::size_t width);

// Area-averaged down to the intermediate size, nearest-neighbour back up to the
// input size. Idempotent when the intermediate size divides the input size.
Tensor resize_defense(const Tensor& image, const ResizeSpec& spec);

// Applies resize_defense to every image before delegating.
class ResizeDefendedModel final : public MultiModalModel {
 public:
  ResizeDefendedModel(const MultiModalModel& inner, ResizeSpec spec);
  const Alphabet& alphabet() const override { return inner_.alphabet(); }
  std::array<double, 2> logits(const std::u32string& tokens, const Tensor& image) const override;
  // Gradients are those of the undefended model at the resized image.
  ValueGrad image_loss_gradient(const std::u32string& tokens, const Tensor& image,
                                int label) const override;
  ValueGrad image_margin_gradient(const std::u32string& tokens,
                                  const Tensor& image) const override;
  ValueGrad text_loss_gradient(const std::u32string& tokens, const Tensor& image,
                               int label) const override;

 private:
  const MultiModalModel& inner_;
  ResizeSpec spec_;
};

enum class AttackModality { kImage, kText };

const char* to_string(AttackModality m) noexcept;
AttackModality attack_modality_from_string(const std::string& s);

struct AdversarialTrainingConfig {
  AttackModality modality = AttackModality::kImage;
  ImageAttackConfig image;  // fgsm or pgd
  TextAttackConfig text;    // hotflip or viper
  std::size_t epochs = 20;
  std::size_t examples_per_epoch = 1000;
  double lr = 1e-3;
  std::uint64_t seed = 0;

  // Throws ValidationError when the attack does not act on `modality`.
  void validate() const;
};

// Continues training `start` on clean batches mixed 1:1 with adversarial
// copies regenerated against the current weights at the start of every epoch.
DetectorParams adversarial_training(const DetectorParams& start, const Dataset& train_set,
                                    const Dataset& val_set,
                                    const AdversarialTrainingConfig& cfg,
                                    const CharEmbeddingSpace& ces = CharEmbeddingSpace::standard());

// kSize flags the smaller cluster when it is small and well separated.
// kExclusionary retrains without the smaller (well separated) cluster and
// flags it when the retrained model assigns most of it to another class.
enum class ACAnalysis { kSize, kExclusionary };

const char* to_string(ACAnalysis a) noexcept;
ACAnalysis ac_analysis_from_string(const std::string& s);

struct ActivationClusteringConfig {
  std::size_t components = 10;
  std::size_t max_iterations = 100;
  ACAnalysis analysis = ACAnalysis::kExclusionary;
  double size_threshold = 0.35;  // kSize only
  double silhouette_threshold = 0.1;
  double reclassification_ratio = 0.5;  // kExclusionary: flag when own/other < ratio
  std::optional<std::size_t> retrain_epochs;  // kExclusionary; default: the model's
  std::size_t min_class_size = 4;

  void validate() const;
};

struct ClassClusters {
  int predicted_class = 0;
  std::size_t n = 0;
  bool skipped = false;
  std::vector<std::size_t> members;  // dataset indices
  std::vector<int> assignment;       // cluster per member
  std::size_t sizes[2] = {0, 0};
  double silhouette = 0.0;
  double relative_size = 0.0;        // smaller cluster / class size
  bool flagged = false;
  int flagged_cluster = -1;
  // kExclusionary: predictions of the retrained model on the smaller cluster
  std::size_t reclassified_own = 0;
  std::size_t reclassified_other = 0;
};

struct ACReport {
  std::vector<ClassClusters> classes;
  std::vector<std::string> flagged_ids;
  std::vector<std::string> notes;
  std::optional<double> precision;
  std::optional<double> recall;
};

// Clusters the fused representation per predicted class (PCA, then 2-means
// with farthest-point initialization) and flags at most the smaller cluster of
// each class. `truth` (a poison mask aligned with `train_set`) adds precision
// and recall.
ACReport activation_clustering(const Detector& model, const Dataset& train_set,
                               const ActivationClusteringConfig& cfg = {},
                               const std::vector<bool>* truth = nullptr);

// Copy of `ds` without the listed ids.
Dataset remove_ids(const Dataset& ds, const std::vector<std::string>& ids);

}  // namespace mmr
