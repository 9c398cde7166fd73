#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mmr/model.hpp"

namespace mmr {

enum class ImageAttackMethod { kFgsm, kPgd, kDeepFool };

const char* to_string(ImageAttackMethod m) noexcept;
ImageAttackMethod image_attack_from_string(const std::string& s);

struct ImageAttackConfig {
  ImageAttackMethod method = ImageAttackMethod::kFgsm;
  double epsilon = 0.1;
  std::size_t pgd_steps = 50;
  std::optional<double> pgd_step_size;  // epsilon / 10 when unset
  bool pgd_early_stop = false;
  std::size_t deepfool_max_iter = 50;
  double deepfool_overshoot = 0.02;
  std::uint64_t seed = 0;

  void validate() const;
  double step_size() const { return pgd_step_size.value_or(epsilon / 10.0); }
};

struct AdversarialResult {
  Tensor adv_image;     // clipped to [0,1]
  Tensor perturbation;  // adv_image - original
  bool success = false;
  double linf_norm = 0.0;
  double l2_norm = 0.0;
  std::size_t iterations = 0;
  int original_prediction = kReal;
  int adversarial_prediction = kReal;
  // DeepFool only: L2 norm of the accumulated minimal perturbation before
  // overshoot scaling and clipping.
  double minimal_l2 = 0.0;
};

// clip(I + eps * sign(dJ/dI)) with J the loss at the true label.
AdversarialResult fgsm(const MultiModalModel& model, const NewsSample& sample, double epsilon);

// Random start in the eps-ball, then `pgd_steps` signed-gradient steps, each
// projected back onto the eps-ball around I intersected with [0,1]. The
// observer, when set, sees every iterate.
using PgdObserver = std::function<void(std::size_t step, const Tensor& iterate)>;
AdversarialResult pgd(const MultiModalModel& model, const NewsSample& sample,
                      const ImageAttackConfig& cfg, const PgdObserver& observer = {});

// Binary DeepFool on the margin f = logit(fake) - logit(real). Throws
// DegenerateGradientError when the margin gradient vanishes.
AdversarialResult deepfool(const MultiModalModel& model, const NewsSample& sample,
                           const ImageAttackConfig& cfg);

AdversarialResult attack_image(const MultiModalModel& model, const NewsSample& sample,
                               const ImageAttackConfig& cfg);

struct RhoAdv {
  double value = 0.0;
  std::size_t used = 0;
  std::size_t degenerate = 0;
};

// Mean of ||r||_2 / ||I||_2 over the samples, r the unscaled DeepFool
// perturbation. Throws MetricUndefinedError when no sample is usable.
RhoAdv rho_adv(const MultiModalModel& model, const std::vector<NewsSample>& samples,
               const ImageAttackConfig& cfg = {});

// Writes <dir>/<id>.ppm (8-bit quantized) and <dir>/<id>.json with the
// pre-quantization norms.
void export_adversarial(const AdversarialResult& result, const std::string& id,
                        const ImageAttackConfig& cfg, const std::filesystem::path& dir);

}  // namespace mmr
