#include "mmr/image_attacks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "mmr/errors.hpp"
#include "mmr/rng.hpp"

namespace mmr {

namespace {

constexpr std::uint64_t kStreamPgd = 0x96D;
constexpr double kDegenerateNorm = 1e-12;
// Margin used to leave an exact tie when the sample sits on the boundary.
constexpr double kBoundaryPush = 1e-6;

float sign(float v) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); }

void clip01(Tensor& t) {
  for (float& v : t.data) v = std::clamp(v, 0.0f, 1.0f);
}

AdversarialResult finish(const MultiModalModel& model, const NewsSample& s, Tensor adv,
                         int original_pred, std::size_t iterations) {
  AdversarialResult r;
  r.perturbation = Tensor(adv.shape);
  double l2 = 0.0, linf = 0.0;
  for (std::size_t i = 0; i < adv.size(); ++i) {
    const float d = adv[i] - s.image[i];
    r.perturbation[i] = d;
    l2 += double(d) * double(d);
    linf = std::max(linf, double(std::abs(d)));
  }
  r.l2_norm = std::sqrt(l2);
  r.linf_norm = linf;
  r.iterations = iterations;
  r.original_prediction = original_pred;
  r.adversarial_prediction = model.predict(s.tokens, adv);
  r.success = r.adversarial_prediction != original_pred;
  r.adv_image = std::move(adv);
  return r;
}

}  // namespace

const char* to_string(ImageAttackMethod m) noexcept {
  switch (m) {
    case ImageAttackMethod::kFgsm: return "fgsm";
    case ImageAttackMethod::kPgd: return "pgd";
    case ImageAttackMethod::kDeepFool: return "deepfool";
  }
  return "?";
}

ImageAttackMethod image_attack_from_string(const std::string& s) {
  if (s == "fgsm") return ImageAttackMethod::kFgsm;
  if (s == "pgd") return ImageAttackMethod::kPgd;
  if (s == "deepfool") return ImageAttackMethod::kDeepFool;
  throw ValidationError("unknown image attack '" + s + "'");
}

void ImageAttackConfig::validate() const {
  if (!(epsilon >= 0.0)) throw ValidationError("epsilon must be non-negative");
  if (pgd_steps < 1) throw ValidationError("pgd_steps must be at least 1");
  if (pgd_step_size && !(*pgd_step_size >= 0.0)) {
    throw ValidationError("pgd_step_size must be non-negative");
  }
  if (deepfool_max_iter < 1) throw ValidationError("deepfool_max_iter must be at least 1");
  if (!(deepfool_overshoot >= 0.0)) throw ValidationError("overshoot must be non-negative");
}

AdversarialResult fgsm(const MultiModalModel& model, const NewsSample& s, double epsilon) {
  if (!(epsilon >= 0.0)) throw ValidationError("epsilon must be non-negative");
  const int pred = model.predict(s.tokens, s.image);
  Tensor adv = s.image;
  if (epsilon > 0.0) {
    const auto vg = model.image_loss_gradient(s.tokens, s.image, s.label);
    const float e = static_cast<float>(epsilon);
    for (std::size_t i = 0; i < adv.size(); ++i) adv[i] += e * sign(vg.grad[i]);
    clip01(adv);
  }
  return finish(model, s, std::move(adv), pred, 1);
}

AdversarialResult pgd(const MultiModalModel& model, const NewsSample& s,
                      const ImageAttackConfig& cfg, const PgdObserver& observer) {
  cfg.validate();
  const int pred = model.predict(s.tokens, s.image);
  const std::size_t n = s.image.size();
  const float e = static_cast<float>(cfg.epsilon);
  std::vector<float> lo(n), hi(n);
  for (std::size_t i = 0; i < n; ++i) {
    lo[i] = std::max(0.0f, s.image[i] - e);
    hi[i] = std::min(1.0f, s.image[i] + e);
  }
  auto project = [&](Tensor& x) {
    for (std::size_t i = 0; i < n; ++i) x[i] = std::clamp(x[i], lo[i], hi[i]);
  };

  Tensor x = s.image;
  if (e == 0.0f) return finish(model, s, std::move(x), pred, 0);
  CounterRng rng(cfg.seed, kStreamPgd);
  for (std::size_t i = 0; i < n; ++i) x[i] += static_cast<float>(rng.uniform(-e, e));
  project(x);
  if (observer) observer(0, x);

  const float step = static_cast<float>(cfg.step_size());
  std::size_t it = 0;
  while (it < cfg.pgd_steps) {
    const auto vg = model.image_loss_gradient(s.tokens, x, s.label);
    for (std::size_t i = 0; i < n; ++i) x[i] += step * sign(vg.grad[i]);
    project(x);
    ++it;
    if (observer) observer(it, x);
    if (cfg.pgd_early_stop && model.predict(s.tokens, x) != pred) break;
  }
  return finish(model, s, std::move(x), pred, it);
}

AdversarialResult deepfool(const MultiModalModel& model, const NewsSample& s,
                           const ImageAttackConfig& cfg) {
  cfg.validate();
  const int pred = model.predict(s.tokens, s.image);
  const std::size_t n = s.image.size();
  const double scale = 1.0 + cfg.deepfool_overshoot;
  std::vector<double> r_total(n, 0.0);
  Tensor x = s.image;
  Tensor candidate = s.image;
  std::size_t it = 0;
  while (it < cfg.deepfool_max_iter) {
    const auto vg = model.image_margin_gradient(s.tokens, x);
    double norm2 = 0.0;
    for (float g : vg.grad.data) norm2 += double(g) * double(g);
    if (std::sqrt(norm2) < kDegenerateNorm) {
      throw DegenerateGradientError("deepfool: margin gradient vanished at iteration " +
                                    std::to_string(it));
    }
    double f = vg.value;
    if (f == 0.0) f = pred == kFake ? kBoundaryPush : -kBoundaryPush;
    const double coef = -f / norm2;
    for (std::size_t i = 0; i < n; ++i) r_total[i] += coef * double(vg.grad[i]);
    ++it;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = static_cast<float>(double(s.image[i]) + r_total[i]);
      candidate[i] = static_cast<float>(double(s.image[i]) + scale * r_total[i]);
    }
    clip01(candidate);
    if (model.predict(s.tokens, candidate) != pred) break;
  }
  AdversarialResult res = finish(model, s, std::move(candidate), pred, it);
  double l2 = 0.0;
  for (double v : r_total) l2 += v * v;
  res.minimal_l2 = std::sqrt(l2);
  return res;
}

AdversarialResult attack_image(const MultiModalModel& model, const NewsSample& sample,
                               const ImageAttackConfig& cfg) {
  switch (cfg.method) {
    case ImageAttackMethod::kFgsm:
      cfg.validate();
      return fgsm(model, sample, cfg.epsilon);
    case ImageAttackMethod::kPgd: return pgd(model, sample, cfg);
    case ImageAttackMethod::kDeepFool: return deepfool(model, sample, cfg);
  }
  throw ValidationError("unknown image attack");
}

RhoAdv rho_adv(const MultiModalModel& model, const std::vector<NewsSample>& samples,
               const ImageAttackConfig& cfg) {
  if (samples.empty()) throw ValidationError("rho_adv needs at least one sample");
  RhoAdv out;
  double total = 0.0;
  for (const auto& s : samples) {
    double norm = 0.0;
    for (float v : s.image.data) norm += double(v) * double(v);
    norm = std::sqrt(norm);
    if (norm == 0.0) {
      ++out.degenerate;
      continue;
    }
    try {
      const auto r = deepfool(model, s, cfg);
      total += r.minimal_l2 / norm;
      ++out.used;
    } catch (const DegenerateGradientError&) {
      ++out.degenerate;
    }
  }
  if (out.used == 0) {
    throw MetricUndefinedError("rho_adv undefined: all " + std::to_string(samples.size()) +
                               " samples have degenerate gradients");
  }
  out.value = total / double(out.used);
  return out;
}

void export_adversarial(const AdversarialResult& result, const std::string& id,
                        const ImageAttackConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_ppm(result.adv_image, dir / (id + ".ppm"));
  nlohmann::json side = {{"id", id},
                         {"method", to_string(cfg.method)},
                         {"epsilon", cfg.epsilon},
                         {"linf_norm", result.linf_norm},
                         {"l2_norm", result.l2_norm},
                         {"minimal_l2", result.minimal_l2},
                         {"success", result.success},
                         {"iterations", result.iterations},
                         {"original_prediction", result.original_prediction},
                         {"adversarial_prediction", result.adversarial_prediction}};
  std::ofstream out(dir / (id + ".json"));
  if (!out) throw IoError("cannot write sidecar for " + id);
  out << side.dump() << '\n';
}

}  // namespace mmr
