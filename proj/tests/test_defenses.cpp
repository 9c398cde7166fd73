#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "mmr/backdoor.hpp"
#include "mmr/defenses.hpp"
#include "mmr/errors.hpp"
#include "support/fixtures.hpp"
#include "support/toy_models.hpp"

using namespace mmr;

namespace {

Tensor random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  CounterRng r(seed, 1);
  Tensor t({3, h, w});
  for (float& v : t.data) v = static_cast<float>(r.uniform());
  return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(double(a[k]) - b[k]));
  return m;
}

double adversarial_accuracy(const MultiModalModel& judge, const MultiModalModel& source,
                            const std::vector<NewsSample>& samples, double eps) {
  std::size_t ok = 0;
  for (const auto& s : samples) {
    NewsSample adv = s;
    adv.image = fgsm(source, s, eps).adv_image;
    ok += judge.predict(adv) == s.label;
  }
  return double(ok) / double(samples.size());
}

double clean_accuracy(const MultiModalModel& m, const std::vector<NewsSample>& samples) {
  std::size_t ok = 0;
  for (const auto& s : samples) ok += m.predict(s) == s.label;
  return double(ok) / double(samples.size());
}

}  // namespace

TEST_CASE("resampling identities") {
  const Tensor img = random_image(12, 10, 1);
  CHECK(area_resize(img, 12, 10) == img);
  CHECK(nearest_resize(img, 12, 10) == img);
  const Tensor flat({3, 12, 10}, 0.37f);
  CHECK(max_abs_diff(area_resize(flat, 5, 7), Tensor({3, 5, 7}, 0.37f)) < 1e-6);
  CHECK(max_abs_diff(resize_defense(flat, ResizeSpec{5, 7}), flat) < 1e-6);
  // area average of a 2x2 block
  Tensor tiny({1, 2, 2}, std::vector<float>{0.f, 1.f, 0.5f, 0.5f});
  CHECK(area_resize(tiny, 1, 1)[0] == doctest::Approx(0.5));
  // nearest-neighbour up-sampling by 2 repeats each pixel
  const Tensor up = nearest_resize(tiny, 4, 4);
  CHECK(up[0] == 0.f);
  CHECK(up[1] == 0.f);
  CHECK(up[2] == 1.f);
  CHECK(up[4 * 2] == 0.5f);
  CHECK_THROWS_AS(area_resize(Tensor({4}), 2, 2), DimensionError);
  CHECK_THROWS_AS(resize_defense(img, ResizeSpec{1, 4}), ValidationError);
}

TEST_CASE("resize defense is idempotent and range preserving") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor img = random_image(32, 32, seed);
    for (const ResizeSpec spec : {ResizeSpec{16, 16}, ResizeSpec{8, 8}, ResizeSpec{16, 8}}) {
      const Tensor once = resize_defense(img, spec);
      CHECK(once.shape == img.shape);
      CHECK(max_abs_diff(resize_defense(once, spec), once) <= 1e-6);
      for (float v : once.data) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
      }
    }
  }
}

TEST_CASE("resize removes a checkerboard perturbation") {
  Tensor img({3, 32, 32}, 0.5f);
  Tensor noisy = img;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 32; ++i)
      for (std::size_t j = 0; j < 32; ++j) noisy[(c * 32 + i) * 32 + j] += (i + j) % 2 ? 0.1f : -0.1f;
  CHECK(max_abs_diff(resize_defense(noisy, ResizeSpec{}), img) < 1e-6);
}

TEST_CASE("resize-defended model delegates to the inner model") {
  CounterRng r(4, 4);
  std::vector<double> w(3 * 8 * 8);
  for (double& v : w) v = r.uniform(-1, 1);
  const testing::LinearToyModel inner(Alphabet::standard(), w, 0.1);
  const ResizeDefendedModel defended(inner, ResizeSpec{4, 4});
  NewsSample s;
  s.tokens = U"ab";
  s.image = random_image(8, 8, 2);
  const Tensor resized = resize_defense(s.image, ResizeSpec{4, 4});
  CHECK(defended.logits(s.tokens, s.image) == inner.logits(s.tokens, resized));
  const auto g = defended.image_loss_gradient(s.tokens, s.image, kFake);
  CHECK(g.grad == inner.image_loss_gradient(s.tokens, resized, kFake).grad);
}

TEST_CASE("default detector: resize improves FGSM accuracy") {
  const Detector& det = testing::default_detector();
  const auto& test = testing::default_split().test.samples;
  const ResizeDefendedModel defended(det, ResizeSpec{});
  const double clean = clean_accuracy(det, test);
  const double clean_defended = clean_accuracy(defended, test);
  const double undefended = adversarial_accuracy(det, det, test, 0.1);
  const double transfer = adversarial_accuracy(defended, det, test, 0.1);
  MESSAGE("clean " << clean << " / " << clean_defended << ", fgsm 0.1 " << undefended << " -> "
                   << transfer);
  CHECK(transfer - undefended >= 0.10);
  CHECK(clean - clean_defended <= 0.05);
}

TEST_CASE("adversarial training configuration") {
  const auto& split = testing::default_split();
  const DetectorParams& start = testing::default_detector().params();
  AdversarialTrainingConfig cfg;
  cfg.epochs = 0;
  CHECK(adversarial_training(start, split.train, split.val, cfg) == start);
  cfg.image.method = ImageAttackMethod::kDeepFool;
  CHECK_THROWS_AS(adversarial_training(start, split.train, split.val, cfg), ValidationError);
  cfg = {};
  cfg.modality = AttackModality::kText;
  cfg.text.method = TextAttackMethod::kHeuristic;
  CHECK_THROWS_AS(adversarial_training(start, split.train, split.val, cfg), ValidationError);
  cfg = {};
  cfg.examples_per_epoch = 0;
  CHECK_THROWS_AS(adversarial_training(start, split.train, split.val, cfg), ValidationError);
}

TEST_CASE("default detector: FGSM adversarial training") {
  const auto& split = testing::default_split();
  const Detector& base = testing::default_detector();
  AdversarialTrainingConfig cfg;
  cfg.image.epsilon = 0.1;
  cfg.epochs = 5;
  cfg.examples_per_epoch = 500;
  cfg.seed = 3;
  const DetectorParams p = adversarial_training(base.params(), split.train, split.val, cfg);
  CHECK(p.all_finite());
  CHECK(p.config == base.params().config);
  const Detector hardened(p);
  const auto& test = split.test.samples;
  const double gain = adversarial_accuracy(hardened, hardened, test, 0.1) -
                      adversarial_accuracy(base, base, test, 0.1);
  const double cost = clean_accuracy(base, test) - clean_accuracy(hardened, test);
  MESSAGE("adversarial accuracy gain " << gain << ", clean cost " << cost);
  CHECK(gain >= 0.15);
  CHECK(cost <= 0.05);
  CHECK(adversarial_training(base.params(), split.train, split.val, cfg) == p);
}

TEST_CASE("activation clustering configuration") {
  ActivationClusteringConfig cfg;
  CHECK(cfg.analysis == ACAnalysis::kExclusionary);
  CHECK(ac_analysis_from_string("size") == ACAnalysis::kSize);
  CHECK_THROWS_AS(ac_analysis_from_string("kmeans"), ValidationError);
  cfg.size_threshold = 0.6;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  cfg.retrain_epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("activation clustering skips small classes and never flags a majority") {
  const auto& split = testing::default_split();
  const Detector& det = testing::default_detector();
  ActivationClusteringConfig cfg;
  cfg.analysis = ACAnalysis::kSize;
  cfg.size_threshold = 0.5;
  cfg.silhouette_threshold = -1.0;
  std::vector<std::size_t> idx(40);
  for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
  const Dataset small = split.train.subset(idx);
  const auto r = activation_clustering(det, small, cfg);
  REQUIRE(r.classes.size() == 2);
  std::set<std::string> ids;
  for (const auto& s : small.samples) ids.insert(s.id);
  for (const auto& id : r.flagged_ids) CHECK(ids.count(id) == 1);
  for (const auto& c : r.classes) {
    if (c.skipped) continue;
    CHECK(c.sizes[0] + c.sizes[1] == c.n);
    CHECK(c.assignment.size() == c.n);
    std::size_t flagged = 0;
    for (std::size_t m : c.members)
      flagged += std::count(r.flagged_ids.begin(), r.flagged_ids.end(), small.samples[m].id);
    CHECK(2 * flagged <= c.n);
  }

  cfg.min_class_size = 1000;
  const auto skipped = activation_clustering(det, small, cfg);
  CHECK(skipped.flagged_ids.empty());
  CHECK(skipped.notes.size() == 2);
  const std::vector<bool> wrong(3, false);
  CHECK_THROWS_AS(activation_clustering(det, small, cfg, &wrong), ValidationError);
}

TEST_CASE("default corpus: activation clustering finds the poison") {
  const auto& split = testing::default_split();
  PoisonSpec spec;
  spec.fraction = 0.3;
  spec.seed = 5;
  const auto p = poison_dataset(split.train, spec);
  const Detector bd(testing::cached_training("poison-0.3-13px-seed5", DetectorConfig{},
                                             p.dataset, split.val));
  ActivationClusteringConfig cfg;
  const auto r = activation_clustering(bd, p.dataset, cfg, &p.mask);
  MESSAGE("precision " << *r.precision << ", recall " << *r.recall);
  CHECK(*r.recall >= 0.90);
  CHECK(*r.precision >= 0.80);
  const Dataset filtered = remove_ids(p.dataset, r.flagged_ids);
  CHECK(filtered.size() == p.dataset.size() - r.flagged_ids.size());

  const auto control = activation_clustering(testing::default_detector(), split.train, cfg);
  MESSAGE("control flags " << control.flagged_ids.size());
  CHECK(double(control.flagged_ids.size()) <= 0.05 * double(split.train.size()));
}
