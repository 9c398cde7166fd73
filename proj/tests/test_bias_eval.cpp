#include <doctest.h>

#include <algorithm>
#include <set>

#include "mmr/bias_eval.hpp"
#include "mmr/errors.hpp"
#include "support/fixtures.hpp"
#include "support/toy_models.hpp"

using namespace mmr;

namespace {

constexpr std::size_t kSide = 4;

// Predicts fake exactly when the image is bright; ignores the text.
testing::LinearToyModel image_only_model() {
  return testing::LinearToyModel(Alphabet::standard(), std::vector<double>(3 * kSide * kSide, 1.0),
                                 -0.5 * 3 * kSide * kSide);
}

NewsSample toy(const std::string& id, int label, int event) {
  NewsSample s;
  s.id = id;
  s.label = label;
  s.event_id = event;
  s.tokens = label == kFake ? U"fake news" : U"real news";
  s.image = Tensor({3, kSide, kSide}, label == kFake ? 0.9f : 0.1f);
  return s;
}

Dataset toy_set() {
  Dataset d;
  d.alphabet = Alphabet::standard();
  int k = 0;
  for (int e = 0; e < 3; ++e)
    for (int label : {kReal, kFake, kFake})
      d.samples.push_back(toy("s" + std::to_string(k++), label, e));
  // event 3 holds only fakes
  d.samples.push_back(toy("lonely", kFake, 3));
  return d;
}

}  // namespace

TEST_CASE("swapping a modality with the sample itself changes nothing") {
  const auto& det = testing::default_detector();
  for (const auto& s : std::vector<NewsSample>(testing::default_split().test.samples.begin(),
                                               testing::default_split().test.samples.begin() + 20)) {
    for (SwapModality m : {SwapModality::kText, SwapModality::kImage}) {
      const NewsSample t = swap_modality(s, s, m);
      CHECK(t == s);
      CHECK(det.predict(t) == det.predict(s));
    }
  }
}

TEST_CASE("swap cells on an image-only toy") {
  const auto model = image_only_model();
  const Dataset d = toy_set();
  const auto r = modality_swap_eval(model, d, 4);
  CHECK(r.baseline_accuracy == 1.0);
  CHECK(r.skipped_events == std::vector<int>{3});
  REQUIRE(r.cells.size() == 4);

  const auto& img_f = r.cell(SwapModality::kImage, SwapDirection::kFakeGetsReal);
  CHECK(img_f.n == 6);
  CHECK(img_f.skipped == 1);
  CHECK(img_f.accuracy() == 0.0);
  CHECK(img_f.clean_accuracy() == 1.0);
  const auto& img_r = r.cell(SwapModality::kImage, SwapDirection::kRealGetsFake);
  CHECK(img_r.n == 3);
  CHECK(img_r.skipped == 0);
  CHECK(img_r.accuracy() == 0.0);
  CHECK(r.cell(SwapModality::kText, SwapDirection::kFakeGetsReal).accuracy() == 1.0);
  CHECK(r.cell(SwapModality::kText, SwapDirection::kRealGetsFake).accuracy() == 1.0);
  CHECK(r.modality_drop(SwapModality::kImage) == 1.0);
  CHECK(r.modality_drop(SwapModality::kText) == 0.0);
}

TEST_CASE("swap donors come from the same event and the opposite label") {
  // every image encodes (event, label, copy); the recording model keeps what it sees
  struct Recorder final : testing::ConstantModel {
    using ConstantModel::ConstantModel;
    std::array<double, 2> logits(const std::u32string& t, const Tensor& image) const override {
      seen.emplace_back(t, image[0]);
      return ConstantModel::logits(t, image);
    }
    mutable std::vector<std::pair<std::u32string, float>> seen;
  };
  auto code = [](int e, int label, int copy) { return 0.1f * float(e) + 0.03f * float(label) + 0.01f * float(copy); };
  Dataset d;
  d.alphabet = Alphabet::standard();
  for (int e = 0; e < 4; ++e)
    for (int label : {kReal, kFake})
      for (int copy = 0; copy < 2; ++copy) {
        NewsSample s = toy("x", label, e);
        s.tokens = std::u32string(1, char32_t(U'a' + 8 * e + 2 * label + copy));
        s.image = Tensor({3, kSide, kSide}, code(e, label, copy));
        d.samples.push_back(s);
      }
  for (SwapDirection dir : {SwapDirection::kFakeGetsReal, SwapDirection::kRealGetsFake}) {
    const int source = dir == SwapDirection::kFakeGetsReal ? kFake : kReal;
    const Recorder rec(Alphabet::standard());
    std::set<float> donors_used;
    const auto cell = modality_swap(rec, d, SwapSpec{SwapModality::kImage, dir, 3});
    CHECK(cell.n == 8);
    for (const auto& [tokens, v] : rec.seen) {
      const int k = int(tokens[0] - U'a');
      const int e = k / 8, label = (k / 2) % 2, copy = k % 2;
      if (label != source || v == code(e, label, copy)) continue;  // the clean pass
      CHECK((v == code(e, 1 - source, 0) || v == code(e, 1 - source, 1)));
      donors_used.insert(v);
    }
    CHECK(donors_used.size() > 4);  // the seeded choice uses both donors of some event
  }
}

TEST_CASE("swap evaluation is seeded") {
  const auto& det = testing::default_detector();
  const auto& test = testing::default_split().test;
  const SwapSpec spec{SwapModality::kImage, SwapDirection::kRealGetsFake, 8};
  const auto a = modality_swap(det, test, spec), b = modality_swap(det, test, spec);
  CHECK(a.swapped_correct == b.swapped_correct);
  CHECK(a.n == b.n);
}

TEST_CASE("derangements") {
  for (std::size_t n : {2u, 3u, 7u, 50u}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto p = derangement(n, seed);
      std::vector<std::size_t> sorted = p;
      std::sort(sorted.begin(), sorted.end());
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(sorted[i] == i);
        CHECK(p[i] != i);
      }
    }
  }
  CHECK(derangement(30, 5) == derangement(30, 5));
  CHECK(derangement(30, 5) != derangement(30, 6));
  CHECK_THROWS_AS(derangement(1, 0), ValidationError);
}

TEST_CASE("mismatch shuffle on the toy") {
  Dataset d = toy_set();
  const auto r = mismatch_shuffle_eval(image_only_model(), d, 2);
  CHECK(r.n == d.size());
  CHECK(r.clean_accuracy == 1.0);
  std::size_t expected = 0;
  for (std::size_t i = 0; i < d.size(); ++i)
    expected += d.samples[r.permutation[i]].label == d.samples[i].label;
  CHECK(r.accuracy == doctest::Approx(double(expected) / double(d.size())));
  CHECK(mismatch_shuffle_eval(image_only_model(), d, 2).permutation == r.permutation);
}

TEST_CASE("style filters") {
  CounterRng r(6, 6);
  Tensor img({3, 5, 5});
  for (float& v : img.data) v = float(r.uniform());
  CHECK(apply_style(img, StyleLevel::kIdentity) == img);
  CHECK(apply_style(apply_style(img, StyleLevel::kInvert), StyleLevel::kInvert).data.size() == img.size());
  const Tensor inv2 = apply_style(apply_style(img, StyleLevel::kInvert), StyleLevel::kInvert);
  for (std::size_t k = 0; k < img.size(); ++k) CHECK(inv2[k] == doctest::Approx(img[k]).epsilon(1e-6));
  const std::set<float> four = {0.f, 1.f / 3.f, 2.f / 3.f, 1.f};
  for (float v : apply_style(img, StyleLevel::kPosterize4).data) CHECK(four.count(v) == 1);
  for (float v : apply_style(img, StyleLevel::kPosterize2).data) CHECK((v == 0.f || v == 1.f));
  const Tensor flat({3, 5, 5}, 0.3f);
  const Tensor p2 = apply_style(flat, StyleLevel::kPosterize2);
  CHECK(std::all_of(p2.data.begin(), p2.data.end(), [&](float v) { return v == p2[0]; }));
  CHECK(style_level_from_string("posterize-4") == StyleLevel::kPosterize4);
  CHECK_THROWS_AS(style_level_from_string("cartoon"), ValidationError);

  const auto res = style_shift_eval(image_only_model(), toy_set(), {StyleLevel::kIdentity, StyleLevel::kInvert});
  REQUIRE(res.size() == 2);
  CHECK(res[0].accuracy == 1.0);
  CHECK(res[1].accuracy == 0.0);
}

TEST_CASE("scenario validation and descriptors") {
  ScenarioComponent fgsm_c;
  ScenarioComponent viper_c;
  viper_c.kind = ComponentKind::kTextAdversarial;
  viper_c.text.method = TextAttackMethod::kViper;
  ScenarioComponent trig;
  trig.kind = ComponentKind::kImageTrigger;
  ScenarioSpec s;
  CHECK(s.describe() == "clean");
  s.components = {fgsm_c, viper_c, trig};
  CHECK_NOTHROW(s.validate());
  CHECK(s.describe() == "fgsm(eps=0.1,seed=0)+viper(p=0.4,seed=0)+trigger(image:13px->0)");
  s.components = {fgsm_c, fgsm_c};
  CHECK_THROWS_AS(s.validate(), ValidationError);
  ScenarioComponent text_trig = trig;
  text_trig.kind = ComponentKind::kTextTrigger;
  s.components = {text_trig};
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s.components = {fgsm_c};
  s.components[0].image.epsilon = -1;
  CHECK_THROWS_AS(s.validate(), ValidationError);
}

TEST_CASE("scenario composition order and attribution rows") {
  const auto model = image_only_model();
  const Dataset d = toy_set();
  ScenarioComponent trig;
  trig.kind = ComponentKind::kImageTrigger;
  trig.trigger.pixels = 4;
  ScenarioComponent fg;
  fg.image.epsilon = 0.05;
  // the trigger is stamped before the perturbation, whatever the listed order
  const NewsSample& s = d.samples[1];
  const NewsSample got = apply_scenario(model, s, {fg, trig}, 1, CharEmbeddingSpace::standard());
  NewsSample expected = stamp_trigger(s, trig.trigger);
  expected.image = fgsm(model, expected, 0.05).adv_image;
  CHECK(got == expected);

  ScenarioSpec empty;
  const auto clean = run_scenario(model, d, empty);
  REQUIRE(clean.rows.size() == 1);
  CHECK(clean.rows[0].condition == "clean");
  CHECK(clean.rows[0].accuracy() == 1.0);

  ScenarioSpec both;
  both.components = {fg, trig};
  const auto rep = run_scenario(model, d, both);
  REQUIRE(rep.rows.size() == 4);
  CHECK(rep.rows[0].condition == "clean");
  CHECK(rep.rows[1].condition == fg.describe());
  CHECK(rep.rows[2].condition == trig.describe());
  CHECK(rep.rows[3].condition == "combined");
  for (const auto& r : rep.rows) CHECK(r.n == d.size());
  CHECK_THROWS_AS(rep.row("missing"), ValidationError);
}

TEST_CASE("default detector: modality bias ordering") {
  const auto r = modality_swap_eval(testing::default_detector(), testing::default_split().test, 1);
  for (const auto& c : r.cells)
    MESSAGE(std::string(to_string(c.spec.modality)) << "/" << std::string(to_string(c.spec.direction)) << ": "
                                       << c.clean_accuracy() << " -> " << c.accuracy());
  CHECK(r.modality_drop(SwapModality::kImage) > r.modality_drop(SwapModality::kText));
  const auto& worst = r.cell(SwapModality::kImage, SwapDirection::kFakeGetsReal);
  for (const auto& c : r.cells) CHECK(worst.accuracy() <= c.accuracy());
}

TEST_CASE("default detector: mismatch and style shift degrade accuracy") {
  const auto& det = testing::default_detector();
  const auto& test = testing::default_split().test;
  const auto m = mismatch_shuffle_eval(det, test, 1);
  MESSAGE("mismatch " << m.clean_accuracy << " -> " << m.accuracy);
  CHECK(m.clean_accuracy - m.accuracy >= 0.10);
  const auto st = style_shift_eval(det, test, {StyleLevel::kIdentity, StyleLevel::kPosterize2});
  CHECK(st[0].accuracy == doctest::Approx(m.clean_accuracy));
  CHECK(st[1].accuracy < st[0].accuracy);
}

TEST_CASE("default detector: combined attack is at least as strong as either part") {
  ScenarioComponent fg;
  ScenarioComponent vp;
  vp.kind = ComponentKind::kTextAdversarial;
  vp.text.method = TextAttackMethod::kViper;
  ScenarioSpec s;
  s.components = {fg, vp};
  const auto rep = run_scenario(testing::default_detector(), testing::default_split().test, s);
  const double combined = rep.row("combined").accuracy();
  const double best_single = std::min(rep.row(fg.describe()).accuracy(), rep.row(vp.describe()).accuracy());
  MESSAGE("combined " << combined << ", best single " << best_single);
  CHECK(combined <= best_single + 0.02);
}

TEST_CASE("default corpus: colluding trigger and viper evade more than either") {
  const auto& split = testing::default_split();
  PoisonSpec ps;
  ps.fraction = 0.1;
  ps.trigger.pixels = 4;
  ps.seed = 5;
  const auto pd = poison_dataset(split.train, ps);
  const Detector bd(testing::cached_training("poison-0.1-4px-seed5", DetectorConfig{}, pd.dataset,
                                             split.val));
  ScenarioComponent trig;
  trig.kind = ComponentKind::kImageTrigger;
  trig.trigger = ps.trigger;
  ScenarioComponent vp;
  vp.kind = ComponentKind::kTextAdversarial;
  vp.text.method = TextAttackMethod::kViper;
  ScenarioSpec s;
  s.components = {trig, vp};
  const auto rep = run_scenario(bd, split.test, s);
  const double both = rep.row("combined").evasion_rate();
  MESSAGE("evasion: trigger " << rep.row(trig.describe()).evasion_rate() << ", viper "
                              << rep.row(vp.describe()).evasion_rate() << ", both " << both);
  CHECK(both > rep.row(trig.describe()).evasion_rate());
  CHECK(both > rep.row(vp.describe()).evasion_rate());
}
