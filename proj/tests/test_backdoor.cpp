#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "mmr/backdoor.hpp"
#include "mmr/errors.hpp"
#include "support/fixtures.hpp"
#include "support/toy_models.hpp"

using namespace mmr;
namespace fs = std::filesystem;

namespace {

NewsSample plain_sample(std::u32string tokens, int label = kFake) {
  NewsSample s;
  s.id = "p";
  s.tokens = std::move(tokens);
  s.label = label;
  s.image = Tensor({3, 8, 8}, 0.25f);
  return s;
}

Dataset small_corpus(std::size_t n, std::uint64_t seed = 3) {
  GenConfig g;
  g.n_samples = n;
  g.height = g.width = 8;
  g.seed = seed;
  return generate_synthetic(g);
}

}  // namespace

TEST_CASE("trigger geometry") {
  TriggerSpec t;
  const auto px = t.pixel_coords(32, 32);
  REQUIRE(px.size() == 13);
  CHECK(px.front() == std::pair<std::size_t, std::size_t>{31, 31});
  std::set<std::pair<std::size_t, std::size_t>> distinct(px.begin(), px.end());
  CHECK(distinct.size() == 13);
  for (const auto& [i, j] : px) {
    CHECK(i >= 28);
    CHECK(j >= 28);
  }
  t.pixels = 4;
  const auto four = t.pixel_coords(32, 32);
  CHECK(four == std::vector<std::pair<std::size_t, std::size_t>>{{31, 31}, {31, 30}, {30, 31}, {30, 30}});
  t.pixels = 17;
  CHECK_THROWS_AS(t.pixel_coords(4, 4), ValidationError);
  t.pixels = 0;
  CHECK_THROWS_AS(t.validate(), ValidationError);
  TriggerSpec bad;
  bad.target_label = 2;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  CHECK(trigger_modality_from_string("text") == TriggerModality::kText);
  CHECK_THROWS_AS(trigger_modality_from_string("audio"), ValidationError);
}

TEST_CASE("image stamping sets exactly the trigger pixels and is idempotent") {
  const NewsSample s = plain_sample(U"abc");
  TriggerSpec t;
  t.pixels = 5;
  const NewsSample a = stamp_trigger(s, t);
  std::size_t changed = 0;
  for (std::size_t k = 0; k < s.image.size(); ++k) {
    if (a.image[k] != s.image[k]) {
      ++changed;
      CHECK(a.image[k] == 1.0f);
    }
  }
  CHECK(changed == 5 * 3);
  CHECK(a.tokens == s.tokens);
  CHECK(stamp_trigger(a, t) == a);
}

TEST_CASE("text stamping appends the token once and respects max_len") {
  TriggerSpec t;
  t.modality = TriggerModality::kText;
  t.token = U"well";
  const NewsSample a = stamp_trigger(plain_sample(U"abc"), t);
  CHECK(a.tokens == U"abc well");
  CHECK(a.image == plain_sample(U"abc").image);
  CHECK(stamp_trigger(a, t) == a);

  const std::u32string long_text(62, U'x');
  const NewsSample b = stamp_trigger(plain_sample(long_text), t);
  CHECK(b.tokens.size() == kDefaultMaxLen);
  CHECK(b.tokens.substr(b.tokens.size() - 5) == U" well");
  CHECK(stamp_trigger(b, t) == b);
  CHECK_THROWS_AS(stamp_trigger(plain_sample(U"abc"), t, 3), ValidationError);
}

TEST_CASE("poison counts follow the fraction of non-target samples") {
  Dataset ds = small_corpus(1000);
  for (auto& s : ds.samples) s.label = kFake;
  PoisonSpec spec;
  spec.seed = 9;
  spec.fraction = 0.0;
  CHECK(poison_dataset(ds, spec).poisoned_count() == 0);
  spec.fraction = 1.0;
  CHECK(poison_dataset(ds, spec).poisoned_count() == 1000);
  spec.fraction = 0.3;
  const auto p = poison_dataset(ds, spec);
  CHECK(p.poisoned_count() == 300);
  CHECK(p.poisoned_ids().size() == 300);

  const Dataset mixed = small_corpus(400, 5);
  const auto m = poison_dataset(mixed, spec);
  std::size_t non_target = 0;
  for (const auto& s : mixed.samples) non_target += s.label != spec.trigger.target_label;
  CHECK(m.poisoned_count() == static_cast<std::size_t>(std::llround(0.3 * double(non_target))));

  spec.fraction = 1.2;
  CHECK_THROWS_AS(poison_dataset(ds, spec), ValidationError);
}

TEST_CASE("poisoning is local, relabels and is seeded") {
  const Dataset ds = small_corpus(300);
  PoisonSpec spec;
  spec.fraction = 0.4;
  spec.seed = 11;
  const auto p = poison_dataset(ds, spec);
  REQUIRE(p.mask.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(p.original_labels[i] == ds.samples[i].label);
    if (p.mask[i]) {
      CHECK(ds.samples[i].label != spec.trigger.target_label);
      CHECK(p.dataset.samples[i].label == spec.trigger.target_label);
      CHECK(p.dataset.samples[i] == [&] {
        NewsSample e = stamp_trigger(ds.samples[i], spec.trigger);
        e.label = spec.trigger.target_label;
        return e;
      }());
    } else {
      CHECK(p.dataset.samples[i] == ds.samples[i]);
    }
  }
  CHECK(poison_dataset(ds, spec).mask == p.mask);
  spec.seed = 12;
  CHECK(poison_dataset(ds, spec).mask != p.mask);
}

TEST_CASE("event-targeted poisoning takes the event first") {
  const Dataset ds = small_corpus(400);
  PoisonSpec spec;
  spec.selection = PoisonSelection::kByEvent;
  spec.event_id = 2;
  spec.fraction = 0.05;
  const auto p = poison_dataset(ds, spec);
  REQUIRE(p.poisoned_count() > 0);
  std::size_t in_event = 0;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.samples[i].event_id == 2 && ds.samples[i].label != kReal) ++in_event;
  REQUIRE(in_event >= p.poisoned_count());
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (p.mask[i]) CHECK(ds.samples[i].event_id == 2);
  spec.event_id = 99;
  CHECK_THROWS_AS(poison_dataset(ds, spec), ValidationError);
}

TEST_CASE("id list export") {
  const fs::path path = fs::temp_directory_path() / "mmr_ids.txt";
  write_id_list({"a", "b-2"}, path);
  std::ifstream in(path);
  std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(body == "a\nb-2\n");
}

TEST_CASE("backdoor evaluation bookkeeping") {
  const testing::ConstantModel says_real(Alphabet::standard(), -1.0);
  const testing::ConstantModel says_fake(Alphabet::standard(), 1.0);
  Dataset test;
  test.alphabet = Alphabet::standard();
  for (int k = 0; k < 6; ++k) {
    NewsSample s = plain_sample(U"abc", k < 4 ? kFake : kReal);
    s.id = "s" + std::to_string(k);
    s.event_id = k % 2;
    test.samples.push_back(s);
  }
  TriggerSpec t;  // target real
  SUBCASE("a model that always says fake never hits") {
    const auto r = evaluate_backdoor(says_real, says_fake, test, t);
    CHECK(r.eligible == 4);
    CHECK(r.hits == 0);
    CHECK(r.asr == 0.0);
    CHECK(r.clean_accuracy_reference == doctest::Approx(2.0 / 6.0));
    CHECK(r.clean_accuracy_backdoored == doctest::Approx(4.0 / 6.0));
    CHECK(r.per_event.at(0).n == 3);
  }
  SUBCASE("no eligible sample") {
    CHECK_THROWS_AS(evaluate_backdoor(says_real, says_real, test, t), MetricUndefinedError);
  }
}

TEST_CASE("default corpus: poisoned detector is potent and stealthy") {
  const auto& split = testing::default_split();
  PoisonSpec spec;
  spec.fraction = 0.3;
  spec.seed = 5;
  const auto p = poison_dataset(split.train, spec);
  const Detector bd(testing::cached_training("poison-0.3-13px-seed5", DetectorConfig{},
                                             p.dataset, split.val));
  const auto r = evaluate_backdoor(testing::default_detector(), bd, split.test, spec.trigger);
  MESSAGE("asr " << r.asr << ", accuracy gap " << r.accuracy_gap());
  CHECK(r.asr >= 0.85);
  CHECK(r.accuracy_gap() <= 0.05);
  // the clean model ignores the trigger
  const auto control =
      evaluate_backdoor(testing::default_detector(), testing::default_detector(), split.test,
                        spec.trigger);
  CHECK(control.asr < 0.2);
}
