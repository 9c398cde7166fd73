#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmr/backdoor.hpp"
#include "mmr/image_attacks.hpp"
#include "mmr/model.hpp"
#include "mmr/text_attacks.hpp"

namespace mmr {

enum class SwapModality { kText, kImage };
enum class SwapDirection { kFakeGetsReal, kRealGetsFake };

const char* to_string(SwapModality m) noexcept;
const char* to_string(SwapDirection d) noexcept;
SwapModality swap_modality_from_string(const std::string& s);
SwapDirection swap_direction_from_string(const std::string& s);

struct SwapSpec {
  SwapModality modality = SwapModality::kImage;
  SwapDirection direction = SwapDirection::kFakeGetsReal;
  std::uint64_t seed = 0;
};

// `target` with the chosen modality taken from `donor`; label and event kept.
NewsSample swap_modality(const NewsSample& target, const NewsSample& donor, SwapModality m);

struct SwapCell {
  SwapSpec spec;
  std::size_t n = 0;              // targeted samples that received a donor
  std::size_t clean_correct = 0;  // the same samples before the swap
  std::size_t swapped_correct = 0;
  std::size_t skipped = 0;        // targeted samples without a donor

  double clean_accuracy() const { return n ? double(clean_correct) / double(n) : 0.0; }
  double accuracy() const { return n ? double(swapped_correct) / double(n) : 0.0; }
  double drop() const { return clean_accuracy() - accuracy(); }
};

// Targets every sample of the direction's source label (fake for
// fake_gets_real) and replaces the modality with that of a seeded uniform
// choice among same-event samples of the opposite label.
SwapCell modality_swap(const MultiModalModel& model, const Dataset& test_set,
                       const SwapSpec& spec);

struct SwapReport {
  double baseline_accuracy = 0.0;
  std::size_t n = 0;
  std::vector<int> skipped_events;  // events lacking one of the labels
  std::vector<SwapCell> cells;      // text/fake_gets_real, text/real_gets_fake, image/...

  // Mean drop of the two directions of one modality.
  double modality_drop(SwapModality m) const;
  const SwapCell& cell(SwapModality m, SwapDirection d) const;
};

SwapReport modality_swap_eval(const MultiModalModel& model, const Dataset& test_set,
                              std::uint64_t seed);

// Uniformly random cyclic permutation of [0, n): no fixed points. n >= 2.
std::vector<std::size_t> derangement(std::size_t n, std::uint64_t seed);

struct MismatchReport {
  std::vector<std::size_t> permutation;  // sample i receives the image of permutation[i]
  double clean_accuracy = 0.0;
  double accuracy = 0.0;
  std::size_t n = 0;
};

MismatchReport mismatch_shuffle_eval(const MultiModalModel& model, const Dataset& test_set,
                                     std::uint64_t seed);

// Deterministic stand-ins for a visual style transfer.
enum class StyleLevel { kIdentity, kPosterize4, kPosterize2, kInvert };

const char* to_string(StyleLevel l) noexcept;
StyleLevel style_level_from_string(const std::string& s);

Tensor apply_style(const Tensor& image, StyleLevel level);

struct StyleResult {
  StyleLevel level;
  double accuracy = 0.0;
  std::size_t n = 0;
};

std::vector<StyleResult> style_shift_eval(const MultiModalModel& model, const Dataset& test_set,
                                          const std::vector<StyleLevel>& levels);

enum class ComponentKind { kImageAdversarial, kTextAdversarial, kImageTrigger, kTextTrigger };

const char* to_string(ComponentKind k) noexcept;
ComponentKind component_kind_from_string(const std::string& s);

struct ScenarioComponent {
  ComponentKind kind = ComponentKind::kImageAdversarial;
  ImageAttackConfig image;  // kImageAdversarial
  TextAttackConfig text;    // kTextAdversarial
  TriggerSpec trigger;      // kImageTrigger / kTextTrigger

  // Canonical text form, e.g. "fgsm(eps=0.1)" or "trigger(image:13px->0)".
  std::string describe() const;
};

struct ScenarioSpec {
  std::vector<ScenarioComponent> components;
  // Throws ValidationError on two adversarial or two trigger components of
  // the same modality, or a trigger whose modality disagrees with its kind.
  void validate() const;
  std::string describe() const;  // components joined by '+', "clean" when empty
};

struct ScenarioRow {
  std::string condition;  // "clean", a component descriptor, or "combined"
  std::size_t n = 0;
  std::size_t correct = 0;
  std::size_t fakes = 0;
  std::size_t fakes_evaded = 0;  // fake samples predicted real

  double accuracy() const { return n ? double(correct) / double(n) : 0.0; }
  double evasion_rate() const { return fakes ? double(fakes_evaded) / double(fakes) : 0.0; }
};

struct ScenarioReport {
  std::string scenario;
  std::vector<ScenarioRow> rows;  // clean, each component alone, combined
  const ScenarioRow& row(const std::string& condition) const;
};

// Applies the components to one sample in the fixed order: image trigger,
// image adversarial, text trigger, text adversarial. `index` keys the
// per-sample attack seeds.
NewsSample apply_scenario(const MultiModalModel& model, const NewsSample& sample,
                          const std::vector<ScenarioComponent>& components, std::size_t index,
                          const CharEmbeddingSpace& ces);

ScenarioReport run_scenario(const MultiModalModel& model, const Dataset& test_set,
                            const ScenarioSpec& scenario,
                            const CharEmbeddingSpace& ces = CharEmbeddingSpace::standard());

}  // namespace mmr
