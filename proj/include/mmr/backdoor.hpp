#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mmr/corpus.hpp"
#include "mmr/model.hpp"

namespace mmr {

enum class TriggerModality { kImage, kText };

const char* to_string(TriggerModality m) noexcept;
TriggerModality trigger_modality_from_string(const std::string& s);

struct TriggerSpec {
  TriggerModality modality = TriggerModality::kImage;
  std::size_t pixels = 13;       // image: bright pixels in the bottom-right block
  std::u32string token = U"lol";  // text: appended after one space
  int target_label = kReal;

  void validate() const;
  // (row, col) of every trigger pixel: rows of the enclosing square are
  // filled from the bottom, each right to left. Throws ValidationError when
  // the block does not fit.
  std::vector<std::pair<std::size_t, std::size_t>> pixel_coords(std::size_t height,
                                                                std::size_t width) const;
  std::string describe() const;
};

// Image: trigger pixels set to 1.0 in every channel. Text: " " + token
// appended, dropping characters from the front beyond max_len. Idempotent.
NewsSample stamp_trigger(const NewsSample& sample, const TriggerSpec& trigger,
                         std::size_t max_len = kDefaultMaxLen);

enum class PoisonSelection { kUniform, kByEvent };

const char* to_string(PoisonSelection s) noexcept;
PoisonSelection poison_selection_from_string(const std::string& s);

struct PoisonSpec {
  TriggerSpec trigger;
  double fraction = 0.1;
  std::uint64_t seed = 0;
  PoisonSelection selection = PoisonSelection::kUniform;
  int event_id = 0;  // by_event only

  void validate() const;
};

struct PoisonedDataset {
  Dataset dataset;
  std::vector<bool> mask;
  std::vector<int> original_labels;

  std::size_t poisoned_count() const;
  std::vector<std::string> poisoned_ids() const;
};

// Selects round(fraction * m) of the m samples whose label is not the target
// (by_event: the event's samples first, the remainder uniformly from the
// rest), stamps them and relabels them to the target label.
PoisonedDataset poison_dataset(const Dataset& ds, const PoisonSpec& spec);

// One id per line.
void write_id_list(const std::vector<std::string>& ids, const std::filesystem::path& path);

struct EventBackdoorStats {
  std::size_t n = 0;
  std::size_t triggered_correct = 0;  // triggered samples still predicted as their label
  std::size_t eligible = 0;
  std::size_t hits = 0;
  double triggered_accuracy() const { return n ? double(triggered_correct) / double(n) : 0.0; }
  double asr() const { return eligible ? double(hits) / double(eligible) : 0.0; }
};

struct BackdoorReport {
  double clean_accuracy_reference = 0.0;   // a* of the clean model
  double clean_accuracy_backdoored = 0.0;  // backdoored model on clean inputs
  std::size_t eligible = 0;
  std::size_t hits = 0;
  double asr = 0.0;
  std::map<int, EventBackdoorStats> per_event;

  double accuracy_gap() const { return clean_accuracy_reference - clean_accuracy_backdoored; }
};

// ASR counts triggered samples predicted as the target label among samples
// of a non-target label whose clean version the backdoored model classifies
// correctly. Throws MetricUndefinedError when no sample is eligible.
BackdoorReport evaluate_backdoor(const MultiModalModel& clean_model,
                                 const MultiModalModel& backdoored_model,
                                 const Dataset& clean_test, const TriggerSpec& trigger);

}  // namespace mmr
