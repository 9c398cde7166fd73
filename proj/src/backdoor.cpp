#include "mmr/backdoor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "mmr/errors.hpp"
#include "mmr/rng.hpp"
#include "mmr/utf8.hpp"

namespace mmr {

namespace {

constexpr std::uint64_t kStreamPoison = 0xB4D;

bool ends_with(const std::u32string& s, const std::u32string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

const char* to_string(TriggerModality m) noexcept {
  return m == TriggerModality::kImage ? "image" : "text";
}

TriggerModality trigger_modality_from_string(const std::string& s) {
  if (s == "image") return TriggerModality::kImage;
  if (s == "text") return TriggerModality::kText;
  throw ValidationError("unknown trigger modality '" + s + "'");
}

const char* to_string(PoisonSelection s) noexcept {
  return s == PoisonSelection::kUniform ? "uniform" : "by_event";
}

PoisonSelection poison_selection_from_string(const std::string& s) {
  if (s == "uniform") return PoisonSelection::kUniform;
  if (s == "by_event") return PoisonSelection::kByEvent;
  throw ValidationError("unknown poison selection '" + s + "'");
}

void TriggerSpec::validate() const {
  if (target_label != kReal && target_label != kFake) {
    throw ValidationError("trigger target label must be 0 or 1");
  }
  if (modality == TriggerModality::kImage && pixels == 0) {
    throw ValidationError("image trigger needs at least one pixel");
  }
  if (modality == TriggerModality::kText && token.empty()) {
    throw ValidationError("text trigger token is empty");
  }
}

std::vector<std::pair<std::size_t, std::size_t>> TriggerSpec::pixel_coords(
    std::size_t height, std::size_t width) const {
  validate();
  const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(double(pixels)) - 1e-9));
  const std::size_t rows = (pixels + side - 1) / side;
  if (side > width || rows > height) {
    throw ValidationError("trigger of " + std::to_string(pixels) + " pixels does not fit a " +
                          std::to_string(height) + "x" + std::to_string(width) + " image");
  }
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t k = 0; k < pixels; ++k) {
    out.emplace_back(height - 1 - k / side, width - 1 - k % side);
  }
  return out;
}

std::string TriggerSpec::describe() const {
  if (modality == TriggerModality::kImage) {
    return "image:" + std::to_string(pixels) + "px->" + std::to_string(target_label);
  }
  return "text:" + to_utf8(token) + "->" + std::to_string(target_label);
}

NewsSample stamp_trigger(const NewsSample& sample, const TriggerSpec& trigger,
                         std::size_t max_len) {
  trigger.validate();
  NewsSample out = sample;
  if (trigger.modality == TriggerModality::kImage) {
    if (sample.image.ndim() != 3) {
      throw DimensionError("trigger needs a CxHxW image, got " + shape_string(sample.image.shape));
    }
    const std::size_t c = sample.image.dim(0), h = sample.image.dim(1), w = sample.image.dim(2);
    for (const auto& [i, j] : trigger.pixel_coords(h, w)) {
      for (std::size_t ch = 0; ch < c; ++ch) out.image[(ch * h + i) * w + j] = 1.0f;
    }
    return out;
  }
  const std::u32string suffix = U" " + trigger.token;
  if (suffix.size() > max_len) throw ValidationError("text trigger longer than max_len");
  if (ends_with(out.tokens, suffix)) return out;
  out.tokens += suffix;
  if (out.tokens.size() > max_len) out.tokens.erase(0, out.tokens.size() - max_len);
  return out;
}

void PoisonSpec::validate() const {
  trigger.validate();
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw ValidationError("poison fraction must lie in [0,1]");
  }
}

std::size_t PoisonedDataset::poisoned_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

std::vector<std::string> PoisonedDataset::poisoned_ids() const {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) ids.push_back(dataset.samples[i].id);
  }
  return ids;
}

PoisonedDataset poison_dataset(const Dataset& ds, const PoisonSpec& spec) {
  spec.validate();
  const std::size_t n = ds.size();
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < n; ++i)
    if (ds.samples[i].label != spec.trigger.target_label) order.push_back(i);
  const auto count = static_cast<std::size_t>(std::llround(spec.fraction * double(order.size())));

  CounterRng rng(spec.seed, kStreamPoison);
  rng.shuffle(order);
  if (spec.selection == PoisonSelection::kByEvent) {
    const auto events = ds.events();
    if (!std::binary_search(events.begin(), events.end(), spec.event_id)) {
      throw ValidationError("poison selection names unknown event " + std::to_string(spec.event_id));
    }
    std::stable_partition(order.begin(), order.end(), [&](std::size_t i) {
      return ds.samples[i].event_id == spec.event_id;
    });
  }

  PoisonedDataset out;
  out.dataset = ds;
  out.dataset.meta.origin = ds.meta.origin + ":poisoned[" + spec.trigger.describe() + "]";
  out.mask.assign(n, false);
  out.original_labels.reserve(n);
  for (const auto& s : ds.samples) out.original_labels.push_back(s.label);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t i = order[k];
    out.mask[i] = true;
    NewsSample& s = out.dataset.samples[i];
    s = stamp_trigger(s, spec.trigger);
    s.label = spec.trigger.target_label;
  }
  return out;
}

void write_id_list(const std::vector<std::string>& ids, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& id : ids) out << id << '\n';
}

BackdoorReport evaluate_backdoor(const MultiModalModel& clean_model,
                                 const MultiModalModel& backdoored_model,
                                 const Dataset& clean_test, const TriggerSpec& trigger) {
  trigger.validate();
  BackdoorReport r;
  std::size_t ok_ref = 0, ok_bd = 0;
  for (const auto& s : clean_test.samples) {
    ok_ref += clean_model.predict(s) == s.label;
    const int clean_pred = backdoored_model.predict(s);
    ok_bd += clean_pred == s.label;
    const NewsSample t = stamp_trigger(s, trigger);
    const int trig_pred = backdoored_model.predict(t);
    auto& ev = r.per_event[s.event_id];
    ++ev.n;
    ev.triggered_correct += trig_pred == s.label;
    if (s.label != trigger.target_label && clean_pred == s.label) {
      ++r.eligible;
      ++ev.eligible;
      if (trig_pred == trigger.target_label) {
        ++r.hits;
        ++ev.hits;
      }
    }
  }
  const double n = double(std::max<std::size_t>(1, clean_test.size()));
  r.clean_accuracy_reference = double(ok_ref) / n;
  r.clean_accuracy_backdoored = double(ok_bd) / n;
  if (r.eligible == 0) {
    throw MetricUndefinedError("no eligible samples for the attack success rate");
  }
  r.asr = double(r.hits) / double(r.eligible);
  return r;
}

}  // namespace mmr
