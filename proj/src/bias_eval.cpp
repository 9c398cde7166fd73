#include "mmr/bias_eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "mmr/errors.hpp"
#include "mmr/rng.hpp"

namespace mmr {

namespace {

constexpr std::uint64_t kStreamSwap = 0x5A9;
constexpr std::uint64_t kStreamShuffle = 0x5F1;
constexpr std::uint64_t kStreamScenario = 0x5C3;

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

const char* to_string(SwapModality m) noexcept { return m == SwapModality::kText ? "text" : "image"; }

const char* to_string(SwapDirection d) noexcept {
  return d == SwapDirection::kFakeGetsReal ? "fake_gets_real" : "real_gets_fake";
}

SwapModality swap_modality_from_string(const std::string& s) {
  if (s == "text") return SwapModality::kText;
  if (s == "image") return SwapModality::kImage;
  throw ValidationError("unknown swap modality '" + s + "'");
}

SwapDirection swap_direction_from_string(const std::string& s) {
  if (s == "fake_gets_real") return SwapDirection::kFakeGetsReal;
  if (s == "real_gets_fake") return SwapDirection::kRealGetsFake;
  throw ValidationError("unknown swap direction '" + s + "'");
}

NewsSample swap_modality(const NewsSample& target, const NewsSample& donor, SwapModality m) {
  NewsSample out = target;
  if (m == SwapModality::kText) {
    out.tokens = donor.tokens;
  } else {
    out.image = donor.image;
  }
  return out;
}

SwapCell modality_swap(const MultiModalModel& model, const Dataset& test_set,
                       const SwapSpec& spec) {
  const int source = spec.direction == SwapDirection::kFakeGetsReal ? kFake : kReal;
  std::map<int, std::vector<std::size_t>> donors;
  for (std::size_t i = 0; i < test_set.size(); ++i)
    if (test_set.samples[i].label != source) donors[test_set.samples[i].event_id].push_back(i);

  // the stream depends on the seed and the cell so the four cells draw independently
  const CounterRng root =
      CounterRng(spec.seed, kStreamSwap)
          .derive(std::uint64_t(spec.modality) * 2 + std::uint64_t(spec.direction));
  SwapCell cell;
  cell.spec = spec;
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    const NewsSample& s = test_set.samples[i];
    if (s.label != source) continue;
    const auto it = donors.find(s.event_id);
    if (it == donors.end()) {
      ++cell.skipped;
      continue;
    }
    CounterRng r = root.derive(i);
    const NewsSample& donor = test_set.samples[it->second[r.below(it->second.size())]];
    ++cell.n;
    cell.clean_correct += model.predict(s) == s.label;
    cell.swapped_correct += model.predict(swap_modality(s, donor, spec.modality)) == s.label;
  }
  return cell;
}

double SwapReport::modality_drop(SwapModality m) const {
  return 0.5 * (cell(m, SwapDirection::kFakeGetsReal).drop() +
                cell(m, SwapDirection::kRealGetsFake).drop());
}

const SwapCell& SwapReport::cell(SwapModality m, SwapDirection d) const {
  for (const auto& c : cells)
    if (c.spec.modality == m && c.spec.direction == d) return c;
  throw ValidationError(std::string("swap report has no cell ") + to_string(m) + "/" + to_string(d));
}

SwapReport modality_swap_eval(const MultiModalModel& model, const Dataset& test_set,
                              std::uint64_t seed) {
  SwapReport report;
  report.n = test_set.size();
  std::size_t ok = 0;
  for (const auto& s : test_set.samples) ok += model.predict(s) == s.label;
  report.baseline_accuracy = report.n ? double(ok) / double(report.n) : 0.0;
  std::map<int, std::pair<bool, bool>> labels;
  for (const auto& s : test_set.samples) {
    auto& l = labels[s.event_id];
    (s.label == kReal ? l.first : l.second) = true;
  }
  for (const auto& [event, l] : labels)
    if (!(l.first && l.second)) report.skipped_events.push_back(event);
  for (SwapModality m : {SwapModality::kText, SwapModality::kImage})
    for (SwapDirection d : {SwapDirection::kFakeGetsReal, SwapDirection::kRealGetsFake})
      report.cells.push_back(modality_swap(model, test_set, SwapSpec{m, d, seed}));
  return report;
}

std::vector<std::size_t> derangement(std::size_t n, std::uint64_t seed) {
  if (n < 2) throw ValidationError("a derangement needs at least 2 elements");
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  // Sattolo: a uniform single n-cycle
  CounterRng r(seed, kStreamShuffle);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(p[i], p[r.below(i)]);
  return p;
}

MismatchReport mismatch_shuffle_eval(const MultiModalModel& model, const Dataset& test_set,
                                     std::uint64_t seed) {
  MismatchReport r;
  r.n = test_set.size();
  r.permutation = derangement(r.n, seed);
  std::size_t clean = 0, ok = 0;
  for (std::size_t i = 0; i < r.n; ++i) {
    const NewsSample& s = test_set.samples[i];
    clean += model.predict(s) == s.label;
    ok += model.predict(s.tokens, test_set.samples[r.permutation[i]].image) == s.label;
  }
  r.clean_accuracy = double(clean) / double(r.n);
  r.accuracy = double(ok) / double(r.n);
  return r;
}

const char* to_string(StyleLevel l) noexcept {
  switch (l) {
    case StyleLevel::kIdentity: return "identity";
    case StyleLevel::kPosterize4: return "posterize-4";
    case StyleLevel::kPosterize2: return "posterize-2";
    case StyleLevel::kInvert: return "invert";
  }
  return "?";
}

StyleLevel style_level_from_string(const std::string& s) {
  for (StyleLevel l : {StyleLevel::kIdentity, StyleLevel::kPosterize4, StyleLevel::kPosterize2,
                       StyleLevel::kInvert})
    if (s == to_string(l)) return l;
  throw ValidationError("unknown style level '" + s + "'");
}

Tensor apply_style(const Tensor& image, StyleLevel level) {
  Tensor out = image;
  auto posterize = [&](int levels) {
    for (float& v : out.data) {
      const int q = std::clamp(static_cast<int>(std::floor(double(v) * levels)), 0, levels - 1);
      v = static_cast<float>(double(q) / double(levels - 1));
    }
  };
  switch (level) {
    case StyleLevel::kIdentity: break;
    case StyleLevel::kPosterize4: posterize(4); break;
    case StyleLevel::kPosterize2: posterize(2); break;
    case StyleLevel::kInvert:
      for (float& v : out.data) v = 1.0f - v;
      break;
  }
  return out;
}

std::vector<StyleResult> style_shift_eval(const MultiModalModel& model, const Dataset& test_set,
                                          const std::vector<StyleLevel>& levels) {
  std::vector<StyleResult> out;
  for (StyleLevel level : levels) {
    std::size_t ok = 0;
    for (const auto& s : test_set.samples)
      ok += model.predict(s.tokens, apply_style(s.image, level)) == s.label;
    out.push_back({level, test_set.empty() ? 0.0 : double(ok) / double(test_set.size()),
                   test_set.size()});
  }
  return out;
}

const char* to_string(ComponentKind k) noexcept {
  switch (k) {
    case ComponentKind::kImageAdversarial: return "image-adversarial";
    case ComponentKind::kTextAdversarial: return "text-adversarial";
    case ComponentKind::kImageTrigger: return "image-backdoor-trigger";
    case ComponentKind::kTextTrigger: return "text-backdoor-trigger";
  }
  return "?";
}

ComponentKind component_kind_from_string(const std::string& s) {
  for (ComponentKind k : {ComponentKind::kImageAdversarial, ComponentKind::kTextAdversarial,
                          ComponentKind::kImageTrigger, ComponentKind::kTextTrigger})
    if (s == to_string(k)) return k;
  throw ValidationError("unknown scenario component '" + s + "'");
}

std::string ScenarioComponent::describe() const {
  switch (kind) {
    case ComponentKind::kImageAdversarial: {
      std::string s = std::string(to_string(image.method)) + "(eps=" + fmt(image.epsilon);
      if (image.method == ImageAttackMethod::kPgd) {
        s += ",steps=" + std::to_string(image.pgd_steps) + ",step=" + fmt(image.step_size());
      }
      return s + ",seed=" + std::to_string(image.seed) + ")";
    }
    case ComponentKind::kTextAdversarial: {
      std::string s = std::string(to_string(text.method)) + "(";
      switch (text.method) {
        case TextAttackMethod::kViper: s += "p=" + fmt(text.viper_p); break;
        case TextAttackMethod::kHotflip:
          s += "budget=" + fmt(text.hotflip_budget) + ",beam=" + std::to_string(text.hotflip_beam);
          break;
        case TextAttackMethod::kHeuristic:
          s += "k=" + std::to_string(text.heuristic_k) + ",r=" + std::to_string(text.heuristic_r);
          break;
      }
      return s + ",seed=" + std::to_string(text.seed) + ")";
    }
    case ComponentKind::kImageTrigger:
    case ComponentKind::kTextTrigger:
      return "trigger(" + trigger.describe() + ")";
  }
  return "?";
}

void ScenarioSpec::validate() const {
  int counts[4] = {0, 0, 0, 0};
  for (const auto& c : components) {
    ++counts[int(c.kind)];
    switch (c.kind) {
      case ComponentKind::kImageAdversarial: c.image.validate(); break;
      case ComponentKind::kTextAdversarial: c.text.validate(); break;
      case ComponentKind::kImageTrigger:
      case ComponentKind::kTextTrigger: {
        c.trigger.validate();
        const bool image_kind = c.kind == ComponentKind::kImageTrigger;
        if (image_kind != (c.trigger.modality == TriggerModality::kImage)) {
          throw ValidationError("trigger modality does not match component " +
                                std::string(to_string(c.kind)));
        }
        break;
      }
    }
  }
  for (int k = 0; k < 4; ++k) {
    if (counts[k] > 1) {
      throw ValidationError(std::string("scenario has more than one ") +
                            to_string(ComponentKind(k)) + " component");
    }
  }
}

std::string ScenarioSpec::describe() const {
  if (components.empty()) return "clean";
  std::string s;
  for (const auto& c : components) s += (s.empty() ? "" : "+") + c.describe();
  return s;
}

const ScenarioRow& ScenarioReport::row(const std::string& condition) const {
  for (const auto& r : rows)
    if (r.condition == condition) return r;
  throw ValidationError("scenario report has no row '" + condition + "'");
}

NewsSample apply_scenario(const MultiModalModel& model, const NewsSample& sample,
                          const std::vector<ScenarioComponent>& components, std::size_t index,
                          const CharEmbeddingSpace& ces) {
  static constexpr ComponentKind kOrder[] = {
      ComponentKind::kImageTrigger, ComponentKind::kImageAdversarial,
      ComponentKind::kTextTrigger, ComponentKind::kTextAdversarial};
  NewsSample s = sample;
  for (ComponentKind kind : kOrder) {
    for (const auto& c : components) {
      if (c.kind != kind) continue;
      switch (kind) {
        case ComponentKind::kImageTrigger:
        case ComponentKind::kTextTrigger:
          s = stamp_trigger(s, c.trigger);
          break;
        case ComponentKind::kImageAdversarial: {
          ImageAttackConfig cfg = c.image;
          cfg.seed = CounterRng(c.image.seed, kStreamScenario).derive(index).next_u64();
          s.image = attack_image(model, s, cfg).adv_image;
          break;
        }
        case ComponentKind::kTextAdversarial: {
          TextAttackConfig cfg = c.text;
          cfg.seed = CounterRng(c.text.seed, kStreamScenario).derive(index).next_u64();
          s.tokens = attack_text(model, s, cfg, ces).adv_tokens;
          break;
        }
      }
    }
  }
  return s;
}

ScenarioReport run_scenario(const MultiModalModel& model, const Dataset& test_set,
                            const ScenarioSpec& scenario, const CharEmbeddingSpace& ces) {
  scenario.validate();
  ScenarioReport report;
  report.scenario = scenario.describe();

  auto run = [&](const std::string& condition, const std::vector<ScenarioComponent>& comps) {
    ScenarioRow row;
    row.condition = condition;
    for (std::size_t i = 0; i < test_set.size(); ++i) {
      const NewsSample& s = test_set.samples[i];
      const int pred = model.predict(apply_scenario(model, s, comps, i, ces));
      ++row.n;
      row.correct += pred == s.label;
      if (s.label == kFake) {
        ++row.fakes;
        row.fakes_evaded += pred == kReal;
      }
    }
    report.rows.push_back(std::move(row));
  };

  run("clean", {});
  for (const auto& c : scenario.components) run(c.describe(), {c});
  if (!scenario.components.empty()) run("combined", scenario.components);
  return report;
}

}  // namespace mmr
