#include "mmr/config_io.hpp"

#include <set>
#include <string>
#include <type_traits>

#include "mmr/errors.hpp"
#include "mmr/utf8.hpp"

namespace mmr {

namespace {

// Reads the keys of one JSON object into fields and rejects the rest.
class Reader {
 public:
  Reader(const Json& j, std::string what) : j_(j), what_(std::move(what)) {
    if (!j_.is_object()) throw ValidationError(what_ + " must be a JSON object");
  }

  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (const auto& [key, value] : j_.items()) {
      if (!known_.count(key)) throw ValidationError(what_ + ": unknown key '" + key + "'");
    }
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    known_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) bad(key, "a boolean");
      out = it->template get<bool>();
    } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
      if (!it->is_number_integer() ||
          (!it->is_number_unsigned() && it->template get<std::int64_t>() < 0)) {
        bad(key, "a non-negative integer");
      }
      out = it->template get<T>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) bad(key, "an integer");
      out = it->template get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) bad(key, "a number");
      out = it->template get<T>();
    } else {
      if (!it->is_string()) bad(key, "a string");
      out = it->template get<std::string>();
    }
  }

  template <typename T>
  void get(const std::string& key, std::optional<T>& out) {
    const auto it = j_.find(key);
    if (it != j_.end() && it->is_null()) {
      known_.insert(key);
      out.reset();
      return;
    }
    if (it == j_.end()) {
      known_.insert(key);
      return;
    }
    T v{};
    get(key, v);
    out = v;
  }

  // Enum held as a string.
  template <typename E, typename Parse>
  void get_enum(const std::string& key, E& out, Parse parse) {
    std::string s;
    bool present = j_.contains(key);
    get(key, s);
    if (present) out = parse(s);
  }

  const Json* sub(const std::string& key) {
    known_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

 private:
  [[noreturn]] void bad(const std::string& key, const char* expected) const {
    throw ValidationError(what_ + ": '" + key + "' must be " + expected);
  }

  const Json& j_;
  std::string what_;
  std::set<std::string> known_;
};

}  // namespace

Json to_json(const GenConfig& c) {
  return {{"n_samples", c.n_samples},       {"height", c.height},
          {"width", c.width},               {"n_events", c.n_events},
          {"image_signal", c.image_signal}, {"text_signal", c.text_signal},
          {"marker_noise", c.marker_noise}, {"max_len", c.max_len},
          {"seed", c.seed}};
}

void from_json(const Json& j, GenConfig& c) {
  Reader r(j, "generator config");
  r.get("n_samples", c.n_samples);
  r.get("height", c.height);
  r.get("width", c.width);
  r.get("n_events", c.n_events);
  r.get("image_signal", c.image_signal);
  r.get("text_signal", c.text_signal);
  r.get("marker_noise", c.marker_noise);
  r.get("max_len", c.max_len);
  r.get("seed", c.seed);
}

Json to_json(const SplitRatios& c) {
  return {{"train", c.train}, {"test", c.test}, {"val", c.val}};
}

void from_json(const Json& j, SplitRatios& c) {
  Reader r(j, "split ratios");
  r.get("train", c.train);
  r.get("test", c.test);
  r.get("val", c.val);
}

Json to_json(const DetectorConfig& c) {
  return {{"fusion", to_string(c.fusion)},
          {"event_head", c.event_head},
          {"hidden", c.hidden},
          {"dropout", c.dropout},
          {"lr", c.lr},
          {"batch", c.batch},
          {"epochs", c.epochs},
          {"leaky_slope", c.leaky_slope},
          {"grl_lambda", c.grl_lambda},
          {"optimizer", to_string(c.optimizer)},
          {"embed_dim", c.embed_dim},
          {"text_filters", c.text_filters},
          {"conv1_channels", c.conv1_channels},
          {"conv2_channels", c.conv2_channels},
          {"seed", c.seed}};
}

void from_json(const Json& j, DetectorConfig& c) {
  Reader r(j, "detector config");
  r.get_enum("fusion", c.fusion, fusion_from_string);
  r.get("event_head", c.event_head);
  r.get("hidden", c.hidden);
  r.get("dropout", c.dropout);
  r.get("lr", c.lr);
  r.get("batch", c.batch);
  r.get("epochs", c.epochs);
  r.get("leaky_slope", c.leaky_slope);
  r.get("grl_lambda", c.grl_lambda);
  r.get_enum("optimizer", c.optimizer, optimizer_from_string);
  r.get("embed_dim", c.embed_dim);
  r.get("text_filters", c.text_filters);
  r.get("conv1_channels", c.conv1_channels);
  r.get("conv2_channels", c.conv2_channels);
  r.get("seed", c.seed);
}

Json to_json(const ImageAttackConfig& c) {
  return {{"method", to_string(c.method)},
          {"epsilon", c.epsilon},
          {"pgd_steps", c.pgd_steps},
          {"pgd_step_size", c.pgd_step_size ? Json(*c.pgd_step_size) : Json(nullptr)},
          {"pgd_early_stop", c.pgd_early_stop},
          {"deepfool_max_iter", c.deepfool_max_iter},
          {"deepfool_overshoot", c.deepfool_overshoot},
          {"seed", c.seed}};
}

void from_json(const Json& j, ImageAttackConfig& c) {
  Reader r(j, "image attack config");
  r.get_enum("method", c.method, image_attack_from_string);
  r.get("epsilon", c.epsilon);
  r.get("pgd_steps", c.pgd_steps);
  r.get("pgd_step_size", c.pgd_step_size);
  r.get("pgd_early_stop", c.pgd_early_stop);
  r.get("deepfool_max_iter", c.deepfool_max_iter);
  r.get("deepfool_overshoot", c.deepfool_overshoot);
  r.get("seed", c.seed);
}

Json to_json(const TextAttackConfig& c) {
  return {{"method", to_string(c.method)},
          {"viper_p", c.viper_p},
          {"hotflip_beam", c.hotflip_beam},
          {"hotflip_budget", c.hotflip_budget},
          {"heuristic_k", c.heuristic_k},
          {"heuristic_r", c.heuristic_r},
          {"heuristic_candidates", c.heuristic_candidates},
          {"heuristic_stop_on_success", c.heuristic_stop_on_success},
          {"seed", c.seed}};
}

void from_json(const Json& j, TextAttackConfig& c) {
  Reader r(j, "text attack config");
  r.get_enum("method", c.method, text_attack_from_string);
  r.get("viper_p", c.viper_p);
  r.get("hotflip_beam", c.hotflip_beam);
  r.get("hotflip_budget", c.hotflip_budget);
  r.get("heuristic_k", c.heuristic_k);
  r.get("heuristic_r", c.heuristic_r);
  r.get("heuristic_candidates", c.heuristic_candidates);
  r.get("heuristic_stop_on_success", c.heuristic_stop_on_success);
  r.get("seed", c.seed);
}

Json to_json(const TriggerSpec& c) {
  return {{"modality", to_string(c.modality)},
          {"pixels", c.pixels},
          {"token", to_utf8(c.token)},
          {"target_label", c.target_label}};
}

void from_json(const Json& j, TriggerSpec& c) {
  Reader r(j, "trigger");
  r.get_enum("modality", c.modality, trigger_modality_from_string);
  r.get("pixels", c.pixels);
  std::string token = to_utf8(c.token);
  r.get("token", token);
  c.token = from_utf8(token);
  r.get("target_label", c.target_label);
}

Json to_json(const PoisonSpec& c) {
  return {{"trigger", to_json(c.trigger)},
          {"fraction", c.fraction},
          {"seed", c.seed},
          {"selection", to_string(c.selection)},
          {"event_id", c.event_id}};
}

void from_json(const Json& j, PoisonSpec& c) {
  Reader r(j, "poison spec");
  if (const Json* t = r.sub("trigger")) from_json(*t, c.trigger);
  r.get("fraction", c.fraction);
  r.get("seed", c.seed);
  r.get_enum("selection", c.selection, poison_selection_from_string);
  r.get("event_id", c.event_id);
}

Json to_json(const ResizeSpec& c) { return {{"height", c.height}, {"width", c.width}}; }

void from_json(const Json& j, ResizeSpec& c) {
  Reader r(j, "resize spec");
  r.get("height", c.height);
  r.get("width", c.width);
}

Json to_json(const AdversarialTrainingConfig& c) {
  return {{"modality", to_string(c.modality)},
          {"image", to_json(c.image)},
          {"text", to_json(c.text)},
          {"epochs", c.epochs},
          {"examples_per_epoch", c.examples_per_epoch},
          {"lr", c.lr},
          {"seed", c.seed}};
}

void from_json(const Json& j, AdversarialTrainingConfig& c) {
  Reader r(j, "adversarial training config");
  r.get_enum("modality", c.modality, attack_modality_from_string);
  if (const Json* s = r.sub("image")) from_json(*s, c.image);
  if (const Json* s = r.sub("text")) from_json(*s, c.text);
  r.get("epochs", c.epochs);
  r.get("examples_per_epoch", c.examples_per_epoch);
  r.get("lr", c.lr);
  r.get("seed", c.seed);
}

Json to_json(const ActivationClusteringConfig& c) {
  return {{"components", c.components},
          {"max_iterations", c.max_iterations},
          {"analysis", to_string(c.analysis)},
          {"size_threshold", c.size_threshold},
          {"silhouette_threshold", c.silhouette_threshold},
          {"reclassification_ratio", c.reclassification_ratio},
          {"retrain_epochs", c.retrain_epochs ? Json(*c.retrain_epochs) : Json(nullptr)},
          {"min_class_size", c.min_class_size}};
}

void from_json(const Json& j, ActivationClusteringConfig& c) {
  Reader r(j, "activation clustering config");
  r.get("components", c.components);
  r.get("max_iterations", c.max_iterations);
  r.get_enum("analysis", c.analysis, ac_analysis_from_string);
  r.get("size_threshold", c.size_threshold);
  r.get("silhouette_threshold", c.silhouette_threshold);
  r.get("reclassification_ratio", c.reclassification_ratio);
  r.get("retrain_epochs", c.retrain_epochs);
  r.get("min_class_size", c.min_class_size);
}

Json to_json(const ScenarioComponent& c) {
  Json j = {{"kind", to_string(c.kind)}};
  switch (c.kind) {
    case ComponentKind::kImageAdversarial: j["attack"] = to_json(c.image); break;
    case ComponentKind::kTextAdversarial: j["attack"] = to_json(c.text); break;
    case ComponentKind::kImageTrigger:
    case ComponentKind::kTextTrigger: j["trigger"] = to_json(c.trigger); break;
  }
  return j;
}

void from_json(const Json& j, ScenarioComponent& c) {
  Reader r(j, "scenario component");
  if (!j.is_object() || !j.contains("kind")) throw ValidationError("scenario component needs a kind");
  r.get_enum("kind", c.kind, component_kind_from_string);
  const Json* attack = r.sub("attack");
  const Json* trigger = r.sub("trigger");
  switch (c.kind) {
    case ComponentKind::kImageAdversarial:
      if (trigger) throw ValidationError("image-adversarial component takes no trigger");
      if (attack) from_json(*attack, c.image);
      break;
    case ComponentKind::kTextAdversarial:
      if (trigger) throw ValidationError("text-adversarial component takes no trigger");
      if (attack) from_json(*attack, c.text);
      break;
    case ComponentKind::kImageTrigger:
    case ComponentKind::kTextTrigger:
      if (attack) throw ValidationError("trigger component takes no attack");
      c.trigger.modality = c.kind == ComponentKind::kImageTrigger ? TriggerModality::kImage
                                                                   : TriggerModality::kText;
      if (trigger) from_json(*trigger, c.trigger);
      break;
  }
}

}  // namespace mmr
