#pragma once

#include <nlohmann/json.hpp>

#include "mmr/backdoor.hpp"
#include "mmr/bias_eval.hpp"
#include "mmr/corpus.hpp"
#include "mmr/defenses.hpp"
#include "mmr/detector.hpp"
#include "mmr/image_attacks.hpp"
#include "mmr/text_attacks.hpp"

// JSON forms of the configuration structs. `to_json` writes every field;
// `from_json` overwrites only the keys present, so a partial object applies on
// top of the defaults. Unknown keys and ill-typed values raise ValidationError.
namespace mmr {

using Json = nlohmann::json;

Json to_json(const GenConfig& c);
Json to_json(const SplitRatios& c);
Json to_json(const DetectorConfig& c);
Json to_json(const ImageAttackConfig& c);
Json to_json(const TextAttackConfig& c);
Json to_json(const TriggerSpec& c);
Json to_json(const PoisonSpec& c);
Json to_json(const ResizeSpec& c);
Json to_json(const AdversarialTrainingConfig& c);
Json to_json(const ActivationClusteringConfig& c);
Json to_json(const ScenarioComponent& c);

void from_json(const Json& j, GenConfig& c);
void from_json(const Json& j, SplitRatios& c);
void from_json(const Json& j, DetectorConfig& c);
void from_json(const Json& j, ImageAttackConfig& c);
void from_json(const Json& j, TextAttackConfig& c);
void from_json(const Json& j, TriggerSpec& c);
void from_json(const Json& j, PoisonSpec& c);
void from_json(const Json& j, ResizeSpec& c);
void from_json(const Json& j, AdversarialTrainingConfig& c);
void from_json(const Json& j, ActivationClusteringConfig& c);
void from_json(const Json& j, ScenarioComponent& c);

template <typename T>
T config_from_json(const Json& j) {
  T c{};
  from_json(j, c);
  return c;
}

}  // namespace mmr
