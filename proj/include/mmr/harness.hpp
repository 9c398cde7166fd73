#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mmr/config_io.hpp"
#include "mmr/detector.hpp"
#include "mmr/model.hpp"

namespace mmr {

// One evaluated (model, dataset, condition) cell. Metric fields are unset on
// error rows.
struct ReportRow {
  std::string model_id;
  std::string dataset_id;
  std::string condition;   // "clean", "image-attack", "resize", "scenario", ...
  std::string parameters;  // canonical JSON of the condition's settings
  std::size_t n = 0;
  std::size_t correct = 0;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
  std::uint64_t seed = 0;
  double wall_time = 0.0;  // seconds
  std::string error;

  double accuracy() const { return n ? double(correct) / double(n) : 0.0; }
  bool ok() const { return error.empty(); }
};

// Fills n, correct, precision, recall and f1 from `m`.
void set_metrics(ReportRow& row, const Metrics& m);

struct EvalReport {
  std::vector<ReportRow> rows;

  // Column order of the CSV form. New columns are only ever appended.
  static const std::vector<std::string>& columns();

  bool has_errors() const;
  // RFC 4180 CSV with a header line. Doubles use the shortest round-trip
  // form, so identical results give identical bytes. Without timing the
  // wall_time column is left out.
  std::string to_csv(bool with_timing = true) const;
  Json to_json(bool with_timing = true) const;
};

Json backdoor_json(const BackdoorReport& r);
Json ac_json(const ACReport& r);

// Writes <dir>/<stem>.csv and the sidecar <dir>/<stem>.json holding `config`
// and the rows without timing. Throws IoError.
void write_report(const EvalReport& report, const Json& config,
                  const std::filesystem::path& dir, const std::string& stem = "report");

// Writes `text` to `path`, creating parent directories. Throws IoError.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

// Calls fn(i) for i in [0, n) on up to `workers` threads. Every index runs
// even if another throws; the exception of the lowest failing index is then
// rethrown.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

// Seed of the i-th unit of work under a global seed: the first draw of the
// i-th child of the (seed, stream) counter stream.
std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

inline constexpr std::uint64_t kStreamMatrix = 0x3A7;
inline constexpr std::uint64_t kStreamCellSample = 0x5A3;

enum class ConditionKind { kImageAttack, kTextAttack, kResize, kStyle, kMismatch, kScenario };

const char* to_string(ConditionKind k) noexcept;
ConditionKind condition_kind_from_string(const std::string& s);

// Settings per kind:
//   image-attack  ImageAttackConfig fields
//   text-attack   TextAttackConfig fields
//   resize        {"resize": ResizeSpec, "attack": ImageAttackConfig or null,
//                  "adaptive": bool}; a non-adaptive attack is crafted on the
//                  undefended model
//   style         {"level": "posterize-4" | "posterize-2" | "invert" | "identity"}
//   mismatch      {}
//   scenario      {"components": [ScenarioComponent, ...]}
// Grid keys are dotted paths into the settings object ("epsilon",
// "attack.epsilon"); every combination of grid values is one cell.
struct MatrixCondition {
  ConditionKind kind = ConditionKind::kImageAttack;
  Json settings = Json::object();
  std::map<std::string, std::vector<Json>> grid;

  // Settings of every grid point, in lexicographic order of the grid keys
  // with the last key varying fastest.
  std::vector<Json> expand() const;
};

struct MatrixEntry {
  std::string id;
  std::filesystem::path path;
};

struct MatrixConfig {
  std::vector<MatrixEntry> models;    // checkpoints
  std::vector<MatrixEntry> datasets;  // dataset directories
  std::vector<MatrixCondition> conditions;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

// {"models": [{"id", "path"}], "datasets": [...], "conditions": [{"kind",
// "settings", "grid"}], "seed", "workers"}. Paths are resolved against `base`.
MatrixConfig matrix_config_from_json(const Json& j, const std::filesystem::path& base = {});
Json to_json(const MatrixConfig& c);

// Rows for every model x dataset: one "clean" row when there is at least one
// condition, then one row per condition grid point. Row i uses
// derived_seed(seed, kStreamMatrix, i); per-sample attack seeds are derived
// from the row seed. A missing artifact or a failing cell becomes an error
// row. Results do not depend on `workers`.
EvalReport run_matrix(const MatrixConfig& cfg);

// The rows run_matrix produces for a single already loaded model and
// dataset, with the samples of each row spread over `workers` threads.
EvalReport run_conditions(const MultiModalModel& model, const std::string& model_id,
                          const Dataset& ds, const std::string& dataset_id,
                          const std::vector<MatrixCondition>& conditions, std::uint64_t seed,
                          std::size_t workers = 1);

// Evaluates `model` on `ds` under one condition. For resize, `model` is the
// undefended model. Sample i of an attack uses
// derived_seed(seed, kStreamCellSample, i). Samples are spread over
// `workers` threads. Fills everything but the ids and timing.
ReportRow evaluate_condition(const MultiModalModel& model, const Dataset& ds,
                             ConditionKind kind, const Json& settings, std::uint64_t seed,
                             std::size_t workers = 1);

struct ProjectedPoint {
  std::string id;
  double x = 0.0;
  double y = 0.0;
  int label = kReal;
  bool poisoned = false;
};

struct Projection {
  std::vector<ProjectedPoint> points;
  double variance[2] = {0.0, 0.0};  // along each axis
  double total_variance = 0.0;

  std::string to_csv() const;
};

// Projects centered text representations onto their two leading principal
// axes. Each axis is signed so its largest-magnitude loading is positive.
// Throws ValidationError for fewer than 3 samples or a mask of the wrong size.
Projection project_features(const std::vector<Tensor>& features, const Dataset& ds,
                            const std::vector<bool>* poisoned = nullptr);
Projection feature_projection(const Detector& model, const Dataset& ds,
                              const std::vector<bool>* poisoned = nullptr);

}  // namespace mmr
