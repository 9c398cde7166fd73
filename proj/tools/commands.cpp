#include <chrono>
#include <map>

#include "cli.hpp"
#include "mmr/backdoor.hpp"
#include "mmr/bias_eval.hpp"
#include "mmr/defenses.hpp"
#include "mmr/errors.hpp"
#include "mmr/harness.hpp"
#include "mmr/image_attacks.hpp"
#include "mmr/text_attacks.hpp"

namespace mmr::cli {

namespace {

namespace fs = std::filesystem;

int finish(const EvalReport& report, const Json& config, const fs::path& out) {
  write_report(report, config, out);
  return report.has_errors() ? kExitPartial : kExitOk;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ReportRow clean_row(const MultiModalModel& model, const std::string& model_id, const Dataset& ds,
                    const std::string& dataset_id) {
  const auto t0 = std::chrono::steady_clock::now();
  ReportRow row;
  row.model_id = model_id;
  row.dataset_id = dataset_id;
  row.condition = "clean";
  row.parameters = "{}";
  set_metrics(row, evaluate(model, ds));
  row.wall_time = seconds_since(t0);
  return row;
}

// Grid of dotted settings paths to value lists, as in a matrix condition.
std::map<std::string, std::vector<Json>> grid_from(const RunConfig& rc) {
  std::map<std::string, std::vector<Json>> grid;
  if (!rc.has("grid")) return grid;
  const Json& g = rc.at("grid");
  if (!g.is_object()) throw ValidationError("grid must be an object");
  for (const auto& [key, values] : g.items()) {
    if (!values.is_array()) throw ValidationError("grid '" + key + "' must be an array");
    grid[key] = std::vector<Json>(values.begin(), values.end());
  }
  return grid;
}

Json grid_json(const std::map<std::string, std::vector<Json>>& grid) {
  Json g = Json::object();
  for (const auto& [key, values] : grid) g[key] = values;
  return g;
}

// Image or text attack over one model and dataset, with an optional grid.
template <typename AttackConfig>
int attack_command(const CommonOptions& opts, const char* name, ConditionKind kind) {
  const bool image = kind == ConditionKind::kImageAttack;
  RunConfig rc(name, opts,
               image ? std::initializer_list<const char*>{"model", "data", "attack", "grid", "export"}
                     : std::initializer_list<const char*>{"model", "data", "attack", "grid"});
  AttackConfig attack = rc.section<AttackConfig>("attack");
  attack.validate();
  MatrixCondition cond;
  cond.kind = kind;
  cond.settings = to_json(attack);
  cond.settings.erase("seed");
  cond.grid = grid_from(rc);
  for (const Json& p : cond.expand()) config_from_json<AttackConfig>(p).validate();
  const bool export_images = image && rc.get_or("export", false).template get<bool>();

  const Detector model = load_model(rc.path("model"));
  const Dataset ds = load_dataset(rc.path("data"));
  const std::uint64_t seed = rc.seed_or(0);
  const EvalReport report = run_conditions(model, "model", ds, "data", {cond}, seed, rc.workers());

  if constexpr (std::is_same_v<AttackConfig, ImageAttackConfig>) {
    if (export_images) {
      const auto points = cond.expand();
      for (std::size_t p = 0; p < points.size(); ++p) {
        const auto cfg = config_from_json<ImageAttackConfig>(points[p]);
        const std::uint64_t row_seed = derived_seed(seed, kStreamMatrix, p + 1);
        const fs::path dir = rc.out() / "adversarial" / std::to_string(p + 1);
        parallel_for(ds.size(), rc.workers(), [&](std::size_t i) {
          ImageAttackConfig c = cfg;
          c.seed = derived_seed(row_seed, kStreamCellSample, i);
          export_adversarial(attack_image(model, ds.samples[i], c), ds.samples[i].id, c, dir);
        });
      }
    }
  }
  const Json effective = {{"attack", cond.settings}, {"grid", grid_json(cond.grid)},
                          {"export", export_images}};
  rc.write_run(effective);
  return finish(report, effective, rc.out());
}

void write_ids(const std::vector<std::string>& ids, const fs::path& path) {
  fs::create_directories(path.parent_path());
  write_id_list(ids, path);
}

int defend_resize(const RunConfig& rc) {
  const ResizeSpec resize = rc.section<ResizeSpec>("resize");
  resize.validate();
  std::optional<ImageAttackConfig> attack;
  if (rc.has("attack")) {
    attack = config_from_json<ImageAttackConfig>(rc.at("attack"));
    attack->validate();
  }
  std::vector<MatrixCondition> conds;
  Json attack_settings = Json(nullptr);
  if (attack) {
    attack_settings = to_json(*attack);
    attack_settings.erase("seed");
    conds.push_back({ConditionKind::kImageAttack, attack_settings, {}});
  }
  conds.push_back({ConditionKind::kResize, {{"resize", to_json(resize)}}, {}});
  if (attack) {
    conds.push_back({ConditionKind::kResize,
                     {{"resize", to_json(resize)}, {"attack", attack_settings}}, {}});
  }
  const Detector model = load_model(rc.path("model"));
  const Dataset ds = load_dataset(rc.path("data"));
  const EvalReport report =
      run_conditions(model, "model", ds, "data", conds, rc.seed_or(0), rc.workers());
  const Json effective = {{"method", "resize"}, {"resize", to_json(resize)},
                          {"attack", attack_settings}};
  rc.write_run(effective);
  return finish(report, effective, rc.out());
}

int defend_adversarial_training(const RunConfig& rc) {
  AdversarialTrainingConfig cfg = rc.section<AdversarialTrainingConfig>("training");
  if (rc.seed()) cfg.seed = *rc.seed();
  cfg.validate();
  const Detector base = load_model(rc.path("model"));
  const Dataset train_set = load_dataset(rc.path("train_data"));
  const Dataset val_set = rc.has("val_data") ? load_dataset(rc.path("val_data")) : Dataset{};
  const Dataset test_set = load_dataset(rc.path("test_data"));

  DetectorParams trained = adversarial_training(base.params(), train_set, val_set, cfg);
  const fs::path ckpt = rc.out() / "model.ckpt";
  fs::create_directories(rc.out());
  save_checkpoint(trained, ckpt);
  const Detector hardened(std::move(trained));

  MatrixCondition cond;
  if (cfg.modality == AttackModality::kImage) {
    cond.kind = ConditionKind::kImageAttack;
    cond.settings = rc.has("attack") ? rc.at("attack") : to_json(cfg.image);
  } else {
    cond.kind = ConditionKind::kTextAttack;
    cond.settings = rc.has("attack") ? rc.at("attack") : to_json(cfg.text);
  }
  cond.settings.erase("seed");
  EvalReport report = run_conditions(base, "base", test_set, "test", {cond}, cfg.seed, rc.workers());
  const EvalReport hard =
      run_conditions(hardened, "adversarial", test_set, "test", {cond}, cfg.seed, rc.workers());
  report.rows.insert(report.rows.end(), hard.rows.begin(), hard.rows.end());
  const Json effective = {{"method", "adversarial-training"}, {"training", to_json(cfg)},
                          {"attack", cond.settings}};
  rc.write_run(effective);
  return finish(report, effective, rc.out());
}

int defend_activation_clustering(const RunConfig& rc) {
  const ActivationClusteringConfig cfg = rc.section<ActivationClusteringConfig>("clustering");
  cfg.validate();
  const bool retrain = rc.get_or("retrain", true).get<bool>();
  const Detector model = load_model(rc.path("model"));
  const Dataset train_set = load_dataset(rc.path("train_data"));
  std::optional<std::vector<bool>> truth;
  if (rc.has("poisoned_ids")) truth = mask_from_ids(train_set, read_id_list(rc.path("poisoned_ids")));

  const ACReport ac = activation_clustering(model, train_set, cfg, truth ? &*truth : nullptr);
  write_ids(ac.flagged_ids, rc.out() / "flagged_ids.txt");
  write_text(rc.out() / "clustering.json", ac_json(ac).dump(2) + "\n");

  EvalReport report;
  if (retrain) {
    const Dataset val_set = rc.has("val_data") ? load_dataset(rc.path("val_data")) : Dataset{};
    const Dataset test_set = load_dataset(rc.path("test_data"));
    const Dataset filtered = remove_ids(train_set, ac.flagged_ids);
    DetectorParams params = train(model.params().config, filtered, val_set).first;
    save_checkpoint(params, rc.out() / "model.ckpt");
    const Detector cleaned(std::move(params));
    report.rows.push_back(clean_row(model, "input", test_set, "test"));
    report.rows.push_back(clean_row(cleaned, "filtered", test_set, "test"));
  }
  const Json effective = {{"method", "activation-clustering"},
                          {"clustering", to_json(cfg)},
                          {"retrain", retrain}};
  rc.write_run(effective);
  return finish(report, effective, rc.out());
}

}  // namespace

int gen_data(const CommonOptions& opts) {
  RunConfig rc("gen-data", opts, {"generator", "split"});
  GenConfig gen = rc.section<GenConfig>("generator");
  if (rc.seed()) gen.seed = *rc.seed();
  gen.validate();
  const SplitRatios ratios = rc.section<SplitRatios>("split");
  const DatasetSplit split = split_event_disjoint(generate_synthetic(gen), ratios);
  save_dataset(split.train, rc.out() / "train");
  save_dataset(split.test, rc.out() / "test");
  save_dataset(split.val, rc.out() / "val");
  rc.write_run({{"generator", to_json(gen)},
                {"split", to_json(ratios)},
                {"sizes", {{"train", split.train.size()},
                           {"test", split.test.size()},
                           {"val", split.val.size()}}}});
  return kExitOk;
}

int train_cmd(const CommonOptions& opts) {
  RunConfig rc("train", opts, {"detector", "train_data", "val_data", "test_data"});
  DetectorConfig cfg = rc.section<DetectorConfig>("detector");
  if (rc.seed()) cfg.seed = *rc.seed();
  cfg.validate();
  const Dataset train_set = load_dataset(rc.path("train_data"));
  const Dataset val_set = rc.has("val_data") ? load_dataset(rc.path("val_data")) : Dataset{};
  auto [params, log] = train(cfg, train_set, val_set);
  fs::create_directories(rc.out());
  save_checkpoint(params, rc.out() / "model.ckpt");

  std::string csv = "epoch,train_loss,train_accuracy,event_loss,val_loss,val_accuracy\n";
  for (const auto& e : log.epochs) {
    csv += std::to_string(e.epoch) + "," + Json(e.train_loss).dump() + "," +
           Json(e.train_accuracy).dump() + "," + Json(e.event_loss).dump() + "," +
           Json(e.val_loss).dump() + "," + Json(e.val_accuracy).dump() + "\n";
  }
  write_text(rc.out() / "training.csv", csv);

  const Detector model(std::move(params));
  EvalReport report;
  if (!val_set.empty()) report.rows.push_back(clean_row(model, "model", val_set, "val"));
  if (rc.has("test_data")) {
    report.rows.push_back(clean_row(model, "model", load_dataset(rc.path("test_data")), "test"));
  }
  for (auto& r : report.rows) r.seed = cfg.seed;
  const Json effective = {{"detector", to_json(cfg)}};
  rc.write_run(effective);
  return finish(report, effective, rc.out());
}

int attack_image(const CommonOptions& opts) {
  return attack_command<ImageAttackConfig>(opts, "attack-image", ConditionKind::kImageAttack);
}

int attack_text(const CommonOptions& opts) {
  return attack_command<TextAttackConfig>(opts, "attack-text", ConditionKind::kTextAttack);
}

int poison(const CommonOptions& opts) {
  RunConfig rc("poison", opts, {"data", "poison"});
  PoisonSpec spec = rc.section<PoisonSpec>("poison");
  if (rc.seed()) spec.seed = *rc.seed();
  spec.validate();
  const PoisonedDataset pd = poison_dataset(load_dataset(rc.path("data")), spec);
  save_dataset(pd.dataset, rc.out() / "dataset");
  write_ids(pd.poisoned_ids(), rc.out() / "poisoned_ids.txt");
  rc.write_run({{"poison", to_json(spec)}, {"poisoned", pd.poisoned_count()}});
  return kExitOk;
}

int train_poisoned(const CommonOptions& opts) {
  RunConfig rc("train-poisoned", opts,
               {"train_data", "val_data", "test_data", "poison", "detector", "clean_model"});
  PoisonSpec spec = rc.section<PoisonSpec>("poison");
  if (rc.seed()) spec.seed = *rc.seed();
  spec.validate();
  const DetectorConfig cfg = rc.section<DetectorConfig>("detector");
  cfg.validate();
  const Dataset train_set = load_dataset(rc.path("train_data"));
  const Dataset val_set = rc.has("val_data") ? load_dataset(rc.path("val_data")) : Dataset{};
  const Dataset test_set = load_dataset(rc.path("test_data"));

  const PoisonedDataset pd = poison_dataset(train_set, spec);
  write_ids(pd.poisoned_ids(), rc.out() / "poisoned_ids.txt");
  DetectorParams params = train(cfg, pd.dataset, val_set).first;
  save_checkpoint(params, rc.out() / "model.ckpt");
  const Detector backdoored(std::move(params));
  const Detector clean = rc.has("clean_model") ? load_model(rc.path("clean_model"))
                                               : Detector(train(cfg, train_set, val_set).first);

  bool undefined = false;
  try {
    const BackdoorReport br = evaluate_backdoor(clean, backdoored, test_set, spec.trigger);
    write_text(rc.out() / "backdoor.json", backdoor_json(br).dump(2) + "\n");
  } catch (const MetricUndefinedError& e) {
    undefined = true;
    write_text(rc.out() / "backdoor.json", Json{{"asr", nullptr}, {"error", e.what()}}.dump(2) + "\n");
  }

  Dataset triggered = test_set;
  for (auto& s : triggered.samples) s = stamp_trigger(s, spec.trigger);
  EvalReport report;
  report.rows.push_back(clean_row(clean, "clean", test_set, "test"));
  report.rows.push_back(clean_row(backdoored, "backdoored", test_set, "test"));
  ReportRow trig = clean_row(backdoored, "backdoored", triggered, "test");
  trig.condition = "trigger";
  trig.parameters = to_json(spec.trigger).dump();
  report.rows.push_back(trig);
  for (auto& r : report.rows) r.seed = spec.seed;
  const Json effective = {{"poison", to_json(spec)}, {"detector", to_json(cfg)},
                          {"clean_model", rc.has("clean_model")}};
  rc.write_run(effective);
  const int code = finish(report, effective, rc.out());
  return undefined ? kExitPartial : code;
}

int defend(const CommonOptions& opts) {
  RunConfig rc("defend", opts,
               {"method", "model", "data", "resize", "attack", "training", "train_data",
                "val_data", "test_data", "clustering", "poisoned_ids", "retrain"});
  const Json& method = rc.at("method");
  if (!method.is_string()) throw ValidationError("defend method must be a string");
  const std::string m = method.get<std::string>();
  if (m == "resize") return defend_resize(rc);
  if (m == "adversarial-training") return defend_adversarial_training(rc);
  if (m == "activation-clustering") return defend_activation_clustering(rc);
  throw ValidationError("unknown defense '" + m + "'");
}

int bias_eval(const CommonOptions& opts) {
  RunConfig rc("bias-eval", opts, {"model", "data", "styles"});
  std::vector<StyleLevel> styles = {StyleLevel::kPosterize4, StyleLevel::kPosterize2,
                                    StyleLevel::kInvert};
  if (rc.has("styles")) {
    styles.clear();
    if (!rc.at("styles").is_array()) throw ValidationError("styles must be an array");
    for (const Json& s : rc.at("styles")) {
      if (!s.is_string()) throw ValidationError("styles must be strings");
      styles.push_back(style_level_from_string(s.get<std::string>()));
    }
  }
  const std::uint64_t seed = rc.seed_or(0);
  const Detector model = load_model(rc.path("model"));
  const Dataset ds = load_dataset(rc.path("data"));

  EvalReport report;
  report.rows.push_back(clean_row(model, "model", ds, "data"));
  const auto t0 = std::chrono::steady_clock::now();
  const SwapReport swap = modality_swap_eval(model, ds, seed);
  const double swap_time = seconds_since(t0) / double(swap.cells.size());
  Json cells = Json::array();
  for (const SwapCell& c : swap.cells) {
    ReportRow row;
    row.model_id = "model";
    row.dataset_id = "data";
    row.condition = "swap";
    row.parameters = Json{{"direction", to_string(c.spec.direction)},
                          {"modality", to_string(c.spec.modality)}}.dump();
    row.n = c.n;
    row.correct = c.swapped_correct;
    row.wall_time = swap_time;
    report.rows.push_back(row);
    cells.push_back({{"modality", to_string(c.spec.modality)},
                     {"direction", to_string(c.spec.direction)},
                     {"n", c.n},
                     {"skipped", c.skipped},
                     {"clean_accuracy", c.clean_accuracy()},
                     {"accuracy", c.accuracy()},
                     {"drop", c.drop()}});
  }
  std::vector<MatrixCondition> conds = {{ConditionKind::kMismatch, Json::object(), {}}};
  for (StyleLevel l : styles) conds.push_back({ConditionKind::kStyle, {{"level", to_string(l)}}, {}});
  EvalReport rest = run_conditions(model, "model", ds, "data", conds, seed, rc.workers());
  report.rows.insert(report.rows.end(), rest.rows.begin() + 1, rest.rows.end());
  for (auto& r : report.rows) {
    if (r.condition == "clean" || r.condition == "swap") r.seed = seed;
  }

  Json styles_json = Json::array();
  for (StyleLevel l : styles) styles_json.push_back(to_string(l));
  write_text(rc.out() / "bias.json",
             Json{{"baseline_accuracy", swap.baseline_accuracy},
                  {"n", swap.n},
                  {"skipped_events", swap.skipped_events},
                  {"image_drop", swap.modality_drop(SwapModality::kImage)},
                  {"text_drop", swap.modality_drop(SwapModality::kText)},
                  {"cells", cells}}
                     .dump(2) +
                 "\n");
  const Json effective = {{"styles", styles_json}};
  rc.write_run(effective);
  return finish(report, effective, rc.out());
}

int scenario(const CommonOptions& opts) {
  RunConfig rc("scenario", opts, {"model", "data", "scenarios"});
  const Json& list = rc.at("scenarios");
  if (!list.is_array()) throw ValidationError("scenarios must be an array");
  std::vector<ScenarioSpec> specs;
  for (const Json& sj : list) {
    if (!sj.is_array()) throw ValidationError("each scenario is an array of components");
    ScenarioSpec spec;
    for (const Json& c : sj) {
      spec.components.push_back(config_from_json<ScenarioComponent>(c));
      if (rc.seed()) {
        spec.components.back().image.seed = *rc.seed();
        spec.components.back().text.seed = *rc.seed();
      }
    }
    spec.validate();
    specs.push_back(std::move(spec));
  }
  const Detector model = load_model(rc.path("model"));
  const Dataset ds = load_dataset(rc.path("data"));

  std::vector<ScenarioReport> results(specs.size());
  std::vector<double> times(specs.size());
  parallel_for(specs.size(), rc.workers(), [&](std::size_t i) {
    const auto t0 = std::chrono::steady_clock::now();
    results[i] = run_scenario(model, ds, specs[i]);
    times[i] = seconds_since(t0);
  });

  EvalReport report;
  Json details = Json::array();
  Json effective_specs = Json::array();
  for (std::size_t i = 0; i < specs.size(); ++i) {
    Json comps = Json::array();
    for (const auto& c : specs[i].components) comps.push_back(to_json(c));
    effective_specs.push_back(comps);
    Json rows = Json::array();
    for (const ScenarioRow& r : results[i].rows) {
      ReportRow row;
      row.model_id = "model";
      row.dataset_id = "data";
      row.condition = "scenario";
      row.parameters = Json{{"part", r.condition}, {"scenario", results[i].scenario}}.dump();
      row.n = r.n;
      row.correct = r.correct;
      row.seed = rc.seed_or(0);
      row.wall_time = times[i] / double(results[i].rows.size());
      report.rows.push_back(row);
      rows.push_back({{"condition", r.condition},
                      {"accuracy", r.accuracy()},
                      {"fakes", r.fakes},
                      {"fakes_evaded", r.fakes_evaded},
                      {"evasion_rate", r.evasion_rate()}});
    }
    details.push_back({{"scenario", results[i].scenario}, {"rows", rows}});
  }
  write_text(rc.out() / "scenarios.json", details.dump(2) + "\n");
  const Json effective = {{"scenarios", effective_specs}};
  rc.write_run(effective);
  return finish(report, effective, rc.out());
}

int report(const CommonOptions& opts) {
  RunConfig rc("report", opts, {"matrix"});
  Json mj = rc.at("matrix");
  if (!mj.is_object()) throw ValidationError("matrix must be an object");
  if (rc.seed()) mj["seed"] = *rc.seed();
  MatrixConfig cfg = matrix_config_from_json(mj, fs::path(opts.config).parent_path());
  if (opts.workers > 1) cfg.workers = opts.workers;
  const EvalReport result = run_matrix(cfg);
  // Worker count and resolved paths do not belong to the reproducible record.
  Json effective = mj;
  effective.erase("workers");
  rc.write_run(effective);
  return finish(result, effective, rc.out());
}

int project(const CommonOptions& opts) {
  RunConfig rc("project", opts, {"model", "data", "poisoned_ids"});
  const Detector model = load_model(rc.path("model"));
  const Dataset ds = load_dataset(rc.path("data"));
  std::optional<std::vector<bool>> mask;
  if (rc.has("poisoned_ids")) mask = mask_from_ids(ds, read_id_list(rc.path("poisoned_ids")));
  const Projection p = feature_projection(model, ds, mask ? &*mask : nullptr);
  write_text(rc.out() / "projection.csv", p.to_csv());
  rc.write_run({{"method", "pca"},
                {"features", "text"},
                {"variance", {p.variance[0], p.variance[1]}},
                {"total_variance", p.total_variance}});
  return kExitOk;
}

}  // namespace mmr::cli
