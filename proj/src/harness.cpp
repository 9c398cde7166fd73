#include "mmr/harness.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <memory>
#include <sstream>
#include <thread>

#include "mmr/bias_eval.hpp"
#include "mmr/defenses.hpp"
#include "mmr/errors.hpp"
#include "mmr/image_attacks.hpp"
#include "mmr/rng.hpp"
#include "mmr/text_attacks.hpp"

namespace mmr {

namespace {

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string optional_field(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

double elapsed_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Sets a dotted path inside `j`, creating objects on the way.
void set_path(Json& j, const std::string& path, const Json& value) {
  Json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (key.empty()) throw ValidationError("bad grid key '" + path + "'");
    if (node->is_null()) *node = Json::object();
    if (!node->is_object()) throw ValidationError("grid key '" + path + "' crosses a non-object");
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *node = value;
}

bool non_negative_integer(const Json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& what) {
  if (!j.is_object()) throw ValidationError(what + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) ==
        allowed.end()) {
      throw ValidationError(what + ": unknown key '" + key + "'");
    }
  }
}

std::vector<MatrixEntry> entries_from_json(const Json& j, const char* what,
                                           const std::filesystem::path& base) {
  std::vector<MatrixEntry> out;
  if (j.is_null()) return out;
  if (!j.is_array()) throw ValidationError(std::string(what) + " must be an array");
  for (const Json& e : j) {
    check_keys(e, {"id", "path"}, what);
    if (!e.contains("id") || !e["id"].is_string() || !e.contains("path") || !e["path"].is_string()) {
      throw ValidationError(std::string(what) + " entries need string 'id' and 'path'");
    }
    std::filesystem::path p = e["path"].get<std::string>();
    if (p.is_relative() && !base.empty()) p = base / p;
    out.push_back({e["id"].get<std::string>(), p});
  }
  return out;
}

void check_settings(ConditionKind kind, const Json& s) {
  switch (kind) {
    case ConditionKind::kImageAttack: config_from_json<ImageAttackConfig>(s).validate(); break;
    case ConditionKind::kTextAttack: config_from_json<TextAttackConfig>(s).validate(); break;
    case ConditionKind::kResize:
      check_keys(s, {"resize", "attack", "adaptive"}, "resize settings");
      if (s.contains("resize")) config_from_json<ResizeSpec>(s["resize"]).validate();
      if (s.contains("attack") && !s["attack"].is_null()) {
        config_from_json<ImageAttackConfig>(s["attack"]).validate();
      }
      if (s.contains("adaptive") && !s["adaptive"].is_boolean()) {
        throw ValidationError("resize settings: 'adaptive' must be a boolean");
      }
      break;
    case ConditionKind::kStyle:
      check_keys(s, {"level"}, "style settings");
      if (!s.contains("level") || !s["level"].is_string()) {
        throw ValidationError("style settings need a string 'level'");
      }
      style_level_from_string(s["level"].get<std::string>());
      break;
    case ConditionKind::kMismatch: check_keys(s, {}, "mismatch settings"); break;
    case ConditionKind::kScenario: {
      check_keys(s, {"components"}, "scenario settings");
      ScenarioSpec spec;
      if (s.contains("components")) {
        if (!s["components"].is_array()) throw ValidationError("'components' must be an array");
        for (const Json& c : s["components"]) {
          spec.components.push_back(config_from_json<ScenarioComponent>(c));
        }
      }
      spec.validate();
      break;
    }
  }
}

// Metrics over per-sample (label, prediction) pairs computed on `workers`
// threads and accumulated in sample order.
Metrics tally(std::size_t n, std::size_t workers,
              const std::function<std::pair<int, int>(std::size_t)>& fn) {
  std::vector<std::pair<int, int>> out(n);
  parallel_for(n, workers, [&](std::size_t i) { out[i] = fn(i); });
  Metrics m;
  for (const auto& [label, predicted] : out) m.add(label, predicted);
  return m;
}

Metrics attack_images(const MultiModalModel& attacked, const MultiModalModel& judged,
                      const Dataset& ds, const ImageAttackConfig& base, std::uint64_t seed,
                      std::size_t workers) {
  return tally(ds.size(), workers, [&](std::size_t i) {
    const NewsSample& s = ds.samples[i];
    ImageAttackConfig cfg = base;
    cfg.seed = derived_seed(seed, kStreamCellSample, i);
    const Tensor adv = attack_image(attacked, s, cfg).adv_image;
    return std::pair{s.label, judged.predict(s.tokens, adv)};
  });
}

}  // namespace

void set_metrics(ReportRow& row, const Metrics& m) {
  row.n = m.n;
  row.correct = m.correct;
  row.precision = m.precision();
  row.recall = m.recall();
  row.f1 = m.f1();
}

const std::vector<std::string>& EvalReport::columns() {
  static const std::vector<std::string> cols = {
      "model_id", "dataset_id", "condition", "parameters", "n",         "correct", "accuracy",
      "precision", "recall",    "f1",        "seed",       "wall_time", "error"};
  return cols;
}

bool EvalReport::has_errors() const {
  return std::any_of(rows.begin(), rows.end(), [](const ReportRow& r) { return !r.ok(); });
}

std::string EvalReport::to_csv(bool with_timing) const {
  std::string out;
  bool first = true;
  for (const auto& c : columns()) {
    if (!with_timing && c == "wall_time") continue;
    out += first ? "" : ",";
    out += c;
    first = false;
  }
  out += '\n';
  for (const ReportRow& r : rows) {
    std::vector<std::string> f = {csv_field(r.model_id),
                                  csv_field(r.dataset_id),
                                  csv_field(r.condition),
                                  csv_field(r.parameters),
                                  std::to_string(r.n),
                                  std::to_string(r.correct),
                                  r.ok() ? format_double(r.accuracy()) : std::string(),
                                  optional_field(r.precision),
                                  optional_field(r.recall),
                                  optional_field(r.f1),
                                  std::to_string(r.seed)};
    if (with_timing) f.push_back(format_double(r.wall_time));
    f.push_back(csv_field(r.error));
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (i) out += ',';
      out += f[i];
    }
    out += '\n';
  }
  return out;
}

Json EvalReport::to_json(bool with_timing) const {
  Json arr = Json::array();
  for (const ReportRow& r : rows) {
    Json j = {{"model_id", r.model_id},
              {"dataset_id", r.dataset_id},
              {"condition", r.condition},
              {"parameters", r.parameters},
              {"n", r.n},
              {"correct", r.correct},
              {"accuracy", r.ok() ? Json(r.accuracy()) : Json(nullptr)},
              {"precision", optional_json(r.precision)},
              {"recall", optional_json(r.recall)},
              {"f1", optional_json(r.f1)},
              {"seed", r.seed},
              {"error", r.error}};
    if (with_timing) j["wall_time"] = r.wall_time;
    arr.push_back(std::move(j));
  }
  return arr;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_report(const EvalReport& report, const Json& config, const std::filesystem::path& dir,
                  const std::string& stem) {
  write_text(dir / (stem + ".csv"), report.to_csv());
  const Json sidecar = {{"columns", EvalReport::columns()},
                        {"config", config},
                        {"rows", report.to_json(false)}};
  write_text(dir / (stem + ".json"), sidecar.dump(2) + "\n");
}

void parallel_for(std::size_t n, std::size_t workers,
                  const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  auto body = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) body(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return CounterRng(seed, stream).derive(index).next_u64();
}

const char* to_string(ConditionKind k) noexcept {
  switch (k) {
    case ConditionKind::kImageAttack: return "image-attack";
    case ConditionKind::kTextAttack: return "text-attack";
    case ConditionKind::kResize: return "resize";
    case ConditionKind::kStyle: return "style";
    case ConditionKind::kMismatch: return "mismatch";
    case ConditionKind::kScenario: return "scenario";
  }
  return "?";
}

ConditionKind condition_kind_from_string(const std::string& s) {
  for (auto k : {ConditionKind::kImageAttack, ConditionKind::kTextAttack, ConditionKind::kResize,
                 ConditionKind::kStyle, ConditionKind::kMismatch, ConditionKind::kScenario}) {
    if (s == to_string(k)) return k;
  }
  throw ValidationError("unknown condition kind '" + s + "'");
}

std::vector<Json> MatrixCondition::expand() const {
  std::vector<Json> points = {settings};
  for (const auto& [key, values] : grid) {
    if (values.empty()) return {};
    std::vector<Json> next;
    next.reserve(points.size() * values.size());
    for (const Json& p : points) {
      for (const Json& v : values) {
        Json q = p;
        set_path(q, key, v);
        next.push_back(std::move(q));
      }
    }
    points = std::move(next);
  }
  return points;
}

MatrixConfig matrix_config_from_json(const Json& j, const std::filesystem::path& base) {
  check_keys(j, {"models", "datasets", "conditions", "seed", "workers"}, "matrix");
  MatrixConfig c;
  c.models = entries_from_json(j.value("models", Json()), "models", base);
  c.datasets = entries_from_json(j.value("datasets", Json()), "datasets", base);
  if (j.contains("seed")) {
    if (!non_negative_integer(j["seed"])) {
      throw ValidationError("matrix seed must be a non-negative integer");
    }
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("workers")) {
    if (!non_negative_integer(j["workers"]) || j["workers"].get<std::size_t>() == 0) {
      throw ValidationError("matrix workers must be a positive integer");
    }
    c.workers = j["workers"].get<std::size_t>();
  }
  const Json conds = j.value("conditions", Json::array());
  if (!conds.is_array()) throw ValidationError("conditions must be an array");
  for (const Json& cj : conds) {
    check_keys(cj, {"kind", "settings", "grid"}, "condition");
    if (!cj.contains("kind") || !cj["kind"].is_string()) {
      throw ValidationError("condition needs a string 'kind'");
    }
    MatrixCondition mc;
    mc.kind = condition_kind_from_string(cj["kind"].get<std::string>());
    if (cj.contains("settings")) {
      if (!cj["settings"].is_object()) throw ValidationError("settings must be an object");
      mc.settings = cj["settings"];
    }
    if (cj.contains("grid")) {
      if (!cj["grid"].is_object()) throw ValidationError("grid must be an object");
      for (const auto& [key, values] : cj["grid"].items()) {
        if (!values.is_array()) throw ValidationError("grid '" + key + "' must be an array");
        mc.grid[key] = std::vector<Json>(values.begin(), values.end());
      }
    }
    for (const Json& point : mc.expand()) check_settings(mc.kind, point);
    c.conditions.push_back(std::move(mc));
  }
  return c;
}

Json to_json(const MatrixConfig& c) {
  auto entries = [](const std::vector<MatrixEntry>& v) {
    Json a = Json::array();
    for (const auto& e : v) a.push_back({{"id", e.id}, {"path", e.path.string()}});
    return a;
  };
  Json conds = Json::array();
  for (const auto& mc : c.conditions) {
    Json grid = Json::object();
    for (const auto& [key, values] : mc.grid) grid[key] = values;
    conds.push_back({{"kind", to_string(mc.kind)}, {"settings", mc.settings}, {"grid", grid}});
  }
  return {{"models", entries(c.models)},
          {"datasets", entries(c.datasets)},
          {"conditions", conds},
          {"seed", c.seed},
          {"workers", c.workers}};
}

ReportRow evaluate_condition(const MultiModalModel& model, const Dataset& ds, ConditionKind kind,
                             const Json& settings, std::uint64_t seed, std::size_t workers) {
  check_settings(kind, settings);
  ReportRow row;
  row.condition = to_string(kind);
  row.parameters = settings.dump();
  row.seed = seed;
  const std::size_t n = ds.size();
  Metrics m;
  switch (kind) {
    case ConditionKind::kImageAttack:
      m = attack_images(model, model, ds, config_from_json<ImageAttackConfig>(settings), seed,
                        workers);
      break;
    case ConditionKind::kTextAttack: {
      const auto base = config_from_json<TextAttackConfig>(settings);
      const CharEmbeddingSpace ces = CharEmbeddingSpace::standard();
      m = tally(n, workers, [&](std::size_t i) {
        const NewsSample& s = ds.samples[i];
        TextAttackConfig cfg = base;
        cfg.seed = derived_seed(seed, kStreamCellSample, i);
        return std::pair{s.label, model.predict(attack_text(model, s, cfg, ces).adv_tokens, s.image)};
      });
      break;
    }
    case ConditionKind::kResize: {
      const ResizeSpec spec =
          settings.contains("resize") ? config_from_json<ResizeSpec>(settings["resize"]) : ResizeSpec{};
      const ResizeDefendedModel defended(model, spec);
      if (settings.contains("attack") && !settings["attack"].is_null()) {
        const bool adaptive = settings.value("adaptive", false);
        m = attack_images(adaptive ? static_cast<const MultiModalModel&>(defended) : model,
                          defended, ds, config_from_json<ImageAttackConfig>(settings["attack"]),
                          seed, workers);
      } else {
        m = tally(n, workers, [&](std::size_t i) {
          return std::pair{ds.samples[i].label, defended.predict(ds.samples[i])};
        });
      }
      break;
    }
    case ConditionKind::kStyle: {
      const StyleLevel level = style_level_from_string(settings["level"].get<std::string>());
      m = tally(n, workers, [&](std::size_t i) {
        const NewsSample& s = ds.samples[i];
        return std::pair{s.label, model.predict(s.tokens, apply_style(s.image, level))};
      });
      break;
    }
    case ConditionKind::kMismatch: {
      if (n < 2) throw ValidationError("mismatch needs at least 2 samples");
      const auto perm = derangement(n, seed);
      m = tally(n, workers, [&](std::size_t i) {
        const NewsSample& s = ds.samples[i];
        return std::pair{s.label, model.predict(s.tokens, ds.samples[perm[i]].image)};
      });
      break;
    }
    case ConditionKind::kScenario: {
      std::vector<ScenarioComponent> comps;
      for (const Json& c : settings.value("components", Json::array())) {
        comps.push_back(config_from_json<ScenarioComponent>(c));
        comps.back().image.seed = seed;
        comps.back().text.seed = seed;
      }
      const CharEmbeddingSpace ces = CharEmbeddingSpace::standard();
      m = tally(n, workers, [&](std::size_t i) {
        const NewsSample s = apply_scenario(model, ds.samples[i], comps, i, ces);
        return std::pair{s.label, model.predict(s)};
      });
      break;
    }
  }
  set_metrics(row, m);
  return row;
}

EvalReport run_matrix(const MatrixConfig& cfg) {
  struct Cell {
    std::size_t model = 0;
    std::size_t dataset = 0;
    const MatrixCondition* condition = nullptr;  // null: clean
    Json settings;
  };
  std::vector<Cell> cells;
  if (!cfg.conditions.empty()) {
    std::vector<std::vector<Json>> points;
    for (const auto& c : cfg.conditions) points.push_back(c.expand());
    for (std::size_t mi = 0; mi < cfg.models.size(); ++mi) {
      for (std::size_t di = 0; di < cfg.datasets.size(); ++di) {
        cells.push_back({mi, di, nullptr, Json::object()});
        for (std::size_t ci = 0; ci < cfg.conditions.size(); ++ci) {
          for (const Json& p : points[ci]) cells.push_back({mi, di, &cfg.conditions[ci], p});
        }
      }
    }
  }

  // Artifacts are loaded once, in parallel, before any cell runs.
  std::vector<std::unique_ptr<Detector>> models(cfg.models.size());
  std::vector<std::string> model_errors(cfg.models.size());
  std::vector<std::unique_ptr<Dataset>> datasets(cfg.datasets.size());
  std::vector<std::string> dataset_errors(cfg.datasets.size());
  if (!cells.empty()) {
    parallel_for(cfg.models.size() + cfg.datasets.size(), cfg.workers, [&](std::size_t i) {
      if (i < cfg.models.size()) {
        try {
          models[i] = std::make_unique<Detector>(load_checkpoint(cfg.models[i].path));
        } catch (const std::exception& e) {
          model_errors[i] = std::string("model: ") + e.what();
        }
      } else {
        const std::size_t d = i - cfg.models.size();
        try {
          datasets[d] = std::make_unique<Dataset>(load_dataset(cfg.datasets[d].path));
        } catch (const std::exception& e) {
          dataset_errors[d] = std::string("dataset: ") + e.what();
        }
      }
    });
  }

  EvalReport report;
  report.rows.resize(cells.size());
  parallel_for(cells.size(), cfg.workers, [&](std::size_t i) {
    const Cell& cell = cells[i];
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t seed = derived_seed(cfg.seed, kStreamMatrix, i);
    ReportRow row;
    try {
      if (!model_errors[cell.model].empty()) throw Error(model_errors[cell.model]);
      if (!dataset_errors[cell.dataset].empty()) throw Error(dataset_errors[cell.dataset]);
      const Detector& model = *models[cell.model];
      const Dataset& ds = *datasets[cell.dataset];
      if (cell.condition) {
        row = evaluate_condition(model, ds, cell.condition->kind, cell.settings, seed, 1);
      } else {
        row.condition = "clean";
        row.parameters = "{}";
        set_metrics(row, evaluate(model, ds));
      }
    } catch (const std::exception& e) {
      row = ReportRow{};
      row.condition = cell.condition ? to_string(cell.condition->kind) : "clean";
      row.parameters = cell.settings.dump();
      row.error = e.what();
    }
    row.model_id = cfg.models[cell.model].id;
    row.dataset_id = cfg.datasets[cell.dataset].id;
    row.seed = seed;
    row.wall_time = elapsed_since(t0);
    report.rows[i] = std::move(row);
  });
  return report;
}

EvalReport run_conditions(const MultiModalModel& model, const std::string& model_id,
                          const Dataset& ds, const std::string& dataset_id,
                          const std::vector<MatrixCondition>& conditions, std::uint64_t seed,
                          std::size_t workers) {
  EvalReport report;
  if (conditions.empty()) return report;
  auto add = [&](const MatrixCondition* c, const Json& settings) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t row_seed = derived_seed(seed, kStreamMatrix, report.rows.size());
    ReportRow row;
    try {
      if (c) {
        row = evaluate_condition(model, ds, c->kind, settings, row_seed, workers);
      } else {
        row.condition = "clean";
        row.parameters = "{}";
        set_metrics(row, evaluate(model, ds));
      }
    } catch (const std::exception& e) {
      row = ReportRow{};
      row.condition = c ? to_string(c->kind) : "clean";
      row.parameters = settings.dump();
      row.error = e.what();
    }
    row.model_id = model_id;
    row.dataset_id = dataset_id;
    row.seed = row_seed;
    row.wall_time = elapsed_since(t0);
    report.rows.push_back(std::move(row));
  };
  add(nullptr, Json::object());
  for (const auto& c : conditions) {
    for (const Json& p : c.expand()) add(&c, p);
  }
  return report;
}

std::string Projection::to_csv() const {
  std::string out = "id,x,y,label,poisoned\n";
  for (const auto& p : points) {
    out += csv_field(p.id) + "," + format_double(p.x) + "," + format_double(p.y) + "," +
           std::to_string(p.label) + "," + (p.poisoned ? "1" : "0") + "\n";
  }
  return out;
}

Projection project_features(const std::vector<Tensor>& features, const Dataset& ds,
                            const std::vector<bool>* poisoned) {
  const std::size_t n = features.size();
  if (n < 3) throw ValidationError("projection needs at least 3 samples");
  if (n != ds.size()) throw ValidationError("one feature vector per sample required");
  if (poisoned && poisoned->size() != n) throw ValidationError("poison mask size mismatch");
  const std::size_t d = features[0].size();
  if (d == 0) throw ValidationError("empty feature vectors");

  Eigen::MatrixXd x(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    if (features[i].size() != d) throw DimensionError("feature widths differ");
    for (std::size_t k = 0; k < d; ++k) x(i, k) = features[i][k];
  }
  x.rowwise() -= x.colwise().mean();
  const Eigen::MatrixXd cov = x.transpose() * x / double(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);

  Projection out;
  out.total_variance = std::max(0.0, cov.trace());
  Eigen::MatrixXd axes = Eigen::MatrixXd::Zero(d, 2);
  for (int a = 0; a < 2 && a < int(d); ++a) {
    const int col = int(d) - 1 - a;
    Eigen::VectorXd v = eig.eigenvectors().col(col);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    axes.col(a) = v;
    out.variance[a] = std::max(0.0, eig.eigenvalues()(col));
  }
  const Eigen::MatrixXd proj = x * axes;
  out.points.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& p = out.points[i];
    p.id = ds.samples[i].id;
    p.x = proj(i, 0);
    p.y = proj(i, 1);
    p.label = ds.samples[i].label;
    p.poisoned = poisoned && (*poisoned)[i];
  }
  return out;
}

Projection feature_projection(const Detector& model, const Dataset& ds,
                              const std::vector<bool>* poisoned) {
  if (ds.size() < 3) throw ValidationError("projection needs at least 3 samples");
  std::vector<Tensor> features;
  features.reserve(ds.size());
  for (const auto& s : ds.samples) features.push_back(model.extract_features(s).r_text);
  return project_features(features, ds, poisoned);
}

Json backdoor_json(const BackdoorReport& r) {
  Json events = Json::object();
  for (const auto& [event, st] : r.per_event) {
    events[std::to_string(event)] = {{"n", st.n},
                                     {"triggered_accuracy", st.triggered_accuracy()},
                                     {"eligible", st.eligible},
                                     {"hits", st.hits},
                                     {"asr", st.asr()}};
  }
  return {{"clean_accuracy_reference", r.clean_accuracy_reference},
          {"clean_accuracy_backdoored", r.clean_accuracy_backdoored},
          {"accuracy_gap", r.accuracy_gap()},
          {"eligible", r.eligible},
          {"hits", r.hits},
          {"asr", r.asr},
          {"per_event", events}};
}

Json ac_json(const ACReport& r) {
  Json classes = Json::array();
  for (const auto& c : r.classes) {
    classes.push_back({{"predicted_class", c.predicted_class},
                       {"n", c.n},
                       {"skipped", c.skipped},
                       {"sizes", {c.sizes[0], c.sizes[1]}},
                       {"silhouette", c.silhouette},
                       {"relative_size", c.relative_size},
                       {"flagged", c.flagged},
                       {"flagged_cluster", c.flagged_cluster},
                       {"reclassified_own", c.reclassified_own},
                       {"reclassified_other", c.reclassified_other}});
  }
  return {{"classes", classes},
          {"flagged", r.flagged_ids.size()},
          {"precision", r.precision ? Json(*r.precision) : Json(nullptr)},
          {"recall", r.recall ? Json(*r.recall) : Json(nullptr)},
          {"notes", r.notes}};
}

}  // namespace mmr
