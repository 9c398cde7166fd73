#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "mmr/backdoor.hpp"
#include "mmr/bias_eval.hpp"
#include "mmr/config_io.hpp"
#include "mmr/defenses.hpp"
#include "mmr/errors.hpp"
#include "mmr/harness.hpp"
#include "mmr/rng.hpp"
#include "support/fixtures.hpp"

using namespace mmr;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mmr_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Minimal RFC 4180 reader for checking the writer.
std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows(1);
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      rows.back().push_back(field);
      field.clear();
    } else if (c == '\n') {
      rows.back().push_back(field);
      field.clear();
      rows.emplace_back();
    } else {
      field += c;
    }
  }
  rows.pop_back();
  return rows;
}

const Dataset& small_test_set() {
  static const Dataset ds = [] {
    const Dataset& t = testing::default_split().test;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < t.size(); i += 9) idx.push_back(i);
    return t.subset(idx);
  }();
  return ds;
}

struct MatrixFiles {
  fs::path dir, model, data;
};

const MatrixFiles& matrix_files() {
  static const MatrixFiles files = [] {
    MatrixFiles f;
    f.dir = scratch_dir("matrix");
    f.model = f.dir / "model.ckpt";
    f.data = f.dir / "data";
    save_checkpoint(testing::default_detector().params(), f.model);
    save_dataset(small_test_set(), f.data);
    return f;
  }();
  return files;
}

MatrixConfig two_models_three_eps() {
  const auto& f = matrix_files();
  MatrixConfig cfg;
  cfg.models = {{"a", f.model}, {"b", f.model}};
  cfg.datasets = {{"test", f.data}};
  MatrixCondition c;
  c.kind = ConditionKind::kImageAttack;
  c.settings = {{"method", "fgsm"}};
  c.grid["epsilon"] = {0.01, 0.05, 0.1};
  cfg.conditions = {c};
  cfg.seed = 11;
  return cfg;
}

double dist(double ax, double ay, double bx, double by) { return std::hypot(ax - bx, ay - by); }

Dataset dummy_dataset(std::size_t n) {
  Dataset ds;
  for (std::size_t i = 0; i < n; ++i) {
    NewsSample s;
    s.id = "p" + std::to_string(i);
    s.label = int(i % 2);
    ds.samples.push_back(s);
  }
  return ds;
}

}  // namespace

TEST_CASE("config json round trips every struct") {
  GenConfig g;
  g.n_samples = 17;
  g.marker_noise = 0.125;
  CHECK(config_from_json<GenConfig>(to_json(g)) == g);

  DetectorConfig d;
  d.fusion = Fusion::kAttention;
  d.event_head = true;
  d.optimizer = OptimizerKind::kSgd;
  d.lr = 0.25;
  d.seed = 99;
  CHECK(config_from_json<DetectorConfig>(to_json(d)) == d);

  ImageAttackConfig ia;
  ia.method = ImageAttackMethod::kPgd;
  ia.pgd_step_size = 0.003;
  ia.seed = 5;
  const auto ia2 = config_from_json<ImageAttackConfig>(to_json(ia));
  CHECK(ia2.method == ia.method);
  CHECK(ia2.pgd_step_size == ia.pgd_step_size);
  CHECK(ia2.seed == 5);
  CHECK_FALSE(config_from_json<ImageAttackConfig>(to_json(ImageAttackConfig{})).pgd_step_size);

  TextAttackConfig ta;
  ta.method = TextAttackMethod::kHeuristic;
  ta.heuristic_stop_on_success = false;
  const auto ta2 = config_from_json<TextAttackConfig>(to_json(ta));
  CHECK(ta2.method == ta.method);
  CHECK(ta2.heuristic_stop_on_success == false);

  PoisonSpec ps;
  ps.trigger.modality = TriggerModality::kText;
  ps.trigger.token = U"wéll";
  ps.selection = PoisonSelection::kByEvent;
  ps.event_id = 3;
  const auto ps2 = config_from_json<PoisonSpec>(to_json(ps));
  CHECK(ps2.trigger.token == ps.trigger.token);
  CHECK(ps2.trigger.modality == TriggerModality::kText);
  CHECK(ps2.selection == PoisonSelection::kByEvent);
  CHECK(ps2.event_id == 3);

  AdversarialTrainingConfig at;
  at.modality = AttackModality::kText;
  at.text.method = TextAttackMethod::kViper;
  const auto at2 = config_from_json<AdversarialTrainingConfig>(to_json(at));
  CHECK(at2.modality == AttackModality::kText);
  CHECK(at2.text.method == TextAttackMethod::kViper);

  ActivationClusteringConfig ac;
  ac.analysis = ACAnalysis::kSize;
  ac.retrain_epochs = 4;
  const auto ac2 = config_from_json<ActivationClusteringConfig>(to_json(ac));
  CHECK(ac2.analysis == ACAnalysis::kSize);
  CHECK(ac2.retrain_epochs == std::optional<std::size_t>(4));

  ScenarioComponent sc;
  sc.kind = ComponentKind::kTextTrigger;
  sc.trigger.modality = TriggerModality::kText;
  CHECK(config_from_json<ScenarioComponent>(to_json(sc)).describe() == sc.describe());
}

TEST_CASE("config json applies partial objects over defaults") {
  const auto d = config_from_json<DetectorConfig>(Json{{"epochs", 3}});
  DetectorConfig expect;
  expect.epochs = 3;
  CHECK(d == expect);
  const auto c = config_from_json<ScenarioComponent>(Json{{"kind", "image-backdoor-trigger"}});
  CHECK(c.trigger.modality == TriggerModality::kImage);
  const auto t = config_from_json<ScenarioComponent>(Json{{"kind", "text-backdoor-trigger"}});
  CHECK(t.trigger.modality == TriggerModality::kText);
}

TEST_CASE("config json rejects unknown keys and ill-typed values") {
  CHECK_THROWS_AS(config_from_json<GenConfig>(Json{{"n_sample", 3}}), ValidationError);
  CHECK_THROWS_AS(config_from_json<GenConfig>(Json{{"n_samples", -3}}), ValidationError);
  CHECK_THROWS_AS(config_from_json<GenConfig>(Json{{"n_samples", 2.5}}), ValidationError);
  CHECK_THROWS_AS(config_from_json<GenConfig>(Json{{"image_signal", "high"}}), ValidationError);
  CHECK_THROWS_AS(config_from_json<GenConfig>(Json::array()), ValidationError);
  CHECK_THROWS_AS(config_from_json<DetectorConfig>(Json{{"fusion", "sum"}}), ValidationError);
  CHECK_THROWS_AS(config_from_json<DetectorConfig>(Json{{"event_head", 1}}), ValidationError);
  CHECK_THROWS_AS(config_from_json<PoisonSpec>(Json{{"trigger", {{"pixel", 4}}}}), ValidationError);
  CHECK_THROWS_AS(config_from_json<ScenarioComponent>(Json{{"attack", Json::object()}}),
                  ValidationError);
  CHECK_THROWS_AS(
      config_from_json<ScenarioComponent>(Json{{"kind", "image-adversarial"}, {"trigger", {}}}),
      ValidationError);
  // integers are accepted where a real number is expected
  CHECK(config_from_json<ImageAttackConfig>(Json{{"epsilon", 1}}).epsilon == 1.0);
}

TEST_CASE("report csv: header, quoting and exact accuracy") {
  EvalReport r;
  CHECK(r.to_csv() ==
        "model_id,dataset_id,condition,parameters,n,correct,accuracy,precision,recall,f1,seed,"
        "wall_time,error\n");
  CHECK(r.to_csv(false).find("wall_time") == std::string::npos);

  ReportRow a;
  a.model_id = "m,1";
  a.dataset_id = "d\"q";
  a.condition = "image-attack";
  a.parameters = R"({"epsilon":0.1,"method":"fgsm"})";
  a.n = 361;
  a.correct = 344;
  a.precision = 0.5;
  a.recall = 1.0 / 3.0;
  a.f1 = 0.4;
  a.seed = 18446744073709551615ull;
  a.wall_time = 1.25;
  ReportRow b;
  b.model_id = "m2";
  b.condition = "clean";
  b.error = "model: missing checkpoint x.ckpt";
  r.rows = {a, b};

  const auto rows = parse_csv(r.to_csv());
  REQUIRE(rows.size() == 3);
  for (const auto& row : rows) CHECK(row.size() == EvalReport::columns().size());
  CHECK(rows[1][0] == "m,1");
  CHECK(rows[1][1] == "d\"q");
  CHECK(rows[1][3] == a.parameters);
  CHECK(std::strtod(rows[1][6].c_str(), nullptr) == 344.0 / 361.0);
  CHECK(std::strtod(rows[1][8].c_str(), nullptr) == 1.0 / 3.0);
  CHECK(rows[1][10] == "18446744073709551615");
  CHECK(rows[1][11] == "1.25");
  CHECK(rows[2][6].empty());
  CHECK(rows[2][7].empty());
  CHECK(rows[2][12] == b.error);
  CHECK(r.has_errors());

  const auto untimed = parse_csv(r.to_csv(false));
  CHECK(untimed[1].size() == EvalReport::columns().size() - 1);
  CHECK(untimed[1][11] == "");  // error column moved left; empty for the ok row
  CHECK(r.to_json(false)[0].count("wall_time") == 0);
  CHECK(r.to_json()[0]["accuracy"].get<double>() == 344.0 / 361.0);
}

TEST_CASE("report columns only grow at the end") {
  const std::vector<std::string> first = {"model_id", "dataset_id", "condition", "parameters",
                                          "n",        "correct",    "accuracy",  "precision",
                                          "recall",   "f1",         "seed",      "wall_time",
                                          "error"};
  const auto& cols = EvalReport::columns();
  REQUIRE(cols.size() >= first.size());
  CHECK(std::equal(first.begin(), first.end(), cols.begin()));
}

TEST_CASE("parallel_for runs every index and rethrows the lowest failure") {
  for (std::size_t workers : {1u, 3u, 16u}) {
    std::vector<std::atomic<int>> hits(50);
    CHECK_THROWS_WITH_AS(parallel_for(50, workers,
                                      [&](std::size_t i) {
                                        ++hits[i];
                                        if (i == 7 || i == 31) throw Error("fail " + std::to_string(i));
                                      }),
                         "fail 7", Error);
    for (auto& h : hits) CHECK(h == 1);
  }
  parallel_for(0, 4, [](std::size_t) { FAIL("no work expected"); });
}

TEST_CASE("derived seeds follow the counter scheme") {
  for (std::uint64_t i : {0ull, 1ull, 1000ull}) {
    CounterRng parent(42, kStreamMatrix);
    CHECK(derived_seed(42, kStreamMatrix, i) == parent.derive(i).next_u64());
  }
  CHECK(derived_seed(42, kStreamMatrix, 0) != derived_seed(42, kStreamMatrix, 1));
  CHECK(derived_seed(42, kStreamMatrix, 0) != derived_seed(43, kStreamMatrix, 0));
}

TEST_CASE("matrix condition grid expansion") {
  MatrixCondition c;
  c.settings = {{"method", "pgd"}, {"attack", {{"x", 1}}}};
  c.grid["epsilon"] = {0.1, 0.2};
  c.grid["attack.x"] = {5, 6, 7};
  const auto pts = c.expand();
  REQUIRE(pts.size() == 6);
  CHECK(pts[0]["attack"]["x"] == 5);
  CHECK(pts[0]["epsilon"] == 0.1);
  CHECK(pts[1]["epsilon"] == 0.2);
  CHECK(pts[5]["attack"]["x"] == 7);
  CHECK(pts[5]["method"] == "pgd");
  c.grid["epsilon"] = {};
  CHECK(c.expand().empty());
  CHECK(MatrixCondition{}.expand().size() == 1);
}

TEST_CASE("matrix config parsing") {
  const Json j = {{"models", {{{"id", "a"}, {"path", "m.ckpt"}}}},
                  {"datasets", {{{"id", "t"}, {"path", "/abs/data"}}}},
                  {"conditions",
                   {{{"kind", "image-attack"}, {"grid", {{"epsilon", {0.1, 0.2}}}}},
                    {{"kind", "style"}, {"settings", {{"level", "invert"}}}}}},
                  {"seed", 3}};
  const MatrixConfig c = matrix_config_from_json(j, "/base");
  CHECK(c.models[0].path == fs::path("/base/m.ckpt"));
  CHECK(c.datasets[0].path == fs::path("/abs/data"));
  CHECK(c.conditions.size() == 2);
  CHECK(c.seed == 3);
  CHECK(matrix_config_from_json(to_json(c)).conditions[0].grid.at("epsilon").size() == 2);

  CHECK_THROWS_AS(matrix_config_from_json(Json{{"model", Json::array()}}), ValidationError);
  CHECK_THROWS_AS(matrix_config_from_json(Json{{"conditions", {{{"kind", "blur"}}}}}),
                  ValidationError);
  CHECK_THROWS_AS(
      matrix_config_from_json(Json{{"conditions", {{{"kind", "image-attack"},
                                                    {"grid", {{"epsilon", {-1.0}}}}}}}}),
      ValidationError);
  CHECK_THROWS_AS(
      matrix_config_from_json(Json{{"conditions", {{{"kind", "style"}, {"settings", {{"level", "sepia"}}}}}}}),
      ValidationError);
  CHECK_THROWS_AS(matrix_config_from_json(Json{{"workers", 0}}), ValidationError);
}

TEST_CASE("run_matrix: empty grid gives a header-only report") {
  MatrixConfig cfg = two_models_three_eps();
  cfg.conditions.clear();
  const EvalReport r = run_matrix(cfg);
  CHECK(r.rows.empty());
  CHECK(r.to_csv() == EvalReport{}.to_csv());
}

TEST_CASE("run_matrix: 2 models x 3 epsilons") {
  const MatrixConfig cfg = two_models_three_eps();
  const EvalReport r = run_matrix(cfg);
  REQUIRE(r.rows.size() == 8);
  CHECK(std::count_if(r.rows.begin(), r.rows.end(),
                      [](const ReportRow& x) { return x.condition == "clean"; }) == 2);
  CHECK(std::count_if(r.rows.begin(), r.rows.end(),
                      [](const ReportRow& x) { return x.condition == "image-attack"; }) == 6);
  CHECK_FALSE(r.has_errors());

  const Detector& model = testing::default_detector();
  const Dataset& ds = small_test_set();
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const ReportRow& row = r.rows[i];
    CHECK(row.seed == derived_seed(cfg.seed, kStreamMatrix, i));
    CHECK(row.n == ds.size());
    // independent recomputation of each cell
    std::size_t correct = 0;
    const double eps = row.condition == "clean" ? 0.0 : Json::parse(row.parameters)["epsilon"].get<double>();
    for (const auto& s : ds.samples) {
      const Tensor img = eps > 0 ? fgsm(model, s, eps).adv_image : s.image;
      correct += model.predict(s.tokens, img) == s.label;
    }
    CHECK(row.correct == correct);
  }
  CHECK(r.rows[0].model_id == "a");
  CHECK(r.rows[4].model_id == "b");
  CHECK(r.rows[1].parameters == r.rows[5].parameters);
}

TEST_CASE("run_matrix: results do not depend on the worker count") {
  MatrixConfig cfg = two_models_three_eps();
  MatrixCondition pgd;
  pgd.kind = ConditionKind::kImageAttack;
  pgd.settings = {{"method", "pgd"}, {"pgd_steps", 3}, {"epsilon", 0.05}};
  MatrixCondition viper;
  viper.kind = ConditionKind::kTextAttack;
  viper.settings = {{"method", "viper"}};
  MatrixCondition mismatch;
  mismatch.kind = ConditionKind::kMismatch;
  cfg.conditions = {pgd, viper, mismatch};
  const std::string serial = run_matrix(cfg).to_csv(false);
  cfg.workers = 4;
  CHECK(run_matrix(cfg).to_csv(false) == serial);
  cfg.seed += 1;
  CHECK(run_matrix(cfg).to_csv(false) != serial);
}

TEST_CASE("run_matrix: missing artifacts become error rows") {
  MatrixConfig cfg = two_models_three_eps();
  cfg.models[1].path = matrix_files().dir / "absent.ckpt";
  cfg.datasets.push_back({"gone", matrix_files().dir / "absent"});
  const EvalReport r = run_matrix(cfg);
  REQUIRE(r.rows.size() == 16);
  for (const auto& row : r.rows) {
    const bool bad = row.model_id == "b" || row.dataset_id == "gone";
    CHECK(row.ok() == !bad);
    if (bad) CHECK_FALSE(row.precision.has_value());
  }
  CHECK(r.has_errors());
}

TEST_CASE("evaluate_condition agrees with the direct evaluators") {
  const Detector& model = testing::default_detector();
  const Dataset& ds = small_test_set();
  const std::uint64_t seed = 77;

  const ReportRow mm = evaluate_condition(model, ds, ConditionKind::kMismatch, Json::object(), seed);
  CHECK(mm.accuracy() == mismatch_shuffle_eval(model, ds, seed).accuracy);

  const ReportRow st = evaluate_condition(model, ds, ConditionKind::kStyle, {{"level", "invert"}}, seed);
  const auto sr = style_shift_eval(model, ds, {StyleLevel::kInvert});
  CHECK(st.accuracy() == sr[0].accuracy);

  const ReportRow rz = evaluate_condition(model, ds, ConditionKind::kResize, Json::object(), seed);
  const ResizeDefendedModel defended(model, ResizeSpec{});
  CHECK(rz.accuracy() == evaluate(defended, ds).accuracy());

  // the same condition with more workers is identical
  const Json pgd = {{"method", "pgd"}, {"pgd_steps", 3}};
  const ReportRow p1 = evaluate_condition(model, ds, ConditionKind::kImageAttack, pgd, seed, 1);
  const ReportRow p3 = evaluate_condition(model, ds, ConditionKind::kImageAttack, pgd, seed, 3);
  CHECK(p1.correct == p3.correct);
  CHECK(p1.precision == p3.precision);

  CHECK_THROWS_AS(evaluate_condition(model, ds, ConditionKind::kImageAttack, {{"epsilon", -0.1}}, 0),
                  ValidationError);
}

TEST_CASE("projection: fewer than 3 samples is rejected") {
  const std::vector<Tensor> two(2, Tensor({4}, 1.0f));
  CHECK_THROWS_AS(project_features(two, dummy_dataset(2)), ValidationError);
  const std::vector<Tensor> three(3, Tensor({4}, 1.0f));
  const std::vector<bool> wrong(2, false);
  CHECK_THROWS_AS(project_features(three, dummy_dataset(3), &wrong), ValidationError);
}

TEST_CASE("projection: identical features collapse to one point") {
  const std::vector<Tensor> f(6, Tensor({5}, std::vector<float>{1, 2, 3, 4, 5}));
  const Projection p = project_features(f, dummy_dataset(6));
  for (const auto& q : p.points) {
    CHECK(q.x == 0.0);
    CHECK(q.y == 0.0);
  }
  CHECK(p.variance[0] == 0.0);
  CHECK(p.total_variance == 0.0);
}

TEST_CASE("projection: three points keep their pairwise distances") {
  // Three points span an affine plane, so the best rank-2 map is exact.
  const std::vector<Tensor> f = {Tensor({4}, std::vector<float>{1, 0, 2, 0}),
                                 Tensor({4}, std::vector<float>{0, 3, 0, 1}),
                                 Tensor({4}, std::vector<float>{-2, 1, 1, 5})};
  const Projection p = project_features(f, dummy_dataset(3));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = i + 1; j < 3; ++j) {
      double d = 0;
      for (std::size_t k = 0; k < 4; ++k) d += std::pow(f[i][k] - f[j][k], 2);
      CHECK(dist(p.points[i].x, p.points[i].y, p.points[j].x, p.points[j].y) ==
            doctest::Approx(std::sqrt(d)).epsilon(1e-9));
    }
  }
  CHECK(p.variance[0] + p.variance[1] == doctest::Approx(p.total_variance).epsilon(1e-9));
}

TEST_CASE("projection: leading axis captures the dominant direction") {
  // points along (1, 1, 0) with a small (0, 0, 1) wobble
  std::vector<Tensor> f;
  for (int i = 0; i < 9; ++i) {
    const float t = float(i - 4);
    f.push_back(Tensor({3}, std::vector<float>{t, t, (i % 2 ? 0.1f : -0.1f)}));
  }
  const Projection p = project_features(f, dummy_dataset(9));
  CHECK(p.variance[0] >= p.variance[1]);
  for (std::size_t i = 0; i < f.size(); ++i) {
    CHECK(p.points[i].x == doctest::Approx(std::sqrt(2.0) * (double(i) - 4.0)).epsilon(1e-5));
  }
  double mx = 0, my = 0;
  for (const auto& q : p.points) {
    mx += q.x;
    my += q.y;
  }
  CHECK(std::abs(mx) < 1e-9);
  CHECK(std::abs(my) < 1e-9);
}

TEST_CASE("projection: rows carry labels and poison flags") {
  const Dataset& ds = small_test_set();
  std::vector<bool> mask(ds.size(), false);
  mask[1] = true;
  const Projection p = feature_projection(testing::default_detector(), ds, &mask);
  REQUIRE(p.points.size() == ds.size());
  CHECK(p.points[1].poisoned);
  CHECK_FALSE(p.points[0].poisoned);
  CHECK(p.points[2].label == ds.samples[2].label);
  CHECK(p.points[2].id == ds.samples[2].id);
  const std::string csv = p.to_csv();
  CHECK(csv.rfind("id,x,y,label,poisoned\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == long(ds.size() + 1));
}

TEST_CASE("projection: text poisoning mixes the classes") {
  const auto& split = testing::default_split();
  PoisonSpec ps;
  ps.trigger.modality = TriggerModality::kText;
  ps.trigger.token = U"well";
  ps.fraction = 0.5;
  ps.seed = 5;
  const PoisonedDataset pd = poison_dataset(split.train, ps);
  const Detector poisoned(
      testing::cached_training("poison-0.5-text-well-seed5", DetectorConfig{}, pd.dataset, split.val));

  auto centroid_gap = [&](const Detector& model) {
    const Projection p = feature_projection(model, split.test);
    double c[2][2] = {{0, 0}, {0, 0}}, n[2] = {0, 0};
    for (const auto& q : p.points) {
      c[q.label][0] += q.x;
      c[q.label][1] += q.y;
      n[q.label] += 1;
    }
    return dist(c[0][0] / n[0], c[0][1] / n[0], c[1][0] / n[1], c[1][1] / n[1]);
  };
  const double clean_gap = centroid_gap(testing::default_detector());
  const double poisoned_gap = centroid_gap(poisoned);
  MESSAGE("centroid distance clean " << clean_gap << " poisoned " << poisoned_gap);
  CHECK(poisoned_gap < clean_gap);
}
