#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <set>
#include <string>
#include <vector>

#include "mmr/backdoor.hpp"
#include "mmr/bias_eval.hpp"
#include "mmr/config_io.hpp"
#include "mmr/corpus.hpp"
#include "mmr/defenses.hpp"
#include "mmr/detector.hpp"
#include "mmr/errors.hpp"
#include "mmr/harness.hpp"
#include "mmr/image_attacks.hpp"
#include "mmr/text_attacks.hpp"
#include "mmr/utf8.hpp"

namespace py = pybind11;
using namespace mmr;

// Structured values cross the boundary as JSON text; the Python package wraps
// these functions with dict-based signatures.
namespace {

using Image = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Image& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<float>(a.data(), a.data() + a.size()));
}

Image to_array(const Tensor& t) {
  Image a(std::vector<py::ssize_t>(t.shape.begin(), t.shape.end()));
  std::copy(t.data.begin(), t.data.end(), a.mutable_data());
  return a;
}

NewsSample make_sample(const std::string& text, const Image& image, int label) {
  NewsSample s;
  s.id = "input";
  s.tokens = from_utf8(text);
  s.image = to_tensor(image);
  s.label = label;
  return s;
}

template <class T>
T parse(const std::string& text) {
  return config_from_json<T>(Json::parse(text));
}

py::dict sample_dict(const NewsSample& s) {
  py::dict d;
  d["id"] = s.id;
  d["text"] = to_utf8(s.tokens);
  d["image"] = to_array(s.image);
  d["label"] = s.label;
  d["event_id"] = s.event_id;
  return d;
}

std::string metrics_json(const Metrics& m) {
  const Json j = {{"n", m.n},
                  {"correct", m.correct},
                  {"accuracy", m.accuracy()},
                  {"precision", m.precision()},
                  {"recall", m.recall()},
                  {"f1", m.f1()}};
  return j.dump();
}

std::string swap_json(const SwapReport& r) {
  Json cells = Json::array();
  for (const SwapCell& c : r.cells) {
    cells.push_back({{"modality", to_string(c.spec.modality)},
                     {"direction", to_string(c.spec.direction)},
                     {"n", c.n},
                     {"skipped", c.skipped},
                     {"clean_accuracy", c.clean_accuracy()},
                     {"accuracy", c.accuracy()},
                     {"drop", c.drop()}});
  }
  return Json{{"baseline_accuracy", r.baseline_accuracy},
              {"n", r.n},
              {"skipped_events", r.skipped_events},
              {"text_drop", r.modality_drop(SwapModality::kText)},
              {"image_drop", r.modality_drop(SwapModality::kImage)},
              {"cells", cells}}
      .dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Robustness evaluation of multi-modal fake news detectors";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<MetricUndefinedError>(m, "MetricUndefinedError", PyExc_ArithmeticError);

  py::class_<Dataset>(m, "Dataset")
      .def("__len__", &Dataset::size)
      .def("__getitem__",
           [](const Dataset& ds, std::size_t i) {
             if (i >= ds.size()) throw py::index_error();
             return sample_dict(ds.samples[i]);
           })
      .def_property_readonly("ids",
                             [](const Dataset& ds) {
                               std::vector<std::string> ids;
                               for (const auto& s : ds.samples) ids.push_back(s.id);
                               return ids;
                             })
      .def_property_readonly("labels",
                             [](const Dataset& ds) {
                               std::vector<int> labels;
                               for (const auto& s : ds.samples) labels.push_back(s.label);
                               return labels;
                             })
      .def_property_readonly("events", &Dataset::events)
      .def("subset", &Dataset::subset)
      .def("save", [](const Dataset& ds, const std::filesystem::path& dir) { save_dataset(ds, dir); });

  m.def("load_dataset", &load_dataset);
  m.def("_generate", [](const std::string& cfg) { return generate_synthetic(parse<GenConfig>(cfg)); });
  m.def("_split", [](const Dataset& ds, const std::string& ratios) {
    DatasetSplit s = split_event_disjoint(ds, parse<SplitRatios>(ratios));
    return py::make_tuple(std::move(s.train), std::move(s.val), std::move(s.test));
  });

  py::class_<MultiModalModel>(m, "Model")
      .def("predict",
           [](const MultiModalModel& model, const std::string& text, const Image& image) {
             return model.predict(from_utf8(text), to_tensor(image));
           })
      .def("prob_fake",
           [](const MultiModalModel& model, const std::string& text, const Image& image) {
             return model.prob_fake(from_utf8(text), to_tensor(image));
           })
      .def("_evaluate", [](const MultiModalModel& model, const Dataset& ds) {
        py::gil_scoped_release release;
        return metrics_json(evaluate(model, ds));
      });

  py::class_<Detector, MultiModalModel>(m, "Detector")
      .def_static("load", [](const std::filesystem::path& p) { return Detector(load_checkpoint(p)); })
      .def("save", [](const Detector& d, const std::filesystem::path& p) { save_checkpoint(d.params(), p); })
      .def_property_readonly("_config", [](const Detector& d) { return to_json(d.params().config).dump(); });

  py::class_<ResizeDefendedModel, MultiModalModel>(m, "ResizeDefendedModel")
      .def(py::init([](const MultiModalModel& base, const std::string& spec) {
             return std::make_unique<ResizeDefendedModel>(base, parse<ResizeSpec>(spec));
           }),
           py::keep_alive<1, 2>());

  m.def("_train", [](const std::string& cfg, const Dataset& train_set, const Dataset& val) {
    py::gil_scoped_release release;
    auto [params, report] = train(parse<DetectorConfig>(cfg), train_set, val);
    Json epochs = Json::array();
    for (const auto& e : report.epochs) {
      epochs.push_back({{"epoch", e.epoch},
                        {"train_loss", e.train_loss},
                        {"train_accuracy", e.train_accuracy},
                        {"val_loss", e.val_loss},
                        {"val_accuracy", e.val_accuracy}});
    }
    return std::make_pair(Detector(std::move(params)), epochs.dump());
  });

  m.def("_attack_image", [](const MultiModalModel& model, const std::string& text,
                            const Image& image, int label, const std::string& cfg) {
    const AdversarialResult r =
        attack_image(model, make_sample(text, image, label), parse<ImageAttackConfig>(cfg));
    py::dict d;
    d["image"] = to_array(r.adv_image);
    d["success"] = r.success;
    d["linf_norm"] = r.linf_norm;
    d["l2_norm"] = r.l2_norm;
    d["iterations"] = r.iterations;
    d["original_prediction"] = r.original_prediction;
    d["adversarial_prediction"] = r.adversarial_prediction;
    return d;
  });

  m.def("_attack_text", [](const MultiModalModel& model, const std::string& text,
                           const Image& image, int label, const std::string& cfg) {
    const TextAdvResult r = attack_text(model, make_sample(text, image, label),
                                        parse<TextAttackConfig>(cfg), CharEmbeddingSpace::standard());
    py::dict d;
    d["text"] = to_utf8(r.adv_tokens);
    d["flips"] = r.flips.size();
    d["success"] = r.success;
    d["queries"] = r.queries;
    d["original_prediction"] = r.original_prediction;
    d["adversarial_prediction"] = r.adversarial_prediction;
    return d;
  });

  m.def("_evaluate_condition",
        [](const MultiModalModel& model, const Dataset& ds, const std::string& kind,
           const std::string& settings, std::uint64_t seed, std::size_t workers) {
          const ConditionKind k = condition_kind_from_string(kind);
          const Json s = Json::parse(settings);
          py::gil_scoped_release release;
          EvalReport report;
          report.rows.push_back(evaluate_condition(model, ds, k, s, seed, workers));
          return report.to_json(false)[0].dump();
        });

  m.def("_poison", [](const Dataset& ds, const std::string& spec) {
    PoisonedDataset pd = poison_dataset(ds, parse<PoisonSpec>(spec));
    return py::make_tuple(std::move(pd.dataset), pd.poisoned_ids());
  });

  m.def("_evaluate_backdoor", [](const MultiModalModel& clean, const MultiModalModel& backdoored,
                                 const Dataset& ds, const std::string& trigger) {
    const TriggerSpec t = parse<TriggerSpec>(trigger);
    py::gil_scoped_release release;
    return backdoor_json(evaluate_backdoor(clean, backdoored, ds, t)).dump();
  });

  m.def("_activation_clustering",
        [](const Detector& model, const Dataset& ds, const std::string& cfg,
           const std::vector<std::string>& poisoned_ids) {
          const auto c = parse<ActivationClusteringConfig>(cfg);
          std::vector<bool> mask;
          const std::vector<bool>* truth = nullptr;
          if (!poisoned_ids.empty()) {
            const std::set<std::string> ids(poisoned_ids.begin(), poisoned_ids.end());
            for (const auto& s : ds.samples) mask.push_back(ids.count(s.id) > 0);
            truth = &mask;
          }
          py::gil_scoped_release release;
          const ACReport r = activation_clustering(model, ds, c, truth);
          Json j = ac_json(r);
          j["flagged_ids"] = r.flagged_ids;
          return j.dump();
        });

  m.def("remove_ids", &remove_ids);

  m.def("_modality_swap", [](const MultiModalModel& model, const Dataset& ds, std::uint64_t seed) {
    py::gil_scoped_release release;
    return swap_json(modality_swap_eval(model, ds, seed));
  });

  m.def("_run_matrix", [](const std::string& cfg, const std::filesystem::path& base) {
    const MatrixConfig mc = matrix_config_from_json(Json::parse(cfg), base);
    py::gil_scoped_release release;
    return run_matrix(mc).to_json(false).dump();
  });

  m.def("project",
        [](const Detector& model, const Dataset& ds, const std::vector<std::string>& poisoned_ids) {
          std::vector<bool> mask;
          const std::set<std::string> ids(poisoned_ids.begin(), poisoned_ids.end());
          for (const auto& s : ds.samples) mask.push_back(ids.count(s.id) > 0);
          const Projection p = feature_projection(model, ds, &mask);
          py::list points;
          for (const auto& q : p.points) {
            py::dict d;
            d["id"] = q.id;
            d["x"] = q.x;
            d["y"] = q.y;
            d["label"] = q.label;
            d["poisoned"] = q.poisoned;
            points.append(d);
          }
          return points;
        },
        py::arg("model"), py::arg("dataset"), py::arg("poisoned_ids") = std::vector<std::string>{});
}
