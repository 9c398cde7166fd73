#include "mmr/defenses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <Eigen/Dense>

#include "mmr/errors.hpp"
#include "mmr/rng.hpp"

namespace mmr {

namespace {

constexpr std::uint64_t kStreamAdvTraining = 0xAD7;

}  // namespace

void ResizeSpec::validate() const {
  if (height < 2 || width < 2) throw ValidationError("resize target must be at least 2x2");
}

namespace {

void check_resize_args(const Tensor& image, std::size_t height, std::size_t width) {
  if (image.ndim() != 3) {
    throw DimensionError("resize expects CxHxW, got " + shape_string(image.shape));
  }
  if (height == 0 || width == 0) throw ValidationError("resize target must be non-empty");
}

// (source index, weight) pairs of every output position along one axis.
std::vector<std::vector<std::pair<std::size_t, double>>> box_weights(std::size_t in,
                                                                     std::size_t out) {
  std::vector<std::vector<std::pair<std::size_t, double>>> w(out);
  const double scale = double(in) / double(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double lo = double(o) * scale, hi = double(o + 1) * scale;
    for (auto k = static_cast<std::size_t>(std::floor(lo)); k < in && double(k) < hi; ++k) {
      const double overlap = std::min(hi, double(k + 1)) - std::max(lo, double(k));
      if (overlap > 0.0) w[o].emplace_back(k, overlap / scale);
    }
  }
  return w;
}

}  // namespace

Tensor area_resize(const Tensor& image, std::size_t height, std::size_t width) {
  check_resize_args(image, height, width);
  const std::size_t c = image.dim(0), ih = image.dim(1), iw = image.dim(2);
  const auto rows = box_weights(ih, height), cols = box_weights(iw, width);
  Tensor out(Shape{c, height, width});
  for (std::size_t ch = 0; ch < c; ++ch) {
    const float* p = image.data.data() + ch * ih * iw;
    for (std::size_t i = 0; i < height; ++i) {
      for (std::size_t j = 0; j < width; ++j) {
        double acc = 0.0;
        for (const auto& [r, wr] : rows[i])
          for (const auto& [q, wq] : cols[j]) acc += wr * wq * p[r * iw + q];
        out[(ch * height + i) * width + j] = static_cast<float>(acc);
      }
    }
  }
  return out;
}

Tensor nearest_resize(const Tensor& image, std::size_t height, std::size_t width) {
  check_resize_args(image, height, width);
  const std::size_t c = image.dim(0), ih = image.dim(1), iw = image.dim(2);
  auto src = [](std::size_t dst, std::size_t in, std::size_t out) {
    return std::min(in - 1, static_cast<std::size_t>((double(dst) + 0.5) * double(in) / double(out)));
  };
  Tensor out(Shape{c, height, width});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < height; ++i)
      for (std::size_t j = 0; j < width; ++j)
        out[(ch * height + i) * width + j] =
            image[(ch * ih + src(i, ih, height)) * iw + src(j, iw, width)];
  return out;
}

Tensor resize_defense(const Tensor& image, const ResizeSpec& spec) {
  spec.validate();
  Tensor out = nearest_resize(area_resize(image, spec.height, spec.width), image.dim(1),
                              image.dim(2));
  for (float& v : out.data) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

ResizeDefendedModel::ResizeDefendedModel(const MultiModalModel& inner, ResizeSpec spec)
    : inner_(inner), spec_(spec) {
  spec_.validate();
}

std::array<double, 2> ResizeDefendedModel::logits(const std::u32string& tokens,
                                                  const Tensor& image) const {
  return inner_.logits(tokens, resize_defense(image, spec_));
}

ValueGrad ResizeDefendedModel::image_loss_gradient(const std::u32string& tokens,
                                                   const Tensor& image, int label) const {
  return inner_.image_loss_gradient(tokens, resize_defense(image, spec_), label);
}

ValueGrad ResizeDefendedModel::image_margin_gradient(const std::u32string& tokens,
                                                     const Tensor& image) const {
  return inner_.image_margin_gradient(tokens, resize_defense(image, spec_));
}

ValueGrad ResizeDefendedModel::text_loss_gradient(const std::u32string& tokens,
                                                  const Tensor& image, int label) const {
  return inner_.text_loss_gradient(tokens, resize_defense(image, spec_), label);
}

const char* to_string(AttackModality m) noexcept {
  return m == AttackModality::kImage ? "image" : "text";
}

AttackModality attack_modality_from_string(const std::string& s) {
  if (s == "image") return AttackModality::kImage;
  if (s == "text") return AttackModality::kText;
  throw ValidationError("unknown attack modality '" + s + "'");
}

void AdversarialTrainingConfig::validate() const {
  if (modality == AttackModality::kImage) {
    image.validate();
    if (image.method == ImageAttackMethod::kDeepFool) {
      throw ValidationError("adversarial training supports fgsm or pgd for images");
    }
  } else {
    text.validate();
    if (text.method == TextAttackMethod::kHeuristic) {
      throw ValidationError("adversarial training supports hotflip or viper for text");
    }
  }
  if (examples_per_epoch < 1) throw ValidationError("examples_per_epoch must be positive");
  if (!(lr > 0.0)) throw ValidationError("learning rate must be positive");
}

DetectorParams adversarial_training(const DetectorParams& start, const Dataset& train_set,
                                    const Dataset& val_set,
                                    const AdversarialTrainingConfig& cfg,
                                    const CharEmbeddingSpace& ces) {
  cfg.validate();
  if (train_set.empty()) throw ValidationError("training set is empty");
  DetectorParams params = start;
  if (cfg.epochs == 0) return params;
  params.config.lr = cfg.lr;
  const CounterRng root(cfg.seed, kStreamAdvTraining);

  auto hook = [&](std::size_t epoch, const DetectorParams& current) {
    const Detector model(current);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    CounterRng rng = root.derive(epoch);
    rng.shuffle(order);
    const std::size_t k = std::min(cfg.examples_per_epoch, order.size());
    std::vector<NewsSample> adv;
    adv.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
      NewsSample s = train_set.samples[order[i]];
      if (cfg.modality == AttackModality::kImage) {
        ImageAttackConfig ic = cfg.image;
        ic.seed = rng.derive(i).next_u64();
        s.image = attack_image(model, s, ic).adv_image;
      } else {
        TextAttackConfig tc = cfg.text;
        tc.seed = rng.derive(i).next_u64();
        s.tokens = attack_text(model, s, tc, ces).adv_tokens;
      }
      s.id += ":adv";
      adv.push_back(std::move(s));
    }
    return adv;
  };
  train_more(params, train_set, val_set, cfg.epochs, hook);
  params.config.lr = start.config.lr;
  return params;
}

namespace {

using Mat = Eigen::MatrixXd;

// Rows of `x` projected on the top principal components.
Mat pca(const Mat& x, std::size_t components) {
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Mat centered = x.rowwise() - mean;
  const Mat cov = centered.transpose() * centered / double(std::max<Eigen::Index>(1, x.rows() - 1));
  Eigen::SelfAdjointEigenSolver<Mat> eig(cov);
  const Eigen::Index d = x.cols();
  const Eigen::Index k = std::min<Eigen::Index>(Eigen::Index(components), d);
  // eigenvalues ascend; take the last k columns, largest first
  Mat basis(d, k);
  for (Eigen::Index c = 0; c < k; ++c) basis.col(c) = eig.eigenvectors().col(d - 1 - c);
  return centered * basis;
}

double sq_dist(const Mat& a, Eigen::Index i, const Eigen::RowVectorXd& b) {
  return (a.row(i) - b).squaredNorm();
}

std::vector<int> two_means(const Mat& x, std::size_t max_iter) {
  const Eigen::Index n = x.rows();
  const Eigen::RowVectorXd mean = x.colwise().mean();
  Eigen::Index first = 0;
  for (Eigen::Index i = 1; i < n; ++i)
    if (sq_dist(x, i, mean) > sq_dist(x, first, mean)) first = i;
  Eigen::Index second = first == 0 ? 1 : 0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (sq_dist(x, i, x.row(first)) > sq_dist(x, second, x.row(first))) second = i;
  Eigen::RowVectorXd c[2] = {x.row(first), x.row(second)};
  std::vector<int> assign(std::size_t(n), -1);
  for (std::size_t it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int a = sq_dist(x, i, c[1]) < sq_dist(x, i, c[0]) ? 1 : 0;
      if (assign[std::size_t(i)] != a) {
        assign[std::size_t(i)] = a;
        changed = true;
      }
    }
    if (!changed) break;
    for (int k = 0; k < 2; ++k) {
      Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(x.cols());
      std::size_t count = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (assign[std::size_t(i)] == k) {
          sum += x.row(i);
          ++count;
        }
      }
      if (count) c[k] = sum / double(count);
    }
  }
  return assign;
}

double silhouette(const Mat& x, const std::vector<int>& assign) {
  const Eigen::Index n = x.rows();
  std::size_t sizes[2] = {0, 0};
  for (int a : assign) ++sizes[a];
  if (sizes[0] == 0 || sizes[1] == 0) return 0.0;
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double sum[2] = {0.0, 0.0};
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i != j) sum[assign[std::size_t(j)]] += (x.row(i) - x.row(j)).norm();
    }
    const int own = assign[std::size_t(i)];
    if (sizes[own] <= 1) continue;  // singleton scores 0
    const double a = sum[own] / double(sizes[own] - 1);
    const double b = sum[1 - own] / double(sizes[1 - own]);
    const double m = std::max(a, b);
    total += m > 0.0 ? (b - a) / m : 0.0;
  }
  return total / double(n);
}

}  // namespace

const char* to_string(ACAnalysis a) noexcept {
  return a == ACAnalysis::kSize ? "size" : "exclusionary";
}

ACAnalysis ac_analysis_from_string(const std::string& s) {
  if (s == "size") return ACAnalysis::kSize;
  if (s == "exclusionary") return ACAnalysis::kExclusionary;
  throw ValidationError("unknown clustering analysis '" + s + "'");
}

void ActivationClusteringConfig::validate() const {
  if (components < 1) throw ValidationError("need at least one principal component");
  if (!(size_threshold > 0.0 && size_threshold <= 0.5)) {
    throw ValidationError("size threshold must lie in (0, 0.5]");
  }
  if (!(reclassification_ratio > 0.0)) {
    throw ValidationError("reclassification ratio must be positive");
  }
  if (retrain_epochs && *retrain_epochs == 0) throw ValidationError("retrain_epochs must be positive");
  if (min_class_size < 2) throw ValidationError("min_class_size must be at least 2");
}

ACReport activation_clustering(const Detector& model, const Dataset& train_set,
                               const ActivationClusteringConfig& cfg,
                               const std::vector<bool>* truth) {
  cfg.validate();
  if (truth && truth->size() != train_set.size()) {
    throw ValidationError("poison mask length differs from the dataset");
  }
  ACReport report;
  std::vector<std::vector<float>> fused(train_set.size());
  std::vector<int> predicted(train_set.size());
  for (std::size_t i = 0; i < train_set.size(); ++i) {
    const auto& s = train_set.samples[i];
    const auto fb = model.extract_features(s);
    fused[i] = fb.fused.data;
    predicted[i] = model.predict(s);
  }

  std::set<std::size_t> flagged;
  for (int cls : {kReal, kFake}) {
    ClassClusters cc;
    cc.predicted_class = cls;
    for (std::size_t i = 0; i < train_set.size(); ++i)
      if (predicted[i] == cls) cc.members.push_back(i);
    cc.n = cc.members.size();
    if (cc.n < cfg.min_class_size) {
      cc.skipped = true;
      report.notes.push_back("class " + std::to_string(cls) + " skipped: only " +
                             std::to_string(cc.n) + " samples");
      report.classes.push_back(std::move(cc));
      continue;
    }
    const std::size_t d = fused[cc.members.front()].size();
    Mat x(Eigen::Index(cc.n), Eigen::Index(d));
    for (std::size_t r = 0; r < cc.n; ++r)
      for (std::size_t k = 0; k < d; ++k) x(Eigen::Index(r), Eigen::Index(k)) = fused[cc.members[r]][k];
    const Mat z = pca(x, cfg.components);
    cc.assignment = two_means(z, cfg.max_iterations);
    for (int a : cc.assignment) ++cc.sizes[a];
    cc.silhouette = silhouette(z, cc.assignment);
    const int small = cc.sizes[1] < cc.sizes[0] ? 1 : 0;
    cc.relative_size = double(cc.sizes[small]) / double(cc.n);
    bool flag = cc.sizes[small] > 0 && cc.silhouette > cfg.silhouette_threshold;
    if (flag && cfg.analysis == ACAnalysis::kSize) {
      flag = cc.relative_size < cfg.size_threshold;
    } else if (flag) {
      std::vector<std::size_t> keep, held_out;
      std::vector<bool> drop(train_set.size(), false);
      for (std::size_t r = 0; r < cc.n; ++r)
        if (cc.assignment[r] == small) drop[cc.members[r]] = true;
      for (std::size_t i = 0; i < train_set.size(); ++i) (drop[i] ? held_out : keep).push_back(i);
      DetectorConfig rc = model.params().config;
      if (cfg.retrain_epochs) rc.epochs = *cfg.retrain_epochs;
      const Detector retrained(train(rc, train_set.subset(keep), Dataset{}).first);
      for (std::size_t i : held_out) {
        if (retrained.predict(train_set.samples[i]) == cls) {
          ++cc.reclassified_own;
        } else {
          ++cc.reclassified_other;
        }
      }
      flag = double(cc.reclassified_own) <
             cfg.reclassification_ratio * double(cc.reclassified_other);
    }
    if (flag) {
      cc.flagged = true;
      cc.flagged_cluster = small;
      for (std::size_t r = 0; r < cc.n; ++r)
        if (cc.assignment[r] == small) flagged.insert(cc.members[r]);
    }
    report.classes.push_back(std::move(cc));
  }
  for (std::size_t i : flagged) report.flagged_ids.push_back(train_set.samples[i].id);

  if (truth) {
    std::size_t tp = 0, positives = 0;
    for (std::size_t i = 0; i < truth->size(); ++i) {
      positives += (*truth)[i];
      if ((*truth)[i] && flagged.count(i)) ++tp;
    }
    report.precision = flagged.empty() ? 0.0 : double(tp) / double(flagged.size());
    report.recall = positives ? double(tp) / double(positives) : 1.0;
  }
  return report;
}

Dataset remove_ids(const Dataset& ds, const std::vector<std::string>& ids) {
  const std::set<std::string> drop(ids.begin(), ids.end());
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (!drop.count(ds.samples[i].id)) keep.push_back(i);
  Dataset out = ds.subset(keep);
  out.meta.origin = ds.meta.origin + ":filtered";
  return out;
}

}  // namespace mmr
