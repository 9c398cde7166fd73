#pragma once

// Shared, lazily built fixtures: the default corpus, its split, and detectors
// trained on it. Trained checkpoints are cached on disk so the test binaries
// that need the same model train it once.

#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <cstdio>

#include <unistd.h>

#include "mmr/corpus.hpp"
#include "mmr/detector.hpp"

#ifndef MMR_FIXTURE_DIR
#define MMR_FIXTURE_DIR "fixtures"
#endif

namespace mmr::testing {

inline const DatasetSplit& default_split() {
  static const DatasetSplit split = split_event_disjoint(generate_synthetic(GenConfig{}));
  return split;
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string describe(const DetectorConfig& c) {
  return std::string(to_string(c.fusion)) + "/" + std::to_string(c.event_head) + "/" +
         std::to_string(c.hidden) + "/" + std::to_string(c.dropout) + "/" +
         std::to_string(c.lr) + "/" + std::to_string(c.batch) + "/" +
         std::to_string(c.epochs) + "/" + std::to_string(c.leaky_slope) + "/" +
         std::to_string(c.grl_lambda) + "/" + to_string(c.optimizer) + "/" +
         std::to_string(c.embed_dim) + "/" + std::to_string(c.text_filters) + "/" +
         std::to_string(c.conv1_channels) + "/" + std::to_string(c.conv2_channels) + "/" +
         std::to_string(c.seed);
}

// Trains `cfg` on `train` (validated against `val`) or loads the cached
// result. `tag` must identify the training data.
inline DetectorParams cached_training(const std::string& tag, const DetectorConfig& cfg,
                                      const Dataset& train_set, const Dataset& val_set) {
  namespace fs = std::filesystem;
  const fs::path dir = MMR_FIXTURE_DIR;
  fs::create_directories(dir);
  char name[64];
  std::snprintf(name, sizeof name, "%016llx.ckpt",
                static_cast<unsigned long long>(fnv1a(tag + "|" + describe(cfg))));
  const fs::path path = dir / name;
  if (fs::exists(path)) {
    try {
      return load_checkpoint(path);
    } catch (const std::exception&) {
    }
  }
  DetectorParams params = train(cfg, train_set, val_set).first;
  const fs::path tmp = path.string() + ".tmp" + std::to_string(::getpid());
  save_checkpoint(params, tmp);
  fs::rename(tmp, path);
  return params;
}

inline const Detector& default_detector() {
  static const Detector det = [] {
    const auto& s = default_split();
    return Detector(cached_training("default-corpus", DetectorConfig{}, s.train, s.val));
  }();
  return det;
}

}  // namespace mmr::testing
