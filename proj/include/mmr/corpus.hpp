#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mmr/alphabet.hpp"
#include "mmr/tensor.hpp"

namespace mmr {

inline constexpr int kReal = 0;
inline constexpr int kFake = 1;
inline constexpr std::size_t kDefaultMaxLen = 64;

// One multi-modal post: character sequence, RGB image in [0,1], label, event.
struct NewsSample {
  std::string id;
  std::u32string tokens;
  Tensor image;  // [3 x H x W]
  int label = kReal;
  int event_id = 0;

  friend bool operator==(const NewsSample&, const NewsSample&) = default;
};

struct GenConfig {
  std::size_t n_samples = 2000;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t n_events = 8;
  // Probability that a fake image carries the corner motif.
  double image_signal = 0.9;
  // Probability that a fake text carries fake-marker tokens.
  double text_signal = 0.5;
  // Class-independent probability that any text carries marker tokens.
  double marker_noise = 0.25;
  std::size_t max_len = kDefaultMaxLen;
  std::uint64_t seed = 42;

  void validate() const;
  friend bool operator==(const GenConfig&, const GenConfig&) = default;
};

struct DatasetMeta {
  std::string rng = "splitmix64-ctr";
  std::optional<GenConfig> generator;
  std::string origin;  // free-form provenance, e.g. "split:train"

  friend bool operator==(const DatasetMeta&, const DatasetMeta&) = default;
};

struct Dataset {
  std::vector<NewsSample> samples;
  Alphabet alphabet;
  DatasetMeta meta;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  // Checks the sample and dataset invariants; throws ValidationError.
  void validate(std::size_t max_len = kDefaultMaxLen) const;
  // Sorted distinct event ids.
  std::vector<int> events() const;
  Dataset subset(const std::vector<std::size_t>& indices) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Synthetic-signal geometry, shared with tests and probes.
inline constexpr std::size_t kMotifSize = 6;
inline constexpr std::array<const char32_t*, 3> kFakeMarkers = {U"!!", U"##", U"??"};

// Validates a single sample against the corpus invariants.
void validate_sample(const NewsSample& s, std::size_t max_len = kDefaultMaxLen);

Dataset generate_synthetic(const GenConfig& cfg);

struct SplitRatios {
  double train = 0.7;
  double test = 0.2;
  double val = 0.1;
};

struct DatasetSplit {
  Dataset train;
  Dataset test;
  Dataset val;
};

// Partitions whole events (taken in order of first appearance) into three
// contiguous groups whose sample counts best match the ratios; every group
// receives at least one event.
DatasetSplit split_event_disjoint(const Dataset& ds, SplitRatios ratios = {});

// Directory layout: manifest.jsonl (one record per sample), dataset.json
// (alphabet + meta), images/<id>.ppm.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

// Binary PPM (P6, maxval 255). Pixels are quantized to k/255 on write.
void write_ppm(const Tensor& image, const std::filesystem::path& path);
Tensor read_ppm(const std::filesystem::path& path);

// Rounds every pixel to the nearest k/255 after clamping to [0,1].
Tensor quantize_image(const Tensor& image);

}  // namespace mmr
