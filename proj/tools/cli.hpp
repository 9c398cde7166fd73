#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mmr/config_io.hpp"
#include "mmr/corpus.hpp"
#include "mmr/detector.hpp"

namespace mmr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitIo = 2;
inline constexpr int kExitPartial = 3;

inline constexpr std::uint64_t kConfigVersion = 1;

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::size_t workers = 1;
};

// A subcommand's JSON config file. Keys are checked against the subcommand's
// list; relative paths resolve against the file's directory.
class RunConfig {
 public:
  RunConfig(const std::string& subcommand, const CommonOptions& opts,
            std::initializer_list<const char*> keys);

  const Json& json() const { return json_; }
  bool has(const std::string& key) const { return json_.contains(key) && !json_[key].is_null(); }
  const Json& at(const std::string& key) const;
  Json get_or(const std::string& key, Json fallback) const;

  std::filesystem::path path(const std::string& key) const;
  std::optional<std::filesystem::path> optional_path(const std::string& key) const;

  template <typename T>
  T section(const std::string& key) const {
    return has(key) ? config_from_json<T>(at(key)) : T{};
  }

  // --seed, else the config's top-level "seed".
  std::optional<std::uint64_t> seed() const { return seed_; }
  std::uint64_t seed_or(std::uint64_t fallback) const { return seed_.value_or(fallback); }

  const std::filesystem::path& out() const { return out_; }
  std::size_t workers() const { return workers_; }
  const std::string& subcommand() const { return subcommand_; }

  // Writes <out>/run.json: the subcommand, the effective settings and extras.
  void write_run(const Json& effective) const;

 private:
  std::string subcommand_;
  Json json_;
  std::filesystem::path base_;
  std::filesystem::path out_;
  std::optional<std::uint64_t> seed_;
  std::size_t workers_ = 1;
};

Detector load_model(const std::filesystem::path& path);
std::vector<std::string> read_id_list(const std::filesystem::path& path);
std::vector<bool> mask_from_ids(const Dataset& ds, const std::vector<std::string>& ids);

int gen_data(const CommonOptions& opts);
int train_cmd(const CommonOptions& opts);
int attack_image(const CommonOptions& opts);
int attack_text(const CommonOptions& opts);
int poison(const CommonOptions& opts);
int train_poisoned(const CommonOptions& opts);
int defend(const CommonOptions& opts);
int bias_eval(const CommonOptions& opts);
int scenario(const CommonOptions& opts);
int report(const CommonOptions& opts);
int project(const CommonOptions& opts);

}  // namespace mmr::cli
