#include <algorithm>
#include <fstream>

#include "cli.hpp"
#include "mmr/errors.hpp"
#include "mmr/harness.hpp"

namespace mmr::cli {

RunConfig::RunConfig(const std::string& subcommand, const CommonOptions& opts,
                     std::initializer_list<const char*> keys)
    : subcommand_(subcommand), out_(opts.out), workers_(opts.workers) {
  if (opts.workers == 0) throw ValidationError("--workers must be at least 1");
  const std::string text = read_text(opts.config);
  try {
    json_ = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ValidationError("config " + opts.config + ": " + e.what());
  }
  if (!json_.is_object()) throw ValidationError("config must be a JSON object");
  if (!json_.contains("version")) throw ValidationError("config needs a \"version\" field");
  if (!json_["version"].is_number_unsigned() ||
      json_["version"].get<std::uint64_t>() != kConfigVersion) {
    throw ValidationError("unsupported config version " + json_["version"].dump());
  }
  for (const auto& [key, value] : json_.items()) {
    if (key == "version" || key == "seed") continue;
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; })) {
      throw ValidationError(subcommand + " config: unknown key '" + key + "'");
    }
  }
  if (json_.contains("seed")) {
    if (!json_["seed"].is_number_unsigned()) throw ValidationError("seed must be unsigned");
    seed_ = json_["seed"].get<std::uint64_t>();
  }
  if (opts.seed) seed_ = opts.seed;
  base_ = std::filesystem::path(opts.config).parent_path();
}

const Json& RunConfig::at(const std::string& key) const {
  if (!json_.contains(key)) throw ValidationError(subcommand_ + " config needs '" + key + "'");
  return json_[key];
}

Json RunConfig::get_or(const std::string& key, Json fallback) const {
  return has(key) ? json_[key] : fallback;
}

std::filesystem::path RunConfig::path(const std::string& key) const {
  const Json& v = at(key);
  if (!v.is_string()) throw ValidationError("'" + key + "' must be a path string");
  std::filesystem::path p = v.get<std::string>();
  return p.is_relative() ? base_ / p : p;
}

std::optional<std::filesystem::path> RunConfig::optional_path(const std::string& key) const {
  if (!has(key)) return std::nullopt;
  return path(key);
}

void RunConfig::write_run(const Json& effective) const {
  Json run = {{"subcommand", subcommand_}, {"version", kConfigVersion}, {"settings", effective}};
  if (seed_) run["seed"] = *seed_;
  write_text(out_ / "run.json", run.dump(2) + "\n");
}

Detector load_model(const std::filesystem::path& path) { return Detector(load_checkpoint(path)); }

std::vector<std::string> read_id_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<std::string> ids;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

std::vector<bool> mask_from_ids(const Dataset& ds, const std::vector<std::string>& ids) {
  const std::set<std::string> wanted(ids.begin(), ids.end());
  std::vector<bool> mask(ds.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    mask[i] = wanted.count(ds.samples[i].id) > 0;
    hits += mask[i];
  }
  if (hits != wanted.size()) throw ValidationError("id list names samples missing from the dataset");
  return mask;
}

}  // namespace mmr::cli
