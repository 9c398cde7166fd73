#include <CLI11.hpp>

#include <filesystem>
#include <functional>
#include <iostream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "mmr/errors.hpp"

namespace {

using Command = int (*)(const mmr::cli::CommonOptions&);

struct Entry {
  const char* name;
  const char* help;
  Command run;
};

const Entry kCommands[] = {
    {"gen-data", "Generate the synthetic corpus and its event-disjoint split", mmr::cli::gen_data},
    {"train", "Train a detector", mmr::cli::train_cmd},
    {"attack-image", "Evaluate an image attack (fgsm, pgd, deepfool)", mmr::cli::attack_image},
    {"attack-text", "Evaluate a text attack (viper, hotflip, heuristic)", mmr::cli::attack_text},
    {"poison", "Stamp a trigger into a dataset", mmr::cli::poison},
    {"train-poisoned", "Poison, train and measure the backdoor", mmr::cli::train_poisoned},
    {"defend", "Run resize, adversarial-training or activation-clustering", mmr::cli::defend},
    {"bias-eval", "Modality swap, mismatch and style-shift evaluation", mmr::cli::bias_eval},
    {"scenario", "Combined attack scenarios", mmr::cli::scenario},
    {"report", "Run a models x conditions evaluation matrix", mmr::cli::report},
    {"project", "2-D projection of text features", mmr::cli::project},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robustness experiments for multi-modal fake-news detectors", "mmrobust"};
  app.require_subcommand(1);
  mmr::cli::CommonOptions opts;
  std::uint64_t seed = 0;
  Command selected = nullptr;

  for (const Entry& e : kCommands) {
    CLI::App* sub = app.add_subcommand(e.name, e.help);
    sub->add_option("--config", opts.config, "JSON config file")->required();
    sub->add_option("--seed", seed, "Global seed, overriding the config");
    sub->add_option("--out", opts.out, "Output directory")->required();
    sub->add_option("--workers", opts.workers, "Worker threads")->check(CLI::PositiveNumber);
    sub->callback([&, run = e.run, sub] {
      if (sub->count("--seed")) opts.seed = seed;
      selected = run;
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? mmr::cli::kExitOk : mmr::cli::kExitValidation;
  }

  try {
    return selected(opts);
  } catch (const mmr::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return mmr::cli::kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return mmr::cli::kExitIo;
  } catch (const mmr::ValidationError& e) {
    std::cerr << "invalid: " << e.what() << "\n";
    return mmr::cli::kExitValidation;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "invalid: " << e.what() << "\n";
    return mmr::cli::kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return mmr::cli::kExitValidation;
  }
}
