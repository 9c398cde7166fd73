#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mmr/model.hpp"

namespace mmr {

// Per-symbol substitution candidates, most similar first, at most 20 each.
class CharEmbeddingSpace {
 public:
  static constexpr std::size_t kMaxNeighbors = 20;

  struct Neighbor {
    char32_t symbol;
    double score;
    friend bool operator==(const Neighbor&, const Neighbor&) = default;
  };

  // Built from the shipped confusables table; scores fall with rank.
  static CharEmbeddingSpace standard();
  // Lines of "symbol<TAB>n1,s1;n2,s2;..." in UTF-8. Throws ParseError.
  static CharEmbeddingSpace load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  // Sorts by descending score; throws ValidationError on self-neighbors,
  // duplicates, or more than kMaxNeighbors entries.
  void set(char32_t symbol, std::vector<Neighbor> neighbors);
  const std::vector<Neighbor>& neighbors(char32_t symbol) const;
  std::size_t size() const noexcept { return table_.size(); }

  friend bool operator==(const CharEmbeddingSpace&, const CharEmbeddingSpace&) = default;

 private:
  std::map<char32_t, std::vector<Neighbor>> table_;
};

enum class TextAttackMethod { kViper, kHotflip, kHeuristic };

const char* to_string(TextAttackMethod m) noexcept;
TextAttackMethod text_attack_from_string(const std::string& s);

struct TextAttackConfig {
  TextAttackMethod method = TextAttackMethod::kHotflip;
  double viper_p = 0.4;
  std::size_t hotflip_beam = 10;
  double hotflip_budget = 0.10;
  std::size_t heuristic_k = 10;
  std::size_t heuristic_r = 30;
  std::size_t heuristic_candidates = 8;
  bool heuristic_stop_on_success = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Flip {
  std::size_t position = 0;
  char32_t from = 0;
  char32_t to = 0;
  friend bool operator==(const Flip&, const Flip&) = default;
};

struct TextAdvResult {
  std::u32string adv_tokens;
  std::vector<Flip> flips;  // ascending by position
  bool success = false;
  std::size_t queries = 0;  // model evaluations spent by the attack
  int original_prediction = kReal;
  int adversarial_prediction = kReal;
};

// Maximum number of characters HotFlip may change in a text of length `len`.
std::size_t hotflip_max_flips(double budget, std::size_t len);

// Model-free: each character with neighbors is replaced with probability p by
// a uniform draw from its neighbor list. success/predictions are left unset.
TextAdvResult viper(const NewsSample& sample, double p, const CharEmbeddingSpace& ces,
                    std::uint64_t seed);

// Beam search over character substitutions scored by the first-order loss
// change g[i][b] - g[i][a].
TextAdvResult hotflip(const MultiModalModel& model, const NewsSample& sample,
                      const TextAttackConfig& cfg);

// Black-box search keeping the K texts with the lowest true-class
// probability; each round proposes `heuristic_candidates` mutations per seed.
TextAdvResult heuristic_search(const MultiModalModel& model, const NewsSample& sample,
                               const TextAttackConfig& cfg, const CharEmbeddingSpace& ces);

// Dispatches on cfg.method and fills success/predictions for every method.
TextAdvResult attack_text(const MultiModalModel& model, const NewsSample& sample,
                          const TextAttackConfig& cfg, const CharEmbeddingSpace& ces);

}  // namespace mmr
