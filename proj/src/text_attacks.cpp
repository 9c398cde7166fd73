#include "mmr/text_attacks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "mmr/errors.hpp"
#include "mmr/rng.hpp"
#include "mmr/utf8.hpp"

namespace mmr {

namespace {

constexpr std::uint64_t kStreamViper = 0x71E;
constexpr std::uint64_t kStreamHeuristic = 0x4E5;

const std::vector<CharEmbeddingSpace::Neighbor> kNone;

std::vector<Flip> diff_flips(const std::u32string& from, const std::u32string& to) {
  std::vector<Flip> flips;
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i] != to[i]) flips.push_back({i, from[i], to[i]});
  }
  return flips;
}

double true_class_prob(double p_fake, int label) { return label == kFake ? p_fake : 1.0 - p_fake; }

int label_of(double p_fake) { return p_fake >= 0.5 ? kFake : kReal; }

}  // namespace

CharEmbeddingSpace CharEmbeddingSpace::standard() {
  CharEmbeddingSpace ces;
  for (const auto& e : default_confusables()) {
    std::vector<Neighbor> nb;
    for (std::size_t k = 0; k < e.neighbors.size() && k < kMaxNeighbors; ++k) {
      nb.push_back({e.neighbors[k], 1.0 - 0.04 * double(k)});
    }
    if (!nb.empty()) ces.set(e.symbol, std::move(nb));
  }
  return ces;
}

void CharEmbeddingSpace::set(char32_t symbol, std::vector<Neighbor> neighbors) {
  if (neighbors.size() > kMaxNeighbors) {
    throw ValidationError("symbol U+" + std::to_string(std::uint32_t(symbol)) + " has " +
                          std::to_string(neighbors.size()) + " neighbors (max 20)");
  }
  std::set<char32_t> seen;
  for (const auto& n : neighbors) {
    if (n.symbol == symbol) throw ValidationError("a symbol cannot neighbor itself");
    if (!seen.insert(n.symbol).second) throw ValidationError("duplicate neighbor");
    if (!std::isfinite(n.score)) throw ValidationError("non-finite neighbor score");
  }
  std::stable_sort(neighbors.begin(), neighbors.end(),
                   [](const Neighbor& a, const Neighbor& b) { return a.score > b.score; });
  if (neighbors.empty()) {
    table_.erase(symbol);
  } else {
    table_[symbol] = std::move(neighbors);
  }
}

const std::vector<CharEmbeddingSpace::Neighbor>& CharEmbeddingSpace::neighbors(
    char32_t symbol) const {
  auto it = table_.find(symbol);
  return it == table_.end() ? kNone : it->second;
}

CharEmbeddingSpace CharEmbeddingSpace::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing embedding-space file " + path.string());
  CharEmbeddingSpace ces;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    if (raw.empty()) continue;
    std::u32string line;
    try {
      line = from_utf8(raw);
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), line_no);
    }
    if (line.size() < 2 || line[1] != U'\t') {
      throw ParseError("expected '<symbol><TAB><neighbors>'", line_no);
    }
    std::vector<Neighbor> nb;
    std::size_t i = 2;
    while (i < line.size()) {
      const char32_t sym = line[i++];
      if (i >= line.size() || line[i] != U',') throw ParseError("expected ',' after neighbor", line_no);
      ++i;
      std::string score;
      while (i < line.size() && line[i] != U';') score += static_cast<char>(line[i++]);
      if (i < line.size()) ++i;
      try {
        std::size_t used = 0;
        const double v = std::stod(score, &used);
        if (used != score.size()) throw std::invalid_argument(score);
        nb.push_back({sym, v});
      } catch (const std::exception&) {
        throw ParseError("bad score '" + score + "'", line_no);
      }
    }
    if (ces.table_.count(line[0])) throw ParseError("symbol listed twice", line_no);
    try {
      ces.set(line[0], std::move(nb));
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return ces;
}

void CharEmbeddingSpace::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& [sym, nb] : table_) {
    out << to_utf8(sym) << '\t';
    for (std::size_t k = 0; k < nb.size(); ++k) {
      if (k) out << ';';
      std::ostringstream score;
      score.precision(17);
      score << nb[k].score;
      out << to_utf8(nb[k].symbol) << ',' << score.str();
    }
    out << '\n';
  }
}

const char* to_string(TextAttackMethod m) noexcept {
  switch (m) {
    case TextAttackMethod::kViper: return "viper";
    case TextAttackMethod::kHotflip: return "hotflip";
    case TextAttackMethod::kHeuristic: return "heuristic";
  }
  return "?";
}

TextAttackMethod text_attack_from_string(const std::string& s) {
  if (s == "viper") return TextAttackMethod::kViper;
  if (s == "hotflip") return TextAttackMethod::kHotflip;
  if (s == "heuristic") return TextAttackMethod::kHeuristic;
  throw ValidationError("unknown text attack '" + s + "'");
}

void TextAttackConfig::validate() const {
  if (!(viper_p >= 0.0 && viper_p <= 1.0)) throw ValidationError("viper p must lie in [0,1]");
  if (!(hotflip_budget > 0.0 && hotflip_budget <= 1.0)) {
    throw ValidationError("hotflip budget must lie in (0,1]");
  }
  if (hotflip_beam < 1) throw ValidationError("hotflip beam must be at least 1");
  if (heuristic_k < 1) throw ValidationError("heuristic K must be at least 1");
  if (heuristic_candidates < 1) throw ValidationError("heuristic candidates must be at least 1");
}

std::size_t hotflip_max_flips(double budget, std::size_t len) {
  return static_cast<std::size_t>(std::ceil(budget * double(len) - 1e-9));
}

TextAdvResult viper(const NewsSample& s, double p, const CharEmbeddingSpace& ces,
                    std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("viper p must lie in [0,1]");
  TextAdvResult r;
  r.adv_tokens = s.tokens;
  CounterRng rng(seed, kStreamViper);
  for (std::size_t i = 0; i < s.tokens.size(); ++i) {
    const auto& nb = ces.neighbors(s.tokens[i]);
    if (nb.empty()) continue;
    if (rng.bernoulli(p)) {
      r.adv_tokens[i] = nb[rng.below(nb.size())].symbol;
      r.flips.push_back({i, s.tokens[i], r.adv_tokens[i]});
    }
  }
  return r;
}

TextAdvResult hotflip(const MultiModalModel& model, const NewsSample& s,
                      const TextAttackConfig& cfg) {
  cfg.validate();
  const std::size_t len = s.tokens.size();
  const std::size_t max_flips = hotflip_max_flips(cfg.hotflip_budget, len);
  if (max_flips == 0) throw ValidationError("hotflip budget allows zero flips");
  const Alphabet& alpha = model.alphabet();
  const std::size_t V = alpha.size();

  struct Beam {
    std::u32string tokens;
    std::vector<bool> flipped;
    double score = 0.0;
  };
  struct Candidate {
    double score;
    std::size_t pos;
    std::size_t sym;
    std::size_t beam;
  };

  TextAdvResult res;
  res.original_prediction = model.predict(s.tokens, s.image);
  res.queries = 1;
  std::vector<Beam> beam = {{s.tokens, std::vector<bool>(len, false), 0.0}};

  for (std::size_t depth = 0; depth < max_flips; ++depth) {
    std::vector<Candidate> cands;
    for (std::size_t bi = 0; bi < beam.size(); ++bi) {
      const Beam& b = beam[bi];
      const auto vg = model.text_loss_gradient(b.tokens, s.image, s.label);
      ++res.queries;
      for (std::size_t pos = 0; pos < len; ++pos) {
        if (b.flipped[pos]) continue;
        const std::size_t a = static_cast<std::size_t>(*alpha.index_of(b.tokens[pos]));
        const float ga = vg.grad[pos * V + a];
        for (std::size_t sym = 0; sym < V; ++sym) {
          if (sym == a) continue;
          cands.push_back({b.score + double(vg.grad[pos * V + sym] - ga), pos, sym, bi});
        }
      }
    }
    if (cands.empty()) break;
    auto better = [](const Candidate& x, const Candidate& y) {
      if (x.score != y.score) return x.score > y.score;
      if (x.pos != y.pos) return x.pos < y.pos;
      if (x.sym != y.sym) return x.sym < y.sym;
      return x.beam < y.beam;
    };
    std::sort(cands.begin(), cands.end(), better);

    std::vector<Beam> next;
    std::set<std::u32string> seen;
    for (const auto& c : cands) {
      if (next.size() == cfg.hotflip_beam) break;
      Beam nb = beam[c.beam];
      nb.tokens[c.pos] = alpha.symbol(c.sym);
      if (!seen.insert(nb.tokens).second) continue;
      nb.flipped[c.pos] = true;
      nb.score = c.score;
      next.push_back(std::move(nb));
    }
    beam = std::move(next);
    for (const Beam& b : beam) {
      ++res.queries;
      const int pred = model.predict(b.tokens, s.image);
      if (pred != res.original_prediction) {
        res.adv_tokens = b.tokens;
        res.flips = diff_flips(s.tokens, b.tokens);
        res.success = true;
        res.adversarial_prediction = pred;
        return res;
      }
    }
  }
  res.adv_tokens = beam.front().tokens;
  res.flips = diff_flips(s.tokens, res.adv_tokens);
  res.adversarial_prediction = res.original_prediction;
  return res;
}

TextAdvResult heuristic_search(const MultiModalModel& model, const NewsSample& s,
                               const TextAttackConfig& cfg, const CharEmbeddingSpace& ces) {
  cfg.validate();
  struct Entry {
    std::u32string tokens;
    double p_fake;
    double score;  // probability of the true class
  };
  TextAdvResult res;
  const double p0 = model.prob_fake(s.tokens, s.image);
  res.queries = 1;
  res.original_prediction = label_of(p0);

  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < s.tokens.size(); ++i) {
    if (!ces.neighbors(s.tokens[i]).empty()) eligible.push_back(i);
  }
  std::vector<Entry> seeds(cfg.heuristic_k, Entry{s.tokens, p0, true_class_prob(p0, s.label)});
  CounterRng rng(cfg.seed, kStreamHeuristic);

  for (std::size_t round = 0; round < cfg.heuristic_r && !eligible.empty(); ++round) {
    std::vector<Entry> pool = seeds;
    for (const Entry& seed : seeds) {
      for (std::size_t c = 0; c < cfg.heuristic_candidates; ++c) {
        std::u32string cand = seed.tokens;
        const std::size_t picks = std::min<std::size_t>(1 + rng.below(2), eligible.size());
        std::vector<std::size_t> chosen;
        while (chosen.size() < picks) {
          const std::size_t pos = eligible[rng.below(eligible.size())];
          if (std::find(chosen.begin(), chosen.end(), pos) == chosen.end()) chosen.push_back(pos);
        }
        for (std::size_t pos : chosen) {
          const auto& nb = ces.neighbors(s.tokens[pos]);
          cand[pos] = nb[rng.below(nb.size())].symbol;
        }
        const double pf = model.prob_fake(cand, s.image);
        ++res.queries;
        pool.push_back({std::move(cand), pf, true_class_prob(pf, s.label)});
      }
    }
    std::stable_sort(pool.begin(), pool.end(),
                     [](const Entry& a, const Entry& b) { return a.score < b.score; });
    seeds.clear();
    std::set<std::u32string> seen;
    for (auto& e : pool) {
      if (seeds.size() == cfg.heuristic_k) break;
      if (seen.insert(e.tokens).second) seeds.push_back(std::move(e));
    }
    if (cfg.heuristic_stop_on_success && label_of(seeds.front().p_fake) != res.original_prediction) {
      break;
    }
  }
  const Entry& best = seeds.front();
  res.adv_tokens = best.tokens;
  res.flips = diff_flips(s.tokens, best.tokens);
  res.adversarial_prediction = label_of(best.p_fake);
  res.success = res.adversarial_prediction != res.original_prediction;
  return res;
}

TextAdvResult attack_text(const MultiModalModel& model, const NewsSample& sample,
                          const TextAttackConfig& cfg, const CharEmbeddingSpace& ces) {
  cfg.validate();
  switch (cfg.method) {
    case TextAttackMethod::kViper: {
      TextAdvResult r = viper(sample, cfg.viper_p, ces, cfg.seed);
      r.original_prediction = model.predict(sample.tokens, sample.image);
      r.adversarial_prediction = model.predict(r.adv_tokens, sample.image);
      r.success = r.original_prediction != r.adversarial_prediction;
      return r;
    }
    case TextAttackMethod::kHotflip: return hotflip(model, sample, cfg);
    case TextAttackMethod::kHeuristic: return heuristic_search(model, sample, cfg, ces);
  }
  throw ValidationError("unknown text attack");
}

}  // namespace mmr
