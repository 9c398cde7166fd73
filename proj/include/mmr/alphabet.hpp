#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace mmr {

struct ConfusableEntry {
  char32_t symbol;
  std::vector<char32_t> neighbors;  // most similar first
};

// Shipped homoglyph table backing the default character embedding space.
std::vector<ConfusableEntry> default_confusables();

// Ordered symbol table; a symbol's position is its embedding row.
class Alphabet {
 public:
  Alphabet() = default;
  explicit Alphabet(std::vector<char32_t> symbols);

  // Printable ASCII (0x20..0x7E) followed by every non-ASCII codepoint of the
  // default confusables table in ascending order.
  static Alphabet standard();

  std::size_t size() const noexcept { return symbols_.size(); }
  char32_t symbol(std::size_t index) const { return symbols_.at(index); }
  const std::vector<char32_t>& symbols() const noexcept { return symbols_; }
  std::optional<int> index_of(char32_t cp) const;
  bool contains(char32_t cp) const { return index_of(cp).has_value(); }
  // Throws UnknownSymbolError naming the first symbol not in the table.
  std::vector<int> encode(const std::u32string& text) const;

  friend bool operator==(const Alphabet& a, const Alphabet& b) {
    return a.symbols_ == b.symbols_;
  }

 private:
  std::vector<char32_t> symbols_;
  std::unordered_map<char32_t, int> index_;
};

}  // namespace mmr
