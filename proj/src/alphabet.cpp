#include "mmr/alphabet.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "mmr/errors.hpp"

namespace mmr {

Alphabet::Alphabet(std::vector<char32_t> symbols) : symbols_(std::move(symbols)) {
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    if (!index_.emplace(symbols_[i], static_cast<int>(i)).second) {
      throw ValidationError("duplicate alphabet symbol U+" +
                            std::to_string(static_cast<unsigned>(symbols_[i])));
    }
  }
}

Alphabet Alphabet::standard() {
  std::vector<char32_t> symbols;
  for (char32_t c = 0x20; c <= 0x7E; ++c) symbols.push_back(c);
  std::set<char32_t> extension;
  for (const auto& entry : default_confusables()) {
    for (char32_t cp : entry.neighbors) {
      if (cp > 0x7E) extension.insert(cp);
    }
  }
  symbols.insert(symbols.end(), extension.begin(), extension.end());
  return Alphabet(std::move(symbols));
}

std::optional<int> Alphabet::index_of(char32_t cp) const {
  auto it = index_.find(cp);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<int> Alphabet::encode(const std::u32string& text) const {
  std::vector<int> out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    auto idx = index_of(text[i]);
    if (!idx) {
      char buf[16];
      std::snprintf(buf, sizeof buf, "U+%04X", static_cast<unsigned>(text[i]));
      throw UnknownSymbolError(std::string("symbol ") + buf + " at position " +
                               std::to_string(i) + " is not in the alphabet");
    }
    out.push_back(*idx);
  }
  return out;
}

}  // namespace mmr
