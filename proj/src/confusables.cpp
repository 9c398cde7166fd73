#include "mmr/alphabet.hpp"

#include <algorithm>

#include "mmr/utf8.hpp"

namespace mmr {

namespace {

// Visually confusable substitutes per printable ASCII symbol, most similar
// first. Drawn from the usual Latin-1 / Latin Extended / Greek / Cyrillic
// homoglyph sets plus a few ASCII look-alikes.
struct Row {
  char32_t symbol;
  const char* neighbors;  // UTF-8, one codepoint per neighbor
};

constexpr Row kRows[] = {
    {U'a', "аàáâäåɑα@"},
    {U'b', "ƅḃƀьЬ6"},
    {U'c', "сçćĉċϲ¢"},
    {U'd', "ԁďđḋɗ"},
    {U'e', "еèéêëēėεę"},
    {U'f', "ƒḟſ"},
    {U'g', "ɡĝğġģ9q"},
    {U'h', "һĥħḣ"},
    {U'i', "іìíîïıι1l!|"},
    {U'j', "јĵʝ"},
    {U'k', "кķκḳ"},
    {U'l', "ӏĺļľł1I|"},
    {U'm', "мṁṃ"},
    {U'n', "ñńņňпηṅ"},
    {U'o', "оοòóôõöø0"},
    {U'p', "рρṗþ"},
    {U'q', "ԛɋ9g"},
    {U'r', "гŕŗřṙ"},
    {U's', "ѕśŝşš5$"},
    {U't', "тţťŧṫ7+"},
    {U'u', "υùúûüūμ"},
    {U'v', "νѵṽ"},
    {U'w', "ŵẁẃẅωш"},
    {U'x', "х×χẋ"},
    {U'y', "уýÿŷγ"},
    {U'z', "źżžʐ2"},
    {U'A', "АΑÀÁÂÄÅ4"},
    {U'B', "ВΒß8"},
    {U'C', "СÇĆϹ("},
    {U'D', "ĎĐḊ"},
    {U'E', "ЕΕÈÉÊË"},
    {U'H', "НΗĤĦ"},
    {U'I', "ІΙÌÍÎÏl1|"},
    {U'K', "КΚĶ"},
    {U'M', "МΜṀ"},
    {U'N', "ΝÑŃ"},
    {U'O', "ОΟÒÓÔÖØ0"},
    {U'P', "РΡṖ"},
    {U'S', "ЅŚŜŠ5$"},
    {U'T', "ТΤŤ7"},
    {U'X', "ХΧ×"},
    {U'Y', "ΥҮÝ"},
    {U'Z', "ΖŹŻŽ2"},
    {U'0', "OoОо"},
    {U'1', "lI|ı"},
    {U'2', "Zz"},
    {U'3', "Зʒ"},
    {U'5', "Ss"},
    {U'6', "bб"},
    {U'8', "B"},
    {U'9', "gq"},
    {U'!', "¡ǃ|i"},
    {U'?', "¿ʔ"},
    {U'#', "♯"},
    {U'.', "·․"},
    {U',', "‚"},
    {U'-', "‐–—"},
};

}  // namespace

std::vector<ConfusableEntry> default_confusables() {
  std::vector<ConfusableEntry> out;
  for (const Row& row : kRows) {
    ConfusableEntry entry{row.symbol, {}};
    for (char32_t cp : from_utf8(row.neighbors)) {
      if (cp != row.symbol &&
          std::find(entry.neighbors.begin(), entry.neighbors.end(), cp) ==
              entry.neighbors.end()) {
        entry.neighbors.push_back(cp);
      }
    }
    out.push_back(std::move(entry));
  }
  return out;
}

}  // namespace mmr
