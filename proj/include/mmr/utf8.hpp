#pragma once

#include <string>
#include <string_view>

namespace mmr {

std::string to_utf8(std::u32string_view text);
// Throws ValidationError on malformed input.
std::u32string from_utf8(std::string_view text);
std::string to_utf8(char32_t cp);

}  // namespace mmr
