#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace graded::utf8 {

// One decoded code point and the byte range it occupies in the source.
struct CodePoint {
  char32_t value;
  std::size_t offset;
  std::size_t length;
};

// Decodes UTF-8; malformed sequences decode to U+FFFD covering one byte so
// offsets always advance and cover the whole input.
std::vector<CodePoint> decode(std::string_view text);

void append(std::string& out, char32_t cp);
std::string encode(std::u32string_view cps);
std::size_t length(std::string_view text);

bool is_letter(char32_t cp);
bool is_upper(char32_t cp);
bool is_digit(char32_t cp);
bool is_space(char32_t cp);
bool is_apostrophe(char32_t cp);
bool is_hyphen(char32_t cp);

char32_t to_lower(char32_t cp);
std::string to_lower(std::string_view text);

// Strips diacritics from Latin letters and expands ligatures (œ -> oe).
std::string fold_diacritics(std::string_view text);

}  // namespace graded::utf8
