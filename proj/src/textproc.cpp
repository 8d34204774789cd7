#include "graded/textproc.hpp"

#include <algorithm>
#include <array>
#include <string_view>

#include "graded/error.hpp"
#include "graded/utf8.hpp"

namespace graded::textproc {
namespace {

using utf8::CodePoint;

bool is_terminal(char32_t cp) {
  return cp == U'.' || cp == U'!' || cp == U'?' || cp == 0x2026;
}

bool is_closer(char32_t cp) {
  switch (cp) {
    case U'"': case U'\'': case U')': case U']':
    case 0xBB: case 0x201D: case 0x2019: case 0x203A:
      return true;
    default:
      return false;
  }
}

bool is_strict_closer(char32_t cp) {
  return cp == 0xBB || cp == 0x201D || cp == 0x203A;
}

bool is_inline_space(char32_t cp) {
  return cp == U' ' || cp == 0xA0 || cp == 0x202F;
}

bool is_opener(char32_t cp) {
  switch (cp) {
    case U'"': case U'\'': case U'(': case U'[': case U'-':
    case 0xAB: case 0x201C: case 0x2018: case 0x2039:
    case 0x2013: case 0x2014: case 0xBF: case 0xA1:
      return true;
    default:
      return false;
  }
}

// Compared against the letters (and internal dots/hyphens) right before a
// single period.
constexpr std::array<std::string_view, 34> kAbbreviations{
    "M",     "MM",   "Mme",  "Mmes", "Mlle", "Mlles", "Dr",  "Drs", "Pr",
    "Me",    "St",   "Ste",  "Mgr",  "cf",   "p",     "pp",  "ex",  "av",
    "apr",   "env",  "vol",  "chap", "fig",  "art",   "no",  "n",   "Mr",
    "Mrs",   "Ms",   "Prof", "vs",   "i.e",  "e.g",   "J.-C"};

bool is_abbreviation(const std::vector<CodePoint>& cps, std::size_t dot) {
  std::size_t begin = dot;
  while (begin > 0) {
    const char32_t prev = cps[begin - 1].value;
    if (utf8::is_letter(prev) || prev == U'.' || prev == U'-') {
      --begin;
    } else {
      break;
    }
  }
  while (begin < dot && !utf8::is_letter(cps[begin].value)) ++begin;
  if (begin == dot) return false;
  std::u32string word;
  for (std::size_t k = begin; k < dot; ++k) word.push_back(cps[k].value);
  if (word.size() == 1 && utf8::is_upper(word[0])) return true;  // initials
  const std::string encoded = utf8::encode(word);
  return std::find(kAbbreviations.begin(), kAbbreviations.end(), encoded) !=
         kAbbreviations.end();
}

constexpr std::array<char32_t, 19> kVowels{
    U'a', U'e', U'i', U'o', U'u', U'y', 0xE9, 0xE8, 0xEA, 0xEB,
    0xE0, 0xE2, 0xEE, 0xEF, 0xF4, 0xFB, 0xF9, 0xFC, 0x153};

bool is_vowel(char32_t cp) {
  const char32_t lower = utf8::to_lower(cp);
  return std::find(kVowels.begin(), kVowels.end(), lower) != kVowels.end();
}

}  // namespace

std::vector<Sentence> segment_sentences(std::string_view text) {
  const auto cps = utf8::decode(text);
  std::vector<Sentence> out;
  const std::size_t n = cps.size();
  std::size_t i = 0;
  auto emit = [&](std::size_t first, std::size_t last_exclusive) {
    const std::size_t b = cps[first].offset;
    const std::size_t e =
        cps[last_exclusive - 1].offset + cps[last_exclusive - 1].length;
    out.push_back({std::string(text.substr(b, e - b)), {b, e}});
  };
  while (i < n) {
    while (i < n && utf8::is_space(cps[i].value)) ++i;
    if (i >= n) break;
    const std::size_t start = i;
    std::size_t end = n;  // exclusive code point index
    std::size_t last_non_space = i;
    while (i < n) {
      if (!utf8::is_space(cps[i].value)) last_non_space = i;
      if (!is_terminal(cps[i].value)) {
        ++i;
        continue;
      }
      const std::size_t run_begin = i;
      while (i < n && is_terminal(cps[i].value)) ++i;
      // absorb closing quotes/brackets, allowing the French space before »
      std::size_t candidate = i;
      for (;;) {
        if (candidate < n && is_closer(cps[candidate].value)) {
          ++candidate;
        } else if (candidate + 1 < n && is_inline_space(cps[candidate].value) &&
                   is_strict_closer(cps[candidate + 1].value)) {
          candidate += 2;
        } else {
          break;
        }
      }
      last_non_space = candidate - 1;
      if (candidate >= n) {
        end = candidate;
        i = candidate;
        break;
      }
      if (!utf8::is_space(cps[candidate].value)) {
        i = candidate;
        continue;
      }
      std::size_t next = candidate;
      while (next < n && utf8::is_space(cps[next].value)) ++next;
      if (next >= n) {
        end = candidate;
        i = next;
        break;
      }
      const char32_t follower = cps[next].value;
      const bool single_period =
          i - run_begin == 1 && cps[run_begin].value == U'.';
      if ((utf8::is_upper(follower) || is_opener(follower)) &&
          !(single_period && is_abbreviation(cps, run_begin))) {
        end = candidate;
        i = next;
        break;
      }
      i = candidate;
    }
    if (end == n) end = last_non_space + 1;
    emit(start, end);
  }
  return out;
}

std::vector<Token> tokenize(std::string_view text) {
  const auto cps = utf8::decode(text);
  const std::size_t n = cps.size();
  std::vector<Token> out;
  auto slice = [&](std::size_t first, std::size_t last_exclusive) {
    const std::size_t b = cps[first].offset;
    const std::size_t e =
        cps[last_exclusive - 1].offset + cps[last_exclusive - 1].length;
    return std::string(text.substr(b, e - b));
  };
  std::size_t i = 0;
  while (i < n) {
    const char32_t cp = cps[i].value;
    if (utf8::is_space(cp)) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    if (utf8::is_letter(cp)) {
      ++i;
      while (i < n) {
        const char32_t c = cps[i].value;
        if (utf8::is_letter(c)) {
          ++i;
        } else if (utf8::is_hyphen(c) && i + 1 < n &&
                   utf8::is_letter(cps[i + 1].value)) {
          i += 2;
        } else {
          break;
        }
      }
      if (i + 1 < n && utf8::is_apostrophe(cps[i].value) &&
          utf8::is_letter(cps[i + 1].value)) {
        ++i;  // elision: the apostrophe belongs to the first part
      }
      out.push_back({slice(start, i), true, cps[start].offset});
    } else if (utf8::is_digit(cp)) {
      ++i;
      while (i < n) {
        const char32_t c = cps[i].value;
        if (utf8::is_digit(c)) {
          ++i;
        } else if ((c == U'.' || c == U',') && i + 1 < n &&
                   utf8::is_digit(cps[i + 1].value)) {
          i += 2;
        } else {
          break;
        }
      }
      out.push_back({slice(start, i), false, cps[start].offset});
    } else {
      ++i;
      out.push_back({slice(start, i), false, cps[start].offset});
    }
  }
  return out;
}

std::size_t count_syllables(std::string_view word) {
  const auto cps = utf8::decode(word);
  const bool has_letter = std::any_of(cps.begin(), cps.end(), [](const auto& c) {
    return utf8::is_letter(c.value);
  });
  if (!has_letter) {
    throw Error(ErrorCode::not_a_word,
                "not a word: '" + std::string(word) + "'");
  }
  std::size_t groups = 0;
  bool in_group = false;
  for (const auto& c : cps) {
    const bool v = is_vowel(c.value);
    if (v && !in_group) ++groups;
    in_group = v;
  }
  return std::max<std::size_t>(1, groups);
}

TextStats text_stats(std::string_view text) {
  TextStats stats;
  stats.n_sentences = segment_sentences(text).size();
  for (const auto& token : tokenize(text)) {
    if (!token.is_word) continue;
    ++stats.n_words;
    for (const auto& c : utf8::decode(token.surface)) {
      if (utf8::is_letter(c.value)) ++stats.n_chars;
    }
    const std::size_t syllables = count_syllables(token.surface);
    stats.n_syllables += syllables;
    if (syllables >= 3) ++stats.n_complex_words;
  }
  return stats;
}

std::size_t word_count(std::string_view text) {
  const auto tokens = tokenize(text);
  return static_cast<std::size_t>(std::count_if(
      tokens.begin(), tokens.end(), [](const Token& t) { return t.is_word; }));
}

std::vector<std::string> index_terms(std::string_view text) {
  std::vector<std::string> terms;
  for (const auto& token : tokenize(text)) {
    if (!token.is_word) continue;
    std::string term = utf8::fold_diacritics(utf8::to_lower(token.surface));
    // "l'" and "l’" index the same way
    if (!term.empty() && term.back() == '\'') term.pop_back();
    if (term.size() >= 3 && term.compare(term.size() - 3, 3, "\xE2\x80\x99") == 0) {
      term.resize(term.size() - 3);
    }
    if (!term.empty()) terms.push_back(std::move(term));
  }
  return terms;
}

}  // namespace graded::textproc
