#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace graded::textproc {

struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive, byte offsets

  friend bool operator==(const Span&, const Span&) = default;
};

struct Sentence {
  std::string text;
  Span span;
};

struct Token {
  std::string surface;
  bool is_word = false;
  std::size_t offset = 0;
};

struct TextStats {
  std::size_t n_sentences = 0;
  std::size_t n_words = 0;
  std::size_t n_chars = 0;         // letters inside word tokens
  std::size_t n_syllables = 0;
  std::size_t n_complex_words = 0; // words with >= 3 syllables

  friend bool operator==(const TextStats&, const TextStats&) = default;
};

// Splits after terminal punctuation (. ! ? …) that is followed by whitespace
// and an uppercase letter or an opening quote/bracket/dash. A lone period
// after a known abbreviation or a single capital initial does not split.
std::vector<Sentence> segment_sentences(std::string_view text);

// Word tokens are maximal letter runs. Internal hyphens stay inside the word
// ("peut-être"); an elided apostrophe closes the token ("l'école" -> "l'",
// "école"). Digit runs and punctuation are non-word tokens.
std::vector<Token> tokenize(std::string_view text);

// max(1, number of maximal vowel runs). Throws Error(not_a_word) when the
// input has no letter.
std::size_t count_syllables(std::string_view word);

TextStats text_stats(std::string_view text);

std::size_t word_count(std::string_view text);

// Lowercased, diacritic-folded word tokens; the normalization used for
// search and keyword matching.
std::vector<std::string> index_terms(std::string_view text);

}  // namespace graded::textproc
