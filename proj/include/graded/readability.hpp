#pragma once

#include <string_view>

#include "graded/textproc.hpp"

namespace graded::readability {

struct ReadabilityReport {
  double gfi = 0.0;
  double ari = 0.0;
  double fkgl = 0.0;
  textproc::TextStats stats;

  friend bool operator==(const ReadabilityReport&, const ReadabilityReport&) = default;
};

// Automated Readability Index:
//   4.71 * chars/words + 0.5 * words/sentences - 21.43
double ari(const textproc::TextStats& stats);

// Flesch-Kincaid grade level:
//   0.39 * words/sentences + 11.8 * syllables/words - 15.59
double fkgl(const textproc::TextStats& stats);

// Gunning fog index:
//   0.4 * (words/sentences + 100 * complex_words/words)
double gfi(const textproc::TextStats& stats);

// All three indices over text_stats(text). Raw values, never rounded or
// clamped to grade bands.
ReadabilityReport score_all(std::string_view text);

}  // namespace graded::readability
