#include "graded/readability.hpp"

#include "graded/error.hpp"

namespace graded::readability {
namespace {

void require_text(const textproc::TextStats& stats) {
  if (stats.n_words == 0 || stats.n_sentences == 0) {
    throw Error(ErrorCode::insufficient_text,
                "insufficient text: readability needs at least one word and "
                "one sentence");
  }
}

}  // namespace

double ari(const textproc::TextStats& stats) {
  require_text(stats);
  const double chars_per_word =
      static_cast<double>(stats.n_chars) / static_cast<double>(stats.n_words);
  const double words_per_sentence = static_cast<double>(stats.n_words) /
                                    static_cast<double>(stats.n_sentences);
  return 4.71 * chars_per_word + 0.5 * words_per_sentence - 21.43;
}

double fkgl(const textproc::TextStats& stats) {
  require_text(stats);
  const double words_per_sentence = static_cast<double>(stats.n_words) /
                                    static_cast<double>(stats.n_sentences);
  const double syllables_per_word = static_cast<double>(stats.n_syllables) /
                                    static_cast<double>(stats.n_words);
  return 0.39 * words_per_sentence + 11.8 * syllables_per_word - 15.59;
}

double gfi(const textproc::TextStats& stats) {
  require_text(stats);
  const double words_per_sentence = static_cast<double>(stats.n_words) /
                                    static_cast<double>(stats.n_sentences);
  const double complex_share = static_cast<double>(stats.n_complex_words) /
                               static_cast<double>(stats.n_words);
  return 0.4 * (words_per_sentence + 100.0 * complex_share);
}

ReadabilityReport score_all(std::string_view text) {
  ReadabilityReport report;
  report.stats = textproc::text_stats(text);
  report.gfi = gfi(report.stats);
  report.ari = ari(report.stats);
  report.fkgl = fkgl(report.stats);
  return report;
}

}  // namespace graded::readability
