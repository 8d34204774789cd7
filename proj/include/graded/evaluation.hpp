#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "graded/classifier.hpp"

namespace graded::evaluation {

using classifier::DifficultyScale;

// Rows are true label indices, columns predicted label indices.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(DifficultyScale scale);
  ConfusionMatrix(DifficultyScale scale, std::vector<std::uint64_t> row_major);

  const DifficultyScale& scale() const noexcept { return scale_; }
  std::size_t size() const noexcept { return scale_.size(); }
  std::uint64_t at(std::size_t truth, std::size_t predicted) const {
    return counts_[truth * size() + predicted];
  }
  void add(std::size_t truth, std::size_t predicted, std::uint64_t n = 1);
  const std::vector<std::uint64_t>& counts() const noexcept { return counts_; }

  std::uint64_t total() const;
  std::uint64_t trace() const;
  std::uint64_t row_total(std::size_t truth) const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  DifficultyScale scale_;
  std::vector<std::uint64_t> counts_;
};

ConfusionMatrix confusion_matrix(std::span<const std::string> truths,
                                 std::span<const std::string> preds,
                                 const DifficultyScale& scale);
ConfusionMatrix confusion_matrix(std::span<const std::size_t> truths,
                                 std::span<const std::size_t> preds,
                                 const DifficultyScale& scale);

double accuracy(const ConfusionMatrix& cm);

// Accuracy of always predicting the most represented class.
double baseline_accuracy(const std::map<std::string, std::uint64_t>& label_counts);

enum class TiePolicy { strict, half };

// Cross-class pairs whose predicted order strictly inverts the true order,
// and cross-class pairs the prediction cannot order (equal label or score).
struct MismatchCount {
  std::uint64_t strict = 0;
  std::uint64_t ties = 0;

  double value(TiePolicy policy) const {
    return static_cast<double>(strict) +
           (policy == TiePolicy::half ? 0.5 * static_cast<double>(ties) : 0.0);
  }
  friend bool operator==(const MismatchCount&, const MismatchCount&) = default;
};

// sum_{a<b} sum_{p>q} counts[a][p] * counts[b][q]; ties add
// sum_{a<b} sum_p counts[a][p] * counts[b][p].
MismatchCount pairwise_mismatches_cm(const ConfusionMatrix& cm);

struct ScoredItem {
  std::size_t truth = 0;  // scale index
  double score = 0.0;
};

// Pairs with truth_i < truth_j and score_i > score_j. O(n log n + nK).
// Throws Error(invalid_score) on NaN.
MismatchCount pairwise_mismatches_scores(std::span<const ScoredItem> items,
                                         const DifficultyScale& scale);

// Errors with |pred - true| == 1 over all errors; 1.0 when there are none.
double adjacency_mass(const ConfusionMatrix& cm);

struct EvalReport {
  std::string name;
  std::size_t n_items = 0;
  MismatchCount mismatches;
  // Present for discrete classifiers only.
  std::optional<double> accuracy;
  std::optional<double> baseline_accuracy;
  std::optional<ConfusionMatrix> confusion;
  std::optional<double> adjacency_mass;
};

EvalReport evaluate_predictions(std::string name, std::span<const std::size_t> truths,
                                std::span<const std::size_t> preds,
                                const DifficultyScale& scale);

EvalReport evaluate_scores(std::string name, std::span<const ScoredItem> items,
                           const DifficultyScale& scale);

// Trained head over pre-embedded test items.
EvalReport evaluate(const std::string& name, const classifier::HeadParams& head,
                    std::span<const classifier::LabeledVector> test_set);

using TextScorer = std::function<double(const std::string&)>;

// Continuous scorer (e.g. a readability formula) over raw texts.
EvalReport evaluate(const std::string& name, const TextScorer& scorer,
                    std::span<const classifier::LabeledText> test_set,
                    const DifficultyScale& scale);

// The readability baselines as scorers: "GFI", "ARI", "FKGL".
std::vector<std::pair<std::string, TextScorer>> readability_scorers();

struct Experiment {
  std::string dataset;
  TiePolicy tie_policy = TiePolicy::strict;
  std::vector<EvalReport> reports;  // classifiers and scorers
};

inline constexpr int kReportFormatVersion = 1;

std::string serialize_report(const Experiment& experiment);

// Fixed-width tables: mismatches (readability rows, then classifiers) and
// accuracy (baseline row, then classifiers), one column per dataset.
std::string render_mismatch_table(std::span<const Experiment> experiments);
std::string render_accuracy_table(std::span<const Experiment> experiments);

// Heatmap of the confusion matrix, rows = true, columns = predicted.
std::string render_confusion_svg(const ConfusionMatrix& cm, const std::string& title);

}  // namespace graded::evaluation
