#include "graded/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

#include "graded/error.hpp"
#include "graded/readability.hpp"

namespace graded::evaluation {
namespace {

using json = nlohmann::json;

std::string with_thousands(double value) {
  std::ostringstream os;
  const bool integral = value == std::floor(value);
  os << std::fixed << std::setprecision(integral ? 0 : 1) << value;
  std::string s = os.str();
  const auto dot = s.find('.');
  std::string int_part = s.substr(0, dot);
  const std::string frac = dot == std::string::npos ? "" : s.substr(dot);
  std::string out;
  const int n = static_cast<int>(int_part.size());
  for (int i = 0; i < n; ++i) {
    out.push_back(int_part[static_cast<std::size_t>(i)]);
    const int rest = n - 1 - i;
    if (rest > 0 && rest % 3 == 0 && int_part[static_cast<std::size_t>(i)] != '-') {
      out.push_back(',');
    }
  }
  return out + frac;
}

std::string fixed2(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v;
  return os.str();
}

std::string pad_right(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : s + std::string(w - s.size(), ' ');
}

std::string pad_left(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : std::string(w - s.size(), ' ') + s;
}

using Table = std::vector<std::vector<std::string>>;

std::string render_table(const Table& rows, std::size_t header_rows,
                         std::size_t section_break) {
  std::vector<std::size_t> widths;
  for (const auto& r : rows) {
    if (widths.size() < r.size()) widths.resize(r.size(), 0);
    for (std::size_t c = 0; c < r.size(); ++c) widths[c] = std::max(widths[c], r[c].size());
  }
  std::string rule = "+";
  for (auto w : widths) rule += std::string(w + 2, '-') + "+";
  std::ostringstream os;
  os << rule << '\n';
  for (std::size_t i = 0; i < rows.size(); ++i) {
    os << '|';
    for (std::size_t c = 0; c < widths.size(); ++c) {
      const std::string cell = c < rows[i].size() ? rows[i][c] : "";
      os << ' ' << (c == 0 ? pad_right(cell, widths[c]) : pad_left(cell, widths[c])) << " |";
    }
    os << '\n';
    if (i + 1 == header_rows || (section_break != 0 && i + 1 == section_break)) {
      os << rule << '\n';
    }
  }
  os << rule << '\n';
  return os.str();
}

bool is_readability(const std::string& name) {
  return name == "GFI" || name == "ARI" || name == "FKGL";
}

std::vector<std::string> row_names(std::span<const Experiment> experiments,
                                   bool readability) {
  std::vector<std::string> names;
  if (readability) {
    for (const char* n : {"GFI", "ARI", "FKGL"}) {
      for (const auto& e : experiments) {
        const bool present = std::any_of(e.reports.begin(), e.reports.end(),
                                         [&](const EvalReport& r) { return r.name == n; });
        if (present && std::find(names.begin(), names.end(), n) == names.end()) {
          names.emplace_back(n);
        }
      }
    }
    return names;
  }
  for (const auto& e : experiments) {
    for (const auto& r : e.reports) {
      if (!is_readability(r.name) &&
          std::find(names.begin(), names.end(), r.name) == names.end()) {
        names.push_back(r.name);
      }
    }
  }
  return names;
}

const EvalReport* find_report(const Experiment& e, const std::string& name) {
  for (const auto& r : e.reports) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

json mismatch_json(const MismatchCount& m, TiePolicy policy) {
  return json{{"strict", m.strict}, {"ties", m.ties}, {"value", m.value(policy)}};
}

}  // namespace

ConfusionMatrix::ConfusionMatrix(DifficultyScale scale)
    : scale_(std::move(scale)), counts_(scale_.size() * scale_.size(), 0) {}

ConfusionMatrix::ConfusionMatrix(DifficultyScale scale, std::vector<std::uint64_t> row_major)
    : scale_(std::move(scale)), counts_(std::move(row_major)) {
  if (counts_.size() != scale_.size() * scale_.size()) {
    throw Error(ErrorCode::invalid_argument, "confusion matrix must be K x K");
  }
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted, std::uint64_t n) {
  if (truth >= size() || predicted >= size()) {
    throw Error(ErrorCode::invalid_argument, "confusion matrix index out of range");
  }
  counts_[truth * size() + predicted] += n;
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t t = 0;
  for (std::size_t i = 0; i < size(); ++i) t += at(i, i);
  return t;
}

std::uint64_t ConfusionMatrix::row_total(std::size_t truth) const {
  std::uint64_t t = 0;
  for (std::size_t p = 0; p < size(); ++p) t += at(truth, p);
  return t;
}

ConfusionMatrix confusion_matrix(std::span<const std::size_t> truths,
                                 std::span<const std::size_t> preds,
                                 const DifficultyScale& scale) {
  if (truths.size() != preds.size()) {
    throw Error(ErrorCode::invalid_argument, "truths and predictions differ in length");
  }
  if (truths.empty()) {
    throw Error(ErrorCode::invalid_argument, "confusion matrix needs at least one item");
  }
  ConfusionMatrix cm(scale);
  for (std::size_t i = 0; i < truths.size(); ++i) cm.add(truths[i], preds[i]);
  return cm;
}

ConfusionMatrix confusion_matrix(std::span<const std::string> truths,
                                 std::span<const std::string> preds,
                                 const DifficultyScale& scale) {
  if (truths.size() != preds.size()) {
    throw Error(ErrorCode::invalid_argument, "truths and predictions differ in length");
  }
  std::vector<std::size_t> t, p;
  t.reserve(truths.size());
  p.reserve(preds.size());
  for (const auto& s : truths) t.push_back(scale.index(s));
  for (const auto& s : preds) p.push_back(scale.index(s));
  return confusion_matrix(std::span<const std::size_t>(t), std::span<const std::size_t>(p),
                          scale);
}

double accuracy(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (total == 0) throw Error(ErrorCode::invalid_argument, "accuracy of an empty confusion matrix");
  return static_cast<double>(cm.trace()) / static_cast<double>(total);
}

double baseline_accuracy(const std::map<std::string, std::uint64_t>& label_counts) {
  std::uint64_t total = 0, best = 0;
  for (const auto& [label, n] : label_counts) {
    total += n;
    best = std::max(best, n);
  }
  if (total == 0) throw Error(ErrorCode::invalid_argument, "baseline accuracy of an empty set");
  return static_cast<double>(best) / static_cast<double>(total);
}

MismatchCount pairwise_mismatches_cm(const ConfusionMatrix& cm) {
  const std::size_t k = cm.size();
  MismatchCount out;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      // a is the easier true class; an item of a predicted above an item
      // of b is an inversion
      for (std::size_t p = 0; p < k; ++p) {
        for (std::size_t q = 0; q < p; ++q) out.strict += cm.at(a, p) * cm.at(b, q);
        out.ties += cm.at(a, p) * cm.at(b, p);
      }
    }
  }
  return out;
}

MismatchCount pairwise_mismatches_scores(std::span<const ScoredItem> items,
                                         const DifficultyScale& scale) {
  if (items.size() < 2) {
    throw Error(ErrorCode::invalid_argument, "pairwise mismatches need at least 2 items");
  }
  const std::size_t k = scale.size();
  for (const auto& it : items) {
    if (std::isnan(it.score)) throw Error(ErrorCode::invalid_score, "invalid score: NaN");
    if (it.truth >= k) throw Error(ErrorCode::invalid_argument, "label index out of range");
  }
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return items[x].score > items[y].score;
  });
  // seen_below[t]: processed items (strictly higher score) with truth < t
  std::vector<std::uint64_t> seen(k, 0);
  MismatchCount out;
  std::vector<std::uint64_t> group(k, 0);
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    std::fill(group.begin(), group.end(), 0);
    while (j < order.size() && items[order[j]].score == items[order[i]].score) {
      const std::size_t t = items[order[j]].truth;
      for (std::size_t s = 0; s < t; ++s) out.strict += seen[s];
      ++group[t];
      ++j;
    }
    std::uint64_t before = 0;
    for (std::size_t t = 0; t < k; ++t) {
      out.ties += before * group[t];
      before += group[t];
      seen[t] += group[t];
    }
    i = j;
  }
  return out;
}

double adjacency_mass(const ConfusionMatrix& cm) {
  std::uint64_t errors = 0, adjacent = 0;
  for (std::size_t t = 0; t < cm.size(); ++t) {
    for (std::size_t p = 0; p < cm.size(); ++p) {
      if (t == p) continue;
      errors += cm.at(t, p);
      if (t + 1 == p || p + 1 == t) adjacent += cm.at(t, p);
    }
  }
  if (errors == 0) return 1.0;
  return static_cast<double>(adjacent) / static_cast<double>(errors);
}

EvalReport evaluate_predictions(std::string name, std::span<const std::size_t> truths,
                                std::span<const std::size_t> preds,
                                const DifficultyScale& scale) {
  EvalReport r;
  r.name = std::move(name);
  r.n_items = truths.size();
  auto cm = confusion_matrix(truths, preds, scale);
  r.mismatches = pairwise_mismatches_cm(cm);
  r.accuracy = accuracy(cm);
  std::map<std::string, std::uint64_t> counts;
  for (std::size_t t = 0; t < cm.size(); ++t) {
    if (auto n = cm.row_total(t)) counts[scale.label(t)] = n;
  }
  r.baseline_accuracy = baseline_accuracy(counts);
  r.adjacency_mass = adjacency_mass(cm);
  r.confusion = std::move(cm);
  return r;
}

EvalReport evaluate_scores(std::string name, std::span<const ScoredItem> items,
                           const DifficultyScale& scale) {
  EvalReport r;
  r.name = std::move(name);
  r.n_items = items.size();
  r.mismatches = pairwise_mismatches_scores(items, scale);
  return r;
}

EvalReport evaluate(const std::string& name, const classifier::HeadParams& head,
                    std::span<const classifier::LabeledVector> test_set) {
  if (test_set.empty()) throw Error(ErrorCode::invalid_argument, "empty test set");
  std::vector<std::size_t> truths, preds;
  truths.reserve(test_set.size());
  preds.reserve(test_set.size());
  for (const auto& ex : test_set) {
    truths.push_back(ex.label);
    preds.push_back(classifier::predict(head, ex.vector).index);
  }
  return evaluate_predictions(name, truths, preds, head.scale);
}

EvalReport evaluate(const std::string& name, const TextScorer& scorer,
                    std::span<const classifier::LabeledText> test_set,
                    const DifficultyScale& scale) {
  if (test_set.empty()) throw Error(ErrorCode::invalid_argument, "empty test set");
  std::vector<ScoredItem> items;
  items.reserve(test_set.size());
  for (const auto& t : test_set) items.push_back({scale.index(t.label), scorer(t.text)});
  return evaluate_scores(name, items, scale);
}

std::vector<std::pair<std::string, TextScorer>> readability_scorers() {
  using namespace graded::readability;
  return {
      {"GFI", [](const std::string& t) { return gfi(textproc::text_stats(t)); }},
      {"ARI", [](const std::string& t) { return ari(textproc::text_stats(t)); }},
      {"FKGL", [](const std::string& t) { return fkgl(textproc::text_stats(t)); }},
  };
}

std::string serialize_report(const Experiment& experiment) {
  json reports = json::array();
  for (const auto& r : experiment.reports) {
    json j{{"name", r.name},
           {"n_items", r.n_items},
           {"kind", r.confusion ? "classifier" : "scorer"},
           {"mismatches", mismatch_json(r.mismatches, experiment.tie_policy)}};
    if (r.accuracy) j["accuracy"] = *r.accuracy;
    if (r.baseline_accuracy) j["baseline_accuracy"] = *r.baseline_accuracy;
    if (r.adjacency_mass) j["adjacency_mass"] = *r.adjacency_mass;
    if (r.confusion) {
      json rows = json::array();
      for (std::size_t t = 0; t < r.confusion->size(); ++t) {
        std::vector<std::uint64_t> row;
        for (std::size_t p = 0; p < r.confusion->size(); ++p) row.push_back(r.confusion->at(t, p));
        rows.push_back(row);
      }
      j["confusion"] = {{"labels", r.confusion->scale().labels()}, {"counts", rows}};
    }
    reports.push_back(std::move(j));
  }
  const json doc{{"format", "graded.eval-report"},
                 {"version", kReportFormatVersion},
                 {"dataset", experiment.dataset},
                 {"tie_policy", experiment.tie_policy == TiePolicy::half ? "half" : "strict"},
                 {"reports", std::move(reports)}};
  return doc.dump(2) + "\n";
}

std::string render_mismatch_table(std::span<const Experiment> experiments) {
  Table rows;
  std::vector<std::string> header{"Pairwise mismatches"};
  for (const auto& e : experiments) header.push_back(e.dataset);
  rows.push_back(header);
  const auto readability = row_names(experiments, true);
  for (bool section : {true, false}) {
    for (const auto& name : section ? readability : row_names(experiments, false)) {
      std::vector<std::string> row{name};
      for (const auto& e : experiments) {
        const EvalReport* r = find_report(e, name);
        row.push_back(r ? with_thousands(r->mismatches.value(e.tie_policy)) : "-");
      }
      rows.push_back(row);
    }
  }
  return render_table(rows, 1, readability.empty() ? 0 : 1 + readability.size());
}

std::string render_accuracy_table(std::span<const Experiment> experiments) {
  Table rows;
  std::vector<std::string> header{"Accuracy"};
  for (const auto& e : experiments) header.push_back(e.dataset);
  rows.push_back(header);
  std::vector<std::string> baseline{"Baseline"};
  for (const auto& e : experiments) {
    std::string cell = "-";
    for (const auto& r : e.reports) {
      if (r.baseline_accuracy) {
        cell = fixed2(*r.baseline_accuracy);
        break;
      }
    }
    baseline.push_back(cell);
  }
  rows.push_back(baseline);
  for (const auto& name : row_names(experiments, false)) {
    std::vector<std::string> row{name};
    for (const auto& e : experiments) {
      const EvalReport* r = find_report(e, name);
      row.push_back(r && r->accuracy ? fixed2(*r->accuracy) : "-");
    }
    rows.push_back(row);
  }
  return render_table(rows, 1, 2);
}

std::string render_confusion_svg(const ConfusionMatrix& cm, const std::string& title) {
  const std::size_t k = cm.size();
  constexpr int cell = 56, left = 80, top = 60;
  const int width = left + static_cast<int>(k) * cell + 20;
  const int height = top + static_cast<int>(k) * cell + 50;
  std::uint64_t peak = 0;
  for (auto c : cm.counts()) peak = std::max(peak, c);

  const auto escape = [](const std::string& s) {
    std::string out;
    for (char c : s) {
      switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out.push_back(c);
      }
    }
    return out;
  };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
     << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
     << escape(title) << "</text>\n";
  os << "<text x=\"" << left + static_cast<int>(k) * cell / 2 << "\" y=\"" << height - 8
     << "\" text-anchor=\"middle\">predicted</text>\n";
  os << "<text x=\"14\" y=\"" << top + static_cast<int>(k) * cell / 2
     << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
     << top + static_cast<int>(k) * cell / 2 << ")\">true</text>\n";
  for (std::size_t t = 0; t < k; ++t) {
    for (std::size_t p = 0; p < k; ++p) {
      const std::uint64_t c = cm.at(t, p);
      const double share = peak == 0 ? 0.0 : static_cast<double>(c) / static_cast<double>(peak);
      // white -> dark blue
      const int r = static_cast<int>(std::lround(255 - share * (255 - 8)));
      const int g = static_cast<int>(std::lround(255 - share * (255 - 48)));
      const int b = static_cast<int>(std::lround(255 - share * (255 - 107)));
      const int x = left + static_cast<int>(p) * cell;
      const int y = top + static_cast<int>(t) * cell;
      os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\""
         << cell << "\" fill=\"rgb(" << r << "," << g << "," << b
         << ")\" stroke=\"#999\"/>\n";
      os << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4
         << "\" text-anchor=\"middle\" fill=\"" << (share > 0.5 ? "#fff" : "#000") << "\">" << c
         << "</text>\n";
    }
    const std::string& label = cm.scale().label(t);
    os << "<text x=\"" << left - 8 << "\" y=\"" << top + static_cast<int>(t) * cell + cell / 2 + 4
       << "\" text-anchor=\"end\">" << escape(label) << "</text>\n";
    os << "<text x=\"" << left + static_cast<int>(t) * cell + cell / 2 << "\" y=\"" << top - 8
       << "\" text-anchor=\"middle\">" << escape(label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace graded::evaluation
