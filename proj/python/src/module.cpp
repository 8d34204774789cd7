#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "graded/classifier.hpp"
#include "graded/embedding.hpp"
#include "graded/error.hpp"
#include "graded/evaluation.hpp"
#include "graded/readability.hpp"
#include "graded/recommender.hpp"
#include "graded/textproc.hpp"
#include "graded/topics.hpp"

namespace py = pybind11;
using namespace graded;

namespace {

py::dict stats_dict(const textproc::TextStats& s) {
  py::dict d;
  d["sentences"] = s.n_sentences;
  d["words"] = s.n_words;
  d["chars"] = s.n_chars;
  d["syllables"] = s.n_syllables;
  d["complex_words"] = s.n_complex_words;
  return d;
}

std::vector<std::size_t> indices(const std::vector<std::string>& labels,
                                 const classifier::DifficultyScale& scale) {
  std::vector<std::size_t> out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.push_back(scale.index(l));
  return out;
}

// A trained head together with the provider that produced its training
// vectors, as stored in a model file.
class Model {
 public:
  explicit Model(classifier::ModelFile file)
      : file_(std::move(file)), provider_(embedding::make_provider(file_.provider)) {}

  static Model train(const std::vector<std::string>& texts, const std::vector<std::string>& labels,
                     const std::vector<std::string>& scale, std::size_t epochs, double lr,
                     double lambda, std::size_t batch_size, std::uint64_t seed, std::size_t dim) {
    if (texts.size() != labels.size())
      throw Error(ErrorCode::invalid_argument, "texts and labels differ in length");
    std::vector<classifier::LabeledText> dataset;
    for (std::size_t i = 0; i < texts.size(); ++i) dataset.push_back({texts[i], labels[i], ""});
    classifier::TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.learning_rate = lr;
    cfg.lambda = lambda;
    cfg.batch_size = batch_size;
    cfg.seed = seed;
    cfg.validate();
    embedding::ProviderConfig pc;
    pc.dim = dim;
    pc.validate();
    auto provider = embedding::make_provider(pc);
    classifier::ModelFile file;
    file.params = classifier::train(dataset, classifier::DifficultyScale(scale), cfg, *provider,
                                    pc.max_words)
                      .params;
    file.provider = pc;
    file.train_config_digest = cfg.digest();
    return Model(std::move(file));
  }

  static Model load(const std::filesystem::path& path) { return Model(classifier::load_model(path)); }
  static Model from_json(const std::string& text) { return Model(classifier::parse_model(text)); }

  void save(const std::filesystem::path& path) const { classifier::save_model(path, file_); }
  std::string to_json() const { return classifier::serialize_model(file_); }

  py::dict predict(const std::string& text) const {
    const std::vector<std::string> one{text};
    const auto v = embedding::embed_batch(one, *provider_, file_.provider.max_words);
    const auto p = classifier::predict(file_.params, v.at(0));
    py::dict d;
    d["label"] = p.label;
    d["index"] = p.index;
    d["probs"] = p.probs;
    return d;
  }

  const std::vector<std::string>& labels() const { return file_.params.scale.labels(); }
  const std::string& provider_id() const { return file_.params.provider_id; }
  std::size_t dim() const { return file_.params.dim; }

 private:
  classifier::ModelFile file_;
  std::shared_ptr<embedding::EmbeddingProvider> provider_;
};

}  // namespace

PYBIND11_MODULE(_graded, m) {
  m.doc() = "Text difficulty grading, evaluation and learner-model helpers";

  static py::exception<Error> graded_error(m, "GradedError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      // args == (code, message)
      py::object args = py::make_tuple(std::string(to_string(e.code())), std::string(e.what()));
      PyErr_SetObject(graded_error.ptr(), args.ptr());
    }
  });

  // text
  m.def("segment_sentences", [](const std::string& text) {
    std::vector<std::string> out;
    for (const auto& s : textproc::segment_sentences(text)) out.push_back(s.text);
    return out;
  });
  m.def("tokenize", [](const std::string& text) {
    std::vector<std::pair<std::string, bool>> out;
    for (const auto& t : textproc::tokenize(text)) out.emplace_back(t.surface, t.is_word);
    return out;
  }, "(surface, is_word) pairs in text order");
  m.def("count_syllables", [](const std::string& w) { return textproc::count_syllables(w); });
  m.def("word_count", [](const std::string& t) { return textproc::word_count(t); });
  m.def("text_stats", [](const std::string& t) { return stats_dict(textproc::text_stats(t)); });

  m.def("readability", [](const std::string& text) {
    const auto r = readability::score_all(text);
    py::dict d;
    d["gfi"] = r.gfi;
    d["ari"] = r.ari;
    d["fkgl"] = r.fkgl;
    d["stats"] = stats_dict(r.stats);
    return d;
  }, "GFI, ARI and FKGL of a text");

  m.def("hash_embed", [](const std::string& text, std::size_t dim, std::uint64_t seed) {
    return embedding::hash_embed(text, dim, seed).values;
  }, py::arg("text"), py::arg("dim") = 256, py::arg("seed") = 42);

  py::class_<Model>(m, "Model")
      .def_static("train", &Model::train, py::arg("texts"), py::arg("labels"), py::arg("scale"),
                  py::arg("epochs") = 50, py::arg("lr") = 0.1, py::arg("lam") = 0.0,
                  py::arg("batch_size") = 32, py::arg("seed") = 7, py::arg("dim") = 256,
                  "Train a head over local-hash embeddings")
      .def_static("load", &Model::load)
      .def_static("from_json", &Model::from_json)
      .def("save", &Model::save)
      .def("to_json", &Model::to_json)
      .def("predict", &Model::predict)
      .def_property_readonly("labels", &Model::labels)
      .def_property_readonly("provider_id", &Model::provider_id)
      .def_property_readonly("dim", &Model::dim);

  // evaluation over label names
  m.def("confusion_matrix", [](const std::vector<std::string>& truths,
                               const std::vector<std::string>& preds,
                               const std::vector<std::string>& scale) {
    const classifier::DifficultyScale s(scale);
    const auto cm = evaluation::confusion_matrix(truths, preds, s);
    std::vector<std::vector<std::uint64_t>> rows(s.size(), std::vector<std::uint64_t>(s.size()));
    for (std::size_t a = 0; a < s.size(); ++a)
      for (std::size_t b = 0; b < s.size(); ++b) rows[a][b] = cm.at(a, b);
    return rows;
  }, "Rows are true labels, columns predicted labels");
  m.def("accuracy", [](const std::vector<std::string>& truths, const std::vector<std::string>& preds,
                       const std::vector<std::string>& scale) {
    return evaluation::accuracy(
        evaluation::confusion_matrix(truths, preds, classifier::DifficultyScale(scale)));
  });
  m.def("adjacency_mass", [](const std::vector<std::string>& truths,
                             const std::vector<std::string>& preds,
                             const std::vector<std::string>& scale) {
    return evaluation::adjacency_mass(
        evaluation::confusion_matrix(truths, preds, classifier::DifficultyScale(scale)));
  });
  m.def("baseline_accuracy", [](const std::vector<std::string>& labels) {
    std::map<std::string, std::uint64_t> counts;
    for (const auto& l : labels) ++counts[l];
    return evaluation::baseline_accuracy(counts);
  });
  m.def("pairwise_mismatches", [](const std::vector<std::string>& truths,
                                  const std::vector<std::string>& preds,
                                  const std::vector<std::string>& scale) {
    const auto mc = evaluation::pairwise_mismatches_cm(
        evaluation::confusion_matrix(truths, preds, classifier::DifficultyScale(scale)));
    return std::make_pair(mc.strict, mc.ties);
  }, "(strict, ties) counts over predicted labels");
  m.def("score_mismatches", [](const std::vector<std::string>& truths,
                               const std::vector<double>& scores,
                               const std::vector<std::string>& scale) {
    const classifier::DifficultyScale s(scale);
    if (truths.size() != scores.size())
      throw Error(ErrorCode::invalid_argument, "truths and scores differ in length");
    std::vector<evaluation::ScoredItem> items;
    const auto idx = indices(truths, s);
    for (std::size_t i = 0; i < idx.size(); ++i) items.push_back({idx[i], scores[i]});
    const auto mc = evaluation::pairwise_mismatches_scores(items, s);
    return std::make_pair(mc.strict, mc.ties);
  }, "(strict, ties) counts for a continuous scorer");

  // learner model
  m.def("difficulty_score", &recommender::difficulty_score, py::arg("level_estimate"),
        py::arg("item_index"), py::arg("num_levels"), py::arg("stretch") = 0.5);
  m.def("update_level", [](double level, std::size_t item_index, const std::string& verdict,
                           std::size_t num_levels, double alpha) {
    recommender::LearnerProfile p;
    p.user_id = "python";
    p.level_estimate = level;
    recommender::FeedbackEvent e;
    e.item_id = "item";
    e.verdict = recommender::parse_verdict(verdict);
    e.item_difficulty_index = item_index;
    return recommender::apply_feedback(std::move(p), e, num_levels, alpha).level_estimate;
  }, py::arg("level_estimate"), py::arg("item_index"), py::arg("verdict"), py::arg("num_levels"),
     py::arg("alpha") = 0.2, "Level estimate after one explicit difficulty verdict");

  m.def("keyword_topics", [](const std::string& text, const std::string& lexicon,
                             double threshold) {
    std::map<std::string, double> out;
    for (const auto& a : topics::keyword_fallback(text, topics::parse_lexicon(lexicon), threshold))
      if (a.accepted) out[a.topic] = a.confidence;
    return out;
  }, py::arg("text"), py::arg("lexicon"), py::arg("threshold") = 0.5,
     "Accepted topics from a tab-separated lexicon");
}
