#include "graded/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <numeric>
#include <set>
#include <sstream>

#include "graded/error.hpp"
#include "graded/hashing.hpp"
#include "graded/random.hpp"

namespace graded::classifier {
namespace {

using json = nlohmann::json;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

void check_batch(const HeadParams& params, std::span<const LabeledVector> batch) {
  for (const auto& ex : batch) {
    if (ex.vector.dim() != params.dim) {
      throw Error(ErrorCode::embedding_contract,
                  "embedding contract: vector dim " + std::to_string(ex.vector.dim()) +
                      " != head dim " + std::to_string(params.dim));
    }
    if (ex.label >= params.num_classes()) {
      throw Error(ErrorCode::invalid_argument, "label index out of range");
    }
  }
}

double proximal(const HeadParams& params, const HeadParams& init) {
  double sq = 0.0;
  for (std::size_t i = 0; i < params.weights.size(); ++i) {
    const double d = params.weights[i] - init.weights[i];
    sq += d * d;
  }
  for (std::size_t i = 0; i < params.bias.size(); ++i) {
    const double d = params.bias[i] - init.bias[i];
    sq += d * d;
  }
  return sq;
}

void check_same_shape(const HeadParams& a, const HeadParams& b) {
  if (a.dim != b.dim || a.num_classes() != b.num_classes()) {
    throw Error(ErrorCode::invalid_argument, "parameter shapes differ from init");
  }
}

}  // namespace

DifficultyScale::DifficultyScale(std::vector<std::string> labels)
    : labels_(std::move(labels)) {
  if (labels_.size() < 2) {
    throw Error(ErrorCode::invalid_argument, "difficulty scale needs >= 2 labels");
  }
  std::set<std::string> unique(labels_.begin(), labels_.end());
  if (unique.size() != labels_.size()) {
    throw Error(ErrorCode::invalid_argument, "difficulty labels must be distinct");
  }
  if (unique.count("") != 0) {
    throw Error(ErrorCode::invalid_argument, "difficulty labels must be non-empty");
  }
}

DifficultyScale DifficultyScale::cefr() {
  return DifficultyScale({"A1", "A2", "B1", "B2", "C1", "C2"});
}

DifficultyScale DifficultyScale::parse(std::string_view comma_separated) {
  std::vector<std::string> labels;
  std::size_t start = 0;
  while (start <= comma_separated.size()) {
    const auto comma = comma_separated.find(',', start);
    const auto end = comma == std::string_view::npos ? comma_separated.size() : comma;
    labels.push_back(trim(comma_separated.substr(start, end - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return DifficultyScale(std::move(labels));
}

std::optional<std::size_t> DifficultyScale::find(std::string_view label) const {
  const auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - labels_.begin());
}

std::size_t DifficultyScale::index(std::string_view label) const {
  if (auto i = find(label)) return *i;
  throw Error(ErrorCode::invalid_argument,
              "label '" + std::string(label) + "' is not on the difficulty scale");
}

HeadParams HeadParams::zeros(DifficultyScale scale, std::string provider_id,
                             std::size_t dim) {
  HeadParams p;
  const std::size_t k = scale.size();
  p.scale = std::move(scale);
  p.provider_id = std::move(provider_id);
  p.dim = dim;
  p.weights.assign(k * dim, 0.0);
  p.bias.assign(k, 0.0);
  return p;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorCode::invalid_argument, "learning_rate must be > 0");
  }
  if (epochs < 1) throw Error(ErrorCode::invalid_argument, "epochs must be >= 1");
  if (batch_size < 1) throw Error(ErrorCode::invalid_argument, "batch_size must be >= 1");
  if (!(lambda >= 0.0)) throw Error(ErrorCode::invalid_argument, "lambda must be >= 0");
  if (!(init_std >= 0.0)) throw Error(ErrorCode::invalid_argument, "init_std must be >= 0");
}

std::string TrainConfig::digest() const {
  const json j{{"learning_rate", learning_rate}, {"epochs", epochs},
               {"batch_size", batch_size},       {"lambda", lambda},
               {"seed", seed},                   {"init_std", init_std}};
  return sha256_hex(j.dump());
}

std::vector<double> softmax(std::span<const double> z) {
  std::vector<double> p(z.begin(), z.end());
  if (p.empty()) return p;
  const double m = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (double& x : p) {
    x = std::exp(x - m);
    sum += x;
  }
  for (double& x : p) x /= sum;
  return p;
}

std::vector<double> logits(const HeadParams& params, std::span<const double> x) {
  std::vector<double> z(params.bias);
  for (std::size_t k = 0; k < params.num_classes(); ++k) {
    const double* row = params.weights.data() + k * params.dim;
    double acc = 0.0;
    for (std::size_t j = 0; j < params.dim; ++j) acc += row[j] * x[j];
    z[k] += acc;
  }
  return z;
}

Prediction predict(const HeadParams& params, const embedding::EmbeddingVector& v) {
  if (v.dim() != params.dim) {
    throw Error(ErrorCode::embedding_contract,
                "embedding contract: vector dim " + std::to_string(v.dim()) +
                    " != head dim " + std::to_string(params.dim));
  }
  if (v.provider_id != params.provider_id) {
    throw Error(ErrorCode::embedding_contract,
                "embedding contract: vector from '" + v.provider_id +
                    "', head expects '" + params.provider_id + "'");
  }
  Prediction out;
  out.probs = softmax(logits(params, v.values));
  // max_element returns the first maximum, i.e. the lowest index on ties
  out.index = static_cast<std::size_t>(
      std::max_element(out.probs.begin(), out.probs.end()) - out.probs.begin());
  out.label = params.scale.label(out.index);
  return out;
}

double loss(const HeadParams& params, std::span<const LabeledVector> batch,
            const HeadParams& init, double lambda) {
  if (batch.empty()) throw Error(ErrorCode::invalid_argument, "loss needs a non-empty batch");
  check_same_shape(params, init);
  check_batch(params, batch);
  double total = 0.0;
  for (const auto& ex : batch) {
    const auto z = logits(params, ex.vector.values);
    const double m = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double zk : z) sum += std::exp(zk - m);
    total += (m + std::log(sum)) - z[ex.label];
  }
  double value = total / static_cast<double>(batch.size());
  if (lambda != 0.0) value += lambda * proximal(params, init);
  return value;
}

Gradient gradient(const HeadParams& params, std::span<const LabeledVector> batch,
                  const HeadParams& init, double lambda) {
  if (batch.empty()) {
    throw Error(ErrorCode::invalid_argument, "gradient needs a non-empty batch");
  }
  check_same_shape(params, init);
  check_batch(params, batch);
  const std::size_t k_classes = params.num_classes();
  const std::size_t dim = params.dim;
  Gradient g{std::vector<double>(k_classes * dim, 0.0),
             std::vector<double>(k_classes, 0.0)};
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto& ex : batch) {
    auto p = softmax(logits(params, ex.vector.values));
    p[ex.label] -= 1.0;
    for (std::size_t k = 0; k < k_classes; ++k) {
      const double coeff = p[k] * scale;
      g.bias[k] += coeff;
      if (coeff == 0.0) continue;
      double* row = g.weights.data() + k * dim;
      for (std::size_t j = 0; j < dim; ++j) row[j] += coeff * ex.vector.values[j];
    }
  }
  if (lambda != 0.0) {
    for (std::size_t i = 0; i < g.weights.size(); ++i) {
      g.weights[i] += 2.0 * lambda * (params.weights[i] - init.weights[i]);
    }
    for (std::size_t i = 0; i < g.bias.size(); ++i) {
      g.bias[i] += 2.0 * lambda * (params.bias[i] - init.bias[i]);
    }
  }
  return g;
}

TrainResult train_head(std::span<const LabeledVector> examples,
                       const DifficultyScale& scale, std::string provider_id,
                       std::size_t dim, const TrainConfig& cfg,
                       const std::optional<HeadParams>& init) {
  cfg.validate();
  std::set<std::size_t> distinct;
  for (const auto& ex : examples) distinct.insert(ex.label);
  if (distinct.size() < 2) {
    throw Error(ErrorCode::degenerate_training_set,
                "degenerate training set: need examples of at least 2 labels");
  }

  Rng rng(cfg.seed);
  HeadParams start;
  if (init) {
    start = *init;
    if (start.dim != dim || start.scale != scale) {
      throw Error(ErrorCode::invalid_argument, "warm start does not match the head shape");
    }
  } else {
    start = HeadParams::zeros(scale, provider_id, dim);
    if (cfg.init_std > 0.0) {
      for (double& w : start.weights) w = cfg.init_std * rng.normal();
      for (double& b : start.bias) b = cfg.init_std * rng.normal();
    }
  }
  start.provider_id = provider_id;

  TrainResult result;
  result.params = start;
  HeadParams& params = result.params;
  check_batch(params, examples);
  result.initial_loss = loss(params, examples, start, cfg.lambda);

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<LabeledVector> batch;
  batch.reserve(cfg.batch_size);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      batch.clear();
      for (std::size_t i = begin; i < end; ++i) batch.push_back(examples[order[i]]);
      const Gradient g = gradient(params, batch, start, cfg.lambda);
      for (std::size_t i = 0; i < g.weights.size(); ++i) {
        params.weights[i] -= cfg.learning_rate * g.weights[i];
      }
      for (std::size_t i = 0; i < g.bias.size(); ++i) {
        params.bias[i] -= cfg.learning_rate * g.bias[i];
      }
    }
    result.epoch_losses.push_back(loss(params, examples, start, cfg.lambda));
  }
  result.final_loss = result.epoch_losses.back();
  for (double w : params.weights) {
    if (!std::isfinite(w)) {
      throw Error(ErrorCode::invalid_argument,
                  "training diverged (non-finite weights); lower the learning rate");
    }
  }
  return result;
}

TrainResult train(std::span<const LabeledText> dataset, const DifficultyScale& scale,
                  const TrainConfig& cfg, embedding::EmbeddingProvider& provider,
                  std::size_t max_words) {
  cfg.validate();
  if (dataset.empty()) {
    throw Error(ErrorCode::degenerate_training_set, "degenerate training set: empty");
  }
  std::vector<std::string> texts;
  texts.reserve(dataset.size());
  std::vector<std::size_t> labels;
  for (const auto& item : dataset) {
    texts.push_back(item.text);
    labels.push_back(scale.index(item.label));
  }
  if (std::set<std::size_t>(labels.begin(), labels.end()).size() < 2) {
    throw Error(ErrorCode::degenerate_training_set,
                "degenerate training set: need examples of at least 2 labels");
  }
  auto vectors = embedding::embed_batch(texts, provider, max_words);
  std::vector<LabeledVector> examples;
  examples.reserve(vectors.size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    examples.push_back({std::move(vectors[i]), labels[i]});
  }
  return train_head(examples, scale, provider.id(), provider.dim(), cfg);
}

HeadParams train(std::span<const LabeledText> dataset, const DifficultyScale& scale,
                 const TrainConfig& cfg, const embedding::ProviderConfig& provider) {
  auto p = embedding::make_provider(provider);
  return train(dataset, scale, cfg, *p, provider.max_words).params;
}

SplitIndices split_indices(std::span<const std::string> labels, double ratio,
                           std::uint64_t seed, bool stratified) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw Error(ErrorCode::invalid_argument, "split ratio must be in (0, 1)");
  }
  if (labels.size() < 2) {
    throw Error(ErrorCode::invalid_argument, "split needs at least 2 items");
  }
  Rng rng(seed);
  SplitIndices out;
  const auto take = [&](std::vector<std::size_t> group) {
    rng.shuffle(group);
    const auto n = static_cast<long long>(group.size());
    const long long n_train =
        std::clamp(std::llround(ratio * static_cast<double>(n)), 1LL, n - 1);
    for (long long i = 0; i < n; ++i) {
      (i < n_train ? out.train : out.test).push_back(group[static_cast<std::size_t>(i)]);
    }
  };
  if (stratified) {
    std::map<std::string, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < labels.size(); ++i) by_label[labels[i]].push_back(i);
    for (const auto& [label, group] : by_label) {
      if (group.size() < 2) {
        throw Error(ErrorCode::insufficient_class_support,
                    "insufficient class support: label '" + label + "' has " +
                        std::to_string(group.size()) + " item(s)");
      }
    }
    for (auto& [label, group] : by_label) take(std::move(group));
  } else {
    std::vector<std::size_t> all(labels.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    take(std::move(all));
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

Split train_test_split(std::span<const LabeledText> dataset, double ratio,
                       std::uint64_t seed, bool stratified) {
  std::vector<std::string> labels;
  labels.reserve(dataset.size());
  for (const auto& d : dataset) labels.push_back(d.label);
  const auto idx = split_indices(labels, ratio, seed, stratified);
  Split out;
  for (auto i : idx.train) out.train.push_back(dataset[i]);
  for (auto i : idx.test) out.test.push_back(dataset[i]);
  return out;
}

std::vector<LabeledText> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::format, "cannot open dataset " + path.string());
  std::vector<LabeledText> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto j = json::parse(line);
      LabeledText item;
      item.text = j.at("text").get<std::string>();
      item.label = j.at("label").get<std::string>();
      item.source_id = j.value("source_id", std::string{});
      if (trim(item.text).empty()) {
        throw Error(ErrorCode::format, "empty text");
      }
      out.push_back(std::move(item));
    } catch (const std::exception& e) {
      throw Error(ErrorCode::format, path.string() + ":" + std::to_string(line_no) +
                                         ": bad dataset record: " + e.what());
    }
  }
  return out;
}

void save_dataset(const std::filesystem::path& path,
                  std::span<const LabeledText> dataset) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::storage, "cannot write dataset " + path.string());
  for (const auto& d : dataset) {
    out << json{{"text", d.text}, {"label", d.label}, {"source_id", d.source_id}}.dump()
        << '\n';
  }
}

std::string serialize_model(const ModelFile& model) {
  const HeadParams& p = model.params;
  json weights = json::array();
  for (std::size_t k = 0; k < p.num_classes(); ++k) {
    weights.push_back(std::vector<double>(p.weights.begin() + k * p.dim,
                                          p.weights.begin() + (k + 1) * p.dim));
  }
  const auto& pc = model.provider;
  json j{{"format", "graded.model"},
         {"version", kModelFormatVersion},
         {"scale", p.scale.labels()},
         {"provider_id", p.provider_id},
         {"dim", p.dim},
         {"provider",
          {{"endpoint", pc.endpoint},
           {"model", pc.model},
           {"seed", pc.seed},
           {"max_words", pc.max_words},
           {"batch_size", pc.batch_size}}},
         {"train_config_digest", model.train_config_digest},
         {"weights", std::move(weights)},
         {"bias", p.bias}};
  return j.dump(1) + "\n";
}

ModelFile parse_model(std::string_view text) {
  try {
    const auto j = json::parse(text);
    if (j.at("format").get<std::string>() != "graded.model") {
      throw Error(ErrorCode::format, "not a graded model file");
    }
    if (j.at("version").get<int>() != kModelFormatVersion) {
      throw Error(ErrorCode::format, "unsupported model version " +
                                         std::to_string(j.at("version").get<int>()));
    }
    ModelFile m;
    m.params = HeadParams::zeros(DifficultyScale(j.at("scale").get<std::vector<std::string>>()),
                                 j.at("provider_id").get<std::string>(),
                                 j.at("dim").get<std::size_t>());
    const auto& rows = j.at("weights");
    if (rows.size() != m.params.num_classes()) throw Error(ErrorCode::format, "weight rows");
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto row = rows[k].get<std::vector<double>>();
      if (row.size() != m.params.dim) throw Error(ErrorCode::format, "weight row width");
      std::copy(row.begin(), row.end(), m.params.weights.begin() + k * m.params.dim);
    }
    m.params.bias = j.at("bias").get<std::vector<double>>();
    if (m.params.bias.size() != m.params.num_classes()) throw Error(ErrorCode::format, "bias size");
    const auto& pc = j.at("provider");
    m.provider.provider_id = m.params.provider_id;
    m.provider.dim = m.params.dim;
    m.provider.endpoint = pc.at("endpoint").get<std::string>();
    m.provider.model = pc.value("model", std::string{});
    m.provider.seed = pc.value("seed", std::uint64_t{42});
    m.provider.max_words = pc.value("max_words", std::size_t{2000});
    m.provider.batch_size = pc.value("batch_size", std::size_t{32});
    m.train_config_digest = j.value("train_config_digest", std::string{});
    return m;
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::format, std::string("malformed model file: ") + e.what());
  }
}

void save_model(const std::filesystem::path& path, const ModelFile& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::storage, "cannot write model " + path.string());
  out << serialize_model(model);
  if (!out) throw Error(ErrorCode::storage, "cannot write model " + path.string());
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::format, "cannot open model " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

}  // namespace graded::classifier
