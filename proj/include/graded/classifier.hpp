#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "graded/embedding.hpp"

namespace graded::classifier {

// Ordered difficulty labels; index 0 is the easiest class.
class DifficultyScale {
 public:
  explicit DifficultyScale(std::vector<std::string> labels);

  static DifficultyScale cefr();
  // "A1,A2,B1" -> scale; whitespace around labels is trimmed.
  static DifficultyScale parse(std::string_view comma_separated);

  std::size_t size() const noexcept { return labels_.size(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const std::string& label(std::size_t index) const { return labels_.at(index); }

  // Throws Error(invalid_argument) for labels outside the scale.
  std::size_t index(std::string_view label) const;
  std::optional<std::size_t> find(std::string_view label) const;
  bool contains(std::string_view label) const { return find(label).has_value(); }

  friend bool operator==(const DifficultyScale&, const DifficultyScale&) = default;

 private:
  std::vector<std::string> labels_;
};

struct LabeledText {
  std::string text;
  std::string label;
  std::string source_id;
};

// Softmax head: logits = W x + b with W stored row-major (K x dim).
struct HeadParams {
  DifficultyScale scale{{"easy", "hard"}};
  std::string provider_id;
  std::size_t dim = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  static HeadParams zeros(DifficultyScale scale, std::string provider_id,
                          std::size_t dim);

  std::size_t num_classes() const noexcept { return scale.size(); }
  double& w(std::size_t k, std::size_t j) { return weights[k * dim + j]; }
  double w(std::size_t k, std::size_t j) const { return weights[k * dim + j]; }

  friend bool operator==(const HeadParams&, const HeadParams&) = default;
};

struct TrainConfig {
  double learning_rate = 0.1;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double lambda = 0.0;  // proximal weight toward the initial parameters
  std::uint64_t seed = 7;
  double init_std = 0.0;

  void validate() const;
  // SHA-256 over a canonical rendering of every field.
  std::string digest() const;
};

struct LabeledVector {
  embedding::EmbeddingVector vector;
  std::size_t label = 0;  // scale index
};

struct Prediction {
  std::size_t index = 0;
  std::string label;
  std::vector<double> probs;
};

std::vector<double> softmax(std::span<const double> logits);

std::vector<double> logits(const HeadParams& params, std::span<const double> x);

// probs = softmax(W v + b); ties in argmax go to the lowest index. Throws
// Error(embedding_contract) on a dim or provider mismatch.
Prediction predict(const HeadParams& params, const embedding::EmbeddingVector& v);

// Mean cross-entropy over the batch plus
// lambda * (||W - W0||_F^2 + ||b - b0||^2).
double loss(const HeadParams& params, std::span<const LabeledVector> batch,
            const HeadParams& init, double lambda);

struct Gradient {
  std::vector<double> weights;
  std::vector<double> bias;
};

Gradient gradient(const HeadParams& params, std::span<const LabeledVector> batch,
                  const HeadParams& init, double lambda);

struct TrainResult {
  HeadParams params;
  double initial_loss = 0.0;  // full-data objective at initialization
  double final_loss = 0.0;    // full-data objective after the last epoch
  std::vector<double> epoch_losses;
};

// Seeded, shuffled mini-batch gradient descent. `init`, when given, is the
// warm start and the proximal anchor; otherwise W, b ~ Normal(0, init_std).
TrainResult train_head(std::span<const LabeledVector> examples,
                       const DifficultyScale& scale, std::string provider_id,
                       std::size_t dim, const TrainConfig& cfg,
                       const std::optional<HeadParams>& init = std::nullopt);

// Embeds the dataset through the provider, then trains the head.
TrainResult train(std::span<const LabeledText> dataset, const DifficultyScale& scale,
                  const TrainConfig& cfg, embedding::EmbeddingProvider& provider,
                  std::size_t max_words = 2000);

HeadParams train(std::span<const LabeledText> dataset, const DifficultyScale& scale,
                 const TrainConfig& cfg, const embedding::ProviderConfig& provider);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// `ratio` is the train share. Index lists come back in ascending order.
SplitIndices split_indices(std::span<const std::string> labels, double ratio,
                           std::uint64_t seed, bool stratified);

struct Split {
  std::vector<LabeledText> train;
  std::vector<LabeledText> test;
};

Split train_test_split(std::span<const LabeledText> dataset, double ratio,
                       std::uint64_t seed, bool stratified = true);

// JSON-lines: {"text": ..., "label": ..., "source_id": ...} per line.
std::vector<LabeledText> load_dataset(const std::filesystem::path& path);
void save_dataset(const std::filesystem::path& path,
                  std::span<const LabeledText> dataset);

struct ModelFile {
  HeadParams params;
  embedding::ProviderConfig provider;
  std::string train_config_digest;
};

inline constexpr int kModelFormatVersion = 1;

std::string serialize_model(const ModelFile& model);
ModelFile parse_model(std::string_view text);
void save_model(const std::filesystem::path& path, const ModelFile& model);
ModelFile load_model(const std::filesystem::path& path);

}  // namespace graded::classifier
