#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>

#include "graded/classifier.hpp"
#include "graded/error.hpp"
#include "graded/random.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

using namespace graded;
using namespace graded::classifier;
using embedding::EmbeddingVector;

namespace {

HeadParams random_head(std::size_t k, std::size_t dim, Rng& rng, double scale = 0.5) {
  auto p = HeadParams::zeros(testing::numbered_scale(k), "synthetic", dim);
  for (double& w : p.weights) w = scale * rng.normal();
  for (double& b : p.bias) b = scale * rng.normal();
  return p;
}

std::vector<LabeledVector> random_batch(std::size_t n, std::size_t k, std::size_t dim,
                                        Rng& rng) {
  std::vector<LabeledVector> out(n);
  for (auto& ex : out) {
    ex.vector.provider_id = "synthetic";
    ex.vector.values.resize(dim);
    for (double& x : ex.vector.values) x = rng.normal();
    ex.label = static_cast<std::size_t>(rng.below(k));
  }
  return out;
}

double training_accuracy(const HeadParams& p, const std::vector<LabeledVector>& data) {
  std::size_t correct = 0;
  for (const auto& ex : data) correct += predict(p, ex.vector).index == ex.label;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

double distance_sq(const HeadParams& a, const HeadParams& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.weights.size(); ++i) {
    s += (a.weights[i] - b.weights[i]) * (a.weights[i] - b.weights[i]);
  }
  for (std::size_t i = 0; i < a.bias.size(); ++i) {
    s += (a.bias[i] - b.bias[i]) * (a.bias[i] - b.bias[i]);
  }
  return s;
}

}  // namespace

TEST_SUITE("classifier") {
  TEST_CASE("difficulty scale") {
    const auto cefr = DifficultyScale::cefr();
    CHECK(cefr.size() == 6);
    CHECK(cefr.index("B1") == 2);
    CHECK_FALSE(cefr.find("Z9").has_value());
    CHECK_THROWS_AS(cefr.index("Z9"), Error);
    CHECK(DifficultyScale::parse("level1, level2 ,level3").labels() ==
          std::vector<std::string>{"level1", "level2", "level3"});
    CHECK_THROWS_AS(DifficultyScale({"A1"}), Error);
    CHECK_THROWS_AS(DifficultyScale({"A1", "A1"}), Error);
    CHECK_THROWS_AS(DifficultyScale::parse("A1,,B1"), Error);
  }

  TEST_CASE("predict: zero parameters give a uniform distribution") {
    const auto p = HeadParams::zeros(DifficultyScale::cefr(), "local-hash", 8);
    const EmbeddingVector v{std::vector<double>(8, 0.3), "local-hash"};
    const auto out = predict(p, v);
    CHECK(out.index == 0);
    CHECK(out.label == "A1");
    for (double x : out.probs) CHECK(std::abs(x - 1.0 / 6.0) < 1e-12);
  }

  TEST_CASE("predict: a dominant bias wins") {
    auto p = HeadParams::zeros(DifficultyScale::cefr(), "local-hash", 8);
    p.bias[0] = 10.0;
    const auto out = predict(p, EmbeddingVector{std::vector<double>(8, 1.0), "local-hash"});
    CHECK(out.label == "A1");
    CHECK(out.probs[0] > 0.99);
    // by hand: e^10 / (e^10 + 5)
    CHECK(std::abs(out.probs[0] - std::exp(10.0) / (std::exp(10.0) + 5.0)) < 1e-12);
  }

  TEST_CASE("predict: probabilities form a distribution; shift invariance") {
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
      auto p = random_head(4, 6, rng, 3.0);
      const auto batch = random_batch(1, 4, 6, rng);
      const auto out = predict(p, batch[0].vector);
      double sum = 0.0;
      for (double x : out.probs) {
        CHECK(x >= 0.0);
        sum += x;
      }
      CHECK(std::abs(sum - 1.0) < 1e-9);
      for (double& b : p.bias) b += 123.456;
      CHECK(predict(p, batch[0].vector).index == out.index);
    }
  }

  TEST_CASE("predict: embedding contract") {
    const auto p = HeadParams::zeros(DifficultyScale::cefr(), "local-hash", 8);
    try {
      predict(p, EmbeddingVector{std::vector<double>(7, 0.0), "local-hash"});
      FAIL("expected embedding contract error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::embedding_contract);
    }
    CHECK_THROWS_AS(predict(p, EmbeddingVector{std::vector<double>(8, 0.0), "other"}), Error);
  }

  TEST_CASE("loss: uniform prediction and proximal term at init") {
    const auto p = HeadParams::zeros(DifficultyScale::cefr(), "synthetic", 5);
    Rng rng(2);
    const auto batch = random_batch(9, 6, 5, rng);
    CHECK(std::abs(loss(p, batch, p, 0.0) - std::log(6.0)) < 1e-12);
    CHECK(std::abs(loss(p, batch, p, 0.0) - 1.7918) < 1e-4);
    const auto q = random_head(6, 5, rng);
    CHECK(loss(q, batch, q, 0.0) == loss(q, batch, q, 1.0));
    CHECK_THROWS_AS(loss(p, std::vector<LabeledVector>{}, p, 0.0), Error);
  }

  TEST_CASE("loss matches a straight-line recomputation") {
    Rng rng(23);
    for (int trial = 0; trial < 20; ++trial) {
      const auto p = random_head(3, 8, rng);
      const auto init = random_head(3, 8, rng);
      const auto batch = random_batch(7, 3, 8, rng);
      std::vector<std::vector<double>> xs;
      std::vector<std::size_t> ys;
      for (const auto& ex : batch) {
        xs.push_back(ex.vector.values);
        ys.push_back(ex.label);
      }
      const double lambda = 0.3 * rng.uniform();
      const double ref =
          oracle::reference_loss(p.weights, p.bias, init.weights, init.bias, xs, ys, lambda);
      CHECK(std::abs(loss(p, batch, init, lambda) - ref) < 1e-9);
    }
  }

  TEST_CASE("gradient agrees with central finite differences") {
    Rng rng(31);
    const double h = 1e-4;
    for (int trial = 0; trial < 5; ++trial) {
      auto p = random_head(3, 8, rng);
      const auto init = random_head(3, 8, rng);
      const auto batch = random_batch(12, 3, 8, rng);
      const double lambda = 0.1;
      const auto g = gradient(p, batch, init, lambda);
      for (std::size_t i = 0; i < p.weights.size(); ++i) {
        const double saved = p.weights[i];
        p.weights[i] = saved + h;
        const double up = loss(p, batch, init, lambda);
        p.weights[i] = saved - h;
        const double down = loss(p, batch, init, lambda);
        p.weights[i] = saved;
        const double fd = (up - down) / (2 * h);
        CHECK(std::abs(g.weights[i] - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
      }
      for (std::size_t i = 0; i < p.bias.size(); ++i) {
        const double saved = p.bias[i];
        p.bias[i] = saved + h;
        const double up = loss(p, batch, init, lambda);
        p.bias[i] = saved - h;
        const double down = loss(p, batch, init, lambda);
        p.bias[i] = saved;
        const double fd = (up - down) / (2 * h);
        CHECK(std::abs(g.bias[i] - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
      }
    }
  }

  TEST_CASE("gradient: lambda contributes exactly 2 lambda (theta - init)") {
    Rng rng(8);
    const auto p = random_head(4, 5, rng);
    const auto init = random_head(4, 5, rng);
    const auto batch = random_batch(6, 4, 5, rng);
    const auto g0 = gradient(p, batch, init, 0.0);
    const auto g1 = gradient(p, batch, init, 0.7);
    for (std::size_t i = 0; i < p.weights.size(); ++i) {
      CHECK(std::abs((g1.weights[i] - g0.weights[i]) - 1.4 * (p.weights[i] - init.weights[i])) <
            1e-12);
    }
    for (std::size_t i = 0; i < p.bias.size(); ++i) {
      CHECK(std::abs((g1.bias[i] - g0.bias[i]) - 1.4 * (p.bias[i] - init.bias[i])) < 1e-12);
    }
  }

  TEST_CASE("gradient vanishes at the regularized optimum") {
    const auto data = testing::ordinal_gaussians({3, 30, 4, 3.0, 1.0, 5});
    TrainConfig cfg;
    cfg.learning_rate = 0.5;
    cfg.epochs = 3000;
    cfg.batch_size = data.size();  // full batch
    cfg.lambda = 0.05;
    const auto result = train_head(data, testing::numbered_scale(3), "synthetic", 4, cfg);
    const auto init = HeadParams::zeros(testing::numbered_scale(3), "synthetic", 4);
    const auto g = gradient(result.params, data, init, cfg.lambda);
    double norm = 0.0;
    for (double x : g.weights) norm += x * x;
    for (double x : g.bias) norm += x * x;
    CHECK(std::sqrt(norm) < 1e-6);
  }

  TEST_CASE("train: separable three-class data") {
    const auto data = testing::ordinal_gaussians({3, 200, 16, 3.0, 1.0, 42});
    TrainConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.epochs = 30;
    cfg.batch_size = 32;
    const auto result = train_head(data, testing::numbered_scale(3), "synthetic", 16, cfg);
    CHECK(training_accuracy(result.params, data) >= 0.99);
    CHECK(result.final_loss <= result.initial_loss);
    CHECK(result.epoch_losses.size() == 30);
  }

  TEST_CASE("train: deterministic per seed") {
    const auto data = testing::ordinal_gaussians({3, 50, 8, 2.0, 1.0, 9});
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 7;
    cfg.init_std = 0.1;
    const auto a = train_head(data, testing::numbered_scale(3), "synthetic", 8, cfg);
    const auto b = train_head(data, testing::numbered_scale(3), "synthetic", 8, cfg);
    CHECK(a.params == b.params);
    cfg.seed += 1;
    const auto c = train_head(data, testing::numbered_scale(3), "synthetic", 8, cfg);
    CHECK_FALSE(a.params == c.params);
  }

  TEST_CASE("train: configuration and data validation") {
    const auto data = testing::ordinal_gaussians({2, 10, 4, 2.0, 1.0, 3});
    TrainConfig cfg;
    cfg.epochs = 0;
    CHECK_THROWS_AS(train_head(data, testing::numbered_scale(2), "synthetic", 4, cfg), Error);
    cfg.epochs = 1;
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), Error);

    std::vector<LabeledVector> one_class(data.begin(), data.begin() + 10);
    try {
      train_head(one_class, testing::numbered_scale(2), "synthetic", 4, TrainConfig{});
      FAIL("expected degenerate training set");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::degenerate_training_set);
      CHECK(std::string(e.what()).rfind("degenerate training set", 0) == 0);
    }

    std::vector<LabeledText> texts{{"Le chat dort.", "A1", "s1"}, {"Le chien dort.", "A1", "s2"}};
    CHECK_THROWS_AS(train(texts, DifficultyScale::cefr(), TrainConfig{}, embedding::ProviderConfig{}),
                    Error);
  }

  TEST_CASE("full-batch steps with a small learning rate never increase the loss") {
    const auto data = testing::ordinal_gaussians({3, 20, 6, 1.0, 1.0, 77});
    auto params = HeadParams::zeros(testing::numbered_scale(3), "synthetic", 6);
    const auto init = params;
    double prev = loss(params, data, init, 0.1);
    for (int step = 0; step < 200; ++step) {
      const auto g = gradient(params, data, init, 0.1);
      for (std::size_t i = 0; i < g.weights.size(); ++i) params.weights[i] -= 0.01 * g.weights[i];
      for (std::size_t i = 0; i < g.bias.size(); ++i) params.bias[i] -= 0.01 * g.bias[i];
      const double now = loss(params, data, init, 0.1);
      CHECK(now <= prev + 1e-15);
      prev = now;
    }
  }

  TEST_CASE("larger lambda keeps the trained head closer to init") {
    const auto data = testing::ordinal_gaussians({3, 40, 6, 2.0, 1.0, 12});
    const auto init = HeadParams::zeros(testing::numbered_scale(3), "synthetic", 6);
    double prev = std::numeric_limits<double>::infinity();
    for (double lambda : {0.0, 0.1, 1.0}) {
      TrainConfig cfg;
      cfg.epochs = 20;
      cfg.lambda = lambda;
      cfg.learning_rate = 0.05;
      const auto r = train_head(data, testing::numbered_scale(3), "synthetic", 6, cfg);
      const double d = distance_sq(r.params, init);
      CHECK(d <= prev);
      prev = d;
    }
  }

  TEST_CASE("train over texts with the local hash provider") {
    std::vector<LabeledText> texts;
    for (int i = 0; i < 20; ++i) {
      texts.push_back({"Le chat dort. Le chien mange " + std::to_string(i) + ".", "A1", ""});
      texts.push_back({"L'élaboration institutionnelle des politiques économiques " +
                           std::to_string(i) + " demeure controversée.",
                       "C1", ""});
    }
    TrainConfig cfg;
    cfg.epochs = 40;
    embedding::ProviderConfig provider;
    provider.dim = 64;
    const auto head = train(texts, DifficultyScale::cefr(), cfg, provider);
    CHECK(head.provider_id == "local-hash");
    CHECK(head.dim == 64);
    const auto v = embedding::hash_embed(texts[1].text, 64, provider.seed);
    CHECK(predict(head, v).label == "C1");
  }

  TEST_CASE("train_test_split") {
    std::vector<LabeledText> items;
    for (int i = 0; i < 100; ++i) items.push_back({"t" + std::to_string(i), i % 2 ? "A1" : "A2", ""});
    const auto plain = train_test_split(items, 0.8, 1, false);
    CHECK(plain.train.size() == 80);
    CHECK(plain.test.size() == 20);
    const auto strat = train_test_split(items, 0.8, 1, true);
    CHECK(strat.train.size() == 80);
    CHECK(strat.test.size() == 20);

    std::vector<std::string> labels;
    for (int k = 0; k < 6; ++k) {
      for (int i = 0; i < 800; ++i) labels.push_back("L" + std::to_string(k));
    }
    const auto idx = split_indices(labels, 0.8, 3, true);
    std::map<std::string, int> train_counts, test_counts;
    for (auto i : idx.train) ++train_counts[labels[i]];
    for (auto i : idx.test) ++test_counts[labels[i]];
    for (int k = 0; k < 6; ++k) {
      CHECK(train_counts["L" + std::to_string(k)] == 640);
      CHECK(test_counts["L" + std::to_string(k)] == 160);
    }
    CHECK(split_indices(labels, 0.8, 3, true).train == idx.train);
    CHECK_FALSE(split_indices(labels, 0.8, 4, true).train == idx.train);

    std::vector<std::string> thin{"A", "A", "B"};
    try {
      split_indices(thin, 0.5, 1, true);
      FAIL("expected insufficient class support");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::insufficient_class_support);
    }
    CHECK_THROWS_AS(split_indices(labels, 1.0, 1, true), Error);
    CHECK_THROWS_AS(split_indices(labels, 0.0, 1, false), Error);
  }

  TEST_CASE("train_test_split: partition and proportion properties") {
    Rng rng(44);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<std::string> labels;
      const std::size_t k = 2 + rng.below(4);
      const std::size_t n = 10 + rng.below(200);
      for (std::size_t i = 0; i < n; ++i) labels.push_back("c" + std::to_string(rng.below(k)));
      std::map<std::string, int> total;
      for (const auto& l : labels) ++total[l];
      bool thin = false;
      for (const auto& [l, c] : total) thin |= c < 2;
      if (thin) continue;
      const double ratio = 0.1 + 0.8 * rng.uniform();
      const auto idx = split_indices(labels, ratio, rng.next(), true);
      std::vector<int> seen(n, 0);
      for (auto i : idx.train) ++seen[i];
      for (auto i : idx.test) ++seen[i];
      CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
      std::map<std::string, int> tr;
      for (auto i : idx.train) ++tr[labels[i]];
      for (const auto& [l, c] : total) {
        CHECK(std::abs(tr[l] - ratio * c) <= 1.0);
      }
    }
  }

  TEST_CASE("dataset JSON-lines round trip") {
    const auto path = std::filesystem::temp_directory_path() / "graded_dataset_test.jsonl";
    const std::vector<LabeledText> items{{"Bonjour « toi »\n", "A1", "x1"}, {"Ça va?", "A2", ""}};
    save_dataset(path, items);
    const auto back = load_dataset(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].text == items[0].text);
    CHECK(back[1].label == "A2");
    {
      std::ofstream out(path, std::ios::app);
      out << "{\"text\": 3}\n";
    }
    CHECK_THROWS_AS(load_dataset(path), Error);
    std::filesystem::remove(path);
  }

  TEST_CASE("model serialization round trip is bit exact") {
    Rng rng(1234);
    for (int trial = 0; trial < 20; ++trial) {
      ModelFile m;
      m.params = random_head(2 + rng.below(5), 1 + rng.below(16), rng, 1.0);
      for (double& w : m.params.weights) w *= std::pow(10.0, static_cast<double>(rng.below(40)) - 20);
      m.params.weights[0] = std::numeric_limits<double>::denorm_min();
      m.params.bias[0] = -0.0;
      m.provider.provider_id = m.params.provider_id;
      m.provider.dim = m.params.dim;
      m.train_config_digest = TrainConfig{}.digest();
      const auto text = serialize_model(m);
      const auto back = parse_model(text);
      CHECK(back.params == m.params);
      CHECK(std::signbit(back.params.bias[0]));
      CHECK(serialize_model(back) == text);
    }
    CHECK_THROWS_AS(parse_model("{}"), Error);
    CHECK_THROWS_AS(parse_model("not json"), Error);
  }
}
