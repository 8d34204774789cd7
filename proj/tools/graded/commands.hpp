#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

namespace graded::cli {

// Used whenever --seed is omitted.
inline constexpr std::uint64_t kDefaultSeed = 7;

struct TrainArgs {
  std::filesystem::path dataset;
  std::string scale;
  std::string provider = "local-hash";  // "local-hash" or a provider JSON file
  std::size_t dim = 256;                // local-hash only
  std::size_t epochs = 50;
  double lr = 0.1;
  double lambda = 0.0;
  std::size_t batch_size = 32;
  std::uint64_t seed = kDefaultSeed;
  std::optional<double> holdout;  // test share kept out of training
  std::filesystem::path out;
};

struct EvalArgs {
  std::filesystem::path model;
  std::filesystem::path dataset;
  double split = 0.2;  // test share
  std::uint64_t seed = kDefaultSeed;
  std::filesystem::path report;
  bool compare_readability = false;
  std::string ties = "strict";
};

struct CrawlArgs {
  std::filesystem::path config;
  std::optional<std::filesystem::path> data_dir;
  bool once = false;
};

struct ServeArgs {
  std::filesystem::path config;
};

struct ScoreArgs {
  std::filesystem::path model;
  std::optional<std::string> text;
  std::optional<std::filesystem::path> file;
  bool json = false;
};

// Each returns the process exit code and reports failures by throwing
// graded::Error.
int run_train(const TrainArgs& args, std::ostream& out);
int run_eval(const EvalArgs& args, std::ostream& out);
int run_crawl(const CrawlArgs& args, std::ostream& out);
int run_serve(const ServeArgs& args, std::ostream& out);
int run_score(const ScoreArgs& args, std::ostream& out);

}  // namespace graded::cli
