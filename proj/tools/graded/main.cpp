#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <iostream>

#include "commands.hpp"
#include "graded/error.hpp"

namespace {

int fail(std::string_view code, std::string_view message) {
  std::string line(message);
  for (auto& c : line)
    if (c == '\n' || c == '\r') c = ' ';
  std::cerr << "error: " << code << ": " << line << std::endl;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("graded"));
  if (const char* level = std::getenv("GRADED_LOG_LEVEL"))
    spdlog::set_level(spdlog::level::from_str(level));
  else
    spdlog::set_level(spdlog::level::warn);

  using namespace graded::cli;
  CLI::App app{"Difficulty-graded reading material: train, evaluate, crawl, serve"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train the difficulty head on a labeled dataset");
  train_cmd->add_option("--dataset", train.dataset, "JSON-lines dataset")->required();
  train_cmd->add_option("--scale", train.scale, "Comma-separated labels, easiest first")->required();
  train_cmd->add_option("--provider", train.provider, "local-hash or a provider config file");
  train_cmd->add_option("--dim", train.dim, "Vector size for local-hash");
  train_cmd->add_option("--epochs", train.epochs);
  train_cmd->add_option("--lr", train.lr);
  train_cmd->add_option("--lambda", train.lambda, "Proximal weight");
  train_cmd->add_option("--batch-size", train.batch_size);
  train_cmd->add_option("--seed", train.seed);
  train_cmd->add_option("--holdout", train.holdout,
                        "Leave out this test share, matching eval --split with the same seed");
  train_cmd->add_option("--out", train.out, "Model file to write")->required();

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a model on a held-out split");
  eval_cmd->add_option("--model", eval.model)->required();
  eval_cmd->add_option("--dataset", eval.dataset)->required();
  eval_cmd->add_option("--split", eval.split, "Test share");
  eval_cmd->add_option("--seed", eval.seed);
  eval_cmd->add_option("--report", eval.report, "Report JSON; .txt and .svg are written beside it")
      ->required();
  eval_cmd->add_flag("--compare-readability", eval.compare_readability);
  eval_cmd->add_option("--ties", eval.ties, "Mismatch tie policy: strict or half");

  CrawlArgs crawl;
  auto* crawl_cmd = app.add_subcommand("crawl", "Poll feeds and fill the catalog");
  crawl_cmd->add_option("--config", crawl.config)->required();
  crawl_cmd->add_option("--data-dir", crawl.data_dir);
  crawl_cmd->add_flag("--once", crawl.once, "Single pass, then exit");

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP API");
  serve_cmd->add_option("--config", serve.config)->required();

  ScoreArgs score;
  auto* score_cmd = app.add_subcommand("score", "Predict the difficulty of one text");
  score_cmd->add_option("--model", score.model)->required();
  auto* text_opt = score_cmd->add_option("--text", score.text);
  auto* file_opt = score_cmd->add_option("--file", score.file);
  text_opt->excludes(file_opt);
  score_cmd->add_flag("--json", score.json, "Machine-readable output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what());
  }

  try {
    if (*train_cmd) return run_train(train, std::cout);
    if (*eval_cmd) return run_eval(eval, std::cout);
    if (*crawl_cmd) return run_crawl(crawl, std::cout);
    if (*serve_cmd) return run_serve(serve, std::cout);
    if (*score_cmd) return run_score(score, std::cout);
  } catch (const graded::Error& e) {
    return fail(graded::to_string(e.code()), e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
  return 1;
}
