#include "commands.hpp"

#include <pthread.h>
#include <signal.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "graded/catalog.hpp"
#include "graded/classifier.hpp"
#include "graded/embedding.hpp"
#include "graded/error.hpp"
#include "graded/evaluation.hpp"
#include "graded/ingestion.hpp"
#include "graded/readability.hpp"
#include "graded/recommender.hpp"
#include "graded/service.hpp"

namespace graded::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::not_found, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
  if (!out) throw Error(ErrorCode::storage, "cannot write " + path.string());
}

// "local-hash" or a JSON file with ProviderConfig fields.
embedding::ProviderConfig resolve_provider(const std::string& choice, std::size_t dim) {
  embedding::ProviderConfig cfg;
  if (choice == embedding::kLocalHashEndpoint) {
    cfg.dim = dim;
    cfg.validate();
    return cfg;
  }
  if (!fs::is_regular_file(choice))
    throw Error(ErrorCode::invalid_argument,
                "unknown provider '" + choice + "': expected local-hash or a provider config file");
  const json j = json::parse(read_file(choice), nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw Error(ErrorCode::format, "provider config " + choice + " is not a JSON object");
  try {
    cfg.provider_id = j.value("provider_id", cfg.provider_id);
    cfg.endpoint = j.value("endpoint", cfg.endpoint);
    cfg.model = j.value("model", cfg.model);
    cfg.dim = j.value("dim", cfg.dim);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.timeout = std::chrono::milliseconds(j.value("timeout_ms", cfg.timeout.count()));
    cfg.retry_limit = j.value("retry_limit", cfg.retry_limit);
    cfg.retry_backoff =
        std::chrono::milliseconds(j.value("retry_backoff_ms", cfg.retry_backoff.count()));
    cfg.max_in_flight = j.value("max_in_flight", cfg.max_in_flight);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.max_words = j.value("max_words", cfg.max_words);
    cfg.api_key_env = j.value("api_key_env", cfg.api_key_env);
    if (j.contains("cache_dir")) {
      fs::path dir = j.at("cache_dir").get<std::string>();
      cfg.cache_dir = dir.is_relative() ? fs::path(choice).parent_path() / dir : dir;
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::format, "provider config " + choice + ": " + e.what());
  }
  cfg.validate();
  return cfg;
}

// Replaces the extension of the report path, keeping its directory.
fs::path sibling(const fs::path& report, const std::string& extension) {
  fs::path p = report;
  p.replace_extension(extension);
  if (p == report) p += extension;
  return p;
}

// Blocks SIGINT/SIGTERM in every thread and hands them to `on_signal` from a
// dedicated waiter thread.
class SignalWaiter {
 public:
  explicit SignalWaiter(std::function<void()> on_signal) {
    sigemptyset(&set_);
    sigaddset(&set_, SIGINT);
    sigaddset(&set_, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set_, nullptr);
    thread_ = std::thread([this, on_signal = std::move(on_signal)] {
      int sig = 0;
      sigwait(&set_, &sig);
      if (!released_) {
        spdlog::info("received signal {}, shutting down", sig);
        on_signal();
      }
    });
  }
  ~SignalWaiter() {
    released_ = true;
    pthread_kill(thread_.native_handle(), SIGTERM);
    thread_.join();
  }

 private:
  sigset_t set_;
  std::atomic<bool> released_{false};
  std::thread thread_;
};

void print_tally(std::ostream& out, const ingestion::SourceTally& t) {
  out << std::left << std::setw(20) << t.source_id << std::right
      << std::setw(8) << t.in_feed << std::setw(8) << t.new_items << std::setw(9) << t.admitted
      << std::setw(9) << t.rejected_total() << std::setw(6) << t.duplicates << std::setw(8)
      << t.parked;
  std::string reasons;
  for (const auto& [reason, n] : t.rejected) {
    if (!reasons.empty()) reasons += ",";
    reasons += std::string(ingestion::to_string(reason)) + "=" + std::to_string(n);
  }
  if (!reasons.empty()) out << "  " << reasons;
  if (t.skipped) out << "  skipped: " << t.error;
  out << "\n";
}

void print_tally_header(std::ostream& out) {
  out << std::left << std::setw(20) << "source" << std::right << std::setw(8) << "in_feed"
      << std::setw(8) << "new" << std::setw(9) << "admitted" << std::setw(9) << "rejected"
      << std::setw(6) << "dup" << std::setw(8) << "parked" << "\n";
}

}  // namespace

int run_train(const TrainArgs& args, std::ostream& out) {
  const auto scale = classifier::DifficultyScale::parse(args.scale);
  auto dataset = classifier::load_dataset(args.dataset);
  if (args.holdout) {
    if (!(*args.holdout > 0.0 && *args.holdout < 1.0))
      throw Error(ErrorCode::invalid_argument, "--holdout must be in (0, 1)");
    dataset = classifier::train_test_split(dataset, 1.0 - *args.holdout, args.seed).train;
  }
  classifier::TrainConfig cfg;
  cfg.epochs = args.epochs;
  cfg.learning_rate = args.lr;
  cfg.lambda = args.lambda;
  cfg.batch_size = args.batch_size;
  cfg.seed = args.seed;
  cfg.validate();

  const auto provider_cfg = resolve_provider(args.provider, args.dim);
  auto provider = embedding::make_provider(provider_cfg);
  const auto result = classifier::train(dataset, scale, cfg, *provider, provider_cfg.max_words);

  classifier::ModelFile model;
  model.params = result.params;
  model.provider = provider_cfg;
  model.train_config_digest = cfg.digest();
  classifier::save_model(args.out, model);

  out << "trained on " << dataset.size() << " texts, " << scale.size() << " classes, "
      << cfg.epochs << " epochs\n";
  out << "final train loss: " << std::setprecision(6) << std::fixed << result.final_loss << "\n";
  return 0;
}

int run_eval(const EvalArgs& args, std::ostream& out) {
  if (!(args.split > 0.0 && args.split < 1.0))
    throw Error(ErrorCode::invalid_argument, "--split must be in (0, 1)");
  if (args.ties != "strict" && args.ties != "half")
    throw Error(ErrorCode::invalid_argument, "--ties must be strict or half");
  const auto model = classifier::load_model(args.model);
  const auto& scale = model.params.scale;
  const auto dataset = classifier::load_dataset(args.dataset);
  const auto split = classifier::train_test_split(dataset, 1.0 - args.split, args.seed);
  if (split.test.empty()) throw Error(ErrorCode::insufficient_text, "test split is empty");

  std::vector<std::string> texts;
  for (const auto& t : split.test) texts.push_back(t.text);
  auto provider = embedding::make_provider(model.provider);
  const auto vectors = embedding::embed_batch(texts, *provider, model.provider.max_words);
  std::vector<classifier::LabeledVector> test_vectors;
  for (std::size_t i = 0; i < vectors.size(); ++i)
    test_vectors.push_back({vectors[i], scale.index(split.test[i].label)});

  evaluation::Experiment experiment;
  experiment.dataset = args.dataset.stem().string();
  experiment.tie_policy =
      args.ties == "half" ? evaluation::TiePolicy::half : evaluation::TiePolicy::strict;
  if (args.compare_readability) {
    for (const auto& [name, scorer] : evaluation::readability_scorers())
      experiment.reports.push_back(evaluation::evaluate(name, scorer, split.test, scale));
  }
  const auto report = evaluation::evaluate("classifier", model.params, test_vectors);
  experiment.reports.push_back(report);

  const std::span<const evaluation::Experiment> one(&experiment, 1);
  const std::string tables = evaluation::render_mismatch_table(one) + "\n" +
                             evaluation::render_accuracy_table(one);
  write_file(args.report, evaluation::serialize_report(experiment));
  write_file(sibling(args.report, ".txt"), tables);
  write_file(sibling(args.report, ".svg"),
             evaluation::render_confusion_svg(*report.confusion, experiment.dataset));

  out << "evaluated " << split.test.size() << " held-out texts of " << dataset.size() << "\n\n";
  out << tables;
  return 0;
}

int run_crawl(const CrawlArgs& args, std::ostream& out) {
  auto config = ingestion::load_crawl_config(args.config);
  const auto data_dir = args.data_dir ? *args.data_dir : config.data_dir.value_or(fs::path());
  if (data_dir.empty())
    throw Error(ErrorCode::invalid_argument, "no data directory: pass --data-dir or set data_dir");

  auto transport = http::make_transport(config.fetch.user_agent);
  auto annotators = ingestion::make_annotators(config, transport);
  catalog::Catalog catalog(data_dir / "catalog", annotators.model->params.scale);
  ingestion::HttpFetcher fetcher(config.fetch, transport);
  ingestion::CrawlOptions options;
  options.workers = config.workers;
  options.filter = config.filter;
  ingestion::Crawler crawler(config.sources, options, std::move(annotators), fetcher, catalog,
                             data_dir / "state");

  if (args.once) {
    const auto tallies = crawler.run_once();
    print_tally_header(out);
    std::size_t admitted = 0;
    for (const auto& t : tallies) {
      print_tally(out, t);
      admitted += t.admitted + t.retried;
    }
    out << "catalog: " << catalog.size() << " items (" << admitted << " new)\n";
    return 0;
  }

  std::atomic<bool> stop{false};
  SignalWaiter waiter([&] { stop = true; });
  print_tally_header(out);
  crawler.run([&] { return stop.load(); },
              [&](const ingestion::SourceTally& t) {
                print_tally(out, t);
                out.flush();
              });
  out << "catalog: " << catalog.size() << " items\n";
  return 0;
}

int run_serve(const ServeArgs& args, std::ostream& out) {
  const auto settings = service::load_serve_settings(args.config);
  const auto model = classifier::load_model(settings.model_path);
  const auto& scale = model.params.scale;
  const double initial_level = settings.initial_level >= 0.0
                                   ? settings.initial_level
                                   : std::floor(static_cast<double>(scale.size() - 1) / 2.0);

  catalog::Catalog catalog(settings.data_dir / "catalog", scale);
  recommender::ProfileStore profiles(settings.data_dir / "profiles", scale.size(), initial_level);
  std::shared_ptr<service::Translator> translator;
  if (settings.translator_endpoint)
    translator = std::make_shared<service::HttpTranslator>(*settings.translator_endpoint);
  else
    translator = std::make_shared<service::StubTranslator>();
  service::Service api(catalog, profiles, translator, settings.service);

  service::HttpServer server(api, settings.host, settings.port);
  if (!server.bind())
    throw Error(ErrorCode::conflict, "cannot listen on " + settings.host + ":" +
                                         std::to_string(settings.port) + " (address in use?)");
  SignalWaiter waiter([&] { server.stop(); });
  out << "listening on http://" << settings.host << ":" << server.port() << "\n";
  out.flush();
  server.serve();
  catalog.flush();
  out << "stopped\n";
  return 0;
}

int run_score(const ScoreArgs& args, std::ostream& out) {
  if (args.text.has_value() == args.file.has_value())
    throw Error(ErrorCode::invalid_argument, "pass exactly one of --text or --file");
  const std::string text = args.text ? *args.text : read_file(*args.file);
  if (text.find_first_not_of(" \t\r\n") == std::string::npos)
    throw Error(ErrorCode::insufficient_text, "insufficient text: input is empty");

  const auto model = classifier::load_model(args.model);
  auto provider = embedding::make_provider(model.provider);
  const std::vector<std::string> texts{text};
  const auto vectors = embedding::embed_batch(texts, *provider, model.provider.max_words);
  const auto prediction = classifier::predict(model.params, vectors.at(0));
  const auto report = readability::score_all(text);

  if (args.json) {
    json probs = json::object();
    for (std::size_t k = 0; k < prediction.probs.size(); ++k)
      probs[model.params.scale.label(k)] = prediction.probs[k];
    out << json{{"label", prediction.label},
                {"index", prediction.index},
                {"probs", probs},
                {"readability",
                 {{"gfi", report.gfi}, {"ari", report.ari}, {"fkgl", report.fkgl}}}}
               .dump()
        << "\n";
    return 0;
  }
  out << "label: " << prediction.label << "\n";
  out << "probs:";
  out << std::fixed << std::setprecision(4);
  for (std::size_t k = 0; k < prediction.probs.size(); ++k)
    out << " " << model.params.scale.label(k) << "=" << prediction.probs[k];
  out << "\n";
  out << std::setprecision(2) << "gfi: " << report.gfi << "  ari: " << report.ari
      << "  fkgl: " << report.fkgl << "\n";
  return 0;
}

}  // namespace graded::cli
