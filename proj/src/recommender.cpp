#include "graded/recommender.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>

#include "graded/error.hpp"
#include "graded/random.hpp"

namespace graded::recommender {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

double delta(Verdict v) {
  switch (v) {
    case Verdict::too_easy: return 1.0;
    case Verdict::ok: return 0.0;
    case Verdict::too_hard: return -1.0;
  }
  return 0.0;
}

struct Scored {
  const catalog::ContentItem* item;
  double score;
};

bool better(const Scored& a, const Scored& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.item->published_at != b.item->published_at)
    return a.item->published_at > b.item->published_at;
  return a.item->id < b.item->id;
}

}  // namespace

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::too_easy: return "too_easy";
    case Verdict::ok: return "ok";
    case Verdict::too_hard: return "too_hard";
  }
  return "ok";
}

Verdict parse_verdict(std::string_view s) {
  if (s == "too_easy") return Verdict::too_easy;
  if (s == "ok") return Verdict::ok;
  if (s == "too_hard") return Verdict::too_hard;
  throw Error(ErrorCode::invalid_argument, "unknown verdict '" + std::string(s) + "'");
}

json to_json(const LearnerProfile& p) {
  json log = json::array();
  for (const auto& e : p.feedback_log) {
    log.push_back({{"item_id", e.item_id},
                   {"verdict", to_string(e.verdict)},
                   {"item_difficulty_index", e.item_difficulty_index},
                   {"timestamp", timeutil::format_rfc3339(e.timestamp)}});
  }
  return {{"user_id", p.user_id},
          {"interests", p.interests},
          {"non_interests", p.non_interests},
          {"level_estimate", p.level_estimate},
          {"seen_item_ids", p.seen_item_ids},
          {"feedback_log", log}};
}

LearnerProfile profile_from_json(const json& j) {
  try {
    LearnerProfile p;
    p.user_id = j.at("user_id").get<std::string>();
    p.interests = j.value("interests", std::set<std::string>{});
    p.non_interests = j.value("non_interests", std::set<std::string>{});
    p.level_estimate = j.value("level_estimate", 0.0);
    p.seen_item_ids = j.value("seen_item_ids", std::set<std::string>{});
    for (const auto& e : j.value("feedback_log", json::array())) {
      p.feedback_log.push_back({e.at("item_id").get<std::string>(),
                                parse_verdict(e.at("verdict").get<std::string>()),
                                e.at("item_difficulty_index").get<std::size_t>(),
                                timeutil::parse_stored(e.at("timestamp").get<std::string>())});
    }
    return p;
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::format, std::string("bad profile record: ") + e.what());
  }
}

void RecommenderConfig::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(ErrorCode::invalid_argument, "alpha must be in (0, 1]");
  if (half_life.count() <= 0) throw Error(ErrorCode::invalid_argument, "half_life must be positive");
  if (!(epsilon >= 0.0 && epsilon <= 1.0))
    throw Error(ErrorCode::invalid_argument, "epsilon must be in [0, 1]");
  for (const double w : {w_topic, w_difficulty, w_freshness, seen_penalty, stretch}) {
    if (!std::isfinite(w)) throw Error(ErrorCode::invalid_argument, "recommender weights must be finite");
  }
}

double difficulty_score(double level_estimate, std::size_t item_index, std::size_t num_levels,
                        double stretch) {
  const double target = level_estimate + stretch;
  const double distance = std::abs(static_cast<double>(item_index) - target);
  return std::max(0.0, 1.0 - distance / static_cast<double>(num_levels));
}

double freshness(Timestamp published_at, Timestamp now, std::chrono::hours half_life) {
  const double age_hours =
      std::max(0.0, std::chrono::duration<double, std::ratio<3600>>(now - published_at).count());
  return std::exp(-age_hours / static_cast<double>(half_life.count()));
}

double score_item(const LearnerProfile& profile, const catalog::ContentItem& item,
                  std::size_t num_levels, Timestamp now, const RecommenderConfig& cfg) {
  bool interesting = false;
  for (const auto& t : item.topics) {
    if (profile.non_interests.count(t.topic)) return kExcluded;
    if (profile.interests.count(t.topic)) interesting = true;
  }
  const double topic = interesting ? 1.0 : 0.0;
  const double fit =
      difficulty_score(profile.level_estimate, item.difficulty.index, num_levels, cfg.stretch);
  const double fresh = freshness(item.published_at, now, cfg.half_life);
  const double penalty = profile.seen_item_ids.count(item.id) ? cfg.seen_penalty : 0.0;
  return cfg.w_topic * topic + cfg.w_difficulty * fit + cfg.w_freshness * fresh - penalty;
}

std::vector<catalog::ContentItem> recommend(const LearnerProfile& profile,
                                            std::span<const catalog::ContentItem> items,
                                            std::size_t k, std::size_t num_levels, Timestamp now,
                                            const RecommenderConfig& cfg) {
  if (k == 0) throw Error(ErrorCode::invalid_argument, "recommend needs k >= 1");
  cfg.validate();
  std::vector<Scored> candidates;
  for (const auto& item : items) {
    if (profile.seen_item_ids.count(item.id)) continue;
    const double s = score_item(profile, item, num_levels, now, cfg);
    if (s == kExcluded) continue;
    candidates.push_back({&item, s});
  }
  std::sort(candidates.begin(), candidates.end(), better);

  std::vector<catalog::ContentItem> out;
  if (cfg.epsilon <= 0.0) {
    for (std::size_t i = 0; i < candidates.size() && i < k; ++i) out.push_back(*candidates[i].item);
    return out;
  }
  // seeded per user, so one learner's feed does not shift another's
  Rng rng(cfg.seed ^ std::hash<std::string>{}(profile.user_id));
  std::vector<Scored> pool(candidates.begin(),
                           candidates.begin() + std::min(candidates.size(), 3 * k));
  while (out.size() < k && !pool.empty()) {
    std::size_t pick = 0;
    if (rng.uniform() < cfg.epsilon) pick = rng.below(pool.size());
    out.push_back(*pool[pick].item);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return out;
}

std::vector<catalog::ContentItem> recommend(const LearnerProfile& profile,
                                            const catalog::Catalog& catalog, std::size_t k,
                                            Timestamp now, const RecommenderConfig& cfg) {
  const auto items = catalog.snapshot();
  return recommend(profile, items, k, catalog.scale().size(), now, cfg);
}

LearnerProfile apply_feedback(LearnerProfile profile, const FeedbackEvent& event,
                              std::size_t num_levels, double alpha) {
  if (num_levels < 2) throw Error(ErrorCode::invalid_argument, "scale needs at least two levels");
  if (event.item_difficulty_index >= num_levels)
    throw Error(ErrorCode::invalid_argument, "item difficulty index outside the scale");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(ErrorCode::invalid_argument, "alpha must be in (0, 1]");
  const double implied = static_cast<double>(event.item_difficulty_index) + delta(event.verdict);
  const double updated = (1.0 - alpha) * profile.level_estimate + alpha * implied;
  profile.level_estimate = std::clamp(updated, 0.0, static_cast<double>(num_levels - 1));
  profile.feedback_log.push_back(event);
  profile.seen_item_ids.insert(event.item_id);
  return profile;
}

LearnerProfile apply_feedback(LearnerProfile profile, const std::string& item_id, Verdict verdict,
                              const catalog::Catalog& catalog, Timestamp now,
                              const RecommenderConfig& cfg) {
  const auto item = catalog.get(item_id);
  if (!item) throw Error(ErrorCode::not_found, "unknown item " + item_id);
  return apply_feedback(std::move(profile), {item_id, verdict, item->difficulty.index, now},
                        catalog.scale().size(), cfg.alpha);
}

void set_interests(LearnerProfile& profile, const std::vector<std::string>& interests,
                   const std::vector<std::string>& non_interests) {
  std::set<std::string> in, out;
  for (const auto& t : interests) {
    auto n = topics::normalize_topic(t);
    if (n.empty()) throw Error(ErrorCode::invalid_argument, "empty interest topic");
    in.insert(std::move(n));
  }
  for (const auto& t : non_interests) {
    auto n = topics::normalize_topic(t);
    if (n.empty()) throw Error(ErrorCode::invalid_argument, "empty non-interest topic");
    out.insert(std::move(n));
  }
  for (const auto& t : in) {
    if (out.count(t))
      throw Error(ErrorCode::conflict, "topic '" + t + "' is both an interest and a non-interest");
  }
  profile.interests = std::move(in);
  profile.non_interests = std::move(out);
}

bool valid_user_id(std::string_view id) {
  if (id.empty() || id.size() > 64 || id[0] == '.') return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
  });
}

ProfileStore::ProfileStore(fs::path dir, std::size_t num_levels, double initial_level)
    : dir_(std::move(dir)), num_levels_(num_levels), initial_level_(initial_level) {
  if (num_levels_ < 2) throw Error(ErrorCode::invalid_argument, "scale needs at least two levels");
  if (initial_level_ < 0.0 || initial_level_ > static_cast<double>(num_levels_ - 1))
    throw Error(ErrorCode::invalid_argument, "initial level outside the scale");
  fs::create_directories(dir_);
}

fs::path ProfileStore::path_for(const std::string& user_id) const {
  if (!valid_user_id(user_id)) throw Error(ErrorCode::invalid_argument, "invalid user id");
  return dir_ / (user_id + ".json");
}

std::mutex& ProfileStore::lock_for(const std::string& user_id) const {
  std::lock_guard lock(locks_mutex_);
  auto& slot = locks_[user_id];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

std::optional<LearnerProfile> ProfileStore::read(const std::string& user_id) const {
  std::ifstream in(path_for(user_id));
  if (!in) return std::nullopt;
  try {
    return profile_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::storage, "corrupt profile for " + user_id + ": " + e.what());
  }
}

void ProfileStore::write(const LearnerProfile& profile) const {
  const auto path = path_for(profile.user_id);
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << to_json(profile).dump(2) << '\n';
    if (!out) throw Error(ErrorCode::storage, "cannot write profile " + tmp.string());
  }
  fs::rename(tmp, path);
}

LearnerProfile ProfileStore::fresh(const std::string& user_id) const {
  LearnerProfile p;
  p.user_id = user_id;
  p.level_estimate = initial_level_;
  return p;
}

std::optional<LearnerProfile> ProfileStore::get(const std::string& user_id) const {
  if (!valid_user_id(user_id)) return std::nullopt;
  std::lock_guard lock(lock_for(user_id));
  return read(user_id);
}

bool ProfileStore::exists(const std::string& user_id) const {
  return valid_user_id(user_id) && fs::exists(path_for(user_id));
}

void ProfileStore::put(const LearnerProfile& profile) {
  if (profile.level_estimate < 0.0 || profile.level_estimate > static_cast<double>(num_levels_ - 1))
    throw Error(ErrorCode::invalid_argument, "level estimate outside the scale");
  for (const auto& t : profile.interests)
    if (profile.non_interests.count(t))
      throw Error(ErrorCode::conflict, "topic '" + t + "' is both an interest and a non-interest");
  std::lock_guard lock(lock_for(profile.user_id));
  write(profile);
}

LearnerProfile ProfileStore::update(const std::string& user_id,
                                    const std::function<void(LearnerProfile&)>& change,
                                    bool create) {
  if (!valid_user_id(user_id)) throw Error(ErrorCode::invalid_argument, "invalid user id");
  std::lock_guard lock(lock_for(user_id));
  auto current = read(user_id);
  if (!current) {
    if (!create) throw Error(ErrorCode::not_found, "unknown user " + user_id);
    current = fresh(user_id);
  }
  LearnerProfile next = *current;
  change(next);
  next.user_id = user_id;
  write(next);
  return next;
}

std::vector<std::string> ProfileStore::users() const {
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(dir_)) {
    if (entry.path().extension() != ".json") continue;
    const auto stem = entry.path().stem().string();
    if (valid_user_id(stem)) out.push_back(stem);
  }
  std::sort(out.begin(), out.end());
  return out;
}

void ProfileStore::export_jsonl(std::ostream& out) const {
  for (const auto& id : users()) {
    if (const auto p = get(id)) out << to_json(*p).dump() << '\n';
  }
}

std::size_t ProfileStore::import_jsonl(std::istream& in) {
  std::string line;
  std::size_t n = 0;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    LearnerProfile p;
    try {
      p = profile_from_json(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::format, "profile import line " + std::to_string(line_no) + ": " + e.what());
    }
    put(p);
    ++n;
  }
  return n;
}

}  // namespace graded::recommender
