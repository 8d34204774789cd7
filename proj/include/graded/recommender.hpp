#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "graded/catalog.hpp"
#include "graded/timeutil.hpp"

namespace graded::recommender {

using timeutil::Timestamp;

enum class Verdict { too_easy, ok, too_hard };

std::string_view to_string(Verdict v);
// Throws Error(invalid_argument) for anything but the three verdict names.
Verdict parse_verdict(std::string_view s);

struct FeedbackEvent {
  std::string item_id;
  Verdict verdict = Verdict::ok;
  std::size_t item_difficulty_index = 0;
  Timestamp timestamp{};

  friend bool operator==(const FeedbackEvent&, const FeedbackEvent&) = default;
};

struct LearnerProfile {
  std::string user_id;
  std::set<std::string> interests;      // normalized topics
  std::set<std::string> non_interests;  // disjoint from interests
  double level_estimate = 0.0;          // in [0, K-1]
  std::set<std::string> seen_item_ids;
  std::vector<FeedbackEvent> feedback_log;

  friend bool operator==(const LearnerProfile&, const LearnerProfile&) = default;
};

nlohmann::json to_json(const LearnerProfile& p);
LearnerProfile profile_from_json(const nlohmann::json& j);

struct RecommenderConfig {
  double w_topic = 0.5;
  double w_difficulty = 0.35;
  double w_freshness = 0.15;
  double stretch = 0.5;
  double alpha = 0.2;
  std::chrono::hours half_life{72};
  double seen_penalty = 1.0;
  // Exploration: with probability epsilon a slot is filled by a random
  // candidate from the top 3k instead of the best remaining one. Off by
  // default so that feeds are reproducible.
  double epsilon = 0.0;
  std::uint64_t seed = 7;

  void validate() const;
};

inline constexpr double kExcluded = -std::numeric_limits<double>::infinity();

// Difficulty fit: max(0, 1 - |index - (level + stretch)| / K).
double difficulty_score(double level_estimate, std::size_t item_index, std::size_t num_levels,
                        double stretch);

// exp(-age / half_life); items dated in the future count as brand new.
double freshness(Timestamp published_at, Timestamp now, std::chrono::hours half_life);

// kExcluded for items carrying any non-interest topic.
double score_item(const LearnerProfile& profile, const catalog::ContentItem& item,
                  std::size_t num_levels, Timestamp now, const RecommenderConfig& cfg = {});

// Top-k unseen, non-excluded items by score; ties by recency then id.
std::vector<catalog::ContentItem> recommend(const LearnerProfile& profile,
                                            std::span<const catalog::ContentItem> items,
                                            std::size_t k, std::size_t num_levels, Timestamp now,
                                            const RecommenderConfig& cfg = {});

std::vector<catalog::ContentItem> recommend(const LearnerProfile& profile,
                                            const catalog::Catalog& catalog, std::size_t k,
                                            Timestamp now, const RecommenderConfig& cfg = {});

// EMA toward the implied level (index + 1 / 0 / -1), clamped to [0, K-1];
// the event is logged and the item marked seen.
LearnerProfile apply_feedback(LearnerProfile profile, const FeedbackEvent& event,
                              std::size_t num_levels, double alpha = 0.2);

// Looks the item up first; throws Error(not_found) for unknown ids.
LearnerProfile apply_feedback(LearnerProfile profile, const std::string& item_id, Verdict verdict,
                              const catalog::Catalog& catalog, Timestamp now,
                              const RecommenderConfig& cfg = {});

// Normalizes both sets and rejects overlaps with Error(conflict).
void set_interests(LearnerProfile& profile, const std::vector<std::string>& interests,
                   const std::vector<std::string>& non_interests);

// One JSON file per user under `dir`. Reads and writes of a single user are
// serialized; different users proceed in parallel.
class ProfileStore {
 public:
  ProfileStore(std::filesystem::path dir, std::size_t num_levels, double initial_level);

  std::optional<LearnerProfile> get(const std::string& user_id) const;
  bool exists(const std::string& user_id) const;
  void put(const LearnerProfile& profile);

  // Read-modify-write under the user's lock. With create=true a missing
  // user starts from a fresh profile; otherwise Error(not_found).
  LearnerProfile update(const std::string& user_id,
                        const std::function<void(LearnerProfile&)>& change, bool create = false);

  std::vector<std::string> users() const;
  void export_jsonl(std::ostream& out) const;
  std::size_t import_jsonl(std::istream& in);

  LearnerProfile fresh(const std::string& user_id) const;
  std::size_t num_levels() const noexcept { return num_levels_; }

 private:
  std::filesystem::path path_for(const std::string& user_id) const;
  std::mutex& lock_for(const std::string& user_id) const;
  std::optional<LearnerProfile> read(const std::string& user_id) const;
  void write(const LearnerProfile& profile) const;

  std::filesystem::path dir_;
  std::size_t num_levels_;
  double initial_level_;
  mutable std::mutex locks_mutex_;
  mutable std::map<std::string, std::unique_ptr<std::mutex>> locks_;
};

// Valid ids: 1 to 64 characters from [A-Za-z0-9_.-], not starting with '.'.
bool valid_user_id(std::string_view id);

}  // namespace graded::recommender
