#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

#include "graded/error.hpp"
#include "graded/random.hpp"
#include "graded/recommender.hpp"
#include "items.hpp"

using namespace graded;
using namespace graded::recommender;
using graded::testing::make_item;

namespace {

constexpr std::size_t K = 6;
const Timestamp kNow{std::chrono::seconds{2'000'000'000}};

catalog::ContentItem item_at(std::size_t level, double age_hours, std::vector<std::string> topics,
                             const std::string& body) {
  const auto published = kNow.time_since_epoch().count() - static_cast<std::int64_t>(age_hours * 3600);
  return make_item(body, level, published, "t", std::move(topics));
}

LearnerProfile profile(double level, std::set<std::string> interests = {},
                       std::set<std::string> non = {}) {
  LearnerProfile p;
  p.user_id = "u1";
  p.level_estimate = level;
  p.interests = std::move(interests);
  p.non_interests = std::move(non);
  return p;
}

// Straight transcription of the scoring rule, kept apart from the library.
double oracle_score(const LearnerProfile& p, const catalog::ContentItem& item) {
  for (const auto& t : item.topics)
    if (p.non_interests.count(t.topic)) return -INFINITY;
  double topic = 0.0;
  for (const auto& t : item.topics)
    if (p.interests.count(t.topic)) topic = 1.0;
  const double target = p.level_estimate + 0.5;
  const double diff = 1.0 - std::fabs(double(item.difficulty.index) - target) / double(K);
  const double age_h = double((kNow - item.published_at).count()) / 3600.0;
  const double fresh = std::exp(-std::max(0.0, age_h) / 72.0);
  const double seen = p.seen_item_ids.count(item.id) ? 1.0 : 0.0;
  return 0.5 * topic + 0.35 * std::max(0.0, diff) + 0.15 * fresh - seen;
}

}  // namespace

TEST_CASE("verdict names") {
  CHECK(parse_verdict("too_easy") == Verdict::too_easy);
  CHECK(parse_verdict("ok") == Verdict::ok);
  CHECK(parse_verdict("too_hard") == Verdict::too_hard);
  CHECK_THROWS_AS(parse_verdict("meh"), Error);
  CHECK(to_string(Verdict::too_hard) == "too_hard");
}

TEST_CASE("difficulty score hand arithmetic") {
  // level 2.0 + stretch 0.5 = 2.5; indices 2 and 3 are both 0.5 away: 1 - 0.5/6
  CHECK(difficulty_score(2.0, 2, K, 0.5) == doctest::Approx(1.0 - 0.5 / 6.0));
  CHECK(difficulty_score(2.0, 3, K, 0.5) == doctest::Approx(0.9166666666666666));
  CHECK(difficulty_score(2.0, 2, K, 0.5) == difficulty_score(2.0, 3, K, 0.5));
  CHECK(difficulty_score(0.0, 5, K, 0.5) == doctest::Approx(1.0 - 4.5 / 6.0));
  CHECK(difficulty_score(0.0, 5, 2, 0.0) == 0.0);  // clamped at zero
}

TEST_CASE("freshness decays with the configured horizon") {
  CHECK(freshness(kNow, kNow, std::chrono::hours(72)) == 1.0);
  CHECK(freshness(kNow - std::chrono::hours(72), kNow, std::chrono::hours(72)) ==
        doctest::Approx(std::exp(-1.0)));
  CHECK(freshness(kNow + std::chrono::hours(5), kNow, std::chrono::hours(72)) == 1.0);
}

TEST_CASE("score_item exclusion, monotone difficulty and seen penalty") {
  const auto p = profile(2.0, {"sports"}, {"politics"});
  const auto political = item_at(2, 1, {"sports", "politics"}, "a");
  CHECK(score_item(p, political, K, kNow) == kExcluded);
  const auto near = item_at(3, 10, {"sports"}, "b");
  const auto far = item_at(5, 10, {"sports"}, "c");
  CHECK(score_item(p, near, K, kNow) > score_item(p, far, K, kNow));
  auto seen = p;
  seen.seen_item_ids.insert(near.id);
  CHECK(score_item(seen, near, K, kNow) == doctest::Approx(score_item(p, near, K, kNow) - 1.0));
  const auto off_topic = item_at(3, 10, {"music"}, "d");
  CHECK(score_item(p, near, K, kNow) - score_item(p, off_topic, K, kNow) == doctest::Approx(0.5));
}

TEST_CASE("recommend edge cases") {
  const auto p = profile(2.0, {"sports"});
  CHECK(recommend(p, std::span<const catalog::ContentItem>{}, 5, K, kNow).empty());
  std::vector<catalog::ContentItem> items{item_at(1, 1, {}, "x"), item_at(2, 1, {}, "y")};
  auto all_seen = p;
  for (const auto& i : items) all_seen.seen_item_ids.insert(i.id);
  CHECK(recommend(all_seen, items, 5, K, kNow).empty());
  CHECK(recommend(p, items, 5, K, kNow).size() == 2);
  CHECK_THROWS_AS(recommend(p, items, 0, K, kNow), Error);
}

TEST_CASE("recommend matches exhaustive scoring on a 20-item fixture") {
  Rng rng(2024);
  const std::vector<std::string> topics{"sports", "music", "politics", "food", "science"};
  std::vector<catalog::ContentItem> items;
  for (int i = 0; i < 20; ++i) {
    std::vector<std::string> t{topics[rng.below(topics.size())]};
    if (rng.below(3) == 0) t.push_back(topics[rng.below(topics.size())]);
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    items.push_back(item_at(rng.below(K), double(rng.below(400)), t, "doc " + std::to_string(i)));
  }
  auto p = profile(1.6, {"music"}, {"politics"});
  p.seen_item_ids.insert(items[3].id);

  std::vector<std::pair<double, const catalog::ContentItem*>> expected;
  for (const auto& item : items) {
    const double s = oracle_score(p, item);
    if (std::isinf(s)) {
      CHECK(score_item(p, item, K, kNow) == kExcluded);
      continue;
    }
    CHECK(score_item(p, item, K, kNow) == doctest::Approx(s).epsilon(1e-12));
    if (p.seen_item_ids.count(item.id)) continue;
    expected.emplace_back(s, &item);
  }
  std::sort(expected.begin(), expected.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    if (a.second->published_at != b.second->published_at)
      return a.second->published_at > b.second->published_at;
    return a.second->id < b.second->id;
  });
  const auto got = recommend(p, items, 8, K, kNow);
  REQUIRE(got.size() == std::min<std::size_t>(8, expected.size()));
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i].id == expected[i].second->id);
  for (const auto& item : got) {
    CHECK_FALSE(item.has_topic("politics"));
    CHECK_FALSE(p.seen_item_ids.count(item.id));
  }
  // pure: same inputs, same output
  CHECK(recommend(p, items, 8, K, kNow) == got);
}

TEST_CASE("epsilon exploration is seeded and never breaks exclusions") {
  std::vector<catalog::ContentItem> items;
  for (int i = 0; i < 30; ++i)
    items.push_back(item_at(std::size_t(i % 6), i, {i % 4 ? "music" : "politics"}, "e" + std::to_string(i)));
  auto p = profile(2.0, {"music"}, {"politics"});
  RecommenderConfig cfg;
  cfg.epsilon = 0.5;
  const auto a = recommend(p, items, 5, K, kNow, cfg);
  CHECK(a == recommend(p, items, 5, K, kNow, cfg));
  for (const auto& item : a) CHECK_FALSE(item.has_topic("politics"));
  cfg.epsilon = 0.0;
  const auto greedy = recommend(p, items, 15, K, kNow, cfg);
  for (const auto& item : a) {
    // explored picks come from the top 3k
    CHECK(std::any_of(greedy.begin(), greedy.end(), [&](const auto& g) { return g.id == item.id; }));
  }
}

TEST_CASE("feedback EMA hand arithmetic") {
  auto p = profile(3.0);
  p = apply_feedback(p, {"i3", Verdict::too_hard, 3, kNow}, K);
  CHECK(p.level_estimate == doctest::Approx(2.8).epsilon(1e-15));
  CHECK(p.seen_item_ids.count("i3"));
  CHECK(p.feedback_log.size() == 1);

  auto bottom = apply_feedback(profile(0.0), {"i0", Verdict::too_hard, 0, kNow}, K);
  CHECK(bottom.level_estimate == 0.0);
  auto top = apply_feedback(profile(5.0), {"i5", Verdict::too_easy, 5, kNow}, K);
  CHECK(top.level_estimate == 5.0);
  auto fixed = apply_feedback(profile(4.0), {"i4", Verdict::ok, 4, kNow}, K);
  CHECK(fixed.level_estimate == 4.0);
  CHECK_THROWS_AS(apply_feedback(profile(1.0), {"bad", Verdict::ok, 6, kNow}, K), Error);
}

TEST_CASE("level stays bounded and moves monotonically under constant verdicts") {
  Rng rng(5);
  auto p = profile(2.0);
  for (int i = 0; i < 2000; ++i) {
    const auto v = static_cast<Verdict>(rng.below(3));
    p = apply_feedback(p, {"x" + std::to_string(i), v, rng.below(K), kNow}, K);
    CHECK(p.level_estimate >= 0.0);
    CHECK(p.level_estimate <= 5.0);
  }
  auto up = profile(1.3);
  for (int i = 0; i < 50; ++i) {
    const double before = up.level_estimate;
    const auto idx = static_cast<std::size_t>(std::lround(before));
    up = apply_feedback(up, {"u", Verdict::too_easy, idx, kNow}, K);
    CHECK(up.level_estimate >= before);
  }
  auto down = profile(4.2);
  for (int i = 0; i < 50; ++i) {
    const double before = down.level_estimate;
    const auto idx = static_cast<std::size_t>(std::lround(before));
    down = apply_feedback(down, {"d", Verdict::too_hard, idx, kNow}, K);
    CHECK(down.level_estimate <= before);
  }
}

TEST_CASE("feedback through the catalog needs a known item") {
  testing::TempDir tmp("rec");
  catalog::Catalog cat(tmp.path(), classifier::DifficultyScale::cefr());
  const auto item = item_at(3, 1, {}, "connu");
  cat.upsert(item);
  const auto p = apply_feedback(profile(3.0), item.id, Verdict::too_hard, cat, kNow);
  CHECK(p.level_estimate == doctest::Approx(0.8 * 3.0 + 0.2 * 2.0));
  CHECK(p.feedback_log.at(0).item_difficulty_index == 3);
  try {
    apply_feedback(profile(3.0), "nope", Verdict::ok, cat, kNow);
    FAIL("expected not_found");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::not_found);
  }
}

TEST_CASE("interests are normalized and must be disjoint") {
  auto p = profile(2.0);
  set_interests(p, {" Sports ", "Art  de vivre"}, {"POLITICS"});
  CHECK(p.interests == std::set<std::string>{"sports", "art de vivre"});
  CHECK(p.non_interests == std::set<std::string>{"politics"});
  try {
    set_interests(p, {"Music"}, {"music"});
    FAIL("expected conflict");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::conflict);
  }
  CHECK(p.interests.count("sports"));  // unchanged after the failed update
  set_interests(p, {}, {});
  CHECK(p.interests.empty());
}

TEST_CASE("profile store round-trips, serializes per user and exports") {
  testing::TempDir tmp("profiles");
  ProfileStore store(tmp.path(), K, 2.0);
  CHECK_FALSE(store.get("alice").has_value());
  CHECK_THROWS_AS(store.update("alice", [](LearnerProfile&) {}), Error);
  auto created = store.update("alice", [](LearnerProfile& p) { p.interests = {"music"}; }, true);
  CHECK(created.level_estimate == 2.0);
  CHECK(store.get("alice") == created);
  CHECK_FALSE(valid_user_id("../etc"));
  CHECK_THROWS_AS(store.update("../etc", [](LearnerProfile&) {}, true), Error);

  // concurrent read-modify-write keeps every event
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&store, t] {
      for (int i = 0; i < 25; ++i) {
        store.update("alice", [&](LearnerProfile& p) {
          p = apply_feedback(p, {"item" + std::to_string(t * 100 + i), Verdict::ok, 2, kNow}, K);
        });
      }
    });
  }
  for (auto& t : threads) t.join();
  CHECK(store.get("alice")->feedback_log.size() == 200);

  store.update("bob", [](LearnerProfile& p) { p.level_estimate = 4.5; }, true);
  std::stringstream exported;
  store.export_jsonl(exported);
  testing::TempDir other("profiles2");
  ProfileStore copy(other.path(), K, 0.0);
  CHECK(copy.import_jsonl(exported) == 2);
  CHECK(copy.users() == std::vector<std::string>{"alice", "bob"});
  CHECK(copy.get("bob") == store.get("bob"));
  CHECK(copy.get("alice") == store.get("alice"));
}
