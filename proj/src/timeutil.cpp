#include "graded/timeutil.hpp"

#include <array>
#include <cctype>
#include <cstdio>

#include "graded/error.hpp"

namespace graded::timeutil {
namespace {

using namespace std::chrono;

struct Cursor {
  std::string_view s;
  std::size_t i = 0;

  bool done() const { return i >= s.size(); }
  char peek() const { return done() ? '\0' : s[i]; }
  void skip_space() {
    while (!done() && (s[i] == ' ' || s[i] == '\t')) ++i;
  }
  bool eat(char c) {
    if (peek() != c) return false;
    ++i;
    return true;
  }
  // Reads between min and max digits.
  std::optional<int> digits(std::size_t min, std::size_t max) {
    std::size_t n = 0;
    int v = 0;
    while (n < max && !done() && std::isdigit(static_cast<unsigned char>(s[i]))) {
      v = v * 10 + (s[i] - '0');
      ++i;
      ++n;
    }
    if (n < min) return std::nullopt;
    return v;
  }
  std::string_view word() {
    const auto start = i;
    while (!done() && std::isalpha(static_cast<unsigned char>(s[i]))) ++i;
    return s.substr(start, i - start);
  }
};

bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(a[i])) !=
        std::tolower(static_cast<unsigned char>(b[i])))
      return false;
  }
  return true;
}

std::optional<Timestamp> compose(int y, int mo, int d, int h, int mi, int sec, int offset_minutes) {
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                           day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || sec > 60) return std::nullopt;
  if (sec == 60) sec = 59;  // leap second: clamp rather than roll over
  return Timestamp{sys_days{ymd}} + hours{h} + minutes{mi} + seconds{sec} -
         minutes{offset_minutes};
}

std::optional<int> obsolete_zone(std::string_view z) {
  static const std::array<std::pair<std::string_view, int>, 12> kZones{{{"GMT", 0},
                                                                        {"UT", 0},
                                                                        {"UTC", 0},
                                                                        {"Z", 0},
                                                                        {"EST", -5 * 60},
                                                                        {"EDT", -4 * 60},
                                                                        {"CST", -6 * 60},
                                                                        {"CDT", -5 * 60},
                                                                        {"MST", -7 * 60},
                                                                        {"MDT", -6 * 60},
                                                                        {"PST", -8 * 60},
                                                                        {"PDT", -7 * 60}}};
  for (const auto& [name, off] : kZones)
    if (iequals(name, z)) return off;
  return std::nullopt;
}

}  // namespace

std::optional<Timestamp> parse_rfc822(std::string_view s) {
  static constexpr std::array<std::string_view, 12> kMonths{
      "jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec"};
  Cursor c{s};
  c.skip_space();
  // optional weekday
  const auto save = c.i;
  const auto wd = c.word();
  if (!wd.empty()) {
    c.skip_space();
    if (!c.eat(',')) c.i = save;
    c.skip_space();
  }
  const auto d = c.digits(1, 2);
  if (!d) return std::nullopt;
  c.skip_space();
  const auto mon = c.word();
  int month_index = 0;
  for (std::size_t m = 0; m < kMonths.size(); ++m)
    if (mon.size() >= 3 && iequals(mon.substr(0, 3), kMonths[m])) month_index = int(m) + 1;
  if (month_index == 0) return std::nullopt;
  c.skip_space();
  auto y = c.digits(2, 4);
  if (!y) return std::nullopt;
  if (*y < 100) *y += *y < 50 ? 2000 : 1900;
  c.skip_space();
  const auto h = c.digits(2, 2);
  if (!h || !c.eat(':')) return std::nullopt;
  const auto mi = c.digits(2, 2);
  if (!mi) return std::nullopt;
  int sec = 0;
  if (c.eat(':')) {
    const auto ss = c.digits(2, 2);
    if (!ss) return std::nullopt;
    sec = *ss;
  }
  c.skip_space();
  int offset = 0;
  if (c.peek() == '+' || c.peek() == '-') {
    const int sign = c.peek() == '-' ? -1 : 1;
    ++c.i;
    const auto hhmm = c.digits(4, 4);
    if (!hhmm) return std::nullopt;
    offset = sign * ((*hhmm / 100) * 60 + *hhmm % 100);
  } else if (!c.done()) {
    const auto zone = obsolete_zone(c.word());
    if (!zone) return std::nullopt;
    offset = *zone;
  }
  c.skip_space();
  if (!c.done()) return std::nullopt;
  return compose(*y, month_index, *d, *h, *mi, sec, offset);
}

std::optional<Timestamp> parse_rfc3339(std::string_view s) {
  Cursor c{s};
  c.skip_space();
  const auto y = c.digits(4, 4);
  if (!y || !c.eat('-')) return std::nullopt;
  const auto mo = c.digits(2, 2);
  if (!mo || !c.eat('-')) return std::nullopt;
  const auto d = c.digits(2, 2);
  if (!d) return std::nullopt;
  if (!(c.eat('T') || c.eat('t') || c.eat(' '))) return std::nullopt;
  const auto h = c.digits(2, 2);
  if (!h || !c.eat(':')) return std::nullopt;
  const auto mi = c.digits(2, 2);
  if (!mi || !c.eat(':')) return std::nullopt;
  const auto sec = c.digits(2, 2);
  if (!sec) return std::nullopt;
  if (c.eat('.')) {
    if (!c.digits(1, 12)) return std::nullopt;
  }
  int offset = 0;
  if (c.eat('Z') || c.eat('z')) {
  } else if (c.peek() == '+' || c.peek() == '-') {
    const int sign = c.peek() == '-' ? -1 : 1;
    ++c.i;
    const auto oh = c.digits(2, 2);
    if (!oh || !c.eat(':')) return std::nullopt;
    const auto om = c.digits(2, 2);
    if (!om) return std::nullopt;
    offset = sign * (*oh * 60 + *om);
  } else {
    return std::nullopt;
  }
  c.skip_space();
  if (!c.done()) return std::nullopt;
  return compose(*y, *mo, *d, *h, *mi, *sec, offset);
}

std::optional<Timestamp> parse_any(std::string_view s) {
  if (auto t = parse_rfc3339(s)) return t;
  return parse_rfc822(s);
}

std::string format_rfc3339(Timestamp t) {
  const auto day_point = floor<days>(t);
  const year_month_day ymd{day_point};
  const hh_mm_ss hms{t - day_point};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", int(ymd.year()),
                unsigned(ymd.month()), unsigned(ymd.day()), int(hms.hours().count()),
                int(hms.minutes().count()), int(hms.seconds().count()));
  return buf;
}

Timestamp parse_stored(std::string_view s) {
  const auto t = parse_rfc3339(s);
  if (!t) throw Error(ErrorCode::format, "bad timestamp '" + std::string(s) + "'");
  return *t;
}

}  // namespace graded::timeutil
