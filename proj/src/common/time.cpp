#include "adaudit/common/time.hpp"

#include <charconv>
#include <cstdio>

#include "adaudit/common/error.hpp"

namespace adaudit {

using namespace std::chrono;

std::string format_iso8601(Instant t) {
  const auto day = floor<days>(t);
  const year_month_day ymd{day};
  const hh_mm_ss hms{t - day};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ",
                static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()),
                static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

namespace {

int read_int(std::string_view text, std::size_t pos, std::size_t len) {
  if (pos + len > text.size()) {
    throw Error(ErrorCode::kInvalidArgument, "truncated timestamp: " + std::string(text));
  }
  int value = 0;
  const auto* first = text.data() + pos;
  const auto [ptr, ec] = std::from_chars(first, first + len, value);
  if (ec != std::errc{} || ptr != first + len) {
    throw Error(ErrorCode::kInvalidArgument, "bad timestamp: " + std::string(text));
  }
  return value;
}

void expect_char(std::string_view text, std::size_t pos, char c) {
  if (pos >= text.size() || text[pos] != c) {
    throw Error(ErrorCode::kInvalidArgument, "bad timestamp: " + std::string(text));
  }
}

}  // namespace

Instant parse_iso8601(std::string_view text) {
  const int y = read_int(text, 0, 4);
  expect_char(text, 4, '-');
  const int mo = read_int(text, 5, 2);
  expect_char(text, 7, '-');
  const int d = read_int(text, 8, 2);
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                           day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) {
    throw Error(ErrorCode::kInvalidArgument, "invalid date: " + std::string(text));
  }
  Instant t = sys_days{ymd};
  if (text.size() == 10) return t;
  expect_char(text, 10, 'T');
  const int h = read_int(text, 11, 2);
  expect_char(text, 13, ':');
  const int mi = read_int(text, 14, 2);
  expect_char(text, 16, ':');
  const int s = read_int(text, 17, 2);
  expect_char(text, 19, 'Z');
  if (text.size() != 20 || h > 23 || mi > 59 || s > 60) {
    throw Error(ErrorCode::kInvalidArgument, "bad timestamp: " + std::string(text));
  }
  return t + hours{h} + minutes{mi} + seconds{s};
}

TimeWindow parse_iso_window(std::string_view text) {
  const auto slash = text.find('/');
  if (slash == std::string_view::npos) {
    throw Error(ErrorCode::kInvalidArgument, "window must be <from>/<to>: " + std::string(text));
  }
  TimeWindow w{parse_iso8601(text.substr(0, slash)), parse_iso8601(text.substr(slash + 1))};
  if (w.to < w.from) {
    throw Error(ErrorCode::kInvalidArgument, "window end precedes start: " + std::string(text));
  }
  return w;
}

}  // namespace adaudit
