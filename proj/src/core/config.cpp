#include "adaudit/core/config.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "adaudit/common/error.hpp"

namespace adaudit {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

template <class T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || p != value.data() + value.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "config key '" + std::string(key) + "': not a number: '" + std::string(value) + "'");
  }
  return out;
}

std::vector<std::string> parse_list(std::string_view value) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= value.size()) {
    auto comma = value.find(',', pos);
    if (comma == std::string_view::npos) comma = value.size();
    const auto item = trim(value.substr(pos, comma - pos));
    if (!item.empty()) out.emplace_back(item);
    pos = comma + 1;
  }
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) {
    if (!out.empty()) out += ',';
    out += s;
  }
  return out;
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

}  // namespace

void StudyConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) {
      throw Error(ErrorCode::kInvalidArgument, std::string(name) + " must be positive");
    }
  };
  positive(observational_days, "observational_days");
  positive(intervention_days, "intervention_days");
  positive(min_ads_gate, "min_ads_gate");
  positive(reminder_day, "reminder_day");
  positive(holistic_sample_max, "holistic_sample_max");
  positive(per_ad_per_category_max, "per_ad_per_category_max");
  if (milestone_payment_units < 0) {
    throw Error(ErrorCode::kInvalidArgument, "milestone_payment_units must be nonnegative");
  }
  if (!std::is_sorted(recognition_bucket_percent.begin(), recognition_bucket_percent.end()) ||
      recognition_bucket_percent.front() < 0 || recognition_bucket_percent.back() > 100) {
    throw Error(ErrorCode::kInvalidArgument,
                "recognition_bucket_percent must be ascending within [0,100]");
  }
}

StudyConfig parse_study_config(std::string_view text) {
  StudyConfig c;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::kInvalidArgument,
                  "config line " + std::to_string(line_no) + ": expected key = value");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key == "observational_days") c.observational_days = parse_number<int>(key, value);
    else if (key == "intervention_days") c.intervention_days = parse_number<int>(key, value);
    else if (key == "min_ads_gate") c.min_ads_gate = parse_number<int>(key, value);
    else if (key == "reminder_day") c.reminder_day = parse_number<int>(key, value);
    else if (key == "holistic_sample_max") c.holistic_sample_max = parse_number<int>(key, value);
    else if (key == "per_ad_per_category_max")
      c.per_ad_per_category_max = parse_number<int>(key, value);
    else if (key == "milestone_payment_units")
      c.milestone_payment_units = parse_number<std::int64_t>(key, value);
    else if (key == "rng_seed") c.rng_seed = parse_number<std::uint64_t>(key, value);
    else if (key == "recognition_bucket_percent") {
      const auto items = parse_list(value);
      if (items.size() != 7) {
        throw Error(ErrorCode::kInvalidArgument, "recognition_bucket_percent needs 7 values");
      }
      for (std::size_t i = 0; i < 7; ++i) {
        c.recognition_bucket_percent[i] = std::stod(items[i]);
      }
    } else if (key == "vocab.age") c.vocabulary.age = parse_list(value);
    else if (key == "vocab.race") c.vocabulary.race = parse_list(value);
    else if (key == "vocab.education") c.vocabulary.education = parse_list(value);
    else if (key == "vocab.income") c.vocabulary.income = parse_list(value);
    else if (key == "vocab.region") c.vocabulary.region = parse_list(value);
    else {
      throw Error(ErrorCode::kInvalidArgument, "unknown config key '" + std::string(key) + "'");
    }
  }
  c.validate();
  return c;
}

std::string format_study_config(const StudyConfig& c) {
  std::ostringstream out;
  out << "observational_days = " << c.observational_days << '\n'
      << "intervention_days = " << c.intervention_days << '\n'
      << "min_ads_gate = " << c.min_ads_gate << '\n'
      << "reminder_day = " << c.reminder_day << '\n'
      << "holistic_sample_max = " << c.holistic_sample_max << '\n'
      << "per_ad_per_category_max = " << c.per_ad_per_category_max << '\n'
      << "milestone_payment_units = " << c.milestone_payment_units << '\n'
      << "rng_seed = " << c.rng_seed << '\n'
      << "recognition_bucket_percent = ";
  for (std::size_t i = 0; i < 7; ++i) {
    if (i) out << ',';
    out << c.recognition_bucket_percent[i];
  }
  out << '\n'
      << "vocab.age = " << join(c.vocabulary.age) << '\n'
      << "vocab.race = " << join(c.vocabulary.race) << '\n'
      << "vocab.education = " << join(c.vocabulary.education) << '\n'
      << "vocab.income = " << join(c.vocabulary.income) << '\n'
      << "vocab.region = " << join(c.vocabulary.region) << '\n';
  return out.str();
}

void validate_demographics(const Demographics& d, const Vocabulary& vocab) {
  auto check = [](const std::vector<std::string>& v, const std::string& value, const char* field) {
    if (!contains(v, value)) {
      throw Error(ErrorCode::kInvalidArgument,
                  std::string("demographics.") + field + ": '" + value + "' not in vocabulary");
    }
  };
  check(vocab.age, d.age, "age");
  check(vocab.education, d.education, "education");
  check(vocab.income, d.income, "income");
  check(vocab.region, d.region, "region");
  if (d.race.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                "demographics.race: empty (use 'undisclosed' to withhold)");
  }
  for (const auto& r : d.race) check(vocab.race, r, "race");
  if (d.race.size() > 1 && d.race.contains("undisclosed")) {
    throw Error(ErrorCode::kInvalidArgument, "demographics.race: 'undisclosed' must stand alone");
  }
}

}  // namespace adaudit
