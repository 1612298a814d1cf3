#include "mg/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "mg/errors.hpp"

namespace mg::data {

namespace {

// Howard Hinnant's days_from_civil.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp + (mp < 10 ? 3 : -9);
  y += m <= 2;
}

bool read_int(std::string_view s, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > s.size()) return false;
  auto [p, ec] = std::from_chars(s.data() + pos, s.data() + pos + len, out);
  return ec == std::errc() && p == s.data() + pos + len;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double parse_double(std::string_view s, std::size_t line, const char* field) {
  s = trim(s);
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v))
    throw DataError(std::string("cannot parse ") + field + " '" + std::string(s) + "'", line);
  return v;
}

std::string shortest(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

// splitmix64 finalizer, used to derive independent per-day streams.
std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double cosine_blend(double a, double b, double frac) {
  const double w = 0.5 * (1.0 - std::cos(std::numbers::pi * frac));
  return a + (b - a) * w;
}

}  // namespace

Timestamp parse_timestamp(std::string_view text) {
  std::string_view s = trim(text);
  if (!s.empty() && s.back() == 'Z') s.remove_suffix(1);
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, se = 0;
  const bool ok = s.size() >= 16 && s[4] == '-' && s[7] == '-' && (s[10] == 'T' || s[10] == ' ') &&
                  s[13] == ':' && read_int(s, 0, 4, y) && read_int(s, 5, 2, mo) && read_int(s, 8, 2, d) &&
                  read_int(s, 11, 2, h) && read_int(s, 14, 2, mi) &&
                  (s.size() == 16 || (s.size() == 19 && s[16] == ':' && read_int(s, 17, 2, se)));
  if (!ok || mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || se > 60)
    throw DataError("invalid ISO-8601 timestamp '" + std::string(text) + "'");
  return days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d)) * 86400 + h * 3600 +
         mi * 60 + se;
}

std::string format_timestamp(Timestamp ts) {
  std::int64_t days = ts >= 0 ? ts / 86400 : (ts - 86399) / 86400;
  std::int64_t rem = ts - days * 86400;
  std::int64_t y = 0;
  unsigned m = 0, d = 0;
  civil_from_days(days, y, m, d);
  char buf[96];
  std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld:%02lld", static_cast<long long>(y), m, d,
                static_cast<long long>(rem / 3600), static_cast<long long>((rem % 3600) / 60),
                static_cast<long long>(rem % 60));
  return buf;
}

std::ptrdiff_t ExogenousSeries::index_of(Timestamp ts) const {
  if (records.empty()) return -1;
  const std::int64_t step = static_cast<std::int64_t>(std::llround(delta_t * 3600.0));
  const std::int64_t off = ts - records.front().timestamp;
  if (off < 0 || off % step != 0) return -1;
  const std::int64_t idx = off / step;
  return idx < static_cast<std::int64_t>(records.size()) ? static_cast<std::ptrdiff_t>(idx) : -1;
}

ExogenousSeries parse_series(std::string_view text, double delta_t) {
  if (!(delta_t > 0.0)) throw ConfigError("delta_t must be positive");
  ExogenousSeries series;
  series.delta_t = delta_t;
  const std::int64_t step = static_cast<std::int64_t>(std::llround(delta_t * 3600.0));

  std::size_t line_no = 0;
  bool header_seen = false;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty()) continue;
    if (!header_seen) {
      if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.remove_prefix(3);  // BOM
      if (line != "timestamp,load_kw,pv_kw")
        throw DataError("expected header 'timestamp,load_kw,pv_kw', got '" + std::string(line) + "'", line_no);
      header_seen = true;
      continue;
    }
    const std::size_t c1 = line.find(',');
    const std::size_t c2 = c1 == std::string_view::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string_view::npos || line.find(',', c2 + 1) != std::string_view::npos)
      throw DataError("expected 3 comma-separated fields", line_no);
    SeriesRecord rec;
    try {
      rec.timestamp = parse_timestamp(line.substr(0, c1));
    } catch (const DataError& e) {
      throw DataError(e.what(), line_no);
    }
    rec.value.load = parse_double(line.substr(c1 + 1, c2 - c1 - 1), line_no, "load_kw");
    rec.value.pv = parse_double(line.substr(c2 + 1), line_no, "pv_kw");
    if (rec.value.load < 0.0 || rec.value.pv < 0.0)
      throw DataError("negative power at " + format_timestamp(rec.timestamp), line_no);
    if (!series.records.empty()) {
      const Timestamp prev = series.records.back().timestamp;
      if (rec.timestamp <= prev)
        throw DataError("timestamps not strictly increasing at " + format_timestamp(rec.timestamp), line_no);
      if (rec.timestamp - prev != step)
        throw DataError("spacing violation: " + format_timestamp(rec.timestamp) + " follows " +
                            format_timestamp(prev) + ", expected a " + shortest(delta_t) + " h step",
                        line_no);
    }
    series.records.push_back(rec);
  }
  if (!header_seen) throw DataError("empty file: missing header", line_no);
  if (series.records.empty()) throw DataError("no data rows", line_no);
  return series;
}

ExogenousSeries load_series(const std::filesystem::path& path, double delta_t) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_series(buf.str(), delta_t);
}

void write_series(const ExogenousSeries& series, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "timestamp,load_kw,pv_kw\n";
  for (const auto& r : series.records)
    out << format_timestamp(r.timestamp) << ',' << shortest(r.value.load) << ',' << shortest(r.value.pv) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

DayProfile slice_day(const ExogenousSeries& series, Timestamp day_start, const HorizonConfig& horizon,
                     WarmupPadding pad) {
  const int warm = warmup_pairs(horizon);
  const std::ptrdiff_t start = series.index_of(day_start);
  if (start < 0 || start + horizon.t_steps > static_cast<std::ptrdiff_t>(series.size()))
    throw DataError("insufficient coverage: series does not contain " + std::to_string(horizon.t_steps) +
                    " steps from " + format_timestamp(day_start));
  DayProfile day;
  day.warmup = warm;
  day.day_start = day_start;
  const std::ptrdiff_t first = start - warm;
  if (first < 0) {
    if (pad == WarmupPadding::None)
      throw DataError("insufficient coverage: " + std::to_string(warm) + " warm-up steps needed before " +
                      format_timestamp(day_start));
    day.padding = WarmupPadding::RepeatEarliest;
  }
  day.pairs.reserve(static_cast<std::size_t>(warm + horizon.t_steps));
  for (std::ptrdiff_t i = first; i < start + horizon.t_steps; ++i)
    day.pairs.push_back(series.records[static_cast<std::size_t>(std::max<std::ptrdiff_t>(i, 0))].value);
  return day;
}

void ProfileShape::validate() const {
  auto req = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  req(load_night >= 0 && load_trough >= 0 && load_peak >= 0 && load_late >= 0, "shape: loads must be >= 0");
  req(trough_hour > 0 && trough_hour < peak_hour && peak_hour < 23.0, "shape: need 0 < trough < peak < 23");
  req(pv_peak >= 0, "shape: pv_peak must be >= 0");
  req(pv_start_hour >= 1 && pv_start_hour < pv_peak_hour && pv_peak_hour < pv_end_hour && pv_end_hour <= 24,
      "shape: need 1 <= pv_start < pv_peak < pv_end <= 24");
  req(load_noise >= 0 && load_noise < 1 && pv_noise >= 0 && pv_noise < 1 && day_jitter >= 0 && day_jitter < 1,
      "shape: noise levels must lie in [0, 1)");
}

LoadPv shape_value(const ProfileShape& s, double hour) {
  // Double hump: a late-morning shoulder and the evening peak.
  const double hump_hour = 0.5 * (s.trough_hour + s.peak_hour) - 1.5;
  const double dip_hour = hump_hour + 0.4 * (s.peak_hour - hump_hour);
  const double hump = s.load_trough + 0.45 * (s.load_peak - s.load_trough);
  const double dip = s.load_trough + 0.38 * (s.load_peak - s.load_trough);
  const double fall_hour = s.peak_hour + 0.6 * (23.0 - s.peak_hour);
  const double fall = s.load_late + 0.45 * (s.load_peak - s.load_late);
  const double hours[] = {0.0, s.trough_hour, hump_hour, dip_hour, s.peak_hour, fall_hour, 23.0, 24.0};
  const double loads[] = {s.load_night, s.load_trough, hump, dip, s.load_peak, fall, s.load_late, s.load_night};
  double load = s.load_night;
  for (std::size_t i = 0; i + 1 < std::size(hours); ++i) {
    if (hour >= hours[i] && hour <= hours[i + 1]) {
      load = cosine_blend(loads[i], loads[i + 1], (hour - hours[i]) / (hours[i + 1] - hours[i]));
      break;
    }
  }
  double pv = 0.0;
  const double rise = s.pv_start_hour - 1.0;
  if (hour > rise && hour <= s.pv_peak_hour) {
    const double x = std::sin(0.5 * std::numbers::pi * (hour - rise) / (s.pv_peak_hour - rise));
    pv = s.pv_peak * x * x;
  } else if (hour > s.pv_peak_hour && hour < s.pv_end_hour) {
    const double x = std::sin(0.5 * std::numbers::pi * (s.pv_end_hour - hour) / (s.pv_end_hour - s.pv_peak_hour));
    pv = s.pv_peak * x * x;
  }
  return {load, pv};
}

ExogenousSeries synth_series(std::uint64_t seed, int days, Timestamp start, const HorizonConfig& horizon,
                             const ProfileShape& shape) {
  shape.validate();
  if (days < 1) throw ConfigError("synth_series: need at least one day");
  ExogenousSeries series;
  series.delta_t = horizon.delta_t;
  const int per_day = static_cast<int>(std::llround(24.0 / horizon.delta_t));
  const std::int64_t step = static_cast<std::int64_t>(std::llround(horizon.delta_t * 3600.0));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int d = 0; d < days; ++d) {
    std::mt19937_64 rng(mix(seed ^ mix(static_cast<std::uint64_t>(d) + 1)));
    const double load_scale = 1.0 + shape.day_jitter * unit(rng);
    const double pv_scale = 1.0 + shape.day_jitter * unit(rng);
    for (int k = 0; k < per_day; ++k) {
      const double hour = k * horizon.delta_t;
      LoadPv v = shape_value(shape, hour);
      v.load *= load_scale * (1.0 + shape.load_noise * unit(rng));
      v.pv *= pv_scale * (1.0 + shape.pv_noise * unit(rng));
      v.load = std::max(v.load, 0.0);
      v.pv = std::max(v.pv, 0.0);
      series.records.push_back({start + (static_cast<std::int64_t>(d) * per_day + k) * step, v});
    }
  }
  return series;
}

DayProfile synth_profile(std::uint64_t seed, const HorizonConfig& horizon, const ProfileShape& shape) {
  const int per_day = static_cast<int>(std::llround(24.0 / horizon.delta_t));
  const int lead_days = (warmup_pairs(horizon) + per_day - 1) / per_day;
  const int steps_days = (horizon.t_steps + per_day - 1) / per_day;
  const ExogenousSeries s = synth_series(seed, lead_days + steps_days, 0, horizon, shape);
  const Timestamp day_start = static_cast<Timestamp>(lead_days) * 86400;
  return slice_day(s, day_start, horizon);
}

void InitialSocRule::validate(const BatteryParams& bat) const {
  if (kind == Kind::Fixed) {
    if (!(value >= bat.e_min && value <= bat.e_max))
      throw ConfigError("initial SoC " + shortest(value) + " outside [" + shortest(bat.e_min) + ", " +
                        shortest(bat.e_max) + "]");
  } else if (!(lo >= bat.e_min && hi <= bat.e_max && lo <= hi)) {
    throw ConfigError("initial SoC range must lie within [e_min, e_max]");
  }
}

double sample_initial_soc(const InitialSocRule& rule, const BatteryParams& bat, std::mt19937_64& rng) {
  rule.validate(bat);
  if (rule.kind == InitialSocRule::Kind::Fixed) return rule.value;
  if (rule.lo == rule.hi) return rule.lo;
  std::uniform_real_distribution<double> dist(rule.lo, rule.hi);
  return std::clamp(dist(rng), rule.lo, rule.hi);
}

void EpisodeSource::validate(const HorizonConfig& h) const {
  const int need = warmup_pairs(h) + h.t_steps;
  auto check = [&](const DayProfile& d) {
    if (d.warmup != warmup_pairs(h) || static_cast<int>(d.pairs.size()) != need)
      throw ConfigError("day profile has " + std::to_string(d.pairs.size()) + " pairs, expected " +
                        std::to_string(need));
  };
  check(test);
  if (training.empty()) throw ConfigError("episode source has no training days");
  for (const auto& d : training) check(d);
  if (mode == Mode::HistoryDays)
    for (const auto& d : training)
      if (d.day_start == test.day_start) throw ConfigError("history-days mode: training day equals test day");
}

namespace {
template <class F>
Range range_over(const EpisodeSource& src, F field) {
  Range r{1e300, -1e300};
  auto scan = [&](const DayProfile& d) {
    for (const auto& p : d.pairs) {
      r.lo = std::min(r.lo, field(p));
      r.hi = std::max(r.hi, field(p));
    }
  };
  for (const auto& d : src.training) scan(d);
  if (!(r.hi > r.lo)) r.hi = r.lo + 1.0;
  return r;
}
}  // namespace

Range EpisodeSource::load_range() const {
  return range_over(*this, [](const LoadPv& p) { return p.load; });
}
Range EpisodeSource::pv_range() const {
  return range_over(*this, [](const LoadPv& p) { return p.pv; });
}

EpisodeSource same_day_source(DayProfile day, InitialSocRule rule) {
  EpisodeSource src;
  src.mode = EpisodeSource::Mode::SameDay;
  src.training = {day};
  src.test = std::move(day);
  src.initial_soc = rule;
  return src;
}

EpisodeSource history_source(std::vector<DayProfile> training, DayProfile test, InitialSocRule rule) {
  EpisodeSource src;
  src.mode = EpisodeSource::Mode::HistoryDays;
  src.training = std::move(training);
  src.test = std::move(test);
  src.initial_soc = rule;
  return src;
}

}  // namespace mg::data
