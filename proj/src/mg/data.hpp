#pragma once

// Exogenous load/PV time series: CSV ingestion, day slicing, synthetic
// diurnal profiles and episode sourcing.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "mg/microgrid.hpp"

namespace mg::data {

// Seconds since 1970-01-01T00:00:00, no time zone.
using Timestamp = std::int64_t;

Timestamp parse_timestamp(std::string_view text);
std::string format_timestamp(Timestamp ts);

struct SeriesRecord {
  Timestamp timestamp = 0;
  LoadPv value;
};

struct ExogenousSeries {
  double delta_t = 1.0;  // hours
  std::vector<SeriesRecord> records;

  std::size_t size() const { return records.size(); }
  // Index of the record at `ts`, or -1.
  std::ptrdiff_t index_of(Timestamp ts) const;
};

// Header `timestamp,load_kw,pv_kw`; one row per delta_t.
ExogenousSeries load_series(const std::filesystem::path& path, double delta_t);
ExogenousSeries parse_series(std::string_view csv_text, double delta_t);
void write_series(const ExogenousSeries& series, const std::filesystem::path& path);

enum class WarmupPadding { None, RepeatEarliest };

// One episode day: `warmup` preceding pairs followed by T in-day pairs.
// Day step t (1-based) reads pairs[warmup + t - 1].
struct DayProfile {
  std::vector<LoadPv> pairs;
  int warmup = 0;
  Timestamp day_start = 0;
  WarmupPadding padding = WarmupPadding::None;

  int t_steps() const { return static_cast<int>(pairs.size()) - warmup; }
  const LoadPv& at_step(int t) const { return pairs[static_cast<std::size_t>(warmup + t - 1)]; }
  // Pair for step t where t may reach back into the warm-up (t >= 1 - warmup).
  const LoadPv& at_offset(int t) const { return pairs[static_cast<std::size_t>(warmup + t - 1)]; }
};

// Number of warm-up pairs a history of window tau needs before step 1.
inline int warmup_pairs(const HorizonConfig& h) { return h.tau; }

// Slice [day_start - warmup*dt, day_start + T*dt). Throws DataError on
// insufficient coverage unless `pad` is RepeatEarliest, which repeats the
// earliest available in-day pair for missing warm-up slots.
DayProfile slice_day(const ExogenousSeries& series, Timestamp day_start, const HorizonConfig& horizon,
                     WarmupPadding pad = WarmupPadding::None);

struct ProfileShape {
  double load_night = 380.0;    // kW around midnight
  double load_trough = 300.0;   // kW at trough_hour
  double load_peak = 720.0;     // kW at peak_hour
  double load_late = 450.0;     // kW at 23:00
  double trough_hour = 7.0;
  double peak_hour = 18.0;
  double pv_peak = 240.0;       // kW
  double pv_start_hour = 8.0;   // first hour with PV output
  double pv_peak_hour = 14.0;
  double pv_end_hour = 20.0;    // PV is zero from here on
  double load_noise = 0.02;     // relative, bounded
  double pv_noise = 0.08;       // relative, bounded
  double day_jitter = 0.04;     // relative day-level scale variation

  void validate() const;
};

// Noise-free shape value at an hour of day in [0, 24).
LoadPv shape_value(const ProfileShape& shape, double hour);

// One synthetic day starting at midnight. Pure function of its arguments.
DayProfile synth_profile(std::uint64_t seed, const HorizonConfig& horizon, const ProfileShape& shape);

// Consecutive synthetic days, hourly (horizon.delta_t) records from `start`.
ExogenousSeries synth_series(std::uint64_t seed, int days, Timestamp start, const HorizonConfig& horizon,
                             const ProfileShape& shape);

struct InitialSocRule {
  enum class Kind { Fixed, Uniform } kind = Kind::Uniform;
  double value = 500.0;  // Fixed
  double lo = 24.0;      // Uniform
  double hi = 2000.0;

  static InitialSocRule fixed(double v) { return {Kind::Fixed, v, v, v}; }
  static InitialSocRule uniform(double lo, double hi) { return {Kind::Uniform, 0.0, lo, hi}; }
  void validate(const BatteryParams& bat) const;
};

double sample_initial_soc(const InitialSocRule& rule, const BatteryParams& bat, std::mt19937_64& rng);

struct EpisodeSource {
  enum class Mode { SameDay, HistoryDays } mode = Mode::SameDay;
  std::vector<DayProfile> training;  // SameDay: exactly the test day
  DayProfile test;
  InitialSocRule initial_soc;

  void validate(const HorizonConfig& h) const;
  // Min/max over the training pairs (warm-up included).
  Range load_range() const;
  Range pv_range() const;
};

EpisodeSource same_day_source(DayProfile day, InitialSocRule rule);
EpisodeSource history_source(std::vector<DayProfile> training, DayProfile test, InitialSocRule rule);

}  // namespace mg::data
