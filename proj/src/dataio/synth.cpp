#include "healthprism/dataio/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "healthprism/dataio/schema.hpp"
#include "healthprism/random.hpp"

namespace healthprism::dataio {

namespace {

enum Latent { kActivity = 0, kWellbeing, kSocioeconomic };

struct FeatureModel {
  const char* id;
  double mean;
  double sd;
  double lo;
  double hi;
  double step;
  Latent latent;
  double loading;
};

// Answers are mean + sd * (loading * latent + sqrt(1 - loading^2) * noise),
// clamped and rounded to the answer granularity. Age, height, weight, bmi
// and phone ownership are derived separately below.
// clang-format off
constexpr FeatureModel kFeatureModels[] = {
  {"siblings",              1.0, 0.8, 0, 5, 1, kSocioeconomic, -0.1},
  {"household_income",     30.0, 15,  5, 120, 0.5, kSocioeconomic, 0.6},
  {"parent_education",     12.0, 3,   6, 20, 1, kSocioeconomic, 0.5},
  {"household_size",        4.0, 1,   2, 9, 1, kSocioeconomic, -0.1},
  {"living_area",          45.0, 15, 15, 150, 1, kSocioeconomic, 0.5},
  {"parent_work_hours",    48.0, 8,  20, 80, 1, kSocioeconomic, 0.1},
  {"public_housing",        0.45, 0.5, 0, 1, 1, kSocioeconomic, -0.5},
  {"sleep_weekday",         8.0, 0.9, 5, 11, 0.25, kWellbeing, 0.3},
  {"sleep_weekend",         9.0, 1.0, 5, 12, 0.25, kWellbeing, 0.2},
  {"bedtime_weekday",       3.5, 0.8, 1, 7, 0.25, kWellbeing, -0.2},
  {"bedtime_weekend",       4.2, 0.9, 1, 8, 0.25, kWellbeing, -0.1},
  {"sleep_latency",        20.0, 12,  0, 90, 5, kWellbeing, -0.2},
  {"sleep_quality",         3.8, 0.9, 1, 5, 1, kWellbeing, 0.3},
  {"nap_frequency",         1.0, 1.2, 0, 7, 1, kActivity, -0.1},
  {"fruit",                 1.8, 0.9, 0, 6, 0.5, kSocioeconomic, 0.2},
  {"vegetables",            2.0, 1.0, 0, 6, 0.5, kSocioeconomic, 0.2},
  {"sugary_drinks",         3.0, 2.0, 0, 14, 1, kSocioeconomic, -0.2},
  {"fast_food",             1.5, 1.2, 0, 7, 1, kSocioeconomic, -0.2},
  {"breakfast",             5.5, 1.5, 0, 7, 1, kWellbeing, 0.2},
  {"water",                 5.0, 2.0, 0, 12, 1, kActivity, 0.2},
  {"snacks",                1.5, 1.0, 0, 6, 0.5, kActivity, -0.1},
  {"homework_hours",        2.0, 0.8, 0, 6, 0.25, kSocioeconomic, 0.2},
  {"tutoring_hours",        3.0, 2.5, 0, 15, 0.5, kSocioeconomic, 0.3},
  {"school_satisfaction",   3.6, 0.9, 1, 5, 1, kWellbeing, 0.3},
  {"academic_stress",       3.2, 1.0, 1, 5, 1, kWellbeing, -0.3},
  {"extracurricular_hours",  3.0, 2.0, 0, 15, 0.5, kActivity, 0.3},
  {"online_class_hours",    5.0, 5.0, 0, 30, 1, kSocioeconomic, 0.0},
  {"peer_support",          3.9, 0.8, 1, 5, 1, kWellbeing, 0.3},
  {"teacher_support",       3.7, 0.9, 1, 5, 1, kWellbeing, 0.2},
  {"screen_weekday",        3.0, 1.5, 0, 12, 0.25, kActivity, -0.3},
  {"screen_weekend",        4.5, 2.0, 0, 14, 0.25, kActivity, -0.3},
  {"gaming_hours",          1.2, 1.0, 0, 8, 0.25, kActivity, -0.2},
  {"social_media_hours",    1.5, 1.2, 0, 10, 0.25, kWellbeing, -0.2},
  {"device_before_bed",     4.0, 2.2, 0, 7, 1, kWellbeing, -0.2},
  {"sport_days",            3.0, 1.7, 0, 7, 1, kActivity, 0.5},
  {"sport_minutes",        40.0, 20,  0, 180, 5, kActivity, 0.5},
  {"outdoor_play",          5.0, 3.0, 0, 25, 0.5, kActivity, 0.4},
  {"pe_lessons",            2.0, 0.6, 0, 5, 1, kActivity, 0.1},
  {"active_commute",       12.0, 9.0, 0, 60, 1, kActivity, 0.3},
  {"sedentary_hours",       8.0, 1.8, 3, 14, 0.25, kActivity, -0.4},
};
// clang-format on

double round_to(double value, double step) { return std::round(value / step) * step; }

const FeatureModel* model_of(const std::string& id) {
  for (const auto& m : kFeatureModels) {
    if (id == m.id) return &m;
  }
  return nullptr;
}

// Standardized score used by the planted label rules.
double standardized(const std::string& id, double value, int age) {
  if (const auto* m = model_of(id)) return (value - m->mean) / m->sd;
  if (id == "age") return (value - 12.0) / 3.7;
  if (id == "height") return (value - (115.0 + 5.5 * (age - 6))) / 7.0;
  if (id == "weight") return (value - (20.0 + 3.5 * (age - 6))) / 6.0;
  if (id == "bmi") return (value - 18.0) / 3.0;
  if (id == "phone_years") return (value - std::max(0, age - 8)) / 1.5;
  fail(ErrorCode::config, "planted effect references unknown feature '" + id + "'");
}

constexpr std::int64_t kDayMinutes = 24 * 60;

}  // namespace

std::vector<PlantedContextEffect> SynthConfig::default_context_effects() {
  return {
      {Indicator::PHYF, {"sport_days", "sedentary_hours"}, {1.0, -1.0}, 2.5, 0.3, 0.0},
      {Indicator::VVAS, {"school_satisfaction", "academic_stress"}, {1.0, -1.0}, 2.5, 0.3, 0.0},
      {Indicator::PSYF, {"sleep_weekday", "screen_weekday"}, {1.0, -1.0}, 2.5, 0.3, 0.0},
      {Indicator::RESI, {"peer_support", "sleep_quality"}, {1.0, 1.0}, 2.5, 0.3, 0.0},
      {Indicator::CONN, {"teacher_support", "social_media_hours"}, {1.0, -1.0}, 2.5, 0.3, 0.0},
  };
}

void SynthConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorCode::config, "invalid synth config: " + what);
  };
  require(n >= 1, "n must be >= 1");
  require(female_proportion >= 0.0 && female_proportion <= 1.0, "female_proportion outside [0, 1]");
  require(adolescent_proportion >= 0.0 && adolescent_proportion <= 1.0,
          "adolescent_proportion outside [0, 1]");
  double total = 0.0;
  for (double p : learning_mode_proportions) {
    require(p >= 0.0, "learning_mode_proportions must be nonnegative");
    total += p;
  }
  require(total > 0.0, "learning_mode_proportions must not all be zero");
  require(missing_rate >= 0.0 && missing_rate < 1.0, "missing_rate outside [0, 1)");
  require(wear_days >= 1, "wear_days must be >= 1");
  require(max_wear_gaps >= 0, "max_wear_gaps must be >= 0");
  require(mvpa_window_start >= 0 && mvpa_window_minutes >= 1 &&
              mvpa_window_start + mvpa_window_minutes <= kDayMinutes,
          "MVPA window must lie within one day");
  const Schema schema = default_schema();
  for (const auto& effect : context_effects) {
    require(effect.features.size() >= 2, "each planted context effect needs >= 2 features");
    require(effect.features.size() == effect.weights.size(), "features/weights length mismatch");
    require(effect.indicator != Indicator::MVPA, "MVPA is planted through motion");
    for (const auto& f : effect.features) {
      const auto idx = schema.find(f);
      require(idx && schema[*idx].kind == FeatureKind::numeric,
              "planted feature '" + f + "' must be a numeric schema feature");
    }
  }
}

nlohmann::json SynthConfig::to_json() const {
  nlohmann::json effects = nlohmann::json::array();
  for (const auto& e : context_effects) {
    effects.push_back({{"indicator", std::string(healthprism::to_string(e.indicator))},
                       {"features", e.features},
                       {"weights", e.weights},
                       {"gain", e.gain},
                       {"bias", e.bias},
                       {"flip_rate", e.flip_rate}});
  }
  return {{"n", n},
          {"seed", seed},
          {"female_proportion", female_proportion},
          {"adolescent_proportion", adolescent_proportion},
          {"learning_mode_proportions", learning_mode_proportions},
          {"missing_rate", missing_rate},
          {"wear_days", wear_days},
          {"start_epoch", start_epoch},
          {"max_wear_gaps", max_wear_gaps},
          {"mvpa_window_start", mvpa_window_start},
          {"mvpa_window_minutes", mvpa_window_minutes},
          {"mvpa_threshold", mvpa_threshold},
          {"mvpa_flip_rate", mvpa_flip_rate},
          {"planted_effects", effects}};
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
  SynthConfig c;
  try {
    c.n = j.value("n", c.n);
    c.seed = j.value("seed", c.seed);
    c.female_proportion = j.value("female_proportion", c.female_proportion);
    c.adolescent_proportion = j.value("adolescent_proportion", c.adolescent_proportion);
    c.learning_mode_proportions = j.value("learning_mode_proportions", c.learning_mode_proportions);
    c.missing_rate = j.value("missing_rate", c.missing_rate);
    c.wear_days = j.value("wear_days", c.wear_days);
    c.start_epoch = j.value("start_epoch", c.start_epoch);
    c.max_wear_gaps = j.value("max_wear_gaps", c.max_wear_gaps);
    c.mvpa_window_start = j.value("mvpa_window_start", c.mvpa_window_start);
    c.mvpa_window_minutes = j.value("mvpa_window_minutes", c.mvpa_window_minutes);
    c.mvpa_threshold = j.value("mvpa_threshold", c.mvpa_threshold);
    c.mvpa_flip_rate = j.value("mvpa_flip_rate", c.mvpa_flip_rate);
    if (j.contains("planted_effects")) {
      c.context_effects.clear();
      for (const auto& e : j.at("planted_effects")) {
        PlantedContextEffect effect;
        const auto name = e.at("indicator").get<std::string>();
        const auto ind = parse_indicator(name);
        if (!ind) fail(ErrorCode::config, "unknown indicator '" + name + "' in planted_effects");
        effect.indicator = *ind;
        effect.features = e.at("features").get<std::vector<std::string>>();
        effect.weights = e.at("weights").get<std::vector<double>>();
        effect.gain = e.value("gain", effect.gain);
        effect.bias = e.value("bias", effect.bias);
        effect.flip_rate = e.value("flip_rate", effect.flip_rate);
        c.context_effects.push_back(std::move(effect));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::config, std::string("malformed synth config: ") + e.what());
  }
  c.validate();
  return c;
}

double window_magnitude(const RawMotionRecord& record, const SynthConfig& config) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& s : record.samples) {
    const std::int64_t minute = s.timestamp / 60;
    const std::int64_t tod = ((minute % kDayMinutes) + kDayMinutes) % kDayMinutes;
    if (tod < config.mvpa_window_start || tod >= config.mvpa_window_start + config.mvpa_window_minutes) {
      continue;
    }
    sum += std::sqrt(s.ax * s.ax + s.ay * s.ay + s.az * s.az);
    ++count;
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

RawDataset generate_synthetic(const SynthConfig& config) {
  config.validate();
  RawDataset raw;
  raw.schema = default_schema();
  const Schema& schema = raw.schema;
  const std::size_t width = std::to_string(std::max<std::size_t>(config.n, 1000) - 1).size();
  const double mode_total = config.learning_mode_proportions[0] +
                            config.learning_mode_proportions[1] +
                            config.learning_mode_proportions[2];

  for (std::size_t i = 0; i < config.n; ++i) {
    Rng rng(derive_seed(config.seed, i, 0x5eed));
    std::string id = std::to_string(i + 1);
    id = "P" + std::string(width - std::min(width, id.size()), '0') + id;

    // Demographics and latent traits.
    const bool female = rng.bernoulli(config.female_proportion);
    const bool adolescent = rng.bernoulli(config.adolescent_proportion);
    const int age = adolescent ? 12 + static_cast<int>(rng.index(7)) : 6 + static_cast<int>(rng.index(6));
    const double mode_draw = rng.uniform() * mode_total;
    const char* mode = mode_draw < config.learning_mode_proportions[0] ? "face-to-face"
                       : mode_draw < config.learning_mode_proportions[0] + config.learning_mode_proportions[1]
                           ? "mixed"
                           : "online";
    const std::array<double, 3> latent{rng.normal(), rng.normal(), rng.normal()};

    std::map<std::string, double> answers;
    answers["age"] = age;
    const double height = std::clamp(round_to(115.0 + 5.5 * (age - 6) + rng.normal(0.0, 7.0), 0.1), 100.0, 190.0);
    const double weight = std::clamp(
        round_to(20.0 + 3.5 * (age - 6) + rng.normal(0.0, 6.0) - 1.5 * latent[kActivity], 0.1), 15.0, 100.0);
    answers["height"] = height;
    answers["weight"] = weight;
    answers["bmi"] = round_to(weight / ((height / 100.0) * (height / 100.0)), 0.1);
    answers["phone_years"] = std::clamp(round_to(std::max(0, age - 8) + rng.normal(0.0, 1.5), 1.0), 0.0, 12.0);
    for (const auto& m : kFeatureModels) {
      const double mix = m.loading * latent[m.latent] +
                         std::sqrt(1.0 - m.loading * m.loading) * rng.normal();
      double v = m.mean + m.sd * mix;
      if (std::string_view(m.id) == "online_class_hours") {
        v += std::string_view(mode) == "online" ? 12.0 : std::string_view(mode) == "mixed" ? 5.0 : 0.0;
      }
      answers[m.id] = std::clamp(round_to(v, m.step), m.lo, m.hi);
    }

    RawContextRecord rec{id, std::vector<ContextValue>(schema.size())};
    for (std::size_t j = 0; j < schema.size(); ++j) {
      const auto& f = schema[j];
      if (f.id == kGenderFeature) {
        rec.values[j] = std::string(female ? "female" : "male");
      } else if (f.id == kLearningModeFeature) {
        rec.values[j] = std::string(mode);
      } else {
        rec.values[j] = answers.at(f.id);
      }
    }

    // Planted context labels, scored on the complete answers.
    HealthLabels labels{};
    for (const auto& effect : config.context_effects) {
      double score = effect.bias;
      for (std::size_t k = 0; k < effect.features.size(); ++k) {
        score += effect.gain * effect.weights[k] *
                 standardized(effect.features[k], answers.at(effect.features[k]), age);
      }
      const double p = 1.0 / (1.0 + std::exp(-score));
      bool label = rng.uniform() < p;
      if (rng.uniform() < effect.flip_rate) label = !label;
      labels[index_of(effect.indicator)] = label ? 1 : 0;
    }

    // Minute-level wrist motion: quiet nights, a moderate day, one fixed
    // morning commute peak and an evening exercise bout whose intensity is
    // the participant's trait.
    const double scale = rng.uniform(0.9, 1.1);
    const double evening = 1.0 / (1.0 + std::exp(-1.2 * (0.4 * latent[kActivity] + 0.92 * rng.normal())));
    const int wake = 7 * 60 + static_cast<int>(rng.normal(0.0, 20.0));
    const int sleep = 22 * 60 + static_cast<int>(rng.normal(0.0, 30.0));
    const std::int64_t total = static_cast<std::int64_t>(config.wear_days) * kDayMinutes;
    std::vector<std::uint8_t> worn(static_cast<std::size_t>(total), 1);
    const int gaps = config.max_wear_gaps == 0 ? 0 : static_cast<int>(rng.index(static_cast<std::size_t>(config.max_wear_gaps) + 1));
    for (int g = 0; g < gaps; ++g) {
      const auto start = static_cast<std::int64_t>(rng.index(static_cast<std::size_t>(total)));
      const auto length = 20 + static_cast<std::int64_t>(rng.index(101));
      for (std::int64_t m = start; m < std::min(total, start + length); ++m) worn[static_cast<std::size_t>(m)] = 0;
    }
    RawMotionRecord motion{id, {}};
    motion.samples.reserve(static_cast<std::size_t>(total));
    double bout = evening;
    for (std::int64_t m = 0; m < total; ++m) {
      const int tod = static_cast<int>(m % kDayMinutes);
      if (tod == 0) bout = std::max(0.0, evening + rng.normal(0.0, 0.08));
      double activity = 0.03;
      if (tod >= wake && tod < sleep) {
        activity = scale * (0.25 + 0.08 * std::sin(2.0 * std::numbers::pi * (tod - wake) / (15.0 * 60.0)));
      }
      if (tod >= wake + 30 && tod < wake + 40) activity = 1.6;
      if (tod >= config.mvpa_window_start && tod < config.mvpa_window_start + config.mvpa_window_minutes) {
        activity += bout;
      }
      const double ax = std::max(0.0, 0.60 * activity + rng.normal(0.0, 0.02));
      const double ay = std::max(0.0, 0.50 * activity + rng.normal(0.0, 0.02));
      const double az = std::max(0.0, 0.62 * activity + rng.normal(0.0, 0.02));
      if (!worn[static_cast<std::size_t>(m)]) continue;
      motion.samples.push_back({config.start_epoch + m * 60, ax, ay, az});
    }
    bool mvpa = window_magnitude(motion, config) > config.mvpa_threshold;
    if (rng.uniform() < config.mvpa_flip_rate) mvpa = !mvpa;
    labels[index_of(Indicator::MVPA)] = mvpa ? 1 : 0;

    // Drop answers at random; identity fields stay observed.
    for (std::size_t j = 0; j < schema.size(); ++j) {
      const auto& f = schema[j];
      if (f.id == kGenderFeature || f.id == kAgeFeature) continue;
      if (rng.uniform() < config.missing_rate) rec.values[j].reset();
    }

    raw.context.push_back(std::move(rec));
    raw.motion.push_back(std::move(motion));
    raw.labels.push_back(labels);
  }
  return raw;
}

}  // namespace healthprism::dataio
