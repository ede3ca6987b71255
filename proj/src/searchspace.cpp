#include "greytune/searchspace.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <set>
#include <sstream>

namespace greytune {
namespace {

constexpr double kGridEps = 1e-9;

bool almost_eq(double a, double b) { return std::abs(a - b) < kGridEps; }

template <typename T, std::size_t N>
bool in_grid(T x, const std::array<T, N>& grid) {
  for (T g : grid) {
    if constexpr (std::is_floating_point_v<T>) {
      if (almost_eq(x, g)) return true;
    } else {
      if (x == g) return true;
    }
  }
  return false;
}

template <typename T, std::size_t N>
T pick(const std::array<T, N>& grid, Rng& rng) {
  return grid[rng.index(N)];
}

template <typename T, std::size_t N>
T pick_excluding(const std::array<T, N>& grid, T current, Rng& rng) {
  std::vector<T> options;
  for (T g : grid) {
    bool same;
    if constexpr (std::is_floating_point_v<T>) {
      same = almost_eq(g, current);
    } else {
      same = g == current;
    }
    if (!same) options.push_back(g);
  }
  return options[rng.index(options.size())];
}

std::string format_pow10(double log10v) {
  const double r = std::round(log10v);
  if (almost_eq(log10v, r)) {
    return "1e" + std::to_string(static_cast<long long>(r));
  }
  return "1e" + format_double(log10v);
}

double parse_pow10(const std::string& s, const char* key) {
  if (s.size() < 3 || (s[0] != '1') || (s[1] != 'e' && s[1] != 'E')) {
    throw DataError(std::string(key) + ": expected power-of-ten notation, got \"" +
                    s + "\"");
  }
  const char* begin = s.c_str() + 2;
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end != s.c_str() + s.size()) {
    throw DataError(std::string(key) + ": cannot parse exponent in \"" + s + "\"");
  }
  return v;
}

/// log10 of a raw value, snapped to the half-decade lattice the grids live
/// on when the rounding error is clearly numerical.
double snapped_log10(double raw, const char* key) {
  if (!(raw > 0.0)) {
    throw DataError(std::string(key) + " must be a positive number");
  }
  const double v = std::log10(raw);
  const double snapped = std::round(v * 2.0) / 2.0;
  return std::abs(v - snapped) < 1e-6 ? snapped : v;
}

int as_int(const json& v, const char* key) {
  if (v.is_number_integer()) return v.get<int>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    const auto i = static_cast<long long>(std::llround(d));
    if (almost_eq(d, static_cast<double>(i))) return static_cast<int>(i);
  }
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    char* end = nullptr;
    const long long i = std::strtoll(s.c_str(), &end, 10);
    if (end == s.c_str() + s.size() && !s.empty()) return static_cast<int>(i);
  }
  throw DataError(std::string(key) + " must be an integer");
}

double as_double(const json& v, const char* key) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    char* end = nullptr;
    const double d = std::strtod(s.c_str(), &end);
    if (end == s.c_str() + s.size() && !s.empty()) return d;
  }
  throw DataError(std::string(key) + " must be a number");
}

bool as_bool(const json& v, const char* key) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "true" || s == "True") return true;
    if (s == "false" || s == "False") return false;
  }
  throw DataError(std::string(key) + " must be a boolean");
}

bool is_absent_marker(const json& v) {
  if (v.is_null()) return true;
  if (v.is_number_float() && std::isnan(v.get<double>())) return true;
  if (v.is_string()) {
    std::string s = v.get<std::string>();
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return s == "nan" || s == "none" || s.empty();
  }
  return false;
}

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::ostringstream os;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) os << sep;
    os << parts[i];
  }
  return os.str();
}

}  // namespace

std::string to_string(Optimizer o) {
  return o == Optimizer::AdamW ? "AdamW" : "AdamCPR";
}

std::string to_string(LoraTarget t) {
  switch (t) {
    case LoraTarget::Qkv:
      return "qkv";
    case LoraTarget::OutputProj:
      return "o";
    case LoraTarget::AllLinear:
      return "all-linear";
  }
  return "all-linear";
}

PipelineConfig default_config() {
  PipelineConfig c;
  c.optimizer = Optimizer::AdamW;
  c.log10_lr = -6.0;
  c.log10_weight_decay = -2.0;
  c.kappa_warmup_multiplier.reset();
  c.warmup_steps_pct = 10;
  c.decay_factor = 0.01;
  c.lora_target = LoraTarget::AllLinear;
  c.lora_rank = 8;
  c.lora_alpha = 16;
  c.lora_dropout = 0.0;
  c.grad_accum = 2;
  c.return_assistant_mask = false;
  return c;
}

PipelineConfig sample_config(Rng& rng) {
  PipelineConfig c;
  c.optimizer = rng.index(2) == 0 ? Optimizer::AdamW : Optimizer::AdamCPR;
  c.log10_lr = pick(kLog10LrGrid, rng);
  if (c.optimizer == Optimizer::AdamW) {
    c.log10_weight_decay = pick(kLog10WdGrid, rng);
    c.kappa_warmup_multiplier.reset();
  } else {
    c.log10_weight_decay.reset();
    c.kappa_warmup_multiplier = pick(kKappaMultiplierGrid, rng);
  }
  c.warmup_steps_pct = pick(kWarmupPctGrid, rng);
  c.decay_factor = pick(kDecayFactorGrid, rng);
  c.lora_target = pick(kLoraTargetGrid, rng);
  c.lora_rank = pick(kLoraRankGrid, rng);
  c.lora_alpha = pick(kLoraAlphaGrid, rng);
  c.lora_dropout = pick(kLoraDropoutGrid, rng);
  c.grad_accum = pick(kGradAccumGrid, rng);
  c.return_assistant_mask = rng.index(2) == 1;
  return c;
}

std::vector<std::string> validate(const PipelineConfig& c) {
  std::vector<std::string> v;
  if (!in_grid(c.log10_lr, kLog10LrGrid)) {
    v.push_back("log10_lr not in {-6,-5.5,-5,-4.5,-4,-3.5,-3}");
  }
  if (c.optimizer == Optimizer::AdamW) {
    if (!c.log10_weight_decay) {
      v.push_back("weight_decay required for AdamW");
    } else if (!in_grid(*c.log10_weight_decay, kLog10WdGrid)) {
      v.push_back("log10 weight_decay not in {-0.5,-1,-1.5,-2,-3,-4}");
    }
    if (c.kappa_warmup_multiplier) {
      v.push_back("kappa fields require AdamCPR");
    }
  } else {
    if (!c.kappa_warmup_multiplier) {
      v.push_back("kappa_warmup_multiplier required for AdamCPR");
    } else if (!in_grid(*c.kappa_warmup_multiplier, kKappaMultiplierGrid)) {
      v.push_back("kappa_warmup_multiplier not in {1,2,4}");
    }
    if (c.log10_weight_decay) {
      v.push_back("weight_decay field requires AdamW");
    }
  }
  if (!in_grid(c.warmup_steps_pct, kWarmupPctGrid)) {
    v.push_back("warmup_steps_pct not in {10,20,30,40,50}");
  }
  if (!in_grid(c.decay_factor, kDecayFactorGrid)) {
    v.push_back("decay_factor not in {0,0.1,0.01}");
  }
  if (!in_grid(c.lora_rank, kLoraRankGrid)) {
    v.push_back("rank not in {8,16,32,64}");
  }
  if (!in_grid(c.lora_alpha, kLoraAlphaGrid)) {
    v.push_back("lora_alpha not in {16,32}");
  }
  if (!in_grid(c.lora_dropout, kLoraDropoutGrid)) {
    v.push_back("lora_dropout not in {0,0.1}");
  }
  if (!in_grid(c.grad_accum, kGradAccumGrid)) {
    v.push_back("grad_accum not in {2,4,8}");
  }
  return v;
}

PipelineConfig mutate(const PipelineConfig& config, Rng& rng) {
  PipelineConfig m = config;
  switch (rng.index(11)) {
    case 0:
      if (config.optimizer == Optimizer::AdamW) {
        m.optimizer = Optimizer::AdamCPR;
        m.log10_weight_decay.reset();
        m.kappa_warmup_multiplier = pick(kKappaMultiplierGrid, rng);
      } else {
        m.optimizer = Optimizer::AdamW;
        m.kappa_warmup_multiplier.reset();
        m.log10_weight_decay = pick(kLog10WdGrid, rng);
      }
      break;
    case 1:
      m.log10_lr = pick_excluding(kLog10LrGrid, config.log10_lr, rng);
      break;
    case 2:
      if (config.optimizer == Optimizer::AdamW) {
        m.log10_weight_decay = pick_excluding(
            kLog10WdGrid, config.log10_weight_decay.value_or(kLog10WdGrid[0]),
            rng);
      } else {
        m.kappa_warmup_multiplier = pick_excluding(
            kKappaMultiplierGrid, config.kappa_warmup_multiplier.value_or(1),
            rng);
      }
      break;
    case 3:
      m.warmup_steps_pct =
          pick_excluding(kWarmupPctGrid, config.warmup_steps_pct, rng);
      break;
    case 4:
      m.decay_factor = pick_excluding(kDecayFactorGrid, config.decay_factor, rng);
      break;
    case 5:
      m.lora_target = pick_excluding(kLoraTargetGrid, config.lora_target, rng);
      break;
    case 6:
      m.lora_rank = pick_excluding(kLoraRankGrid, config.lora_rank, rng);
      break;
    case 7:
      m.lora_alpha = pick_excluding(kLoraAlphaGrid, config.lora_alpha, rng);
      break;
    case 8:
      m.lora_dropout = pick_excluding(kLoraDropoutGrid, config.lora_dropout, rng);
      break;
    case 9:
      m.grad_accum = pick_excluding(kGradAccumGrid, config.grad_accum, rng);
      break;
    case 10:
      m.return_assistant_mask = !config.return_assistant_mask;
      break;
  }
  return m;
}

EncodedConfig encode(const PipelineConfig& c) {
  auto violations = validate(c);
  if (almost_eq(c.decay_factor, 1.0)) {
    std::erase(violations, std::string("decay_factor not in {0,0.1,0.01}"));
  }
  if (!violations.empty()) {
    throw DataError("cannot encode invalid config: " + join(violations, "; "));
  }
  EncodedConfig e{};
  e[0] = c.optimizer == Optimizer::AdamW ? 1.0 : 0.0;
  e[1] = c.optimizer == Optimizer::AdamCPR ? 1.0 : 0.0;
  e[2] = c.log10_lr;
  e[3] = c.log10_weight_decay.value_or(0.0);
  e[4] = c.log10_weight_decay ? 1.0 : 0.0;
  e[5] = c.kappa_warmup_multiplier ? *c.kappa_warmup_multiplier / 4.0 : 0.0;
  e[6] = c.kappa_warmup_multiplier ? 1.0 : 0.0;
  e[7] = c.warmup_steps_pct / 100.0;
  for (std::size_t i = 0; i < kDecayFactorGrid.size(); ++i) {
    e[8 + i] = almost_eq(c.decay_factor, kDecayFactorGrid[i]) ? 1.0 : 0.0;
  }
  for (std::size_t i = 0; i < kLoraTargetGrid.size(); ++i) {
    e[11 + i] = c.lora_target == kLoraTargetGrid[i] ? 1.0 : 0.0;
  }
  e[14] = std::log2(static_cast<double>(c.lora_rank)) / 6.0;
  e[15] = c.lora_alpha / 32.0;
  e[16] = c.lora_dropout * 10.0;
  e[17] = std::log2(static_cast<double>(c.grad_accum)) / 3.0;
  e[18] = c.return_assistant_mask ? 1.0 : 0.0;
  return e;
}

int hamming_distance(const PipelineConfig& a, const PipelineConfig& b) {
  int d = 0;
  d += a.optimizer != b.optimizer;
  d += !almost_eq(a.log10_lr, b.log10_lr);
  if (a.log10_weight_decay.has_value() != b.log10_weight_decay.has_value()) {
    ++d;
  } else if (a.log10_weight_decay &&
             !almost_eq(*a.log10_weight_decay, *b.log10_weight_decay)) {
    ++d;
  }
  d += a.kappa_warmup_multiplier != b.kappa_warmup_multiplier;
  d += a.warmup_steps_pct != b.warmup_steps_pct;
  d += !almost_eq(a.decay_factor, b.decay_factor);
  d += a.lora_target != b.lora_target;
  d += a.lora_rank != b.lora_rank;
  d += a.lora_alpha != b.lora_alpha;
  d += !almost_eq(a.lora_dropout, b.lora_dropout);
  d += a.grad_accum != b.grad_accum;
  d += a.return_assistant_mask != b.return_assistant_mask;
  return d;
}

json serialize_config(const PipelineConfig& c) {
  json j;
  j["optimizer"] = to_string(c.optimizer);
  j["lr"] = format_pow10(c.log10_lr);
  if (c.log10_weight_decay) {
    j["weight_decay"] = format_pow10(*c.log10_weight_decay);
  }
  if (c.kappa_warmup_multiplier) {
    j["kappa_init_param_multiplier"] = *c.kappa_warmup_multiplier;
  }
  j["warmup_steps_pct"] = c.warmup_steps_pct;
  j["decay_factor"] = c.decay_factor;
  j["lora_layer"] = to_string(c.lora_target);
  j["lora_rank"] = c.lora_rank;
  j["lora_alpha"] = c.lora_alpha;
  j["lora_dropout"] = c.lora_dropout;
  j["batch_size"] = kMicroBatchSize * c.grad_accum;
  j["return_assistant_mask"] = c.return_assistant_mask;
  return j;
}

ParsedConfig parse_config(const json& rec, bool ignore_extra_keys) {
  if (!rec.is_object()) {
    throw DataError("config record must be a JSON object");
  }
  static const std::set<std::string> kKnownKeys = {
      "optimizer",      "lr",
      "weight_decay",   "kappa_init_param_multiplier",
      "warmup_steps_pct", "decay_factor",
      "lora_layer",     "lora_rank",
      "lora_alpha",     "lora_dropout",
      "batch_size",     "return_assistant_mask",
      "kappa_init_method", "schedule"};
  if (!ignore_extra_keys) {
    for (const auto& [key, value] : rec.items()) {
      (void)value;
      if (!kKnownKeys.contains(key)) {
        throw DataError("unknown config key: " + key);
      }
    }
  }
  for (const char* key :
       {"optimizer", "lr", "warmup_steps_pct", "decay_factor", "lora_layer",
        "lora_rank", "lora_alpha", "lora_dropout", "batch_size",
        "return_assistant_mask"}) {
    if (!rec.contains(key)) {
      throw DataError(std::string("missing config key: ") + key);
    }
  }

  ParsedConfig out;
  PipelineConfig& c = out.config;

  {
    const std::string o = rec.at("optimizer").is_string()
                              ? rec.at("optimizer").get<std::string>()
                              : "";
    if (o == "AdamW" || o == "adamw") {
      c.optimizer = Optimizer::AdamW;
    } else if (o == "AdamCPR" || o == "adamcpr") {
      c.optimizer = Optimizer::AdamCPR;
    } else {
      throw DataError("unknown optimizer: \"" + o + "\"");
    }
  }

  const json& lr = rec.at("lr");
  if (lr.is_string()) {
    c.log10_lr = parse_pow10(lr.get<std::string>(), "lr");
  } else {
    c.log10_lr = snapped_log10(as_double(lr, "lr"), "lr");
  }

  c.log10_weight_decay.reset();
  if (rec.contains("weight_decay") && !is_absent_marker(rec.at("weight_decay"))) {
    const json& wd = rec.at("weight_decay");
    if (wd.is_string()) {
      c.log10_weight_decay = parse_pow10(wd.get<std::string>(), "weight_decay");
    } else {
      c.log10_weight_decay =
          snapped_log10(as_double(wd, "weight_decay"), "weight_decay");
    }
  }

  c.kappa_warmup_multiplier.reset();
  if (rec.contains("kappa_init_param_multiplier") &&
      !is_absent_marker(rec.at("kappa_init_param_multiplier"))) {
    c.kappa_warmup_multiplier = as_int(rec.at("kappa_init_param_multiplier"),
                                       "kappa_init_param_multiplier");
  }

  c.warmup_steps_pct = as_int(rec.at("warmup_steps_pct"), "warmup_steps_pct");
  c.decay_factor = as_double(rec.at("decay_factor"), "decay_factor");

  {
    const json& layer = rec.at("lora_layer");
    const std::string t = layer.is_string() ? layer.get<std::string>() : "";
    if (t == "qkv") {
      c.lora_target = LoraTarget::Qkv;
    } else if (t == "o") {
      c.lora_target = LoraTarget::OutputProj;
    } else if (t == "all-linear" || t == "all_linear") {
      c.lora_target = LoraTarget::AllLinear;
    } else {
      throw DataError("unknown lora_layer: \"" + t + "\"");
    }
  }

  c.lora_rank = as_int(rec.at("lora_rank"), "lora_rank");
  c.lora_alpha = as_int(rec.at("lora_alpha"), "lora_alpha");
  c.lora_dropout = as_double(rec.at("lora_dropout"), "lora_dropout");

  const int batch = as_int(rec.at("batch_size"), "batch_size");
  if (batch <= 0 || batch % kMicroBatchSize != 0) {
    throw DataError("batch_size must be a positive multiple of " +
                    std::to_string(kMicroBatchSize) + ", got " +
                    std::to_string(batch));
  }
  c.grad_accum = batch / kMicroBatchSize;

  c.return_assistant_mask =
      as_bool(rec.at("return_assistant_mask"), "return_assistant_mask");

  if (rec.contains("kappa_init_method")) {
    const json& m = rec.at("kappa_init_method");
    if (!m.is_string() || m.get<std::string>() != kKappaInitMethod) {
      out.flags.push_back("kappa_init_method must be warm_start");
    }
  }
  if (rec.contains("schedule")) {
    const json& s = rec.at("schedule");
    if (!s.is_string() || s.get<std::string>() != kSchedule) {
      out.flags.push_back("schedule must be cosine");
    }
  }

  const bool legacy_decay = almost_eq(c.decay_factor, 1.0);
  if (legacy_decay) {
    out.flags.push_back(
        "decay_factor 1.0 accepted from external record (outside sampled grid)");
  }
  for (auto& violation : validate(c)) {
    if (legacy_decay && violation == "decay_factor not in {0,0.1,0.01}") continue;
    out.flags.push_back(std::move(violation));
  }
  return out;
}

std::string config_key(const PipelineConfig& config) {
  return serialize_config(config).dump();
}

}  // namespace greytune
