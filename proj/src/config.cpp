#include "hjid/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "hjid/error.hpp"

namespace hjid {

std::string to_string(AblationVariant v) {
  switch (v) {
    case AblationVariant::full: return "full";
    case AblationVariant::A: return "A";
    case AblationVariant::B: return "B";
    case AblationVariant::C: return "C";
    case AblationVariant::D: return "D";
  }
  return "full";
}

AblationVariant variant_from_string(const std::string& s) {
  if (s == "full") return AblationVariant::full;
  if (s == "A") return AblationVariant::A;
  if (s == "B") return AblationVariant::B;
  if (s == "C") return AblationVariant::C;
  if (s == "D") return AblationVariant::D;
  throw ArgumentError("unknown ablation variant '" + s + "' (expected full, A, B, C or D)");
}

std::string to_string(ScoringMode m) { return m == ScoringMode::full ? "full" : "deep_only"; }

ScoringMode scoring_from_string(const std::string& s) {
  if (s == "full") return ScoringMode::full;
  if (s == "deep_only") return ScoringMode::deep_only;
  throw ArgumentError("unknown scoring mode '" + s + "' (expected full or deep_only)");
}

LossWeights TrainConfig::effective_weights() const {
  LossWeights w = weights;
  switch (variant) {
    case AblationVariant::full: break;
    case AblationVariant::A: w.w_s = 0.0; w.w_g = 0.0; break;
    case AblationVariant::B: w.w_g = 0.0; break;
    case AblationVariant::C: w.w_g = 0.0; break;
    case AblationVariant::D: break;
  }
  return w;
}

void validate(const TrainConfig& c) {
  if (c.K < 2) throw ArgumentError("config: K must be >= 2");
  if (c.k < 1 || c.k >= c.K) throw ArgumentError("config: k must satisfy 1 <= k < K");
  if (c.d == 0) throw ArgumentError("config: d must be >= 1");
  if (c.N < 2) throw ArgumentError("config: N must be >= 2");
  if (c.L < 1) throw ArgumentError("config: L must be >= 1");
  if (c.flow_hidden == 0) throw ArgumentError("config: flow_hidden must be >= 1");
  if (!(c.learning_rate > 0)) throw ArgumentError("config: learning_rate must be > 0");
  if (c.sigma_policy == BandwidthPolicy::fixed && !(c.sigma > 0))
    throw ArgumentError("config: sigma must be > 0");
  if (c.batch_size == 0) throw ArgumentError("config: batch_size must be >= 1");
  if (c.negative_ratio == 0) throw ArgumentError("config: negative_ratio must be >= 1");
  if (!(c.stats_momentum >= 0 && c.stats_momentum < 1))
    throw ArgumentError("config: stats_momentum must lie in [0, 1)");
  for (double w : {c.weights.w_s, c.weights.w_g, c.weights.w_x, c.weights.w_y})
    if (!std::isfinite(w) || w < 0) throw ArgumentError("config: loss weights must be finite and >= 0");
}

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ArgumentError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ArgumentError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ArgumentError("config: '" + key + "' expects a number, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ArgumentError("config: '" + key + "' expects true or false, got '" + v + "'");
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

using Setter = std::function<void(TrainConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"K", [](TrainConfig& c, auto& k, auto& v) { c.K = to_size(k, v); }},
      {"k", [](TrainConfig& c, auto& k, auto& v) { c.k = to_size(k, v); }},
      {"d", [](TrainConfig& c, auto& k, auto& v) { c.d = to_size(k, v); }},
      {"N", [](TrainConfig& c, auto& k, auto& v) { c.N = to_size(k, v); }},
      {"L", [](TrainConfig& c, auto& k, auto& v) { c.L = to_size(k, v); }},
      {"flow_kind", [](TrainConfig& c, auto&, auto& v) { c.flow_kind = bijection_kind_from_string(v); }},
      {"flow_hidden", [](TrainConfig& c, auto& k, auto& v) { c.flow_hidden = to_size(k, v); }},
      {"sigma",
       [](TrainConfig& c, auto& k, auto& v) {
         if (v == "median") {
           c.sigma_policy = BandwidthPolicy::median;
         } else {
           c.sigma_policy = BandwidthPolicy::fixed;
           c.sigma = to_double(k, v);
         }
       }},
      {"mmd_estimator", [](TrainConfig& c, auto&, auto& v) { c.mmd_estimator = mmd_estimator_from_string(v); }},
      {"learning_rate", [](TrainConfig& c, auto& k, auto& v) { c.learning_rate = to_double(k, v); }},
      {"epochs", [](TrainConfig& c, auto& k, auto& v) { c.epochs = to_size(k, v); }},
      {"batch_size", [](TrainConfig& c, auto& k, auto& v) { c.batch_size = to_size(k, v); }},
      {"seed", [](TrainConfig& c, auto& k, auto& v) { c.seed = to_u64(k, v); }},
      {"variant", [](TrainConfig& c, auto&, auto& v) { c.variant = variant_from_string(v); }},
      {"scenario", [](TrainConfig& c, auto&, auto& v) { c.scenario = scenario_from_string(v); }},
      {"direction", [](TrainConfig& c, auto&, auto& v) { c.direction = direction_from_string(v); }},
      {"w_s", [](TrainConfig& c, auto& k, auto& v) { c.weights.w_s = to_double(k, v); }},
      {"w_g", [](TrainConfig& c, auto& k, auto& v) { c.weights.w_g = to_double(k, v); }},
      {"w_x", [](TrainConfig& c, auto& k, auto& v) { c.weights.w_x = to_double(k, v); }},
      {"w_y", [](TrainConfig& c, auto& k, auto& v) { c.weights.w_y = to_double(k, v); }},
      {"negative_ratio", [](TrainConfig& c, auto& k, auto& v) { c.negative_ratio = to_size(k, v); }},
      {"scoring", [](TrainConfig& c, auto&, auto& v) { c.scoring = scoring_from_string(v); }},
      {"normalization", [](TrainConfig& c, auto&, auto& v) { c.normalization = normalization_from_string(v); }},
      {"patience", [](TrainConfig& c, auto& k, auto& v) { c.patience = to_size(k, v); }},
      {"stats_momentum", [](TrainConfig& c, auto& k, auto& v) { c.stats_momentum = to_double(k, v); }},
      {"flow_input_detach", [](TrainConfig& c, auto& k, auto& v) { c.flow_input_detach = to_bool(k, v); }},
  };
  return table;
}

}  // namespace

void set_config_value(TrainConfig& config, const std::string& key, const std::string& value) {
  auto it = setters().find(key);
  if (it == setters().end()) throw ArgumentError("config: unknown key '" + key + "'");
  it->second(config, key, value);
}

TrainConfig parse_config(const std::string& text) {
  TrainConfig c;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ArgumentError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    set_config_value(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  validate(c);
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const TrainConfig& c) {
  std::ostringstream o;
  o << "K = " << c.K << "\n"
    << "k = " << c.k << "\n"
    << "d = " << c.d << "\n"
    << "N = " << c.N << "\n"
    << "L = " << c.L << "\n"
    << "flow_kind = " << to_string(c.flow_kind) << "\n"
    << "flow_hidden = " << c.flow_hidden << "\n"
    << "sigma = " << (c.sigma_policy == BandwidthPolicy::median ? std::string("median") : fmt_double(c.sigma))
    << "\n"
    << "mmd_estimator = " << to_string(c.mmd_estimator) << "\n"
    << "learning_rate = " << fmt_double(c.learning_rate) << "\n"
    << "epochs = " << c.epochs << "\n"
    << "batch_size = " << c.batch_size << "\n"
    << "seed = " << c.seed << "\n"
    << "variant = " << to_string(c.variant) << "\n"
    << "scenario = " << to_string(c.scenario) << "\n"
    << "direction = " << to_string(c.direction) << "\n"
    << "w_s = " << fmt_double(c.weights.w_s) << "\n"
    << "w_g = " << fmt_double(c.weights.w_g) << "\n"
    << "w_x = " << fmt_double(c.weights.w_x) << "\n"
    << "w_y = " << fmt_double(c.weights.w_y) << "\n"
    << "negative_ratio = " << c.negative_ratio << "\n"
    << "scoring = " << to_string(c.scoring) << "\n"
    << "normalization = " << to_string(c.normalization) << "\n"
    << "patience = " << c.patience << "\n"
    << "stats_momentum = " << fmt_double(c.stats_momentum) << "\n"
    << "flow_input_detach = " << (c.flow_input_detach ? "true" : "false") << "\n";
  return o.str();
}

}  // namespace hjid
