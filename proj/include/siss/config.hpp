#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "siss/csv.hpp"
#include "siss/denoiser.hpp"
#include "siss/losses.hpp"
#include "siss/sha1.hpp"
#include "siss/toy_data.hpp"

namespace siss {

enum class Method { NaiveDeletion, NegGrad, EraseDiff, SISS, SissNoIS };

inline std::string method_name(Method m) {
  switch (m) {
    case Method::NaiveDeletion: return "naive_deletion";
    case Method::NegGrad: return "neggrad";
    case Method::EraseDiff: return "erasediff";
    case Method::SISS: return "siss";
    case Method::SissNoIS: return "siss_no_is";
  }
  return "?";
}

inline std::optional<Method> method_from_name(const std::string& s) {
  if (s == "naive_deletion") return Method::NaiveDeletion;
  if (s == "neggrad") return Method::NegGrad;
  if (s == "erasediff") return Method::EraseDiff;
  if (s == "siss") return Method::SISS;
  if (s == "siss_no_is") return Method::SissNoIS;
  return std::nullopt;
}

// A sweep grid entry: a method name, optionally with an inline mixture
// parameter as in "siss@0.5".
struct MethodEntry {
  Method method;
  std::optional<double> lambda;
};

// All run settings. Flat key-value config files (a YAML-compatible subset)
// populate this; unknown keys are hard errors so sweep typos cannot silently
// fall back to defaults.
struct RunConfig {
  std::string run_name;
  std::optional<Method> method;
  std::optional<double> lambda;
  double erasediff_lambda = 1.0;
  double target_ratio = 0.1;
  std::optional<std::int64_t> steps;
  int batch_size = 128;
  std::optional<double> learning_rate;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::optional<std::uint64_t> seed;
  std::int64_t eval_every = 100;
  int schedule_T = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  int hidden_width = 128;
  int hidden_layers = 3;
  int time_embed_dim = 16;
  Activation activation = Activation::SiLU;
  ToyDatasetSpec data;
  std::uint64_t data_seed = 424242;
  int eval_samples = 2048;
  int eval_nll_points = 32;
  int nll_ode_steps = 500;
  SissForm siss_form = SissForm::Standard;
  std::vector<std::string> sweep_methods;
  std::vector<std::uint64_t> sweep_seeds;
};

// Fine-tuning defaults to a smaller step size than pretraining.
inline double effective_learning_rate(const RunConfig& c, bool pretraining) {
  return c.learning_rate.value_or(pretraining ? 1e-4 : 1e-5);
}

struct ConfigParseError : std::runtime_error {
  explicit ConfigParseError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& v, int line) {
  std::size_t pos = 0;
  double x;
  try {
    x = std::stod(v, &pos);
  } catch (...) {
    throw ConfigParseError("line " + std::to_string(line) + ": expected a number, got '" + v + "'");
  }
  if (pos != v.size())
    throw ConfigParseError("line " + std::to_string(line) + ": trailing characters in number '" + v + "'");
  return x;
}

inline std::int64_t parse_int(const std::string& v, int line) {
  std::size_t pos = 0;
  long long x;
  try {
    x = std::stoll(v, &pos);
  } catch (...) {
    throw ConfigParseError("line " + std::to_string(line) + ": expected an integer, got '" + v + "'");
  }
  if (pos != v.size())
    throw ConfigParseError("line " + std::to_string(line) + ": trailing characters in integer '" + v + "'");
  return x;
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace detail

inline MethodEntry parse_method_entry(const std::string& entry) {
  const auto at = entry.find('@');
  const std::string name = at == std::string::npos ? entry : entry.substr(0, at);
  const auto m = method_from_name(name);
  if (!m) throw ConfigParseError("unknown method name '" + name + "'");
  MethodEntry e{*m, std::nullopt};
  if (at != std::string::npos) {
    if (*m != Method::SISS)
      throw ConfigParseError("inline lambda is only valid for siss, got '" + entry + "'");
    e.lambda = detail::parse_double(entry.substr(at + 1), 0);
  }
  return e;
}

inline RunConfig parse_config_text(const std::string& text) {
  RunConfig c;
  std::map<std::string, int> seen;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = detail::trim(raw);
    if (s.empty() || s[0] == '#') continue;
    const auto colon = s.find(':');
    if (colon == std::string::npos)
      throw ConfigParseError("line " + std::to_string(line) + ": expected 'key: value'");
    const std::string key = detail::trim(s.substr(0, colon));
    const std::string value = detail::trim(s.substr(colon + 1));
    if (key.empty() || value.empty())
      throw ConfigParseError("line " + std::to_string(line) + ": empty key or value");
    if (seen.count(key))
      throw ConfigParseError("line " + std::to_string(line) + ": duplicate key '" + key +
                             "' (first set on line " + std::to_string(seen[key]) + ")");
    seen[key] = line;

    if (key == "run_name") {
      c.run_name = value;
    } else if (key == "method") {
      const auto m = method_from_name(value);
      if (!m) throw ConfigParseError("line " + std::to_string(line) + ": unknown method '" + value + "'");
      c.method = m;
    } else if (key == "lambda") {
      c.lambda = detail::parse_double(value, line);
    } else if (key == "erasediff_lambda") {
      c.erasediff_lambda = detail::parse_double(value, line);
    } else if (key == "target_ratio") {
      c.target_ratio = detail::parse_double(value, line);
    } else if (key == "steps") {
      c.steps = detail::parse_int(value, line);
    } else if (key == "batch_size") {
      c.batch_size = static_cast<int>(detail::parse_int(value, line));
    } else if (key == "learning_rate") {
      c.learning_rate = detail::parse_double(value, line);
    } else if (key == "adam_beta1") {
      c.adam_beta1 = detail::parse_double(value, line);
    } else if (key == "adam_beta2") {
      c.adam_beta2 = detail::parse_double(value, line);
    } else if (key == "adam_eps") {
      c.adam_eps = detail::parse_double(value, line);
    } else if (key == "seed") {
      c.seed = static_cast<std::uint64_t>(detail::parse_int(value, line));
    } else if (key == "eval_every") {
      c.eval_every = detail::parse_int(value, line);
    } else if (key == "schedule_T") {
      c.schedule_T = static_cast<int>(detail::parse_int(value, line));
    } else if (key == "beta_start") {
      c.beta_start = detail::parse_double(value, line);
    } else if (key == "beta_end") {
      c.beta_end = detail::parse_double(value, line);
    } else if (key == "hidden_width") {
      c.hidden_width = static_cast<int>(detail::parse_int(value, line));
    } else if (key == "hidden_layers") {
      c.hidden_layers = static_cast<int>(detail::parse_int(value, line));
    } else if (key == "time_embed_dim") {
      c.time_embed_dim = static_cast<int>(detail::parse_int(value, line));
    } else if (key == "activation") {
      try {
        c.activation = activation_from_name(value);
      } catch (const std::exception& e) {
        throw ConfigParseError("line " + std::to_string(line) + ": " + e.what());
      }
    } else if (key == "data_modes") {
      c.data.num_modes = static_cast<int>(detail::parse_int(value, line));
    } else if (key == "data_radius") {
      c.data.radius = detail::parse_double(value, line);
    } else if (key == "mode_std") {
      c.data.mode_std = detail::parse_double(value, line);
    } else if (key == "data_n") {
      c.data.n = static_cast<int>(detail::parse_int(value, line));
    } else if (key == "outlier_x") {
      c.data.outlier_x = detail::parse_double(value, line);
    } else if (key == "outlier_y") {
      c.data.outlier_y = detail::parse_double(value, line);
    } else if (key == "outlier_std") {
      c.data.outlier_std = detail::parse_double(value, line);
    } else if (key == "injection_rate") {
      c.data.injection_rate = detail::parse_double(value, line);
    } else if (key == "data_seed") {
      c.data_seed = static_cast<std::uint64_t>(detail::parse_int(value, line));
    } else if (key == "eval_samples") {
      c.eval_samples = static_cast<int>(detail::parse_int(value, line));
    } else if (key == "eval_nll_points") {
      c.eval_nll_points = static_cast<int>(detail::parse_int(value, line));
    } else if (key == "nll_ode_steps") {
      c.nll_ode_steps = static_cast<int>(detail::parse_int(value, line));
    } else if (key == "siss_form") {
      if (value == "standard")
        c.siss_form = SissForm::Standard;
      else if (value == "rewrite")
        c.siss_form = SissForm::Rewrite;
      else
        throw ConfigParseError("line " + std::to_string(line) + ": unknown siss_form '" + value + "'");
    } else if (key == "methods") {
      c.sweep_methods = detail::split_list(value);
      for (const auto& e : c.sweep_methods) parse_method_entry(e);  // validate now
    } else if (key == "sweep_seeds") {
      for (const auto& e : detail::split_list(value))
        c.sweep_seeds.push_back(static_cast<std::uint64_t>(detail::parse_int(e, line)));
    } else {
      throw ConfigParseError("line " + std::to_string(line) + ": unknown key '" + key + "'");
    }
  }
  return c;
}

inline RunConfig parse_config_file(const std::string& path) {
  return parse_config_text(read_file(path));
}

// Shared sanity checks; returned messages are empty when the config is valid.
inline std::vector<std::string> validate_common(const RunConfig& c) {
  std::vector<std::string> bad;
  if (!c.steps) bad.push_back("missing required field: steps");
  else if (*c.steps < 1) bad.push_back("steps must be >= 1");
  if (!c.seed) bad.push_back("missing required field: seed");
  if (c.batch_size < 1) bad.push_back("batch_size must be >= 1");
  if (c.learning_rate && !(*c.learning_rate > 0.0)) bad.push_back("learning_rate must be > 0");
  if (c.eval_every < 1) bad.push_back("eval_every must be >= 1");
  if (c.schedule_T < 1) bad.push_back("schedule_T must be >= 1");
  if (!(c.beta_start > 0.0 && c.beta_start <= c.beta_end && c.beta_end < 1.0))
    bad.push_back("require 0 < beta_start <= beta_end < 1");
  if (c.hidden_width < 1 || c.hidden_layers < 0) bad.push_back("invalid model size");
  if (c.time_embed_dim < 2 || c.time_embed_dim % 2 != 0)
    bad.push_back("time_embed_dim must be a positive even number");
  if (c.lambda && !(*c.lambda >= 0.0 && *c.lambda <= 1.0))
    bad.push_back("lambda must be in [0, 1]");
  if (!(c.target_ratio >= 0.0)) bad.push_back("target_ratio must be >= 0");
  if (!(c.erasediff_lambda >= 0.0)) bad.push_back("erasediff_lambda must be >= 0");
  if (c.eval_samples < 1) bad.push_back("eval_samples must be >= 1");
  if (c.eval_nll_points < 1) bad.push_back("eval_nll_points must be >= 1");
  if (c.nll_ode_steps < 100) bad.push_back("nll_ode_steps must be >= 100");
  return bad;
}

inline std::vector<std::string> validate_for_pretrain(const RunConfig& c) {
  std::vector<std::string> bad = validate_common(c);
  if (c.lambda && (!c.method || *c.method != Method::SISS))
    bad.push_back("lambda is only valid with method: siss");
  return bad;
}

inline std::vector<std::string> validate_for_unlearn(const RunConfig& c) {
  std::vector<std::string> bad = validate_common(c);
  if (!c.method) {
    bad.push_back("missing required field: method");
    return bad;
  }
  if (*c.method == Method::SISS && !c.lambda)
    bad.push_back("missing required field: lambda (required when method: siss)");
  if (*c.method != Method::SISS && c.lambda)
    bad.push_back("lambda is only valid with method: siss");
  return bad;
}

inline std::vector<std::string> validate_for_sweep(const RunConfig& c) {
  std::vector<std::string> bad = validate_common(c);
  if (c.sweep_methods.empty()) bad.push_back("missing required field: methods (sweep grid is empty)");
  if (c.sweep_seeds.empty()) bad.push_back("missing required field: sweep_seeds");
  return bad;
}

// Canonical "key=value" serialization of the effective config (defaults
// resolved, optional fields present only when set), sorted by key. The
// git-style content hash of this string identifies a run configuration.
inline std::string canonical_config_string(const RunConfig& c) {
  std::vector<std::pair<std::string, std::string>> kv;
  auto put = [&](const std::string& k, const std::string& v) { kv.emplace_back(k, v); };
  auto putd = [&](const std::string& k, double v) { kv.emplace_back(k, format_double(v)); };
  if (!c.run_name.empty()) put("run_name", c.run_name);
  if (c.method) put("method", method_name(*c.method));
  if (c.lambda) putd("lambda", *c.lambda);
  putd("erasediff_lambda", c.erasediff_lambda);
  putd("target_ratio", c.target_ratio);
  if (c.steps) put("steps", std::to_string(*c.steps));
  put("batch_size", std::to_string(c.batch_size));
  if (c.learning_rate) putd("learning_rate", *c.learning_rate);
  putd("adam_beta1", c.adam_beta1);
  putd("adam_beta2", c.adam_beta2);
  putd("adam_eps", c.adam_eps);
  if (c.seed) put("seed", std::to_string(*c.seed));
  put("eval_every", std::to_string(c.eval_every));
  put("schedule_T", std::to_string(c.schedule_T));
  putd("beta_start", c.beta_start);
  putd("beta_end", c.beta_end);
  put("hidden_width", std::to_string(c.hidden_width));
  put("hidden_layers", std::to_string(c.hidden_layers));
  put("time_embed_dim", std::to_string(c.time_embed_dim));
  put("activation", activation_name(c.activation));
  put("data_modes", std::to_string(c.data.num_modes));
  putd("data_radius", c.data.radius);
  putd("mode_std", c.data.mode_std);
  put("data_n", std::to_string(c.data.n));
  putd("outlier_x", c.data.outlier_x);
  putd("outlier_y", c.data.outlier_y);
  putd("outlier_std", c.data.outlier_std);
  putd("injection_rate", c.data.injection_rate);
  put("data_seed", std::to_string(c.data_seed));
  put("eval_samples", std::to_string(c.eval_samples));
  put("eval_nll_points", std::to_string(c.eval_nll_points));
  put("nll_ode_steps", std::to_string(c.nll_ode_steps));
  put("siss_form", c.siss_form == SissForm::Standard ? "standard" : "rewrite");
  if (!c.sweep_methods.empty()) {
    std::string joined;
    for (const auto& m : c.sweep_methods) joined += (joined.empty() ? "" : ",") + m;
    put("methods", joined);
  }
  if (!c.sweep_seeds.empty()) {
    std::string joined;
    for (auto s : c.sweep_seeds) joined += (joined.empty() ? "" : ",") + std::to_string(s);
    put("sweep_seeds", joined);
  }
  std::sort(kv.begin(), kv.end());
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

inline std::string config_hash(const RunConfig& c) { return sha1_hex(canonical_config_string(c)); }

}  // namespace siss
