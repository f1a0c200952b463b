#include "bhealth/run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "bhealth/errors.hpp"

namespace bhealth {

using nlohmann::json;

namespace {

// Reads fields of one JSON object and rejects keys nobody asked about.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ValidationError(where_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ValidationError(where_ + "." + key + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    known_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!known_.count(key)) throw ValidationError(where_ + ": unknown key '" + key + "'");
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> known_;
};

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig c;
  for (RegressorKind k : all_regressor_kinds()) c.regressors.push_back(RegressorSpec::defaults(k, c.seed));
  return c;
}

void RunConfig::validate() const {
  if (output_dir.empty()) throw ValidationError("config: output_dir must not be empty");
  for (const auto& r : regressors) r.validate();
  strategy.validate();
  if (k_values.empty()) throw ValidationError("config: k_values must not be empty");
  for (double k : k_values)
    if (!(k >= 0.0)) throw ValidationError("config: k_values must be non-negative");
  if (epoch_values.empty()) throw ValidationError("config: epoch_values must not be empty");
  for (int e : epoch_values)
    if (e < 0) throw ValidationError("config: epoch_values must be non-negative");
  if (ica.filter_order < 1 || ica.filter_order > 12) throw ValidationError("config: ica.filter_order out of range");
  if (!(ica.sample_rate_hz > 0.0) || !(ica.cutoff_hz > 0.0) || ica.cutoff_hz >= ica.sample_rate_hz / 2.0)
    throw ValidationError("config: ica cutoff must lie in (0, sample_rate/2)");
  if (ica.smooth_window < 1 || ica.smooth_window % 2 == 0)
    throw ValidationError("config: ica.smooth_window must be a positive odd number");
  if (!(ica.window_low_v < ica.window_high_v)) throw ValidationError("config: ica window is empty");
}

RegressorSpec RunConfig::soh_estimator_spec() const {
  for (const auto& r : regressors)
    if (r.kind == RegressorKind::svr) return r;
  return RegressorSpec::defaults(RegressorKind::svr, seed);
}

json to_json(const RegressorSpec& spec) {
  json j;
  j["kind"] = to_string(spec.kind);
  j["seed"] = spec.seed;
  std::visit(
      [&j](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, Poly1dParams>) {
          j["degree"] = p.degree;
        } else if constexpr (std::is_same_v<P, PolyMultiParams>) {
          j["degree"] = p.degree;
          j["interaction_degree"] = p.interaction_degree;
          j["ridge"] = p.ridge;
        } else if constexpr (std::is_same_v<P, FfnnParams>) {
          j["hidden"] = p.hidden;
          j["epochs"] = p.epochs;
          j["learn_rate"] = p.learn_rate;
        } else if constexpr (std::is_same_v<P, SvrParams>) {
          j["c"] = p.c;
          j["epsilon"] = p.epsilon;
          j["lengthscales"] = p.lengthscales;
          j["tolerance"] = p.tolerance;
          j["max_iterations"] = p.max_iterations;
        } else if constexpr (std::is_same_v<P, GprParams>) {
          j["epochs"] = p.epochs;
          j["learn_rate"] = p.learn_rate;
        } else if constexpr (std::is_same_v<P, GprLocoParams>) {
          j["signal_vars"] = p.signal_vars;
          j["lengthscales"] = p.lengthscales;
          j["noise_vars"] = p.noise_vars;
        } else {
          j["epochs"] = p.epochs;
          j["learn_rate"] = p.learn_rate;
        }
      },
      spec.params);
  return j;
}

RegressorSpec regressor_from_json(const json& j, std::uint64_t seed) {
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string())
    throw ValidationError("config: every regressor needs a string 'kind'");
  const RegressorKind kind = parse_regressor_kind(j["kind"].get<std::string>());
  RegressorSpec spec = RegressorSpec::defaults(kind, seed);
  ObjectReader r(j, "regressor " + to_string(kind));
  std::string ignored;
  r.get("kind", ignored);
  r.get("seed", spec.seed);
  std::visit(
      [&r](auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, Poly1dParams>) {
          r.get("degree", p.degree);
        } else if constexpr (std::is_same_v<P, PolyMultiParams>) {
          r.get("degree", p.degree);
          r.get("interaction_degree", p.interaction_degree);
          r.get("ridge", p.ridge);
        } else if constexpr (std::is_same_v<P, FfnnParams>) {
          r.get("hidden", p.hidden);
          r.get("epochs", p.epochs);
          r.get("learn_rate", p.learn_rate);
        } else if constexpr (std::is_same_v<P, SvrParams>) {
          r.get("c", p.c);
          r.get("epsilon", p.epsilon);
          r.get("lengthscales", p.lengthscales);
          r.get("tolerance", p.tolerance);
          r.get("max_iterations", p.max_iterations);
        } else if constexpr (std::is_same_v<P, GprParams>) {
          r.get("epochs", p.epochs);
          r.get("learn_rate", p.learn_rate);
        } else if constexpr (std::is_same_v<P, GprLocoParams>) {
          r.get("signal_vars", p.signal_vars);
          r.get("lengthscales", p.lengthscales);
          r.get("noise_vars", p.noise_vars);
        } else {
          r.get("epochs", p.epochs);
          r.get("learn_rate", p.learn_rate);
        }
      },
      spec.params);
  r.finish();
  spec.validate();
  return spec;
}

RunConfig parse_run_config(const json& doc) {
  RunConfig c;
  ObjectReader r(doc, "config");
  std::string dataset = c.dataset_dir.string(), output = c.output_dir.string(), target = to_string(c.target);
  r.get("dataset_dir", dataset);
  r.get("output_dir", output);
  r.get("target", target);
  r.get("seed", c.seed);
  c.dataset_dir = dataset;
  c.output_dir = output;
  c.target = parse_target(target);

  if (const json* regs = r.child("regressors")) {
    if (!regs->is_array()) throw ValidationError("config.regressors: expected an array");
    for (const auto& j : *regs) c.regressors.push_back(regressor_from_json(j, c.seed));
  } else {
    for (RegressorKind k : all_regressor_kinds()) c.regressors.push_back(RegressorSpec::defaults(k, c.seed));
  }

  if (const json* s = r.child("strategy")) {
    ObjectReader sr(*s, "config.strategy");
    sr.get("k", c.strategy.k);
    sr.get("n_min", c.strategy.n_min);
    sr.get("soh_eol", c.strategy.soh_eol);
    sr.get("epochs", c.strategy.epochs);
    sr.get("max_iterations", c.strategy.max_iterations);
    sr.finish();
  }
  r.get("k_values", c.k_values);
  r.get("epoch_values", c.epoch_values);

  if (const json* s = r.child("ica")) {
    ObjectReader ir(*s, "config.ica");
    ir.get("filter_order", c.ica.filter_order);
    ir.get("cutoff_hz", c.ica.cutoff_hz);
    ir.get("sample_rate_hz", c.ica.sample_rate_hz);
    ir.get("smooth_window", c.ica.smooth_window);
    ir.get("window_low_v", c.ica.window_low_v);
    ir.get("window_high_v", c.ica.window_high_v);
    ir.get("cv_voltage_v", c.ica.cv_voltage_v);
    ir.finish();
  }
  r.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ValidationError("cannot read config file " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  json doc;
  try {
    doc = json::parse(ss.str());
  } catch (const json::exception& e) {
    throw ValidationError("config " + file.string() + ": " + e.what());
  }
  return parse_run_config(doc);
}

json to_json(const RunConfig& c) {
  json j;
  j["dataset_dir"] = c.dataset_dir.string();
  j["output_dir"] = c.output_dir.string();
  j["target"] = to_string(c.target);
  j["seed"] = c.seed;
  j["regressors"] = json::array();
  for (const auto& r : c.regressors) j["regressors"].push_back(to_json(r));
  j["strategy"] = {{"k", c.strategy.k},
                   {"n_min", c.strategy.n_min},
                   {"soh_eol", c.strategy.soh_eol},
                   {"epochs", c.strategy.epochs},
                   {"max_iterations", c.strategy.max_iterations}};
  j["k_values"] = c.k_values;
  j["epoch_values"] = c.epoch_values;
  j["ica"] = {{"filter_order", c.ica.filter_order},   {"cutoff_hz", c.ica.cutoff_hz},
              {"sample_rate_hz", c.ica.sample_rate_hz}, {"smooth_window", c.ica.smooth_window},
              {"window_low_v", c.ica.window_low_v},   {"window_high_v", c.ica.window_high_v},
              {"cv_voltage_v", c.ica.cv_voltage_v}};
  return j;
}

void apply_environment(RunConfig& config) {
  const char* env = std::getenv(kDatasetEnvVar);
  if (env && *env) config.dataset_dir = env;
}

}  // namespace bhealth
