#include "maxgnr_app/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "maxgnr/errors.hpp"

namespace maxgnr::app {
namespace {

using json = nlohmann::json;

// Thrown by value readers; the caller adds the key and line.
struct BadValue {
  std::string what;
};

double as_double(const json& v) {
  if (!v.is_number()) throw BadValue{"expected a number"};
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw BadValue{"expected a finite number"};
  return x;
}

double as_positive(const json& v) {
  const double x = as_double(v);
  if (!(x > 0.0)) throw BadValue{"must be > 0"};
  return x;
}

std::uint64_t as_u64(const json& v) {
  if (!v.is_number_unsigned()) throw BadValue{"expected a non-negative integer"};
  return v.get<std::uint64_t>();
}

std::size_t as_count(const json& v) {
  const std::uint64_t x = as_u64(v);
  if (x == 0) throw BadValue{"must be >= 1"};
  return static_cast<std::size_t>(x);
}

bool as_bool(const json& v) {
  if (!v.is_boolean()) throw BadValue{"expected true or false"};
  return v.get<bool>();
}

std::string as_string(const json& v) {
  if (!v.is_string()) throw BadValue{"expected a string"};
  return v.get<std::string>();
}

template <typename F>
auto as_list(const json& v, F&& item) {
  if (!v.is_array()) throw BadValue{"expected an array"};
  std::vector<decltype(item(v))> out;
  for (const auto& x : v) out.push_back(item(x));
  return out;
}

std::vector<double> as_loss_scales(const json& v) {
  auto out = as_list(v, as_positive);
  if (out.size() < 2) throw BadValue{"need at least two tasks"};
  return out;
}

StrategyKind as_strategy(const json& v) {
  try {
    return parse_strategy_kind(as_string(v));
  } catch (const ConfigError& e) {
    throw BadValue{e.what()};
  }
}

double as_gamma(const json& v) {
  const double g = as_double(v);
  if (!(g >= 0.0 && g < 1.0)) throw BadValue{"must lie in [0, 1)"};
  return g;
}

std::string_view method_name(SolverMethod m) {
  return m == SolverMethod::kConvexProgram ? "convex_program" : "active_branch";
}

using Setter = std::function<void(ExperimentConfig&, const json&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"strategy", [](ExperimentConfig& c, const json& v) { c.train.strategy.kind = as_strategy(v); }},
      {"seeds",
       [](ExperimentConfig& c, const json& v) {
         c.seeds = as_list(v, as_u64);
         if (c.seeds.empty()) throw BadValue{"need at least one seed"};
       }},
      {"iterations", [](ExperimentConfig& c, const json& v) { c.train.iterations = as_count(v); }},
      {"learning_rate", [](ExperimentConfig& c, const json& v) { c.train.learning_rate = as_positive(v); }},
      {"batch_size", [](ExperimentConfig& c, const json& v) { c.train.batch_size = as_count(v); }},
      {"eval_every", [](ExperimentConfig& c, const json& v) { c.train.eval_every = as_count(v); }},
      {"momentum_gamma",
       [](ExperimentConfig& c, const json& v) { c.train.strategy.momentum_gamma = as_gamma(v); }},
      {"gnr_scope",
       [](ExperimentConfig& c, const json& v) {
         const std::string s = as_string(v);
         if (s == "all_shared") {
           c.gnr_scope = GnrScope::kAllShared;
         } else if (s == "encoder_only") {
           c.gnr_scope = GnrScope::kEncoderOnly;
         } else {
           throw BadValue{"expected all_shared or encoder_only"};
         }
       }},
      {"output_dir", [](ExperimentConfig& c, const json& v) { c.output_dir = as_string(v); }},
      {"maxgnr.solver_steps",
       [](ExperimentConfig& c, const json& v) {
         c.train.strategy.solver.steps = static_cast<int>(as_count(v));
       }},
      {"maxgnr.solver_lr",
       [](ExperimentConfig& c, const json& v) { c.train.strategy.solver.step_size = as_positive(v); }},
      {"maxgnr.weight_floor",
       [](ExperimentConfig& c, const json& v) {
         const double f = as_double(v);
         if (f < 0.0) throw BadValue{"must be >= 0"};
         c.train.strategy.solver.weight_floor = f;
       }},
      {"maxgnr.denominator_guard",
       [](ExperimentConfig& c, const json& v) {
         c.train.strategy.solver.denominator_guard = as_positive(v);
       }},
      {"maxgnr.warm_start",
       [](ExperimentConfig& c, const json& v) { c.train.strategy.solver.warm_start = as_bool(v); }},
      {"maxgnr.solver_method",
       [](ExperimentConfig& c, const json& v) {
         const std::string s = as_string(v);
         if (s == "convex_program") {
           c.train.strategy.solver.method = SolverMethod::kConvexProgram;
         } else if (s == "active_branch") {
           c.train.strategy.solver.method = SolverMethod::kActiveBranch;
         } else {
           throw BadValue{"expected convex_program or active_branch"};
         }
       }},
      {"maxgnr.tie_break",
       [](ExperimentConfig&, const json& v) {
         if (as_string(v) != "lowest_index") throw BadValue{"only lowest_index is supported"};
       }},
      {"dwa.temperature",
       [](ExperimentConfig& c, const json& v) { c.train.strategy.dwa_temperature = as_positive(v); }},
      {"gradnorm.alpha",
       [](ExperimentConfig& c, const json& v) {
         const double a = as_double(v);
         if (a < 0.0) throw BadValue{"must be >= 0"};
         c.train.strategy.gradnorm_alpha = a;
       }},
      {"gradnorm.lr",
       [](ExperimentConfig& c, const json& v) { c.train.strategy.gradnorm_lr = as_positive(v); }},
      {"uncertainty.lr",
       [](ExperimentConfig& c, const json& v) { c.train.strategy.uncertainty_lr = as_double(v); }},
      {"task.input_dim", [](ExperimentConfig& c, const json& v) { c.task.input_dim = as_count(v); }},
      {"task.hidden_dim", [](ExperimentConfig& c, const json& v) { c.task.hidden_dim = as_count(v); }},
      {"task.loss_scales",
       [](ExperimentConfig& c, const json& v) { c.task.loss_scales = as_loss_scales(v); }},
      {"task.label_noise_std",
       [](ExperimentConfig& c, const json& v) {
         c.task.label_noise_std = as_list(v, [](const json& x) {
           const double s = as_double(x);
           if (s < 0.0) throw BadValue{"label noise std must be >= 0"};
           return s;
         });
       }},
      {"task.dataset_size", [](ExperimentConfig& c, const json& v) { c.task.dataset_size = as_count(v); }},
      {"task.generator_seed",
       [](ExperimentConfig& c, const json& v) { c.task.generator_seed = as_u64(v); }},
      {"sweep.strategies",
       [](ExperimentConfig& c, const json& v) { c.sweep.strategies = as_list(v, as_strategy); }},
      {"sweep.seeds", [](ExperimentConfig& c, const json& v) { c.sweep.seeds = as_list(v, as_u64); }},
      {"sweep.momentum_gammas",
       [](ExperimentConfig& c, const json& v) { c.sweep.momentum_gammas = as_list(v, as_gamma); }},
      {"sweep.loss_scales",
       [](ExperimentConfig& c, const json& v) { c.sweep.loss_scales = as_list(v, as_loss_scales); }},
      {"census.num_batches",
       [](ExperimentConfig& c, const json& v) {
         c.census.num_batches = as_count(v);
         if (c.census.num_batches < 2) throw BadValue{"must be >= 2"};
       }},
      {"census.bins", [](ExperimentConfig& c, const json& v) { c.census.bins = as_count(v); }},
      {"census.batch_size",
       [](ExperimentConfig& c, const json& v) {
         c.census.batch_size = static_cast<std::size_t>(as_u64(v));
       }},
      {"census.model_path", [](ExperimentConfig& c, const json& v) { c.census.model_path = as_string(v); }},
      {"noise_model.batch_size",
       [](ExperimentConfig& c, const json& v) {
         c.noise_model.batch_size = static_cast<int>(as_count(v));
       }},
      {"noise_model.tasks",
       [](ExperimentConfig& c, const json& v) {
         if (!v.is_array()) throw BadValue{"expected an array of task objects"};
         c.noise_model.tasks = v;
       }},
  };
  return table;
}

std::size_t line_of_offset(std::string_view text, std::size_t offset) {
  offset = std::min(offset, text.size());
  std::size_t line = 1;
  for (std::size_t i = 0; i < offset; ++i) line += text[i] == '\n';
  return line;
}

// Line of the first `"name":` in the text, trying the full dotted key, then its leaf.
std::size_t line_of_key(std::string_view text, const std::string& key) {
  auto find_key = [&](const std::string& name) -> std::size_t {
    const std::string quoted = "\"" + name + "\"";
    for (std::size_t pos = text.find(quoted); pos != std::string_view::npos;
         pos = text.find(quoted, pos + 1)) {
      std::size_t after = pos + quoted.size();
      while (after < text.size() && std::isspace(static_cast<unsigned char>(text[after]))) ++after;
      if (after < text.size() && text[after] == ':') return pos;
    }
    return std::string_view::npos;
  };
  std::size_t pos = find_key(key);
  if (pos == std::string_view::npos) {
    const auto dot = key.rfind('.');
    if (dot != std::string::npos) pos = find_key(key.substr(dot + 1));
  }
  return pos == std::string_view::npos ? 1 : line_of_offset(text, pos);
}

void flatten_into(const json& node, const std::string& prefix, std::vector<std::pair<std::string, const json*>>& out) {
  for (auto it = node.begin(); it != node.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object()) {
      flatten_into(*it, key, out);
    } else {
      out.emplace_back(key, &*it);
    }
  }
}

ParamVector task_gradient(const json& task) {
  if (task.contains("gradient")) {
    return ParamVector(as_list(task.at("gradient"), as_double));
  }
  for (const char* key : {"dim", "gradient_norm", "gradient_seed"}) {
    if (!task.contains(key)) throw BadValue{std::string("task needs \"gradient\" or \"") + key + "\""};
  }
  const double length = as_double(task.at("gradient_norm"));
  if (length < 0.0) throw BadValue{"gradient_norm must be >= 0"};
  return random_gradient(as_count(task.at("dim")), length, as_u64(task.at("gradient_seed")));
}

}  // namespace

MultiTaskNoiseModel NoiseModelConfig::build() const {
  std::vector<TaskNoiseProfile> profiles;
  try {
    for (const auto& task : tasks) {
      if (!task.is_object()) throw BadValue{"each task must be an object"};
      for (auto it = task.begin(); it != task.end(); ++it) {
        const std::string& key = it.key();
        if (key != "trace" && key != "gradient" && key != "dim" && key != "gradient_norm" &&
            key != "gradient_seed") {
          throw BadValue{"unknown task key '" + key + "'"};
        }
      }
      if (!task.contains("trace")) throw BadValue{"task needs \"trace\""};
      profiles.emplace_back(static_cast<int>(profiles.size()), task_gradient(task),
                            as_double(task.at("trace")), batch_size);
    }
    return MultiTaskNoiseModel(std::move(profiles));
  } catch (const BadValue& bad) {
    throw ConfigError("noise_model.tasks: " + bad.what);
  } catch (const Error& e) {
    throw ConfigError(std::string("noise_model.tasks: ") + e.what());
  }
}

std::string_view to_string(GnrScope scope) {
  return scope == GnrScope::kAllShared ? "all_shared" : "encoder_only";
}

const std::vector<std::string>& known_config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& entry : setters()) out.push_back(entry.first);
    return out;
  }();
  return keys;
}

nlohmann::json ExperimentConfig::resolved() const {
  const auto& s = train.strategy;
  std::vector<std::string> sweep_strategies;
  for (auto k : sweep.strategies) sweep_strategies.emplace_back(to_string(k));
  json out = {
      {"strategy", to_string(s.kind)},
      {"seeds", seeds},
      {"iterations", train.iterations},
      {"learning_rate", train.learning_rate},
      {"batch_size", train.batch_size},
      {"eval_every", train.eval_every},
      {"momentum_gamma", s.momentum_gamma},
      {"gnr_scope", to_string(gnr_scope)},
      {"maxgnr.solver_steps", s.solver.steps},
      {"maxgnr.solver_lr", s.solver.step_size},
      {"maxgnr.weight_floor", s.solver.weight_floor},
      {"maxgnr.denominator_guard", s.solver.denominator_guard},
      {"maxgnr.warm_start", s.solver.warm_start},
      {"maxgnr.solver_method", method_name(s.solver.method)},
      {"maxgnr.tie_break", "lowest_index"},
      {"dwa.temperature", s.dwa_temperature},
      {"gradnorm.alpha", s.gradnorm_alpha},
      {"gradnorm.lr", s.gradnorm_lr},
      {"uncertainty.lr", s.uncertainty_lr},
      {"task.input_dim", task.input_dim},
      {"task.hidden_dim", task.hidden_dim},
      {"task.loss_scales", task.loss_scales},
      {"task.label_noise_std", task.label_noise_std},
      {"task.dataset_size", task.dataset_size},
      {"task.generator_seed", task.generator_seed},
      {"sweep.strategies", sweep_strategies},
      {"sweep.seeds", sweep.seeds},
      {"sweep.momentum_gammas", sweep.momentum_gammas},
      {"sweep.loss_scales", sweep.loss_scales},
      {"census.num_batches", census.num_batches},
      {"census.bins", census.bins},
      {"census.batch_size", census.batch_size},
      {"census.model_path", census.model_path},
      {"noise_model.batch_size", noise_model.batch_size},
      {"noise_model.tasks", noise_model.tasks},
  };
  return out;
}

ExperimentConfig parse_config(std::string_view text, std::string_view source) {
  const std::string where(source);
  json root;
  try {
    root = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ConfigError(where + ":" + std::to_string(line_of_offset(text, e.byte == 0 ? 0 : e.byte - 1)) +
                      ": malformed JSON: " + e.what());
  }
  if (!root.is_object()) throw ConfigError(where + ":1: top level must be a JSON object");

  std::vector<std::pair<std::string, const json*>> entries;
  flatten_into(root, "", entries);

  ExperimentConfig config;
  std::map<std::string, bool> seen;
  for (const auto& [key, value] : entries) {
    const std::string at = where + ":" + std::to_string(line_of_key(text, key)) + ": ";
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(at + "unknown key '" + key + "'");
    if (seen[key]) throw ConfigError(at + "duplicate key '" + key + "'");
    seen[key] = true;
    try {
      it->second(config, *value);
    } catch (const BadValue& bad) {
      throw ConfigError(at + "invalid value for '" + key + "': " + bad.what);
    }
  }

  const std::size_t n = config.task.task_count();
  auto fail = [&](const std::string& key, const std::string& message) {
    throw ConfigError(where + ":" + std::to_string(line_of_key(text, key)) + ": " + message);
  };
  if (config.task.label_noise_std.size() != n) {
    fail("task.label_noise_std", "task.label_noise_std needs one entry per task (" + std::to_string(n) + ")");
  }
  for (const auto& scales : config.sweep.loss_scales) {
    if (scales.size() != n) fail("sweep.loss_scales", "sweep.loss_scales entries need " + std::to_string(n) + " values");
  }
  if (config.train.batch_size > config.task.dataset_size) {
    fail("batch_size", "batch_size exceeds task.dataset_size");
  }
  if (config.train.strategy.solver.weight_floor * static_cast<double>(n) >= 1.0) {
    fail("maxgnr.weight_floor", "maxgnr.weight_floor must be below 1/task_count");
  }
  if (!config.noise_model.empty()) {
    try {
      config.noise_model.build();
    } catch (const ConfigError& e) {
      fail("noise_model.tasks", e.what());
    }
  }
  try {
    config.task.validate();
    config.train.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(where + ":1: " + e.what());
  }
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ":0: cannot read config file");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), path.string());
}

}  // namespace maxgnr::app
