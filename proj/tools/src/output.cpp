#include "maxgnr_app/output.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "maxgnr/errors.hpp"
#include "maxgnr/gnr.hpp"

namespace maxgnr::app {
namespace {

using json = nlohmann::json;

double at_or_nan(const std::vector<double>& values, std::size_t i) {
  return i < values.size() ? values[i] : std::numeric_limits<double>::quiet_NaN();
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

std::string format_real(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", value);
  return buf;
}

void write_metrics_csv(std::ostream& out, const std::vector<IterationRecord>& records,
                       std::size_t task_count) {
  out << kMetricsHeader << '\n';
  for (const auto& r : records) {
    for (std::size_t k = 0; k < task_count; ++k) {
      out << r.iteration << ',' << k << ',' << format_real(at_or_nan(r.losses, k)) << ','
          << format_real(at_or_nan(r.weights, k)) << ',' << format_real(at_or_nan(r.grad_norms, k))
          << ',' << format_real(at_or_nan(r.noise_norm_sq, k)) << ','
          << format_real(at_or_nan(r.gnr_multi, k)) << ',' << format_real(r.objective) << '\n';
    }
  }
}

json make_run_summary(const ExperimentConfig& config, std::uint64_t seed, const TrainResult& result,
                      const std::vector<double>& test_loss, const std::vector<double>& train_loss) {
  json losses_test = json::array();
  json losses_train = json::array();
  for (double v : test_loss) losses_test.push_back(finite_or_null(v));
  for (double v : train_loss) losses_train.push_back(finite_or_null(v));
  double worst = 0.0;
  for (double v : test_loss) {
    worst = std::isfinite(v) && std::isfinite(worst) ? std::max(worst, v) : std::numeric_limits<double>::quiet_NaN();
  }
  json summary = {
      {"version", kArtifactVersion},
      {"config", config.resolved()},
      {"seed", seed},
      {"strategy", to_string(config.train.strategy.kind)},
      {"status", result.diverged ? "diverged" : "ok"},
      {"iterations_completed", result.diverged ? result.divergence_iteration : config.train.iterations},
      {"records", result.records.size()},
      {"final_test_loss", losses_test},
      {"final_train_loss", losses_train},
      {"worst_task_test_loss", finite_or_null(worst)},
  };
  if (result.diverged) summary["divergence"] = result.divergence_message;
  return summary;
}

json model_to_json(const SharedEncoderModel& model) {
  return json{{"input_dim", model.input_dim()},
              {"hidden_dim", model.hidden_dim()},
              {"task_count", model.task_count()},
              {"parameters", model.flatten().values()}};
}

SharedEncoderModel model_from_json(const json& doc) {
  try {
    const auto flat = doc.at("parameters").get<std::vector<double>>();
    return SharedEncoderModel::unflatten(doc.at("input_dim").get<std::size_t>(),
                                         doc.at("hidden_dim").get<std::size_t>(),
                                         doc.at("task_count").get<std::size_t>(), ParamVector(flat));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed model file: ") + e.what());
  }
}

SharedEncoderModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read model file " + path.string());
  try {
    return model_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed model file " + path.string() + ": " + e.what());
  }
}

json census_to_json(const CensusReport& report) {
  json tasks = json::array();
  for (std::size_t k = 0; k < report.tasks.size(); ++k) {
    const auto& c = report.tasks[k].census;
    const auto& h = report.tasks[k].histogram;
    tasks.push_back({
        {"task", k},
        {"full_gradient_norm", c.full_gradient_norm},
        {"mean_grad_norm", c.mean_grad_norm},
        {"grad_norm_variance", c.grad_norm_variance},
        {"noise_estimate", c.noise_estimate},
        {"gnr_estimate", finite_or_null(c.gnr_estimate)},
        {"histogram", {{"lower", h.lower}, {"upper", h.upper}, {"counts", h.counts}}},
    });
  }
  json doc{{"version", kArtifactVersion},
           {"config", report.config},
           {"seed", report.seed},
           {"batch_size", report.batch_size},
           {"num_batches", report.num_batches},
           {"tasks", tasks}};
  if (!report.analytic.is_null()) doc["analytic"] = report.analytic;
  return doc;
}

CensusReport census_from_json(const json& doc) {
  try {
    CensusReport report;
    report.config = doc.at("config");
    report.seed = doc.at("seed").get<std::uint64_t>();
    report.batch_size = doc.at("batch_size").get<std::size_t>();
    report.num_batches = doc.at("num_batches").get<std::size_t>();
    for (const auto& t : doc.at("tasks")) {
      CensusEntry e;
      e.census.full_gradient_norm = t.at("full_gradient_norm").get<double>();
      e.census.mean_grad_norm = t.at("mean_grad_norm").get<double>();
      e.census.grad_norm_variance = t.at("grad_norm_variance").get<double>();
      e.census.noise_estimate = t.at("noise_estimate").get<double>();
      const auto& gnr = t.at("gnr_estimate");
      e.census.gnr_estimate = gnr.is_null() ? std::numeric_limits<double>::infinity() : gnr.get<double>();
      const auto& h = t.at("histogram");
      e.histogram.lower = h.at("lower").get<double>();
      e.histogram.upper = h.at("upper").get<double>();
      e.histogram.counts = h.at("counts").get<std::vector<std::size_t>>();
      report.tasks.push_back(std::move(e));
    }
    if (doc.contains("analytic")) report.analytic = doc.at("analytic");
    return report;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed census file: ") + e.what());
  }
}

CensusReport read_census(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  try {
    return census_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed census file " + path.string() + ": " + e.what());
  }
}

json analytic_gnr_json(const MultiTaskNoiseModel& model) {
  auto describe = [&](const WeightVector& w) {
    const GnrReport r = analytic_report(model, w);
    json gnr_s = json::array(), gnr_m = json::array();
    for (double v : r.gnr_single) gnr_s.push_back(finite_or_null(v));
    for (double v : r.gnr_multi) gnr_m.push_back(finite_or_null(v));
    return json{{"weights", w.values()}, {"gnr_single", gnr_s}, {"gnr_multi", gnr_m},
                {"objective", finite_or_null(r.objective)}};
  };
  return json{{"batch_size", model.batch_size()},
              {"traces", model.traces()},
              {"equal", describe(WeightVector::equal(model.task_count()))},
              {"noise_only", describe(noise_only_weights(model.traces(), model.batch_size()))}};
}

void write_json(const std::filesystem::path& path, const json& doc) {
  write_text(path, doc.dump(2) + "\n");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

}  // namespace maxgnr::app
