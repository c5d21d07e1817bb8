#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "errors.hpp"
#include "objectives.hpp"
#include "tcp_transport.hpp"
#include "traffic_estimate.hpp"
#include "trainer.hpp"
#include "transport.hpp"

namespace gssgd {

/// Everything needed to reproduce one benchmark run. Zero-valued sizes
/// (dimension, samples, batch_size, learning_rate, cols) mean "use the
/// objective's or the sketch's default".
struct ExperimentConfig {
  std::size_t workers = 4;
  std::size_t k = 16;
  std::size_t rows = 7;
  std::size_t cols = 0;
  std::size_t epochs = 1;
  std::size_t iters = 100;  // per epoch
  std::size_t batch_size = 0;
  std::size_t samples = 0;
  std::size_t dimension = 0;
  std::uint64_t seed = 1;
  std::vector<Compressor> compressors{Compressor::gs_sgd};
  std::string objective = "lsq";
  double alpha = 1e-3;
  double beta = 6.4e-8;
  double learning_rate = 0.0;
  std::vector<std::pair<std::size_t, double>> lr_schedule;
  bool warmup = false;
  std::string transport = "inproc";
  std::string out = "gssgd_out";
  std::string format = "csv";

  bool operator==(const ExperimentConfig&) const = default;

  std::size_t iterations() const noexcept { return epochs * iters; }

  void validate() const {
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (k < 1) throw ConfigError("k must be >= 1");
    if (rows < 1) throw ConfigError("rows must be >= 1");
    if (compressors.empty()) throw ConfigError("at least one compressor is required");
    for (std::size_t i = 0; i < compressors.size(); ++i)
      for (std::size_t j = i + 1; j < compressors.size(); ++j)
        if (compressors[i] == compressors[j])
          throw ConfigError("compressor '" + std::string(compressor_name(compressors[i])) + "' listed twice");
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be finite and >= 0");
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be finite and >= 0");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be >= 0");
    if (transport != "inproc" && transport != "tcp") throw ConfigError("transport must be inproc or tcp");
    if (format != "csv" && format != "json") throw ConfigError("format must be csv or json");
    if (out.empty()) throw ConfigError("out must not be empty");
    (void)objective_defaults(objective);
  }
};

namespace detail {

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string trim(std::string_view s) {
  const auto ws = " \t\r";
  const auto a = s.find_first_not_of(ws);
  if (a == std::string_view::npos) return {};
  const auto b = s.find_last_not_of(ws);
  return std::string(s.substr(a, b - a + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  try {
    return std::stoull(v);
  } catch (const std::out_of_range&) {
    throw ConfigError("'" + key + "' is out of range: " + v);
  }
}

inline double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (v.empty() || used != v.size()) throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("'" + key + "' expects true or false, got '" + v + "'");
}

}  // namespace detail

inline std::vector<Compressor> parse_compressor_list(std::string_view s) {
  std::vector<Compressor> out;
  for (const auto& part : detail::split(s, ','))
    if (!part.empty()) out.push_back(parse_compressor(part));
  return out;
}

/// "epoch:rate,epoch:rate"
inline std::vector<std::pair<std::size_t, double>> parse_lr_schedule(std::string_view s) {
  std::vector<std::pair<std::size_t, double>> out;
  for (const auto& part : detail::split(s, ',')) {
    if (part.empty()) continue;
    const auto fields = detail::split(part, ':');
    if (fields.size() != 2) throw ConfigError("lr_schedule entries look like epoch:rate, got '" + part + "'");
    out.emplace_back(detail::parse_u64("lr_schedule", fields[0]), detail::parse_double("lr_schedule", fields[1]));
  }
  return out;
}

/// Applies one key=value setting. Shared by the config file reader and the
/// command-line overrides.
inline void set_config_value(ExperimentConfig& c, const std::string& key, const std::string& v) {
  using detail::parse_double;
  using detail::parse_u64;
  if (key == "workers") c.workers = parse_u64(key, v);
  else if (key == "k") c.k = parse_u64(key, v);
  else if (key == "rows") c.rows = parse_u64(key, v);
  else if (key == "cols") c.cols = parse_u64(key, v);
  else if (key == "epochs") c.epochs = parse_u64(key, v);
  else if (key == "iters") c.iters = parse_u64(key, v);
  else if (key == "batch_size") c.batch_size = parse_u64(key, v);
  else if (key == "samples") c.samples = parse_u64(key, v);
  else if (key == "dimension") c.dimension = parse_u64(key, v);
  else if (key == "seed") c.seed = parse_u64(key, v);
  else if (key == "compressor") c.compressors = parse_compressor_list(v);
  else if (key == "objective") c.objective = v;
  else if (key == "alpha") c.alpha = parse_double(key, v);
  else if (key == "beta") c.beta = parse_double(key, v);
  else if (key == "learning_rate") c.learning_rate = parse_double(key, v);
  else if (key == "lr_schedule") c.lr_schedule = parse_lr_schedule(v);
  else if (key == "warmup") c.warmup = detail::parse_bool(key, v);
  else if (key == "transport") c.transport = v;
  else if (key == "out") c.out = v;
  else if (key == "format") c.format = v;
  else throw ConfigError("unknown config key '" + key + "'");
}

/// Flat `key = value` text. Blank lines and lines starting with '#' are
/// ignored; a key may appear once.
inline ExperimentConfig parse_experiment_config(std::string_view text) {
  ExperimentConfig c;
  std::vector<std::string> seen;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = detail::trim(std::string_view(t).substr(0, eq));
    const std::string value = detail::trim(std::string_view(t).substr(eq + 1));
    if (std::find(seen.begin(), seen.end(), key) != seen.end())
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    seen.push_back(key);
    try {
      set_config_value(c, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return c;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_experiment_config(ss.str());
}

inline std::string to_config_text(const ExperimentConfig& c) {
  using detail::fmt_double;
  std::ostringstream o;
  o << "workers = " << c.workers << '\n'
    << "k = " << c.k << '\n'
    << "rows = " << c.rows << '\n'
    << "cols = " << c.cols << '\n'
    << "epochs = " << c.epochs << '\n'
    << "iters = " << c.iters << '\n'
    << "batch_size = " << c.batch_size << '\n'
    << "samples = " << c.samples << '\n'
    << "dimension = " << c.dimension << '\n'
    << "seed = " << c.seed << '\n';
  o << "compressor = ";
  for (std::size_t i = 0; i < c.compressors.size(); ++i) o << (i ? "," : "") << compressor_name(c.compressors[i]);
  o << '\n'
    << "objective = " << c.objective << '\n'
    << "alpha = " << fmt_double(c.alpha) << '\n'
    << "beta = " << fmt_double(c.beta) << '\n'
    << "learning_rate = " << fmt_double(c.learning_rate) << '\n';
  o << "lr_schedule = ";
  for (std::size_t i = 0; i < c.lr_schedule.size(); ++i)
    o << (i ? "," : "") << c.lr_schedule[i].first << ':' << fmt_double(c.lr_schedule[i].second);
  o << '\n'
    << "warmup = " << (c.warmup ? "true" : "false") << '\n'
    << "transport = " << c.transport << '\n'
    << "out = " << c.out << '\n'
    << "format = " << c.format << '\n';
  return o.str();
}

/// Exit codes shared with the CLI.
enum ExitCode : int { exit_ok = 0, exit_usage = 1, exit_divergence = 2, exit_transport = 3 };

struct RunSummary {
  Compressor compressor = Compressor::dense;
  std::size_t iterations = 0;
  std::optional<double> final_loss;
  double total_modeled_time = 0.0;
  std::size_t messages = 0;
  std::size_t payload_elements = 0;
  std::size_t rounds = 0;
  double mean_topk_overlap = 0.0;
};

struct ExperimentResult {
  int exit_code = exit_ok;
  std::string status = "ok";
  std::string message;
  std::vector<RunSummary> runs;
  std::filesystem::path metrics_path;
  std::filesystem::path summary_path;
};

/// The run order: dense first as the reference, then the requested
/// compressors in the order given.
inline std::vector<Compressor> experiment_run_order(const ExperimentConfig& c) {
  std::vector<Compressor> order{Compressor::dense};
  for (Compressor x : c.compressors)
    if (x != Compressor::dense) order.push_back(x);
  return order;
}

inline TrainConfig make_train_config(const ExperimentConfig& c, const ObjectiveDefaults& defaults, Compressor comp) {
  TrainConfig t;
  t.world_size = c.workers;
  t.k = c.k;
  t.sketch_rows = c.rows;
  t.sketch_cols = c.cols;
  t.learning_rate = c.learning_rate > 0.0 ? c.learning_rate : defaults.learning_rate;
  t.lr_schedule = c.lr_schedule;
  t.warmup = c.warmup;
  t.epochs = c.epochs;
  t.iters_per_epoch = std::max<std::size_t>(c.iters, 1);
  t.batch_size = c.batch_size > 0 ? c.batch_size : defaults.batch_size;
  t.seed = c.seed;
  t.compressor = comp;
  return t;
}

using TransportFactory = std::function<std::unique_ptr<Transport>(std::size_t world_size)>;

inline std::unique_ptr<Transport> make_transport(const std::string& kind, std::size_t world_size) {
  if (kind == "tcp") return std::make_unique<TcpLoopbackTransport>(world_size);
  return std::make_unique<InProcessTransport>(world_size);
}

namespace detail {

inline const char* metrics_header() {
  return "iter,epoch,compressor,loss,grad_norm,messages,payload_elements,rounds,modeled_time_s,topk_overlap";
}

inline std::string csv_row(const IterationRecord& r) {
  std::ostringstream o;
  o << r.iter << ',' << r.epoch << ',' << compressor_name(r.compressor) << ',' << fmt_double(r.loss) << ','
    << fmt_double(r.grad_norm) << ',' << r.traffic.messages() << ',' << r.traffic.payload_elements() << ','
    << r.traffic.rounds() << ',' << fmt_double(r.modeled_time) << ',' << fmt_double(r.topk_overlap);
  return o.str();
}

inline nlohmann::ordered_json json_row(const IterationRecord& r) {
  nlohmann::ordered_json j;
  j["iter"] = r.iter;
  j["epoch"] = r.epoch;
  j["compressor"] = compressor_name(r.compressor);
  j["loss"] = r.loss;
  j["grad_norm"] = r.grad_norm;
  j["messages"] = r.traffic.messages();
  j["payload_elements"] = r.traffic.payload_elements();
  j["rounds"] = r.traffic.rounds();
  j["modeled_time_s"] = r.modeled_time;
  j["topk_overlap"] = r.topk_overlap;
  return j;
}

inline nlohmann::ordered_json ledger_json(const TrafficLedger& l, const CostModel& cm) {
  nlohmann::ordered_json j;
  j["messages"] = l.messages();
  j["payload_elements"] = l.payload_elements();
  j["rounds"] = l.rounds();
  j["modeled_time_s"] = l.modeled_time(cm);
  return j;
}

}  // namespace detail

/// Runs dense plus every requested compressor for T = epochs*iters
/// iterations and writes `<out>/metrics.csv` (or `metrics.jsonl` for the
/// json format) and `<out>/summary.json`. Rows are flushed as they are
/// produced, so a diverged run keeps its partial metrics.
///
/// Identical configs give byte-identical files.
/// `factory` replaces the transport named in the config when set.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr,
                                       const TransportFactory& factory = {}) {
  namespace fs = std::filesystem;
  using nlohmann::ordered_json;
  ExperimentResult result;
  auto fail = [&](int code, std::string status, std::string msg) {
    result.exit_code = code;
    result.status = std::move(status);
    result.message = std::move(msg);
    if (log) *log << "error: " << result.message << '\n';
  };

  std::unique_ptr<Objective> objective;
  ObjectiveDefaults defaults;
  try {
    cfg.validate();
    defaults = objective_defaults(cfg.objective);
    objective = make_objective(cfg.objective, cfg.dimension, cfg.samples, cfg.seed);
    make_train_config(cfg, defaults, Compressor::dense).validate(objective->dimension());
    if (objective->num_samples() < cfg.workers) throw ConfigError("fewer samples than workers");
  } catch (const ConfigError& e) {
    fail(exit_usage, "invalid_config", e.what());
    return result;
  }

  const std::size_t d = objective->dimension();
  const std::size_t T = cfg.iterations();
  const CostModel cost{cfg.alpha, cfg.beta};
  const SketchConfig sketch = make_train_config(cfg, defaults, Compressor::gs_sgd).sketch_config(d);

  const fs::path dir(cfg.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    fail(exit_usage, "invalid_config", "cannot create output directory " + dir.string() + ": " + ec.message());
    return result;
  }
  result.metrics_path = dir / (cfg.format == "json" ? "metrics.jsonl" : "metrics.csv");
  result.summary_path = dir / "summary.json";
  std::ofstream metrics(result.metrics_path, std::ios::binary | std::ios::trunc);
  if (!metrics) {
    fail(exit_usage, "invalid_config", "cannot write " + result.metrics_path.string());
    return result;
  }
  if (cfg.format == "csv") metrics << detail::metrics_header() << '\n' << std::flush;

  for (Compressor comp : experiment_run_order(cfg)) {
    RunSummary run;
    run.compressor = comp;
    result.runs.push_back(run);
    RunSummary& cur = result.runs.back();
    if (T == 0) continue;
    try {
      auto transport = factory ? factory(cfg.workers) : make_transport(cfg.transport, cfg.workers);
      Trainer trainer(*objective, make_train_config(cfg, defaults, comp), *transport, cost);
      double overlap_sum = 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        const IterationRecord rec = trainer.step();
        if (cfg.format == "csv") metrics << detail::csv_row(rec) << '\n';
        else metrics << detail::json_row(rec).dump() << '\n';
        metrics.flush();
        cur.total_modeled_time += rec.modeled_time;
        cur.messages += rec.traffic.messages();
        cur.payload_elements += rec.traffic.payload_elements();
        cur.rounds += rec.traffic.rounds();
        overlap_sum += rec.topk_overlap;
        cur.final_loss = rec.loss;
        cur.iterations = rec.iter;
      }
      cur.mean_topk_overlap = overlap_sum / static_cast<double>(T);
    } catch (const DivergenceError& e) {
      fail(exit_divergence, "diverged", std::string(compressor_name(comp)) + ": " + e.what());
    } catch (const CollectiveError& e) {
      fail(exit_transport, "transport_failure", std::string(compressor_name(comp)) + ": " + e.what());
    } catch (const TransportError& e) {
      fail(exit_transport, "transport_failure", std::string(compressor_name(comp)) + ": " + e.what());
    } catch (const ConfigError& e) {
      fail(exit_usage, "invalid_config", e.what());
    }
    if (result.exit_code != exit_ok) break;
  }

  ordered_json s;
  s["status"] = result.status;
  if (!result.message.empty()) s["message"] = result.message;
  s["objective"] = objective->name();
  s["dimension"] = d;
  s["samples"] = objective->num_samples();
  s["workers"] = cfg.workers;
  s["iterations"] = T;
  s["k"] = cfg.k;
  s["transport"] = cfg.transport;
  s["metrics_file"] = result.metrics_path.filename().string();
  s["sketch"] = {{"rows", sketch.rows}, {"cols", sketch.cols}, {"seed", sketch.seed}};
  s["cost_model"] = {{"alpha_s", cost.alpha_startup}, {"beta_s_per_element", cost.beta_per_element}};

  const std::size_t levels = build_reduce_plan({cfg.workers}).rounds.size();
  ordered_json allreduce;
  allreduce["rounds"] = 2 * levels;
  allreduce["sketch_elements"] = sketch.rows * sketch.cols;
  allreduce["modeled_time_s"] =
      static_cast<double>(2 * levels) * cost.message_time(sketch.rows * sketch.cols);
  // Same round count with log2(d) elements per round instead of the concrete
  // rows*cols table; reported side by side, never mixed.
  allreduce["log_d_model_elements"] = std::log2(static_cast<double>(d));
  allreduce["log_d_model_time_s"] =
      static_cast<double>(2 * levels) * (cost.alpha_startup + cost.beta_per_element * std::log2(static_cast<double>(d)));
  s["sketch_allreduce"] = allreduce;

  const RunSummary* dense = nullptr;
  for (const auto& r : result.runs)
    if (r.compressor == Compressor::dense) dense = &r;

  ordered_json runs = ordered_json::array();
  for (const auto& r : result.runs) {
    ordered_json j;
    j["compressor"] = compressor_name(r.compressor);
    j["iterations"] = r.iterations;
    j["final_loss"] = r.final_loss ? ordered_json(*r.final_loss) : ordered_json(nullptr);
    j["total_modeled_time_s"] = r.total_modeled_time;
    j["total_messages"] = r.messages;
    j["total_payload_elements"] = r.payload_elements;
    j["total_rounds"] = r.rounds;
    j["mean_topk_overlap"] = r.mean_topk_overlap;
    if (dense && r.iterations == T && dense->iterations == T && r.total_modeled_time > 0.0)
      j["speedup_vs_dense"] = dense->total_modeled_time / r.total_modeled_time;
    else
      j["speedup_vs_dense"] = nullptr;

    const std::size_t k_eff = std::min(cfg.k, d);
    const TrafficLedger est = estimate_iteration_traffic(r.compressor, cfg.workers, d, k_eff, sketch);
    ordered_json per_iter = detail::ledger_json(est, cost);
    ordered_json phases;
    for (Phase p : {Phase::dense, Phase::sketch, Phase::indices, Phase::exact_values, Phase::sparse}) {
      const TrafficLedger only = est.only(p);
      if (only.messages() > 0) phases[std::string(phase_name(p))] = detail::ledger_json(only, cost);
    }
    per_iter["phases"] = phases;
    if (r.compressor == Compressor::local_topk) per_iter["bound"] = "upper";
    j["per_iteration_model"] = per_iter;
    runs.push_back(j);
  }
  s["runs"] = runs;

  std::ofstream summary(result.summary_path, std::ios::binary | std::ios::trunc);
  summary << s.dump(2) << '\n';
  if (!summary && result.exit_code == exit_ok) fail(exit_usage, "io_error", "cannot write " + result.summary_path.string());
  return result;
}

}  // namespace gssgd
