// gssgd_bench: run compressor comparisons on the simulated cluster.

#include <cstdio>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"

#include "gssgd/gssgd.hpp"

namespace {

void print_run_table(const gssgd::ExperimentResult& r) {
  std::printf("%-14s %10s %16s %14s %12s %10s\n", "compressor", "iters", "final_loss", "modeled_s", "messages",
              "speedup");
  const double* dense_time = nullptr;
  for (const auto& run : r.runs)
    if (run.compressor == gssgd::Compressor::dense) dense_time = &run.total_modeled_time;
  for (const auto& run : r.runs) {
    const std::string name(gssgd::compressor_name(run.compressor));
    const double loss = run.final_loss.value_or(std::nan(""));
    if (dense_time && run.total_modeled_time > 0.0)
      std::printf("%-14s %10zu %16.8g %14.6g %12zu %9.3fx\n", name.c_str(), run.iterations, loss,
                  run.total_modeled_time, run.messages, *dense_time / run.total_modeled_time);
    else
      std::printf("%-14s %10zu %16.8g %14.6g %12zu %10s\n", name.c_str(), run.iterations, loss, run.total_modeled_time,
                  run.messages, "-");
  }
}

int print_estimate(const gssgd::ExperimentConfig& cfg) {
  using namespace gssgd;
  cfg.validate();
  const ObjectiveDefaults def = objective_defaults(cfg.objective);
  const std::size_t d = cfg.dimension ? cfg.dimension : def.dimension;
  if (cfg.k > d) throw ConfigError("k must not exceed the dimension");
  const SketchConfig sketch = make_train_config(cfg, def, Compressor::gs_sgd).sketch_config(d);
  const CostModel cost{cfg.alpha, cfg.beta};
  std::printf("per-iteration traffic: P=%zu d=%zu k=%zu sketch=%zux%zu alpha=%g beta=%g\n", cfg.workers, d, cfg.k,
              sketch.rows, sketch.cols, cost.alpha_startup, cost.beta_per_element);
  std::printf("%-14s %8s %10s %14s %14s %12s\n", "compressor", "rounds", "messages", "elements", "modeled_s",
              "vs_gs_sgd");
  const double gs = estimate_iteration_time(Compressor::gs_sgd, cfg.workers, d, cfg.k, sketch, cost);
  for (Compressor c : {Compressor::dense, Compressor::gs_sgd, Compressor::sketched_star, Compressor::local_topk,
                       Compressor::gtopk}) {
    const TrafficLedger l = estimate_iteration_traffic(c, cfg.workers, d, cfg.k, sketch);
    const double t = l.modeled_time(cost);
    const std::string name = std::string(compressor_name(c)) + (c == Compressor::local_topk ? "*" : "");
    std::printf("%-14s %8zu %10zu %14zu %14.6g %12.4g\n", name.c_str(), l.rounds(), l.messages(),
                l.payload_elements(), t, gs > 0.0 ? t / gs : std::nan(""));
  }
  std::printf("* upper bound: assumes disjoint local supports\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace gssgd;
  CLI::App app{"Simulated distributed SGD with sketched gradient aggregation"};
  app.set_version_flag("--version", "gssgd_bench 0.1.0");

  std::string config_path;
  app.add_option("--config", config_path, "Experiment config file (key = value lines)")->check(CLI::ExistingFile);

  // Overrides, applied on top of the config file in this order.
  const std::vector<std::pair<std::string, std::string>> overrides{
      {"--workers", "workers"},       {"--k", "k"},
      {"--rows", "rows"},             {"--cols", "cols"},
      {"--epochs", "epochs"},         {"--iters", "iters"},
      {"--seed", "seed"},             {"--compressor", "compressor"},
      {"--objective", "objective"},   {"--alpha", "alpha"},
      {"--beta", "beta"},             {"--out", "out"},
      {"--format", "format"},         {"--dimension", "dimension"},
      {"--samples", "samples"},       {"--batch-size", "batch_size"},
      {"--lr", "learning_rate"},      {"--lr-schedule", "lr_schedule"},
      {"--warmup", "warmup"},         {"--transport", "transport"},
  };
  const std::map<std::string, std::string> help{
      {"workers", "Number of simulated workers P (>= 1)"},
      {"k", "Coordinates selected per iteration"},
      {"rows", "Sketch rows"},
      {"cols", "Sketch columns (0: max(64, next_pow2(20k)))"},
      {"epochs", "Epochs"},
      {"iters", "Iterations per epoch"},
      {"seed", "Master seed"},
      {"compressor", "Comma list of dense, gs_sgd, sketched_star, local_topk, gtopk"},
      {"objective", "Objective: lsq, logreg, mlp"},
      {"alpha", "Per-message startup cost in seconds"},
      {"beta", "Per-element transfer cost in seconds"},
      {"out", "Output directory"},
      {"format", "Metrics file format: csv or json"},
      {"dimension", "Model dimension (0: objective default)"},
      {"samples", "Training samples (0: objective default)"},
      {"batch_size", "Per-worker minibatch (0: objective default)"},
      {"learning_rate", "Learning rate (0: objective default)"},
      {"lr_schedule", "Post-warmup steps as epoch:rate,epoch:rate"},
      {"warmup", "Use the four-epoch warmup density schedule (true/false)"},
      {"transport", "inproc or tcp"},
  };
  std::map<std::string, std::string> values;
  std::vector<CLI::Option*> run_opts;
  for (const auto& [flag, key] : overrides) {
    auto* opt = app.add_option(flag, values[key], help.at(key));
    if (key == "format") opt->check(CLI::IsMember({"csv", "json"}));
    if (key == "transport") opt->check(CLI::IsMember({"inproc", "tcp"}));
    run_opts.push_back(opt);
  }
  run_opts.push_back(app.get_option("--config"));

  bool list_objectives = false, verify = false, estimate = false;
  auto* list_flag = app.add_flag("--list-objectives", list_objectives, "List objectives and their defaults");
  auto* verify_flag = app.add_flag("--verify", verify, "Run the invariant suite on small instances");
  auto* estimate_flag =
      app.add_flag("--estimate", estimate, "Print per-iteration modeled traffic for every compressor, no training");
  list_flag->excludes(verify_flag)->excludes(estimate_flag);
  verify_flag->excludes(estimate_flag);
  for (auto* opt : run_opts) {
    list_flag->excludes(opt);
    verify_flag->excludes(opt);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_usage;
  }

  if (list_objectives) {
    for (const auto& name : objective_names()) {
      const auto d = objective_defaults(name);
      std::printf("%-8s d=%-6zu samples=%-6zu batch=%-4zu lr=%g\n", name.c_str(), d.dimension, d.samples,
                  d.batch_size, d.learning_rate);
    }
    return exit_ok;
  }
  if (verify) return run_verify_suite(std::cout) ? exit_ok : exit_usage;

  ExperimentConfig cfg;
  try {
    if (!config_path.empty()) cfg = load_experiment_config(config_path);
    for (const auto& [flag, key] : overrides)
      if (app.count(flag) > 0) set_config_value(cfg, key, values[key]);
    cfg.validate();
    if (estimate) return print_estimate(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_usage;
  }

  const ExperimentResult result = run_experiment(cfg, &std::cerr);
  if (result.exit_code == exit_usage && result.runs.empty()) return result.exit_code;
  print_run_table(result);
  std::printf("metrics: %s\nsummary: %s\n", result.metrics_path.string().c_str(),
              result.summary_path.string().c_str());
  return result.exit_code;
}
