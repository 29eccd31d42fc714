// Command-line front end. Talks to the engine only through the C API.

#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ctos/ctos.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct SuiteDeleter {
  void operator()(ctos_suite* s) const { ctos_suite_free(s); }
};
struct ConfigDeleter {
  void operator()(ctos_config* c) const { ctos_config_free(c); }
};
using SuitePtr = std::unique_ptr<ctos_suite, SuiteDeleter>;
using ConfigPtr = std::unique_ptr<ctos_config, ConfigDeleter>;

int report(ctos_status status) {
  if (status == CTOS_OK) return kExitOk;
  std::cerr << "error (" << ctos_status_name(status) << "): " << ctos_last_error() << "\n";
  return ctos_status_is_validation(status) ? kExitValidation : kExitRuntime;
}

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

template <class T>
std::string json_list(const std::vector<T>& v, bool strings) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_same_v<T, std::string>) out += strings ? quoted(v[i]) : v[i];
    else out += std::to_string(v[i]);
  }
  return out + "]";
}

/// Flags shared by `run` and `compare`; each set flag overrides the config file.
struct Overrides {
  std::string output_dir;
  std::optional<std::string> metric;
  std::optional<std::uint64_t> master_seed;
  std::vector<std::string> strategies;
  std::vector<long long> buffers;
  std::optional<int> orders;
  std::optional<unsigned> threads;
  std::optional<double> transrate_eps;
  std::optional<int> samples_per_class;
  bool write_traces = false;
  bool record_timing = false;
  bool brute_force = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--output-dir,-o", output_dir, "Directory for report files (overrides output_dir)");
    cmd->add_option("--metric", metric, "Base metric: logme, leep, transrate, gbc")
        ->check(CLI::IsMember({"logme", "leep", "transrate", "gbc"}));
    cmd->add_option("--master-seed", master_seed, "Master seed");
    cmd->add_option("--strategies", strategies, "CL strategies: naive, er, agem");
    cmd->add_option("--buffers", buffers, "Replay buffer capacities");
    cmd->add_option("--orders", orders, "Number of random task orders");
    cmd->add_option("--threads", threads, "Worker threads");
    cmd->add_option("--transrate-eps", transrate_eps, "TransRate distortion eps");
    cmd->add_option("--samples-per-class", samples_per_class, "Probe samples per class");
    cmd->add_flag("--write-traces", write_traces, "Write per-run training traces");
    cmd->add_flag("--record-timing", record_timing, "Record wall-clock time in summary.json");
  }

  ctos_status apply(ctos_config* cfg) const {
    std::vector<std::pair<std::string, std::string>> sets;
    if (!output_dir.empty()) sets.emplace_back("output_dir", quoted(output_dir));
    if (metric) sets.emplace_back("metric", quoted(*metric));
    if (master_seed) sets.emplace_back("master_seed", std::to_string(*master_seed));
    if (!strategies.empty()) sets.emplace_back("strategies", json_list(strategies, true));
    if (!buffers.empty()) sets.emplace_back("buffer_capacities", json_list(buffers, false));
    if (orders) sets.emplace_back("random_order_count", std::to_string(*orders));
    if (threads) sets.emplace_back("threads", std::to_string(*threads));
    if (transrate_eps) sets.emplace_back("transrate_eps", std::to_string(*transrate_eps));
    if (samples_per_class) sets.emplace_back("probe.samples_per_class", std::to_string(*samples_per_class));
    if (write_traces) sets.emplace_back("write_traces", "true");
    if (record_timing) sets.emplace_back("record_timing", "true");
    if (brute_force) sets.emplace_back("brute_force", "true");
    for (const auto& [k, v] : sets)
      if (auto st = ctos_config_set(cfg, k.c_str(), v.c_str()); st != CTOS_OK) return st;
    return CTOS_OK;
  }
};

void print_full_help(const CLI::App& app) {
  std::cout << app.help();
  for (const auto* sub : app.get_subcommands({})) std::cout << "\n" << sub->help();
}

// `ctos <sub> --help` shows only that subcommand; bare --help shows everything.
void print_help(const CLI::App& app) {
  for (const auto* sub : app.get_subcommands()) {
    std::cout << sub->help();
    return;
  }
  print_full_help(app);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ctos: sequence transferability and continual task order selection"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(ctos_version()));

  // generate
  auto* gen = app.add_subcommand("generate", "Generate a synthetic task suite as CSV files plus a manifest");
  ctos_suite_params suite{};
  ctos_suite_params_default(&suite);
  std::string gen_out;
  std::vector<int> batch_sizes;
  gen->add_option("--tasks", suite.task_count, "Number of tasks")->capture_default_str();
  gen->add_option("--classes", suite.classes_per_task, "Classes per task")->capture_default_str();
  gen->add_option("--dim", suite.dim, "Input dimension")->capture_default_str();
  gen->add_option("--samples-per-class", suite.samples_per_class, "Samples per class")->capture_default_str();
  gen->add_option("--similarity", suite.similarity, "Inter-task similarity in [0,1]")->capture_default_str();
  gen->add_option("--difficulty-spread", suite.difficulty_spread, "Spread of per-task noise")->capture_default_str();
  gen->add_option("--eval-fraction", suite.eval_fraction, "Held-out fraction per class")->capture_default_str();
  gen->add_option("--mean-scale", suite.mean_scale, "Half-width of the class-mean box")->capture_default_str();
  gen->add_option("--seed", suite.seed, "Generator seed")->capture_default_str();
  gen->add_option("--batch-sizes", batch_sizes, "Split tasks into consecutive batches of these sizes");
  gen->add_option("--out", gen_out, "Output directory")->required();

  // run
  auto* run = app.add_subcommand("run", "Run a correlation sweep from an experiment config");
  std::string run_config;
  Overrides run_over;
  run->add_option("--config", run_config, "Experiment config (JSON)")->required();
  run_over.attach(run);

  // select-order
  auto* sel = app.add_subcommand("select-order", "Select task orders for every batch of a suite with HCTOS");
  std::string manifest, sel_metric = "logme", sel_out;
  ctos_probe_params probe{};
  ctos_probe_params_default(&probe);
  double sel_eps = 0.1, sel_eval_fraction = 0.25;
  sel->add_option("--manifest", manifest, "Suite manifest")->required();
  sel->add_option("--metric", sel_metric, "Base metric")
      ->check(CLI::IsMember({"logme", "leep", "transrate", "gbc"}))
      ->capture_default_str();
  sel->add_option("--samples-per-class", probe.samples_per_class, "Probe samples per class")->capture_default_str();
  sel->add_option("--probe-epochs", probe.epochs, "Probe training epochs")->capture_default_str();
  sel->add_option("--probe-hidden", probe.hidden, "Probe hidden width")->capture_default_str();
  sel->add_option("--probe-lr", probe.learning_rate, "Probe learning rate")->capture_default_str();
  sel->add_option("--seed", probe.seed, "Probe seed")->capture_default_str();
  sel->add_option("--transrate-eps", sel_eps, "TransRate distortion eps")->capture_default_str();
  sel->add_option("--eval-fraction", sel_eval_fraction, "Fallback eval fraction for unsplit rows")->capture_default_str();
  sel->add_option("--out", sel_out, "Output directory")->required();

  // compare
  auto* cmp = app.add_subcommand("compare", "Compare HCTOS against random task orders");
  std::string cmp_config;
  Overrides cmp_over;
  cmp->add_option("--config", cmp_config, "Experiment config (JSON)")->required();
  cmp_over.attach(cmp);
  cmp->add_flag("--brute-force", cmp_over.brute_force, "Also enumerate all orders (<= 120)");

  // correlate
  auto* cor = app.add_subcommand("correlate", "Recompute correlation.csv from a reports directory");
  std::string reports_dir, cor_out;
  cor->add_option("--reports", reports_dir, "Directory containing reports.csv")->required();
  cor->add_option("--out", cor_out, "Output directory (defaults to --reports)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    print_help(app);
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    print_full_help(app);
    return kExitOk;
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  if (*gen) {
    ctos_suite* raw = nullptr;
    if (auto st = ctos_suite_generate(&suite, &raw); st != CTOS_OK) return report(st);
    SuitePtr s(raw);
    if (auto st = ctos_suite_partition(s.get(), batch_sizes.data(), batch_sizes.size()); st != CTOS_OK) return report(st);
    if (auto st = ctos_suite_save(s.get(), gen_out.c_str()); st != CTOS_OK) return report(st);
    std::cout << "wrote " << ctos_suite_task_count(s.get()) << " tasks to " << gen_out << "\n";
    return kExitOk;
  }
  if (*sel) {
    ctos_suite* raw = nullptr;
    if (auto st = ctos_suite_load(manifest.c_str(), sel_eval_fraction, probe.seed, &raw); st != CTOS_OK)
      return report(st);
    SuitePtr s(raw);
    std::vector<int> order(ctos_suite_task_count(s.get()));
    if (auto st = ctos_select_order(s.get(), &probe, sel_metric.c_str(), sel_eps, sel_out.c_str(), order.data());
        st != CTOS_OK)
      return report(st);
    std::cout << "order:";
    for (int id : order) std::cout << " " << id;
    std::cout << "\n";
    return kExitOk;
  }
  if (*run || *cmp) {
    const std::string& path = *run ? run_config : cmp_config;
    const Overrides& over = *run ? run_over : cmp_over;
    ctos_config* raw = nullptr;
    if (auto st = ctos_config_load(path.c_str(), &raw); st != CTOS_OK) return report(st);
    ConfigPtr cfg(raw);
    if (auto st = over.apply(cfg.get()); st != CTOS_OK) return report(st);
    return report(*run ? ctos_run(cfg.get()) : ctos_compare(cfg.get()));
  }
  if (*cor) return report(ctos_correlate(reports_dir.c_str(), cor_out.empty() ? nullptr : cor_out.c_str()));
  return kExitValidation;
}
