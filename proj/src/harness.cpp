#include "ctos/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <thread>

#include "ctos/error.hpp"
#include "ctos/random.hpp"
#include "io.hpp"

namespace ctos {

namespace {

using ojson = nlohmann::ordered_json;

constexpr std::uint64_t kOrderKey = 0x4f524452;
constexpr std::uint64_t kRunKey = 0x52554e;
constexpr std::uint64_t kCompareKey = 0x434d50;
constexpr std::uint64_t kRandomArmKey = 0x52414e44;
constexpr std::uint64_t kProbeKey = 0x50524f42;

[[noreturn]] void bad_field(const std::string& field, const std::string& why) {
  fail(ErrorKind::Config, "invalid field '" + field + "': " + why);
}

template <class T>
T get_as(const nlohmann::json& j, const std::string& field) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    bad_field(field, "wrong type");
  }
}

void reject_unknown(const nlohmann::json& obj, const std::set<std::string>& known, const std::string& prefix) {
  if (!obj.is_object()) bad_field(prefix.empty() ? "<root>" : prefix, "expected an object");
  for (const auto& [key, _] : obj.items())
    if (!known.contains(key)) bad_field(prefix + key, "unknown key");
}

/// Runs `fn(i)` for i in [0, count) on up to `threads` workers. Results must be
/// written to slot i only.
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (unsigned w = 0; w < std::min<std::size_t>(threads, count); ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

std::string sanitize(std::string text) {
  std::replace_if(text.begin(), text.end(), [](char c) { return c == ',' || c == '\n' || c == '\r'; }, ' ');
  return text;
}

ojson summary_doc(const char* kind, const ExperimentConfig& config, std::vector<std::string> files,
                  std::optional<double> wall_clock) {
  const ojson cfg = config_to_json(config);
  ojson doc;
  doc["tool"] = "ctos";
  doc["version"] = kVersion;
  doc["kind"] = kind;
  doc["config_hash"] = hex64(fnv1a64(cfg.dump()));
  doc["config"] = cfg;
  files.push_back("summary.json");
  std::sort(files.begin(), files.end());
  doc["files"] = files;
  if (wall_clock) doc["wall_clock_seconds"] = *wall_clock;
  return doc;
}

std::vector<Task> ordered_tasks(std::span<const TaskBatch> batches, std::span<const int> task_order) {
  std::map<int, const Task*> by_id;
  for (const auto& b : batches)
    for (const auto& t : b.tasks) by_id[t.task_id] = &t;
  std::vector<Task> out;
  for (int id : task_order) {
    auto it = by_id.find(id);
    if (it == by_id.end()) fail(ErrorKind::Input, "unknown task id " + std::to_string(id));
    out.push_back(*it->second);
  }
  return out;
}

ojson probe_json(const ProbeConfig& p) {
  return ojson{{"samples_per_class", p.samples_per_class}, {"epochs", p.epochs},   {"hidden", p.hidden},
               {"learning_rate", p.learning_rate},         {"minibatch", p.minibatch}, {"seed", p.seed}};
}

ojson selection_json(const OrderSelection& sel, int batch_id) {
  ojson b;
  b["batch_id"] = batch_id;
  b["order"] = sel.task_ids;
  b["metric"] = to_string(sel.metric);
  b["probe"] = probe_json(sel.probe);
  b["steps"] = ojson::array();
  for (const auto& step : sel.steps) {
    ojson s;
    std::vector<int> ids;
    for (int c : step.candidates) ids.push_back(sel.scores.task_ids[static_cast<std::size_t>(c)]);
    s["candidates"] = ids;
    s["totals"] = step.totals;
    s["chosen"] = sel.scores.task_ids[static_cast<std::size_t>(step.chosen)];
    b["steps"].push_back(std::move(s));
  }
  return b;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

void ExperimentConfig::validate() const {
  if (suite && !manifest.empty()) bad_field("suite", "give either 'suite' or 'manifest', not both");
  if (!suite && manifest.empty()) bad_field("suite", "a suite or a manifest is required");
  if (suite) suite->validate();
  if (strategies.empty()) bad_field("strategies", "must not be empty");
  if (buffer_capacities.empty()) bad_field("buffer_capacities", "must not be empty");
  if (random_order_count < 1) bad_field("random_order_count", "must be >= 1");
  if (!(metric.transrate_eps > 0.0)) bad_field("transrate_eps", "must be > 0");
  if (hidden < 1) bad_field("train.hidden", "must be >= 1");
  if (threads < 1) bad_field("threads", "must be >= 1");
  probe.validate();
  for (auto s : strategies) hyper_for(s, 0).validate();
  if (suite && !batch_sizes.empty()) {
    const int total = std::accumulate(batch_sizes.begin(), batch_sizes.end(), 0);
    if (total != suite->task_count) bad_field("batch_sizes", "must sum to suite.task_count");
    for (int b : batch_sizes)
      if (b < 1) bad_field("batch_sizes", "entries must be >= 1");
  }
}

TrainHyper ExperimentConfig::hyper_for(Strategy strategy, std::uint64_t seed) const {
  TrainHyper h = hyper;
  h.strategy = strategy;
  h.seed = seed;
  if (strategy == Strategy::Naive) h.replay_minibatch = 0;
  return h;
}

ExperimentConfig config_from_json(const nlohmann::json& doc) {
  reject_unknown(doc, {"suite", "manifest", "batch_sizes", "strategies", "buffer_capacities", "metric",
                       "transrate_eps", "random_order_count", "probe", "train", "master_seed", "output_dir",
                       "threads", "write_traces", "record_timing", "brute_force"},
                 "");
  ExperimentConfig c;
  if (doc.contains("master_seed")) c.master_seed = get_as<std::uint64_t>(doc["master_seed"], "master_seed");
  c.probe.seed = derive_seed(c.master_seed, {kProbeKey});

  if (doc.contains("suite") && !doc["suite"].is_null()) {
    const auto& s = doc["suite"];
    reject_unknown(s, {"task_count", "classes_per_task", "dim", "samples_per_class", "similarity",
                       "difficulty_spread", "eval_fraction", "mean_scale", "seed"},
                   "suite.");
    SuiteConfig sc;
    if (s.contains("task_count")) sc.task_count = get_as<int>(s["task_count"], "suite.task_count");
    if (s.contains("classes_per_task")) sc.classes_per_task = get_as<int>(s["classes_per_task"], "suite.classes_per_task");
    if (s.contains("dim")) sc.dim = get_as<int>(s["dim"], "suite.dim");
    if (s.contains("samples_per_class")) sc.samples_per_class = get_as<int>(s["samples_per_class"], "suite.samples_per_class");
    if (s.contains("similarity")) sc.similarity = get_as<double>(s["similarity"], "suite.similarity");
    if (s.contains("difficulty_spread")) sc.difficulty_spread = get_as<double>(s["difficulty_spread"], "suite.difficulty_spread");
    if (s.contains("eval_fraction")) sc.eval_fraction = get_as<double>(s["eval_fraction"], "suite.eval_fraction");
    if (s.contains("mean_scale")) sc.mean_scale = get_as<double>(s["mean_scale"], "suite.mean_scale");
    sc.seed = s.contains("seed") ? get_as<std::uint64_t>(s["seed"], "suite.seed") : c.master_seed;
    c.suite = sc;
  }
  if (doc.contains("manifest") && !doc["manifest"].is_null())
    c.manifest = get_as<std::string>(doc["manifest"], "manifest");
  if (doc.contains("batch_sizes")) c.batch_sizes = get_as<std::vector<int>>(doc["batch_sizes"], "batch_sizes");
  if (doc.contains("strategies")) {
    c.strategies.clear();
    for (const auto& s : doc["strategies"]) c.strategies.push_back(parse_strategy(get_as<std::string>(s, "strategies")));
  }
  if (doc.contains("buffer_capacities")) {
    const auto& b = doc["buffer_capacities"];
    if (b.is_string()) {
      const auto name = b.get<std::string>();
      if (name == "desk") c.buffer_capacities = kDeskBufferPreset;
      else if (name == "full") c.buffer_capacities = kFullBufferPreset;
      else bad_field("buffer_capacities", "unknown preset '" + name + "'");
    } else {
      c.buffer_capacities.clear();
      for (const auto& v : b) {
        const auto cap = get_as<long long>(v, "buffer_capacities");
        if (cap < 0) bad_field("buffer_capacities", "capacities must be >= 0");
        c.buffer_capacities.push_back(static_cast<std::size_t>(cap));
      }
    }
  }
  if (doc.contains("metric")) c.metric.id = parse_metric(get_as<std::string>(doc["metric"], "metric"));
  if (doc.contains("transrate_eps")) c.metric.transrate_eps = get_as<double>(doc["transrate_eps"], "transrate_eps");
  if (doc.contains("random_order_count"))
    c.random_order_count = get_as<int>(doc["random_order_count"], "random_order_count");
  if (doc.contains("probe")) {
    const auto& p = doc["probe"];
    reject_unknown(p, {"samples_per_class", "epochs", "hidden", "learning_rate", "minibatch", "seed"}, "probe.");
    if (p.contains("samples_per_class")) c.probe.samples_per_class = get_as<int>(p["samples_per_class"], "probe.samples_per_class");
    if (p.contains("epochs")) c.probe.epochs = get_as<int>(p["epochs"], "probe.epochs");
    if (p.contains("hidden")) c.probe.hidden = get_as<int>(p["hidden"], "probe.hidden");
    if (p.contains("learning_rate")) c.probe.learning_rate = get_as<double>(p["learning_rate"], "probe.learning_rate");
    if (p.contains("minibatch")) c.probe.minibatch = get_as<int>(p["minibatch"], "probe.minibatch");
    if (p.contains("seed")) c.probe.seed = get_as<std::uint64_t>(p["seed"], "probe.seed");
  }
  if (doc.contains("train")) {
    const auto& t = doc["train"];
    reject_unknown(t, {"learning_rate", "epochs", "minibatch", "replay_minibatch", "hidden"}, "train.");
    if (t.contains("learning_rate")) c.hyper.learning_rate = get_as<double>(t["learning_rate"], "train.learning_rate");
    if (t.contains("epochs")) c.hyper.epochs = get_as<int>(t["epochs"], "train.epochs");
    if (t.contains("minibatch")) c.hyper.minibatch = get_as<int>(t["minibatch"], "train.minibatch");
    if (t.contains("replay_minibatch")) c.hyper.replay_minibatch = get_as<int>(t["replay_minibatch"], "train.replay_minibatch");
    if (t.contains("hidden")) c.hidden = get_as<int>(t["hidden"], "train.hidden");
  }
  if (doc.contains("output_dir")) c.output_dir = get_as<std::string>(doc["output_dir"], "output_dir");
  if (doc.contains("threads")) c.threads = get_as<unsigned>(doc["threads"], "threads");
  if (doc.contains("write_traces")) c.write_traces = get_as<bool>(doc["write_traces"], "write_traces");
  if (doc.contains("record_timing")) c.record_timing = get_as<bool>(doc["record_timing"], "record_timing");
  if (doc.contains("brute_force")) c.brute_force = get_as<bool>(doc["brute_force"], "brute_force");
  c.validate();
  return c;
}

nlohmann::ordered_json config_to_json(const ExperimentConfig& c) {
  ojson doc;
  if (c.suite) {
    const auto& s = *c.suite;
    doc["suite"] = ojson{{"task_count", s.task_count},         {"classes_per_task", s.classes_per_task},
                         {"dim", s.dim},                       {"samples_per_class", s.samples_per_class},
                         {"similarity", s.similarity},         {"difficulty_spread", s.difficulty_spread},
                         {"eval_fraction", s.eval_fraction},   {"mean_scale", s.mean_scale},
                         {"seed", s.seed}};
  } else {
    doc["manifest"] = c.manifest.string();
  }
  doc["batch_sizes"] = c.batch_sizes;
  doc["strategies"] = ojson::array();
  for (auto s : c.strategies) doc["strategies"].push_back(to_string(s));
  doc["buffer_capacities"] = c.buffer_capacities;
  doc["metric"] = to_string(c.metric.id);
  doc["transrate_eps"] = c.metric.transrate_eps;
  doc["random_order_count"] = c.random_order_count;
  doc["probe"] = probe_json(c.probe);
  doc["train"] = ojson{{"learning_rate", c.hyper.learning_rate},
                       {"epochs", c.hyper.epochs},
                       {"minibatch", c.hyper.minibatch},
                       {"replay_minibatch", c.hyper.replay_minibatch},
                       {"hidden", c.hidden}};
  doc["master_seed"] = c.master_seed;
  doc["write_traces"] = c.write_traces;
  doc["record_timing"] = c.record_timing;
  doc["brute_force"] = c.brute_force;
  return doc;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, path.string() + ": " + e.what());
  }
  return config_from_json(doc);
}

std::vector<TaskBatch> materialize_batches(const ExperimentConfig& config) {
  if (!config.manifest.empty()) return load_manifest(config.manifest);
  TaskBatch all = generate_synthetic_suite(*config.suite);
  if (config.batch_sizes.empty()) return {std::move(all)};
  return partition_batches(all, config.batch_sizes);
}

// ---------------------------------------------------------------------------
// Sweeps

std::vector<std::vector<int>> sample_random_orders(int n_tasks, int count, std::uint64_t seed) {
  if (n_tasks < 2) fail(ErrorKind::Config, "invalid field 'n_tasks': must be >= 2");
  if (count < 1) fail(ErrorKind::Config, "invalid field 'random_order_count': must be >= 1");
  Rng rng = make_rng(seed);
  std::vector<std::vector<int>> out;
  for (int k = 0; k < count; ++k) {
    std::vector<int> perm(static_cast<std::size_t>(n_tasks));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    out.push_back(std::move(perm));
  }
  return out;
}

std::uint64_t run_seed(std::uint64_t master_seed, Strategy strategy, std::size_t buffer, int order_index) {
  return derive_seed(master_seed, {kRunKey, static_cast<std::uint64_t>(strategy), buffer,
                                   static_cast<std::uint64_t>(order_index)});
}

std::vector<CorrelationRow> correlate_runs(std::span<const RunRecord> runs, MetricId metric) {
  std::vector<std::pair<Strategy, std::size_t>> keys;
  for (const auto& r : runs)
    if (std::find(keys.begin(), keys.end(), std::pair{r.strategy, r.buffer}) == keys.end())
      keys.emplace_back(r.strategy, r.buffer);

  std::vector<CorrelationRow> rows;
  for (const auto& [strategy, buffer] : keys) {
    std::vector<double> aa, tf, tr;
    for (const auto& r : runs) {
      if (r.strategy != strategy || r.buffer != buffer || !r.report) continue;
      aa.push_back(r.report->aa);
      tf.push_back(r.report->tft);
      tr.push_back(r.report->trt);
    }
    CorrelationRow row{strategy, buffer, metric, static_cast<int>(aa.size()), {}, {}};
    auto safe = [&](const std::vector<double>& ys) -> std::optional<Correlation> {
      try {
        return pearson(aa, ys);
      } catch (const Error&) {
        return std::nullopt;
      }
    };
    row.aa_tft = safe(tf);
    row.aa_trt = safe(tr);
    rows.push_back(row);
  }
  return rows;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const Scorer* scorer) {
  config.validate();
  const auto batches = materialize_batches(config);
  std::vector<Task> all;
  for (const auto& b : batches) all.insert(all.end(), b.tasks.begin(), b.tasks.end());
  if (all.size() < 2) fail(ErrorKind::Config, "invalid field 'suite': an experiment needs at least 2 tasks");
  const Scorer sc = scorer ? *scorer : make_scorer(config.metric);
  const auto orders = sample_random_orders(static_cast<int>(all.size()), config.random_order_count,
                                           derive_seed(config.master_seed, {kOrderKey}));

  ExperimentResult result;
  for (auto strategy : config.strategies)
    for (auto buffer : config.buffer_capacities)
      for (int k = 0; k < config.random_order_count; ++k) {
        RunRecord r;
        r.run_id = static_cast<int>(result.runs.size());
        r.strategy = strategy;
        r.buffer = buffer;
        r.order_index = k;
        for (int pos : orders[static_cast<std::size_t>(k)]) r.order.push_back(all[static_cast<std::size_t>(pos)].task_id);
        result.runs.push_back(std::move(r));
      }

  parallel_for(result.runs.size(), config.threads, [&](std::size_t i) {
    RunRecord& r = result.runs[i];
    try {
      auto tasks = ordered_tasks(batches, r.order);
      const auto hyper = config.hyper_for(r.strategy, run_seed(config.master_seed, r.strategy, r.buffer, r.order_index));
      const SequenceRun run = make_sequence_run(std::move(tasks), hyper, r.buffer, config.hidden);
      r.report = sequence_report(run, sc, config.metric.id);
      if (config.write_traces) r.traces = run.traces;
    } catch (const Error& e) {
      r.error = e.what();
    }
  });
  result.correlations = correlate_runs(result.runs, config.metric.id);
  return result;
}

double order_accuracy(const ExperimentConfig& config, std::span<const TaskBatch> batches,
                      std::span<const int> task_order, Strategy strategy, std::size_t buffer) {
  const auto tasks = ordered_tasks(batches, task_order);
  const auto seed = derive_seed(config.master_seed, {kCompareKey, static_cast<std::uint64_t>(strategy), buffer});
  const auto run = run_continual(tasks, config.hyper_for(strategy, seed), buffer, config.hidden);
  return average_accuracy(run.snapshots.back(), tasks);
}

ComparisonReport compare_hctos_random(const ExperimentConfig& config, std::span<const TaskBatch> batches,
                                      const Scorer* scorer) {
  config.validate();
  if (batches.empty()) fail(ErrorKind::Config, "invalid field 'batch_sizes': no batches to compare");
  for (const auto& b : batches) b.validate();
  const Scorer sc = scorer ? *scorer : make_scorer(config.metric);

  ComparisonReport rep;
  rep.strategy = config.strategies.front();
  rep.buffer = config.buffer_capacities.front();
  rep.metric = config.metric.id;
  rep.selections = hctos_multibatch(batches, sc, config.metric.id, config.probe);
  for (const auto& sel : rep.selections) rep.hctos.order.insert(rep.hctos.order.end(), sel.task_ids.begin(), sel.task_ids.end());

  std::vector<std::vector<std::vector<int>>> per_batch;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const int n = static_cast<int>(batches[b].tasks.size());
    if (n == 1) {  // nothing to permute
      per_batch.emplace_back(static_cast<std::size_t>(config.random_order_count), std::vector<int>{0});
      continue;
    }
    per_batch.push_back(sample_random_orders(n, config.random_order_count,
                                             derive_seed(config.master_seed, {kRandomArmKey, b})));
  }
  for (int k = 0; k < config.random_order_count; ++k) {
    ArmResult arm;
    for (std::size_t b = 0; b < batches.size(); ++b)
      for (int pos : per_batch[b][static_cast<std::size_t>(k)])
        arm.order.push_back(batches[b].tasks[static_cast<std::size_t>(pos)].task_id);
    rep.random.push_back(std::move(arm));
  }

  std::vector<ArmResult*> arms{&rep.hctos};
  for (auto& a : rep.random) arms.push_back(&a);
  parallel_for(arms.size(), config.threads, [&](std::size_t i) {
    arms[i]->aa = order_accuracy(config, batches, arms[i]->order, rep.strategy, rep.buffer);
  });

  double sum = 0.0;
  for (const auto& a : rep.random) sum += a.aa;
  rep.random_mean = sum / static_cast<double>(rep.random.size());
  double ss = 0.0;
  for (const auto& a : rep.random) ss += (a.aa - rep.random_mean) * (a.aa - rep.random_mean);
  rep.random_std = rep.random.size() > 1 ? std::sqrt(ss / static_cast<double>(rep.random.size() - 1)) : 0.0;
  rep.hctos_wins = rep.hctos.aa > rep.random_mean;

  if (config.brute_force) {
    std::size_t total = 1;
    for (const auto& b : batches) {
      for (std::size_t k = 2; k <= b.tasks.size(); ++k) total *= k;
      if (total > 120) fail(ErrorKind::Config, "invalid field 'brute_force': more than 120 orders to enumerate");
    }
    std::vector<std::vector<int>> perms;
    for (const auto& b : batches) {
      std::vector<int> ids;
      for (const auto& t : b.tasks) ids.push_back(t.task_id);
      std::sort(ids.begin(), ids.end());
      perms.push_back(ids);
    }
    std::vector<std::vector<int>> all_orders;
    std::function<void(std::size_t, std::vector<int>)> expand = [&](std::size_t b, std::vector<int> prefix) {
      if (b == perms.size()) {
        all_orders.push_back(std::move(prefix));
        return;
      }
      auto p = perms[b];
      do {
        auto next = prefix;
        next.insert(next.end(), p.begin(), p.end());
        expand(b + 1, std::move(next));
      } while (std::next_permutation(p.begin(), p.end()));
    };
    expand(0, {});
    std::vector<double> aas(all_orders.size());
    parallel_for(all_orders.size(), config.threads, [&](std::size_t i) {
      aas[i] = order_accuracy(config, batches, all_orders[i], rep.strategy, rep.buffer);
    });
    BruteForceSpan span;
    span.order_count = all_orders.size();
    const auto [mn, mx] = std::minmax_element(aas.begin(), aas.end());
    span.min_aa = *mn;
    span.max_aa = *mx;
    span.best_order = all_orders[static_cast<std::size_t>(mx - aas.begin())];
    rep.brute_force = span;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Files

std::string format_order(std::span<const int> order) {
  std::string s;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i) s += '-';
    s += std::to_string(order[i]);
  }
  return s;
}

std::vector<int> parse_order(std::string_view text) {
  std::vector<int> out;
  for (auto f : io::split_fields(text, '-')) {
    long long v = 0;
    if (!io::parse_int(f, v)) fail(ErrorKind::Parse, "malformed order '" + std::string(text) + "'");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

std::string format_correlation_csv(std::span<const CorrelationRow> rows) {
  std::string out = "strategy,buffer,metric,run_count,r_aa_tft,p_aa_tft,r_aa_trt,p_aa_trt,degenerate_tft,degenerate_trt\n";
  for (const auto& row : rows) {
    auto r = [](const std::optional<Correlation>& c) { return c ? io::format_double(c->r) : std::string(); };
    auto p = [](const std::optional<Correlation>& c) { return c ? io::format_double(c->p) : std::string(); };
    out += std::string(to_string(row.strategy)) + "," + std::to_string(row.buffer) + "," + to_string(row.metric) + "," +
           std::to_string(row.run_count) + "," + r(row.aa_tft) + "," + p(row.aa_tft) + "," + r(row.aa_trt) + "," +
           p(row.aa_trt) + "," + (row.aa_tft ? "0" : "1") + "," + (row.aa_trt ? "0" : "1") + "\n";
  }
  return out;
}

std::vector<std::string> emit(const ExperimentResult& result, const ExperimentConfig& config,
                              const std::filesystem::path& dir, std::optional<double> wall_clock) {
  std::string reports = "run_id,order,strategy,buffer,metric,aa,tft,trt\n";
  std::string acc = "run_id,t,j,acc\n";
  std::string terms = "run_id,kind,position,target_task,source_head,score\n";
  std::string failures = "run_id,order,strategy,buffer,error\n";
  std::vector<std::pair<std::string, std::string>> traces;
  for (const auto& r : result.runs) {
    const std::string id = std::to_string(r.run_id);
    if (!r.report) {
      failures += id + "," + format_order(r.order) + "," + to_string(r.strategy) + "," + std::to_string(r.buffer) + "," +
                  sanitize(r.error) + "\n";
      continue;
    }
    const auto& rep = *r.report;
    reports += id + "," + format_order(r.order) + "," + to_string(r.strategy) + "," + std::to_string(r.buffer) + "," +
               to_string(rep.metric) + "," + io::format_double(rep.aa) + "," + io::format_double(rep.tft) + "," +
               io::format_double(rep.trt) + "\n";
    for (std::size_t t = 0; t < rep.acc_matrix.size(); ++t)
      for (std::size_t j = 0; j < rep.acc_matrix[t].size(); ++j)
        acc += id + "," + std::to_string(t) + "," + std::to_string(j) + "," + io::format_double(rep.acc_matrix[t][j]) + "\n";
    auto add_terms = [&](const char* kind, const std::vector<TransferTerm>& list) {
      for (std::size_t k = 0; k < list.size(); ++k)
        terms += id + "," + kind + "," + std::to_string(k) + "," + std::to_string(list[k].target_task) + "," +
                 std::to_string(list[k].source_head) + "," + io::format_double(list[k].score) + "\n";
    };
    add_terms("tft", rep.tft_terms);
    add_terms("trt", rep.trt_terms);
    if (config.write_traces && !r.traces.empty())
      traces.emplace_back("traces/run_" + id + ".csv", format_trace_csv(r.traces));
  }

  std::vector<std::string> files = {"reports.csv", "acc_matrix.csv", "transfer_terms.csv", "correlation.csv",
                                    "failures.csv"};
  io::write_atomic(dir / "reports.csv", reports);
  io::write_atomic(dir / "acc_matrix.csv", acc);
  io::write_atomic(dir / "transfer_terms.csv", terms);
  io::write_atomic(dir / "correlation.csv", format_correlation_csv(result.correlations));
  io::write_atomic(dir / "failures.csv", failures);
  for (const auto& [name, text] : traces) {
    io::write_atomic(dir / name, text);
    files.push_back(name);
  }
  auto doc = summary_doc("experiment", config, files, config.record_timing ? wall_clock : std::nullopt);
  std::size_t failed = 0;
  for (const auto& r : result.runs) failed += r.report ? 0 : 1;
  doc["runs"] = result.runs.size();
  doc["failed_runs"] = failed;
  io::write_atomic(dir / "summary.json", doc.dump(2) + "\n");
  files.push_back("summary.json");
  return files;
}

std::vector<std::string> emit_selection(std::span<const OrderSelection> selections, const std::filesystem::path& dir) {
  ojson doc;
  doc["batches"] = ojson::array();
  std::vector<int> full;
  std::vector<std::string> files;
  for (std::size_t b = 0; b < selections.size(); ++b) {
    const auto& sel = selections[b];
    doc["batches"].push_back(selection_json(sel, static_cast<int>(b)));
    full.insert(full.end(), sel.task_ids.begin(), sel.task_ids.end());
    const std::string name = "scores_batch" + std::to_string(b) + ".csv";
    io::write_atomic(dir / name, format_score_csv(sel.scores));
    files.push_back(name);
  }
  doc["order"] = full;
  io::write_atomic(dir / "order.json", doc.dump(2) + "\n");
  files.push_back("order.json");
  return files;
}

std::vector<std::string> emit_comparison(const ComparisonReport& rep, const ExperimentConfig& config,
                                         const std::filesystem::path& dir, std::optional<double> wall_clock) {
  auto files = emit_selection(rep.selections, dir);
  ojson doc;
  doc["strategy"] = to_string(rep.strategy);
  doc["buffer"] = rep.buffer;
  doc["metric"] = to_string(rep.metric);
  doc["hctos_order"] = rep.hctos.order;
  doc["aa_hctos"] = rep.hctos.aa;
  doc["aa_random_mean"] = rep.random_mean;
  doc["aa_random_std"] = rep.random_std;
  doc["random_count"] = rep.random.size();
  doc["hctos_wins"] = rep.hctos_wins;
  if (rep.brute_force) {
    doc["brute_force"] = ojson{{"order_count", rep.brute_force->order_count},
                               {"min_aa", rep.brute_force->min_aa},
                               {"max_aa", rep.brute_force->max_aa},
                               {"best_order", rep.brute_force->best_order}};
  }
  io::write_atomic(dir / "comparison.json", doc.dump(2) + "\n");
  std::string arms = "arm,index,order,aa\n";
  arms += "hctos,0," + format_order(rep.hctos.order) + "," + io::format_double(rep.hctos.aa) + "\n";
  for (std::size_t k = 0; k < rep.random.size(); ++k)
    arms += "random," + std::to_string(k) + "," + format_order(rep.random[k].order) + "," +
            io::format_double(rep.random[k].aa) + "\n";
  io::write_atomic(dir / "comparison_arms.csv", arms);
  files.push_back("comparison.json");
  files.push_back("comparison_arms.csv");
  const auto summary = summary_doc("comparison", config, files, config.record_timing ? wall_clock : std::nullopt);
  io::write_atomic(dir / "summary.json", summary.dump(2) + "\n");
  files.push_back("summary.json");
  return files;
}

std::vector<RunRecord> load_reports(const std::filesystem::path& dir, MetricId* metric) {
  auto lines_of = [](const std::filesystem::path& p) {
    const std::string text = io::read_file(p);
    std::vector<std::string> lines;
    for (auto l : io::split_fields(text, '\n'))
      if (!l.empty()) lines.emplace_back(l);
    return lines;
  };
  const auto path = dir / "reports.csv";
  const auto lines = lines_of(path);
  if (lines.empty() || lines.front() != "run_id,order,strategy,buffer,metric,aa,tft,trt")
    fail(ErrorKind::Parse, path.string() + ":1: missing header");
  std::vector<RunRecord> runs;
  std::map<int, std::size_t> index;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const auto f = io::split_fields(lines[ln]);
    auto where = path.string() + ":" + std::to_string(ln + 1);
    if (f.size() != 8) fail(ErrorKind::Parse, where + ": expected 8 fields");
    RunRecord r;
    long long id = 0, buf = 0;
    SequenceReport rep;
    if (!io::parse_int(f[0], id) || !io::parse_int(f[3], buf) || !io::parse_double(f[5], rep.aa) ||
        !io::parse_double(f[6], rep.tft) || !io::parse_double(f[7], rep.trt))
      fail(ErrorKind::Parse, where + ": non-numeric field");
    r.run_id = static_cast<int>(id);
    r.order = parse_order(f[1]);
    r.strategy = parse_strategy(f[2]);
    r.buffer = static_cast<std::size_t>(buf);
    rep.metric = parse_metric(f[4]);
    if (metric) *metric = rep.metric;
    rep.order = r.order;
    r.report = rep;
    index[r.run_id] = runs.size();
    runs.push_back(std::move(r));
  }
  const auto acc_path = dir / "acc_matrix.csv";
  if (std::filesystem::exists(acc_path)) {
    const auto acc = lines_of(acc_path);
    for (std::size_t ln = 1; ln < acc.size(); ++ln) {
      const auto f = io::split_fields(acc[ln]);
      long long id = 0, t = 0, j = 0;
      double v = 0.0;
      if (f.size() != 4 || !io::parse_int(f[0], id) || !io::parse_int(f[1], t) || !io::parse_int(f[2], j) ||
          !io::parse_double(f[3], v))
        fail(ErrorKind::Parse, acc_path.string() + ":" + std::to_string(ln + 1) + ": malformed row");
      auto it = index.find(static_cast<int>(id));
      if (it == index.end()) continue;
      auto& m = runs[it->second].report->acc_matrix;
      if (m.size() <= static_cast<std::size_t>(t)) m.resize(static_cast<std::size_t>(t) + 1);
      auto& row = m[static_cast<std::size_t>(t)];
      if (row.size() <= static_cast<std::size_t>(j)) row.resize(static_cast<std::size_t>(j) + 1);
      row[static_cast<std::size_t>(j)] = v;
    }
  }
  return runs;
}

std::uint64_t fnv1a64(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace ctos
