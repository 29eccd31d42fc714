#include "ctos/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "ctos/error.hpp"
#include "ctos/random.hpp"
#include "io.hpp"

namespace ctos {

namespace {

void require(bool ok, const std::string& field, const std::string& why) {
  if (!ok) fail(ErrorKind::Config, "invalid suite config field '" + field + "': " + why);
}

std::vector<std::size_t> shuffled(std::vector<std::size_t> rows, Rng& rng) {
  std::shuffle(rows.begin(), rows.end(), rng);
  return rows;
}

}  // namespace

// ---------------------------------------------------------------------------
// LabeledSet

void LabeledSet::validate() const {
  if (labels.empty()) fail(ErrorKind::Input, "labeled set is empty");
  if (static_cast<std::size_t>(inputs.rows()) != labels.size())
    fail(ErrorKind::Dimension, "row count does not match label count");
  if (class_count < 1) fail(ErrorKind::Input, "class_count must be positive");
  for (int y : labels)
    if (y < 0 || y >= class_count) fail(ErrorKind::Input, "label out of range");
  if (!inputs.allFinite()) fail(ErrorKind::Input, "non-finite feature value");
}

LabeledSet LabeledSet::select(std::span<const std::size_t> rows) const {
  LabeledSet out;
  out.class_count = class_count;
  out.inputs.resize(static_cast<Eigen::Index>(rows.size()), inputs.cols());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.inputs.row(static_cast<Eigen::Index>(i)) = inputs.row(static_cast<Eigen::Index>(rows[i]));
    out.labels.push_back(labels[rows[i]]);
  }
  return out;
}

std::vector<std::vector<std::size_t>> LabeledSet::rows_by_class() const {
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(class_count));
  for (std::size_t i = 0; i < labels.size(); ++i) out[static_cast<std::size_t>(labels[i])].push_back(i);
  return out;
}

bool LabeledSet::operator==(const LabeledSet& o) const {
  return class_count == o.class_count && labels == o.labels && inputs.rows() == o.inputs.rows() &&
         inputs.cols() == o.inputs.cols() && inputs == o.inputs;
}

Eigen::Index TaskBatch::dim() const {
  if (tasks.empty()) fail(ErrorKind::Input, "batch " + std::to_string(batch_id) + " is empty");
  return tasks.front().train.dim();
}

void TaskBatch::validate() const {
  const auto d = dim();
  std::vector<int> ids;
  for (const auto& t : tasks) {
    t.train.validate();
    t.eval.validate();
    if (t.train.dim() != d || t.eval.dim() != d)
      fail(ErrorKind::Dimension, "task " + std::to_string(t.task_id) + " has mismatched input width");
    if (t.train.class_count != t.eval.class_count)
      fail(ErrorKind::Input, "task " + std::to_string(t.task_id) + " train/eval class counts differ");
    ids.push_back(t.task_id);
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    fail(ErrorKind::Input, "duplicate task id in batch " + std::to_string(batch_id));
}

// ---------------------------------------------------------------------------
// Synthetic suites

void SuiteConfig::validate() const {
  require(task_count >= 2, "task_count", "must be >= 2");
  require(classes_per_task >= 2, "classes_per_task", "must be >= 2");
  require(dim >= 1, "dim", "must be >= 1");
  require(samples_per_class >= 2, "samples_per_class", "must be >= 2");
  require(similarity >= 0.0 && similarity <= 1.0, "similarity", "must lie in [0, 1]");
  require(difficulty_spread >= 0.0 && std::isfinite(difficulty_spread), "difficulty_spread",
          "must be finite and >= 0");
  require(eval_fraction > 0.0 && eval_fraction < 1.0, "eval_fraction", "must lie in (0, 1)");
  require(mean_scale > 0.0 && std::isfinite(mean_scale), "mean_scale", "must be finite and > 0");
}

SuiteLayout synthetic_layout(const SuiteConfig& config) {
  config.validate();
  const auto k = static_cast<std::size_t>(config.classes_per_task);
  const auto d = static_cast<Eigen::Index>(config.dim);
  Rng rng = make_rng(derive_seed(config.seed, {0x4d45414e}));
  std::uniform_real_distribution<double> box(-1.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto draw_mean = [&] {
    Vector m(d);
    for (Eigen::Index j = 0; j < d; ++j) m[j] = box(rng) * config.mean_scale;
    return m;
  };

  // Draw order is fixed so that `similarity` only changes the mixing weight.
  std::vector<Vector> shared;
  for (std::size_t c = 0; c < k; ++c) shared.push_back(draw_mean());

  SuiteLayout layout;
  for (int t = 0; t < config.task_count; ++t) {
    std::vector<Vector> means;
    for (std::size_t c = 0; c < k; ++c) {
      Vector priv = draw_mean();
      means.push_back((1.0 - config.similarity) * priv + config.similarity * shared[c % k]);
    }
    layout.class_means.push_back(std::move(means));
    layout.task_sigma.push_back(0.3 * (1.0 + config.difficulty_spread * unit(rng)));
  }
  return layout;
}

TaskBatch generate_synthetic_suite(const SuiteConfig& config) {
  const SuiteLayout layout = synthetic_layout(config);
  const auto d = static_cast<Eigen::Index>(config.dim);
  const auto per_class = static_cast<Eigen::Index>(config.samples_per_class);

  TaskBatch batch;
  for (int t = 0; t < config.task_count; ++t) {
    Rng rng = make_rng(derive_seed(config.seed, {0x53414d50, static_cast<std::uint64_t>(t)}));
    std::normal_distribution<double> noise(0.0, layout.task_sigma[static_cast<std::size_t>(t)]);
    LabeledSet full;
    full.class_count = config.classes_per_task;
    full.inputs.resize(per_class * config.classes_per_task, d);
    for (int c = 0; c < config.classes_per_task; ++c) {
      const Vector& mean = layout.class_means[static_cast<std::size_t>(t)][static_cast<std::size_t>(c)];
      for (Eigen::Index i = 0; i < per_class; ++i) {
        const Eigen::Index row = c * per_class + i;
        for (Eigen::Index j = 0; j < d; ++j) full.inputs(row, j) = mean[j] + noise(rng);
        full.labels.push_back(c);
      }
    }
    auto [train, eval] = split_train_eval(
        full, config.eval_fraction, derive_seed(config.seed, {0x53504c54, static_cast<std::uint64_t>(t)}));
    batch.tasks.push_back(Task{t, std::move(train), std::move(eval), {}});
  }
  return batch;
}

std::vector<TaskBatch> partition_batches(const TaskBatch& batch, std::span<const int> sizes) {
  std::size_t total = 0;
  for (int s : sizes) {
    if (s < 1) fail(ErrorKind::Config, "invalid field 'batch_sizes': entries must be >= 1");
    total += static_cast<std::size_t>(s);
  }
  if (total != batch.tasks.size())
    fail(ErrorKind::Config, "invalid field 'batch_sizes': sizes sum to " + std::to_string(total) +
                                " but the suite has " + std::to_string(batch.tasks.size()) + " tasks");
  std::vector<TaskBatch> out;
  std::size_t next = 0;
  for (std::size_t b = 0; b < sizes.size(); ++b) {
    TaskBatch part;
    part.batch_id = static_cast<int>(b);
    for (int i = 0; i < sizes[b]; ++i) part.tasks.push_back(batch.tasks[next++]);
    out.push_back(std::move(part));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Splits and subsamples

std::pair<LabeledSet, LabeledSet> split_train_eval(const LabeledSet& set, double eval_fraction,
                                                   std::uint64_t seed) {
  if (!(eval_fraction > 0.0 && eval_fraction < 1.0))
    fail(ErrorKind::Config, "invalid field 'eval_fraction': must lie in (0, 1)");
  Rng rng = make_rng(seed);
  std::vector<std::size_t> train_rows, eval_rows;
  for (const auto& rows : set.rows_by_class()) {
    if (rows.empty()) continue;
    if (rows.size() < 2) fail(ErrorKind::Split, "class with a single example cannot be split");
    const auto n = static_cast<long long>(rows.size());
    const long long k = std::clamp(std::llround(eval_fraction * static_cast<double>(n)), 1LL, n - 1);
    auto order = shuffled(rows, rng);
    eval_rows.insert(eval_rows.end(), order.begin(), order.begin() + k);
    train_rows.insert(train_rows.end(), order.begin() + k, order.end());
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(eval_rows.begin(), eval_rows.end());
  return {set.select(train_rows), set.select(eval_rows)};
}

LabeledSet subsample_per_class(const LabeledSet& set, int k, std::uint64_t seed) {
  if (k < 1) fail(ErrorKind::Config, "invalid field 'samples_per_class': must be >= 1");
  Rng rng = make_rng(seed);
  std::vector<std::size_t> keep;
  for (const auto& rows : set.rows_by_class()) {
    auto order = shuffled(rows, rng);
    const auto take = std::min(order.size(), static_cast<std::size_t>(k));
    keep.insert(keep.end(), order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(keep.begin(), keep.end());
  return set.select(keep);
}

// ---------------------------------------------------------------------------
// CSV

namespace {

void append_rows(std::string& out, const LabeledSet& set, const char* split,
                 const std::vector<std::string>& names) {
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto y = static_cast<std::size_t>(set.labels[i]);
    out += names.empty() ? std::to_string(y) : names[y];
    out += ',';
    out += split;
    for (Eigen::Index j = 0; j < set.dim(); ++j) {
      out += ',';
      out += io::format_double(set.inputs(static_cast<Eigen::Index>(i), j));
    }
    out += '\n';
  }
}

[[noreturn]] void parse_fail(const std::filesystem::path& path, std::size_t line, const std::string& why) {
  fail(ErrorKind::Parse, path.string() + ":" + std::to_string(line) + ": " + why);
}

}  // namespace

void write_task_csv(const Task& task, const std::filesystem::path& path) {
  std::string out = "label,split";
  for (Eigen::Index j = 0; j < task.train.dim(); ++j) out += ",f" + std::to_string(j);
  out += '\n';
  append_rows(out, task.train, "train", task.label_names);
  append_rows(out, task.eval, "eval", task.label_names);
  io::write_atomic(path, out);
}

Task read_task_csv(const std::filesystem::path& path, int task_id, const CsvLoadOptions& options) {
  const std::string text = io::read_file(path);
  std::vector<std::string_view> lines;
  for (auto line : io::split_fields(text, '\n')) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty() || lines.front().empty()) parse_fail(path, 1, "missing header");

  const auto header = io::split_fields(lines.front());
  int label_col = -1, split_col = -1;
  std::vector<std::size_t> feature_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == "label") label_col = static_cast<int>(c);
    else if (header[c] == "split") split_col = static_cast<int>(c);
    else if (header[c].size() > 1 && header[c].front() == 'f') feature_cols.push_back(c);
    else parse_fail(path, 1, "missing header: unexpected column '" + std::string(header[c]) + "'");
  }
  if (label_col < 0) parse_fail(path, 1, "label column absent");
  if (feature_cols.empty()) parse_fail(path, 1, "no feature columns");

  std::unordered_map<std::string, int> dense;
  std::vector<std::string> names;
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::vector<char> split;  // 't', 'e', or 0 for unassigned
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const std::size_t line_no = ln + 1;
    const auto fields = io::split_fields(lines[ln]);
    if (fields.size() != header.size())
      parse_fail(path, line_no, "expected " + std::to_string(header.size()) + " fields, found " +
                                    std::to_string(fields.size()));
    std::string label(fields[static_cast<std::size_t>(label_col)]);
    if (label.empty()) parse_fail(path, line_no, "empty label");
    auto [it, inserted] = dense.try_emplace(label, static_cast<int>(names.size()));
    if (inserted) names.push_back(label);
    labels.push_back(it->second);

    char s = 0;
    if (split_col >= 0) {
      const auto field = fields[static_cast<std::size_t>(split_col)];
      if (field == "train") s = 't';
      else if (field == "eval") s = 'e';
      else if (!field.empty()) parse_fail(path, line_no, "split must be train, eval or empty");
    }
    split.push_back(s);

    std::vector<double> row;
    for (auto c : feature_cols) {
      double v = 0.0;
      if (!io::parse_double(fields[c], v) || !std::isfinite(v))
        parse_fail(path, line_no, "non-numeric feature in column '" + std::string(header[c]) + "'");
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) parse_fail(path, 2, "no data rows");

  LabeledSet all;
  all.class_count = static_cast<int>(names.size());
  all.labels = labels;
  all.inputs.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(feature_cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      all.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];

  std::vector<std::size_t> train_rows, eval_rows, open_rows;
  for (std::size_t i = 0; i < split.size(); ++i)
    (split[i] == 't' ? train_rows : split[i] == 'e' ? eval_rows : open_rows).push_back(i);

  Task task;
  task.task_id = task_id;
  task.label_names = std::move(names);
  if (open_rows.empty()) {
    task.train = all.select(train_rows);
    task.eval = all.select(eval_rows);
  } else {
    LabeledSet open = all.select(open_rows);
    auto [tr, ev] = split_train_eval(open, options.eval_fraction,
                                     derive_seed(options.seed, {static_cast<std::uint64_t>(task_id)}));
    auto concat = [&](const std::vector<std::size_t>& fixed, const LabeledSet& extra) {
      LabeledSet out = all.select(fixed);
      const auto base = out.inputs.rows();
      out.inputs.conservativeResize(base + extra.inputs.rows(), Eigen::NoChange);
      out.inputs.bottomRows(extra.inputs.rows()) = extra.inputs;
      out.labels.insert(out.labels.end(), extra.labels.begin(), extra.labels.end());
      return out;
    };
    task.train = concat(train_rows, tr);
    task.eval = concat(eval_rows, ev);
  }
  if (task.train.size() == 0) parse_fail(path, 1, "task has no training rows");
  if (task.eval.size() == 0) parse_fail(path, 1, "task has no evaluation rows");
  return task;
}

TaskBatch load_csv_tasks(std::span<const std::filesystem::path> paths, const CsvLoadOptions& options) {
  TaskBatch batch;
  for (std::size_t i = 0; i < paths.size(); ++i)
    batch.tasks.push_back(read_task_csv(paths[i], static_cast<int>(i), options));
  if (!batch.tasks.empty()) batch.validate();
  return batch;
}

std::filesystem::path write_suite(std::span<const TaskBatch> batches, const std::filesystem::path& dir) {
  nlohmann::ordered_json manifest;
  manifest["format"] = "ctos-suite";
  manifest["version"] = 1;
  auto& jb = manifest["batches"] = nlohmann::ordered_json::array();
  for (const auto& batch : batches) {
    nlohmann::ordered_json entry;
    entry["batch_id"] = batch.batch_id;
    entry["tasks"] = nlohmann::ordered_json::array();
    for (const auto& task : batch.tasks) {
      std::ostringstream name;
      name << "task_" << task.task_id << ".csv";
      write_task_csv(task, dir / name.str());
      entry["tasks"].push_back({{"task_id", task.task_id}, {"path", name.str()}});
    }
    jb.push_back(std::move(entry));
  }
  const auto path = dir / "manifest.json";
  io::write_atomic(path, manifest.dump(2) + "\n");
  return path;
}

std::vector<TaskBatch> load_manifest(const std::filesystem::path& given, const CsvLoadOptions& options) {
  // Accept the suite directory or the manifest name without its extension.
  auto manifest = given;
  if (std::filesystem::is_directory(manifest)) manifest /= "manifest.json";
  else if (!std::filesystem::exists(manifest) && std::filesystem::exists(manifest.string() + ".json"))
    manifest += ".json";
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(io::read_file(manifest));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, manifest.string() + ": " + e.what());
  }
  CsvLoadOptions opts = options;
  std::vector<TaskBatch> out;
  try {
    if (doc.contains("eval_fraction")) opts.eval_fraction = doc.at("eval_fraction").get<double>();
    const auto base = manifest.parent_path();
    for (const auto& jb : doc.at("batches")) {
      TaskBatch batch;
      batch.batch_id = jb.value("batch_id", static_cast<int>(out.size()));
      for (const auto& jt : jb.at("tasks")) {
        const int id = jt.at("task_id").get<int>();
        std::filesystem::path p = jt.at("path").get<std::string>();
        if (p.is_relative()) p = base / p;
        batch.tasks.push_back(read_task_csv(p, id, opts));
      }
      batch.validate();
      out.push_back(std::move(batch));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, manifest.string() + ": " + e.what());
  }
  if (out.empty()) fail(ErrorKind::Parse, manifest.string() + ": no batches");
  std::vector<int> ids;
  for (const auto& b : out)
    for (const auto& t : b.tasks) ids.push_back(t.task_id);
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    fail(ErrorKind::Parse, manifest.string() + ": duplicate task id across batches");
  const auto d = out.front().dim();
  for (const auto& b : out)
    if (b.dim() != d) fail(ErrorKind::Dimension, manifest.string() + ": batches differ in input width");
  return out;
}

}  // namespace ctos
