#include "ctos/learner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ctos/error.hpp"
#include "ctos/random.hpp"
#include "io.hpp"

namespace ctos {

namespace {

constexpr std::uint64_t kShuffleKey = 0x5348;
constexpr std::uint64_t kReplayKey = 0x5250;
constexpr std::uint64_t kReservoirKey = 0x5253;
constexpr std::uint64_t kInitKey = 0x494e;

Dense uniform_layer(Eigen::Index in, Eigen::Index out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Dense layer{Matrix(in, out), Vector::Zero(out)};
  for (Eigen::Index j = 0; j < out; ++j)
    for (Eigen::Index i = 0; i < in; ++i) layer.weight(i, j) = dist(rng);
  return layer;
}

Dense zero_layer(Eigen::Index in, Eigen::Index out) {
  return Dense{Matrix::Zero(in, out), Vector::Zero(out)};
}

Matrix affine(const Matrix& x, const Dense& layer) {
  Matrix out = x * layer.weight;
  out.rowwise() += layer.bias.transpose();
  return out;
}

const Dense& head_of(const ContinualModel& model, int task_id) {
  auto it = model.heads.find(task_id);
  if (it == model.heads.end()) fail(ErrorKind::MissingHead, "no head for task " + std::to_string(task_id));
  return it->second;
}

void check_width(const ContinualModel& model, const Matrix& inputs) {
  if (inputs.cols() != model.input_dim())
    fail(ErrorKind::Dimension, "input width " + std::to_string(inputs.cols()) +
                                   " does not match model width " + std::to_string(model.input_dim()));
}

Matrix log_softmax(const Matrix& logits) {
  Matrix out = logits;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double mx = out.row(i).maxCoeff();
    const double lse = mx + std::log((out.row(i).array() - mx).exp().sum());
    out.row(i).array() -= lse;
  }
  return out;
}

void append(Vector& flat, Eigen::Index& pos, const Dense& d) {
  flat.segment(pos, d.weight.size()) = d.weight.reshaped();
  pos += d.weight.size();
  flat.segment(pos, d.bias.size()) = d.bias;
  pos += d.bias.size();
}

void extract(const Vector& flat, Eigen::Index& pos, Dense& d) {
  d.weight.reshaped() = flat.segment(pos, d.weight.size());
  pos += d.weight.size();
  d.bias = flat.segment(pos, d.bias.size());
  pos += d.bias.size();
}

Eigen::Index flat_size(const Dense& a, const Dense& b, const Dense& c) {
  return a.weight.size() + a.bias.size() + b.weight.size() + b.bias.size() + c.weight.size() +
         c.bias.size();
}

void sgd_step(Dense& param, const Dense& grad, double lr) {
  param.weight.noalias() -= lr * grad.weight;
  param.bias.noalias() -= lr * grad.bias;
}

Matrix gather_inputs(const LabeledSet& set, std::span<const std::size_t> rows) {
  Matrix x(static_cast<Eigen::Index>(rows.size()), set.dim());
  for (std::size_t i = 0; i < rows.size(); ++i)
    x.row(static_cast<Eigen::Index>(i)) = set.inputs.row(static_cast<Eigen::Index>(rows[i]));
  return x;
}

/// Adds weight * mean-CE gradient of a replay minibatch; each task's rows go to its own head.
double accumulate_replay(const ContinualModel& model, std::span<const ReplaySample* const> batch,
                         double weight, ModelGradient& grad) {
  std::map<int, std::vector<const ReplaySample*>> by_task;
  for (const auto* s : batch) by_task[s->task_id].push_back(s);
  const double total = static_cast<double>(batch.size());
  double loss = 0.0;
  for (const auto& [task_id, samples] : by_task) {
    Matrix x(static_cast<Eigen::Index>(samples.size()), model.input_dim());
    std::vector<int> y;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      x.row(static_cast<Eigen::Index>(i)) = samples[i]->input.transpose();
      y.push_back(samples[i]->label);
    }
    const double share = static_cast<double>(samples.size()) / total;
    loss += share * accumulate_gradient(model, x, y, task_id, weight * share, grad);
  }
  return loss;
}

std::vector<const ReplaySample*> draw_replay(const ReplayBuffer& buffer, int k, Rng& rng) {
  std::vector<std::size_t> idx(buffer.slots.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<std::size_t> pick;
  std::sample(idx.begin(), idx.end(), std::back_inserter(pick), static_cast<std::size_t>(k), rng);
  std::vector<const ReplaySample*> out;
  for (auto i : pick) out.push_back(&buffer.slots[i]);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

bool ContinualModel::all_finite() const {
  auto ok = [](const Dense& d) { return d.weight.allFinite() && d.bias.allFinite(); };
  if (!ok(layer1) || !ok(layer2)) return false;
  return std::all_of(heads.begin(), heads.end(), [&](const auto& kv) { return ok(kv.second); });
}

ContinualModel init_model(int input_dim, int hidden, std::uint64_t seed) {
  if (input_dim < 1 || hidden < 1) fail(ErrorKind::Config, "model widths must be >= 1");
  Rng rng = make_rng(derive_seed(seed, {kInitKey}));
  ContinualModel model;
  model.layer1 = uniform_layer(input_dim, hidden, rng);
  model.layer2 = uniform_layer(hidden, hidden, rng);
  model.rng_seed = seed;
  return model;
}

Matrix forward_features(const ContinualModel& model, const Matrix& inputs) {
  check_width(model, inputs);
  Matrix h1 = affine(inputs, model.layer1).array().tanh();
  return affine(h1, model.layer2).array().tanh();
}

Matrix head_logits(const ContinualModel& model, const Matrix& inputs, int task_id) {
  const Dense& head = head_of(model, task_id);
  return affine(forward_features(model, inputs), head);
}

Matrix head_probabilities(const ContinualModel& model, const Matrix& inputs, int task_id) {
  return log_softmax(head_logits(model, inputs, task_id)).array().exp();
}

std::vector<int> predict(const ContinualModel& model, const Matrix& inputs, int task_id) {
  const Matrix logits = head_logits(model, inputs, task_id);
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c)
      if (logits(i, c) > logits(i, best)) best = c;
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

ModelGradient ModelGradient::zeros_like(const ContinualModel& model) {
  ModelGradient g;
  g.layer1 = zero_layer(model.layer1.in(), model.layer1.out());
  g.layer2 = zero_layer(model.layer2.in(), model.layer2.out());
  for (const auto& [id, head] : model.heads) g.heads.emplace(id, zero_layer(head.in(), head.out()));
  return g;
}

double mean_cross_entropy(const ContinualModel& model, const Matrix& inputs, std::span<const int> labels,
                          int task_id) {
  const Matrix logp = log_softmax(head_logits(model, inputs, task_id));
  double loss = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) loss -= logp(static_cast<Eigen::Index>(i), labels[i]);
  return loss / static_cast<double>(labels.size());
}

double accumulate_gradient(const ContinualModel& model, const Matrix& inputs, std::span<const int> labels,
                           int task_id, double weight, ModelGradient& grad) {
  check_width(model, inputs);
  if (static_cast<std::size_t>(inputs.rows()) != labels.size() || labels.empty())
    fail(ErrorKind::Dimension, "inputs and labels disagree in length");
  const Dense& head = head_of(model, task_id);
  const auto n = static_cast<double>(labels.size());

  const Matrix h1 = affine(inputs, model.layer1).array().tanh();
  const Matrix h2 = affine(h1, model.layer2).array().tanh();
  const Matrix logp = log_softmax(affine(h2, head));

  double loss = 0.0;
  Matrix dz = logp.array().exp();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    if (labels[i] < 0 || labels[i] >= head.out()) fail(ErrorKind::Input, "label outside head range");
    loss -= logp(r, labels[i]);
    dz(r, labels[i]) -= 1.0;
  }
  dz *= weight / n;

  auto [it, inserted] = grad.heads.try_emplace(task_id, zero_layer(head.in(), head.out()));
  Dense& gh = it->second;
  gh.weight.noalias() += h2.transpose() * dz;
  gh.bias += dz.colwise().sum().transpose();

  const Matrix da2 = (dz * head.weight.transpose()).array() * (1.0 - h2.array().square());
  grad.layer2.weight.noalias() += h1.transpose() * da2;
  grad.layer2.bias += da2.colwise().sum().transpose();

  const Matrix da1 = (da2 * model.layer2.weight.transpose()).array() * (1.0 - h1.array().square());
  grad.layer1.weight.noalias() += inputs.transpose() * da1;
  grad.layer1.bias += da1.colwise().sum().transpose();
  return loss / n;
}

Vector flatten_trunk_head(const ModelGradient& grad, int task_id) {
  const Dense& head = grad.heads.at(task_id);
  Vector flat(flat_size(grad.layer1, grad.layer2, head));
  Eigen::Index pos = 0;
  append(flat, pos, grad.layer1);
  append(flat, pos, grad.layer2);
  append(flat, pos, head);
  return flat;
}

void unflatten_trunk_head(const Vector& flat, int task_id, ModelGradient& grad) {
  Dense& head = grad.heads.at(task_id);
  if (flat.size() != flat_size(grad.layer1, grad.layer2, head))
    fail(ErrorKind::Dimension, "flat gradient has the wrong length");
  Eigen::Index pos = 0;
  extract(flat, pos, grad.layer1);
  extract(flat, pos, grad.layer2);
  extract(flat, pos, head);
}

Vector flatten_trunk_head(const ContinualModel& model, int task_id) {
  const Dense& head = head_of(model, task_id);
  Vector flat(flat_size(model.layer1, model.layer2, head));
  Eigen::Index pos = 0;
  append(flat, pos, model.layer1);
  append(flat, pos, model.layer2);
  append(flat, pos, head);
  return flat;
}

void unflatten_trunk_head(const Vector& flat, int task_id, ContinualModel& model) {
  head_of(model, task_id);
  Dense& head = model.heads.at(task_id);
  if (flat.size() != flat_size(model.layer1, model.layer2, head))
    fail(ErrorKind::Dimension, "flat parameter vector has the wrong length");
  Eigen::Index pos = 0;
  extract(flat, pos, model.layer1);
  extract(flat, pos, model.layer2);
  extract(flat, pos, head);
}

Vector agem_project(const Vector& g, const Vector& g_ref) {
  if (g.size() != g_ref.size())
    fail(ErrorKind::Dimension, "agem_project: gradient lengths " + std::to_string(g.size()) + " and " +
                                   std::to_string(g_ref.size()) + " differ");
  const double dot = g.dot(g_ref);
  if (dot >= 0.0) return g;
  return g - (dot / g_ref.squaredNorm()) * g_ref;
}

ReplayBuffer buffer_insert_reservoir(ReplayBuffer buffer, std::span<const ReplaySample> rows,
                                     std::uint64_t seed) {
  Rng rng = make_rng(seed);
  for (const auto& row : rows) {
    ++buffer.seen_count;
    if (buffer.slots.size() < buffer.capacity) {
      buffer.slots.push_back(row);
      continue;
    }
    if (buffer.capacity == 0) continue;
    std::uniform_int_distribution<std::uint64_t> pick(0, buffer.seen_count - 1);
    const auto j = pick(rng);
    if (j < buffer.capacity) buffer.slots[static_cast<std::size_t>(j)] = row;
  }
  return buffer;
}

// ---------------------------------------------------------------------------

const char* to_string(Strategy s) noexcept {
  switch (s) {
    case Strategy::Naive: return "naive";
    case Strategy::ER: return "er";
    case Strategy::AGEM: return "agem";
  }
  return "?";
}

Strategy parse_strategy(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "naive") return Strategy::Naive;
  if (lower == "er") return Strategy::ER;
  if (lower == "agem" || lower == "a-gem") return Strategy::AGEM;
  fail(ErrorKind::Config, "invalid field 'strategy': unknown strategy '" + std::string(text) + "'");
}

void TrainHyper::validate() const {
  auto bad = [](const char* field, const char* why) {
    fail(ErrorKind::Config, std::string("invalid field '") + field + "': " + why);
  };
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) bad("learning_rate", "must be finite and >= 0");
  if (epochs < 1) bad("epochs", "must be >= 1");
  if (minibatch < 1) bad("minibatch", "must be >= 1");
  if (replay_minibatch < 0) bad("replay_minibatch", "must be >= 0");
  if ((replay_minibatch == 0) != (strategy == Strategy::Naive))
    bad("replay_minibatch", "must be 0 exactly when the strategy is naive");
}

TrainResult train_task(ContinualModel model, const Task& task, const TrainHyper& hyper, ReplayBuffer buffer) {
  hyper.validate();
  const LabeledSet& data = task.train;
  data.validate();
  check_width(model, data.inputs);
  const int id = task.task_id;
  if (!model.has_head(id)) model.heads.emplace(id, zero_layer(model.hidden(), data.class_count));
  if (model.heads.at(id).out() < data.class_count)
    fail(ErrorKind::Dimension, "head for task " + std::to_string(id) + " has too few classes");

  const auto tid = static_cast<std::uint64_t>(id);
  Rng replay_rng = make_rng(derive_seed(hyper.seed, {kReplayKey, tid}));
  const bool replay = hyper.strategy != Strategy::Naive && !buffer.empty();

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> epoch_losses;

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    Rng shuffle_rng = make_rng(derive_seed(hyper.seed, {kShuffleKey, tid, static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    int steps = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(hyper.minibatch)) {
      const auto stop = std::min(order.size(), start + static_cast<std::size_t>(hyper.minibatch));
      std::span<const std::size_t> rows(order.data() + start, stop - start);
      const Matrix x = gather_inputs(data, rows);
      std::vector<int> y;
      for (auto r : rows) y.push_back(data.labels[r]);

      ModelGradient grad = ModelGradient::zeros_like(model);
      const double loss = accumulate_gradient(model, x, y, id, 1.0, grad);
      double total = loss;

      if (replay) {
        const auto batch = draw_replay(buffer, hyper.replay_minibatch, replay_rng);
        if (hyper.strategy == Strategy::ER) {
          total += accumulate_replay(model, batch, 1.0, grad);
        } else {
          ModelGradient ref = ModelGradient::zeros_like(model);
          total = loss;
          const double ref_loss = accumulate_replay(model, batch, 1.0, ref);
          if (!std::isfinite(ref_loss)) throw TrainingDivergence(id, epoch, steps);
          const Vector g = flatten_trunk_head(grad, id);
          const Vector g_ref = flatten_trunk_head(ref, id);
          unflatten_trunk_head(agem_project(g, g_ref), id, grad);
        }
      }
      if (!std::isfinite(total)) throw TrainingDivergence(id, epoch, steps);

      sgd_step(model.layer1, grad.layer1, hyper.learning_rate);
      sgd_step(model.layer2, grad.layer2, hyper.learning_rate);
      for (const auto& [hid, g] : grad.heads) {
        // A-GEM only moves the trunk and the active head.
        if (hyper.strategy == Strategy::AGEM && hid != id) continue;
        sgd_step(model.heads.at(hid), g, hyper.learning_rate);
      }
      loss_sum += loss;
      ++steps;
    }
    epoch_losses.push_back(loss_sum / steps);
  }
  if (!model.all_finite()) throw TrainingDivergence(id, hyper.epochs - 1, 0);

  std::vector<ReplaySample> stream;
  stream.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    stream.push_back(ReplaySample{data.inputs.row(static_cast<Eigen::Index>(i)).transpose(), data.labels[i], id});
  buffer = buffer_insert_reservoir(std::move(buffer), stream, derive_seed(hyper.seed, {kReservoirKey, tid}));
  model.last_task = id;
  return TrainResult{std::move(model), std::move(buffer), std::move(epoch_losses)};
}

ContinualRun run_continual(std::span<const Task> tasks, const TrainHyper& hyper, std::size_t buffer_capacity,
                           int hidden) {
  if (tasks.empty()) fail(ErrorKind::Input, "empty task sequence");
  ContinualModel model =
      init_model(static_cast<int>(tasks.front().train.dim()), hidden, derive_seed(hyper.seed, {kInitKey}));
  ReplayBuffer buffer(buffer_capacity);
  ContinualRun run;
  for (const Task& task : tasks) {
    auto result = train_task(std::move(model), task, hyper, std::move(buffer));
    model = std::move(result.model);
    buffer = std::move(result.buffer);
    run.snapshots.push_back(model);
    run.traces.push_back(TaskTrace{task.task_id, std::move(result.epoch_losses)});
  }
  return run;
}

std::string format_trace_csv(std::span<const TaskTrace> traces) {
  std::string out = "task_id,epoch,mean_loss\n";
  for (const auto& t : traces)
    for (std::size_t e = 0; e < t.epoch_losses.size(); ++e)
      out += std::to_string(t.task_id) + "," + std::to_string(e) + "," + io::format_double(t.epoch_losses[e]) + "\n";
  return out;
}

}  // namespace ctos
