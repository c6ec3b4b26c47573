#include "graphix/training.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace graphix {

std::string_view task_kind_name(TaskKind k) {
  return k == TaskKind::Copy ? "copy" : "schema-echo";
}

std::optional<TaskKind> task_kind_from_name(std::string_view name) {
  if (name == "copy") return TaskKind::Copy;
  if (name == "schema-echo" || name == "schema_echo") return TaskKind::SchemaEcho;
  return std::nullopt;
}

namespace {

const std::vector<std::string> kCopySymbols = {"red",  "blue", "green",
                                               "gold", "iron", "wolf"};
// Fixed filler words, disjoint from every schema name, so the question text
// never identifies the target; only the injected match edge does.
const std::vector<std::string> kEchoFillers = {"zig", "zag", "fizz", "buzz",
                                               "jolt"};
const std::vector<std::string> kEchoColumns = {"alpha", "bravo", "coral", "delta",
                                               "ember"};

// column_names empty gives a table-free database: the serialized input is
// just "question | toy | *", which keeps the copy task short.
Database make_toy_db(const std::vector<std::string>& column_names) {
  Database db;
  db.name = "toy";
  if (!column_names.empty()) {
    Table t;
    t.id = 0;
    t.name_tokens = {"sheet"};
    for (std::size_t i = 0; i < column_names.size(); ++i) {
      Column c;
      c.id = i;
      c.table_id = 0;
      c.name_tokens = {column_names[i]};
      c.type = DataType::Text;
      t.column_ids.push_back(i);
      db.columns.push_back(std::move(c));
    }
    db.tables.push_back(std::move(t));
  }
  Column star;
  star.id = db.columns.size();
  db.columns.push_back(std::move(star));
  db.validate();
  return db;
}

Question make_question(const std::vector<std::string>& words) {
  Question q;
  for (std::size_t i = 0; i < words.size(); ++i)
    q.tokens.push_back({i, words[i], words[i]});
  return q;
}

}  // namespace

ToyTask ToyTask::make(TaskKind kind, std::uint64_t seed) {
  ToyTask task;
  task.kind_ = kind;
  task.seed_ = seed;
  task.db_ = make_toy_db(kind == TaskKind::Copy ? std::vector<std::string>{}
                                                : kEchoColumns);
  task.fillers_ = kind == TaskKind::Copy ? kCopySymbols : kEchoFillers;

  for (const char* sep : {"|", ":", ",", "*"}) task.input_vocab_.add(sep);
  task.input_vocab_.add("toy");
  for (const Table& t : task.db_.tables)
    for (const std::string& w : t.name_tokens) task.input_vocab_.add(w);
  for (const Column& c : task.db_.columns)
    for (const std::string& t : c.name_tokens) task.input_vocab_.add(t);
  for (const std::string& w : task.fillers_) task.input_vocab_.add(w);

  task.target_vocab_.add(kBosToken);
  if (kind == TaskKind::Copy)
    for (const std::string& w : kCopySymbols) task.target_vocab_.add(w);
  else
    for (const std::string& w : kEchoColumns) task.target_vocab_.add(w);
  return task;
}

ToySample ToyTask::sample(std::uint64_t index) const {
  Rng seeder(seed_);
  Rng rng = seeder.fork(index + 1);

  ToySample s;
  if (kind_ == TaskKind::Copy) {
    const std::size_t len = 3 + rng.below(2);  // serialized length stays <= 8
    std::vector<std::string> words;
    for (std::size_t i = 0; i < len; ++i) words.push_back(fillers_[rng.below(fillers_.size())]);
    s.question = make_question(words);
    s.graph = build_graph(s.question, db_, {});
    for (const std::string& w : words) s.targets.push_back(target_vocab_.id(w));
  } else {
    // Filler words carry no information about the target; only the injected
    // link does.
    std::vector<std::string> words;
    for (std::size_t i = 0; i < 4; ++i)
      words.push_back(fillers_[rng.below(fillers_.size())]);
    s.question = make_question(words);
    const std::size_t column = rng.below(kEchoColumns.size());
    const std::size_t marked = rng.below(words.size());

    GraphOptions opts;
    std::vector<Edge> forward = schema_relations(db_);
    const auto qrel = question_relations(s.question, opts);
    forward.insert(forward.end(), qrel.begin(), qrel.end());
    const auto link = linking_relations(s.question, db_, opts);
    forward.insert(forward.end(), link.begin(), link.end());
    // The linking rules cannot see this pair; the injected edge is the only
    // signal naming the target column.
    forward.push_back({{NodeKind::Question, marked},
                       {NodeKind::Column, column},
                       RelationType::ExactMatchColumn});
    s.graph = assemble_graph(build_nodes(s.question, db_), forward, opts.mode);
    s.targets.push_back(target_vocab_.id(kEchoColumns[column]));
  }
  s.serialized = serialize(s.question, db_);
  return s;
}

EncoderInput ToyTask::encoder_input(const ToySample& s) const {
  return EncoderInput::from_serialized(s.serialized, input_vocab_, &s.graph);
}

TrainResult train(const ToyTask& task, const EncoderConfig& cfg, const TrainConfig& tc) {
  if (tc.steps < 1) throw std::invalid_argument("train: steps must be >= 1");
  if (tc.batch < 1) throw std::invalid_argument("train: batch must be >= 1");
  const EncoderConfig c = cfg.resolved();

  TrainResult result;
  result.params = init_model_params(c, task.input_vocab().size(),
                                    task.target_vocab().size(), tc.init_seed);
  result.params.meta()["input_vocab"] = task.input_vocab().to_json();
  result.params.meta()["target_vocab"] = task.target_vocab().to_json();
  result.params.meta()["task"] = std::string(task_kind_name(task.kind()));

  for (std::size_t step = 0; step < tc.steps; ++step) {
    std::map<std::string, Matrix> acc;
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < tc.batch; ++b) {
      const ToySample s = task.sample(step * tc.batch + b);
      const EncoderInput in = task.encoder_input(s);
      Tape tape;
      BoundParams bound(tape, result.params);
      try {
        const LossResult lr = seq2seq_loss(tape, bound, in, s.targets, c, tc.reduction);
        loss_sum += tape.value(lr.loss).at(0, 0);
        tape.backward(lr.loss);
      } catch (const std::domain_error& e) {
        throw std::runtime_error("train: loss diverged (non-finite) at step " +
                                 std::to_string(step) + ": " + e.what());
      }
      for (const auto& [name, var] : bound.entries()) {
        const Matrix& g = tape.grad(var);
        auto it = acc.find(name);
        if (it == acc.end())
          acc.emplace(name, g);
        else
          for (std::size_t i = 0; i < g.size(); ++i) it->second.data()[i] += g.data()[i];
      }
    }
    const double loss = loss_sum / static_cast<double>(tc.batch);
    result.trace.push_back({step, loss});
    if (!std::isfinite(loss))
      throw std::runtime_error("train: loss diverged (non-finite) at step " +
                               std::to_string(step));
    const double scale = tc.lr / static_cast<double>(tc.batch);
    for (auto& [name, g] : acc) {
      Matrix& value = result.params.at(name);
      for (std::size_t i = 0; i < value.size(); ++i)
        value.data()[i] -= scale * g.data()[i];
    }
  }
  return result;
}

double sample_loss(const ToyTask& task, const ToySample& s, const ParamStore& params,
                   const EncoderConfig& cfg, LossReduction reduction) {
  const EncoderInput in = task.encoder_input(s);
  Tape tape;
  BoundParams bound(tape, params);
  return tape.value(seq2seq_loss(tape, bound, in, s.targets, cfg, reduction).loss)
      .at(0, 0);
}

double token_accuracy(const ToyTask& task, const ParamStore& params,
                      const EncoderConfig& cfg, std::uint64_t first_index,
                      std::size_t count) {
  const EncoderConfig c = cfg.resolved();
  std::size_t correct = 0, total = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const ToySample s = task.sample(first_index + i);
    const EncoderInput in = task.encoder_input(s);
    Tape tape;
    BoundParams bound(tape, params);
    const LossResult lr = seq2seq_loss(tape, bound, in, s.targets, c);
    const Matrix& logits = tape.value(lr.logits);
    for (std::size_t r = 0; r < logits.rows(); ++r) {
      std::size_t best = 0;
      for (std::size_t v = 1; v < logits.cols(); ++v)
        if (logits.at(r, v) > logits.at(r, best)) best = v;
      correct += best == static_cast<std::size_t>(s.targets[r]) ? 1 : 0;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

void write_trace_csv(const std::vector<TraceRow>& trace, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("trace: cannot open '" + path + "' for writing");
  os << "step,loss\n";
  for (const TraceRow& row : trace) os << row.step << "," << row.loss << "\n";
}

}  // namespace graphix
