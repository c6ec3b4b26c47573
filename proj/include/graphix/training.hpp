#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "graphix/graph.hpp"
#include "graphix/model.hpp"
#include "graphix/serialize.hpp"

namespace graphix {

enum class TaskKind { Copy, SchemaEcho };

std::string_view task_kind_name(TaskKind k);
std::optional<TaskKind> task_kind_from_name(std::string_view name);

struct ToySample {
  Question question;
  SerializedInput serialized;
  HeterogeneousGraph graph;
  std::vector<int> targets;  // target-vocab ids, never empty
};

// Deterministic toy sequence-to-sequence tasks over a fixed miniature
// database.
//
// Copy: the target repeats the question tokens.
//
// SchemaEcho: the question is uninformative filler; one token is linked to a
// random column by an injected exact-match edge and the target is that
// column's name. Only the graph carries the link, so solving the task
// requires the structural branch.
class ToyTask {
 public:
  static ToyTask make(TaskKind kind, std::uint64_t seed);

  TaskKind kind() const { return kind_; }
  std::uint64_t seed() const { return seed_; }
  const Vocab& input_vocab() const { return input_vocab_; }
  const Vocab& target_vocab() const { return target_vocab_; }
  std::size_t max_target_len() const { return max_target_len_; }
  const Database& db() const { return db_; }

  // Pure function of (task seed, index).
  ToySample sample(std::uint64_t index) const;
  EncoderInput encoder_input(const ToySample& s) const;

 private:
  TaskKind kind_ = TaskKind::Copy;
  std::uint64_t seed_ = 0;
  Database db_;
  Vocab input_vocab_;
  Vocab target_vocab_;
  std::vector<std::string> fillers_;
  std::size_t max_target_len_ = 8;
};

struct TrainConfig {
  std::size_t steps = 500;
  double lr = 0.5;
  std::size_t batch = 4;
  LossReduction reduction = LossReduction::Mean;
  std::uint64_t init_seed = 1;
};

struct TraceRow {
  std::size_t step;
  double loss;
};

struct TrainResult {
  std::vector<TraceRow> trace;
  ParamStore params;
};

// Plain gradient descent with a fixed learning rate; deterministic given the
// task seed, init seed and config. Throws when the loss becomes non-finite,
// reporting the step index.
TrainResult train(const ToyTask& task, const EncoderConfig& cfg, const TrainConfig& tc);

double sample_loss(const ToyTask& task, const ToySample& s, const ParamStore& params,
                   const EncoderConfig& cfg, LossReduction reduction);

// Teacher-forced per-token argmax accuracy over samples
// [first_index, first_index + count).
double token_accuracy(const ToyTask& task, const ParamStore& params,
                      const EncoderConfig& cfg, std::uint64_t first_index,
                      std::size_t count);

void write_trace_csv(const std::vector<TraceRow>& trace, const std::string& path);

}  // namespace graphix
