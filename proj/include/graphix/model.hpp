#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphix/autodiff.hpp"
#include "graphix/graph.hpp"
#include "graphix/params.hpp"
#include "graphix/serialize.hpp"

namespace graphix {

// Architecture variants: Vanilla is the pure semantic stack, Severed runs
// the structural stack once after it, Graphix interleaves both per layer.
enum class Variant { Vanilla, Severed, Graphix };

std::string_view variant_name(Variant v);
std::optional<Variant> variant_from_name(std::string_view name);

struct EncoderConfig {
  std::size_t d_m = 32;
  std::size_t h = 4;
  std::size_t d_k = 0;    // 0 -> d_m / h
  std::size_t d_v = 0;    // 0 -> d_m / h
  std::size_t d_ff = 0;   // 0 -> 4 * d_m
  std::size_t d_z = 0;    // 0 -> d_m
  std::size_t g_heads = 1;  // structural attention heads
  std::size_t layers = 2;   // L
  std::size_t dec_layers = 1;
  std::size_t num_relations = kNumRelationTypes;
  std::size_t max_len = 64;
  std::size_t severed_depth = 2;  // structural layers in the Severed variant
  bool per_layer_phi = false;     // per-layer relation embeddings (Graphix layers)
  Variant variant = Variant::Graphix;
  double ln_eps = 1e-6;

  // Returns a copy with the 0-valued defaults filled in and validated.
  EncoderConfig resolved() const;

  static EncoderConfig from_json(const nlohmann::json& j);
  nlohmann::ordered_json to_json() const;
  static EncoderConfig load(const std::string& path);
};

// Token ids for the toy word-level inputs; id 0 of a decoder vocabulary is
// reserved for the sequence-start token.
inline constexpr int kBosId = 0;
inline constexpr const char* kBosToken = "<s>";

class Vocab {
 public:
  int add(const std::string& token);  // idempotent, returns the id
  int id(const std::string& token) const;
  std::optional<int> find(const std::string& token) const;
  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }

  nlohmann::ordered_json to_json() const;
  static Vocab from_json(const nlohmann::json& j);

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> ids_;
};

// Parameter groups used by training diagnostics and migration.
enum class ParamGroup { Semantic, Structural, RelationEmbedding, Decoder };
ParamGroup param_group(const std::string& name);
bool is_semantic_param(const std::string& name);

// Creates every parameter the configured variant needs. Each parameter is
// drawn from its own name-keyed stream, so values do not depend on creation
// order or on which other parameters exist. dec_vocab == 0 omits the decoder.
ParamStore init_model_params(const EncoderConfig& cfg, std::size_t enc_vocab,
                             std::size_t dec_vocab, std::uint64_t seed);

// Loads the semantic parameters (embeddings and transformer blocks) from a
// checkpoint and initializes everything else freshly from `seed`.
ParamStore migrate_semantic_params(const ParamStore& checkpoint,
                                   const EncoderConfig& cfg, std::size_t enc_vocab,
                                   std::size_t dec_vocab, std::uint64_t seed);

// Parameters bound onto a tape as leaves, addressable by name.
class BoundParams {
 public:
  BoundParams(Tape& tape, const ParamStore& store);
  Var at(const std::string& name) const;
  const std::vector<std::pair<std::string, Var>>& entries() const { return entries_; }
  // Gradients per parameter after tape.backward().
  std::map<std::string, Matrix> grads(const Tape& tape) const;

 private:
  std::vector<std::pair<std::string, Var>> entries_;
  std::map<std::string, Var> vars_;
};

// Per-(node, head) attention rows over the relational reception field.
struct RgatAttention {
  std::vector<std::vector<double>> rows;
};

// mask, when given, is added to every head's attention logits.
Var mha(Tape& tape, const BoundParams& p, const std::string& prefix, Var query_in,
        Var kv_in, const EncoderConfig& cfg, const Matrix* mask = nullptr);
Var ffn(Tape& tape, const BoundParams& p, const std::string& prefix, Var x);
// LayerNorm(MHA(H) + FFN(MHA(H))): the attention output feeds the FFN and
// the residual; there is no residual around the attention itself.
Var semantic_block(Tape& tape, const BoundParams& p, const std::string& prefix,
                   Var hidden, const EncoderConfig& cfg);
Var rgat_block(Tape& tape, const BoundParams& p, const std::string& prefix, Var phi,
               Var node_states, const HeterogeneousGraph& graph,
               const EncoderConfig& cfg, RgatAttention* attention = nullptr);

// Token/position alignment between graph nodes and serialized positions.
std::vector<std::pair<int, int>> node_span_pairs(const SerializedInput& x);
std::vector<int> position_to_node(const SerializedInput& x);

struct EncoderInput {
  std::vector<int> token_ids;
  const HeterogeneousGraph* graph = nullptr;        // unused by Vanilla
  std::vector<std::pair<int, int>> node_spans;      // pooling spans per node
  std::vector<int> row_of_pos;                      // node index per position, -1 for separators

  static EncoderInput from_serialized(const SerializedInput& x, const Vocab& vocab,
                                      const HeterogeneousGraph* graph);
};

Var graphix_layer(Tape& tape, const BoundParams& p, std::size_t layer, Var hidden,
                  const EncoderInput& in, const EncoderConfig& cfg);
Var encode(Tape& tape, const BoundParams& p, const EncoderInput& in,
           const EncoderConfig& cfg);
// Returns logits (one row per target position); y_in is the shifted target
// sequence beginning with kBosId.
Var decode(Tape& tape, const BoundParams& p, const std::vector<int>& y_in,
           Var encoder_states, const EncoderConfig& cfg);

struct LossResult {
  Var loss;
  Var logits;
};
LossResult seq2seq_loss(Tape& tape, const BoundParams& p, const EncoderInput& in,
                        const std::vector<int>& targets, const EncoderConfig& cfg,
                        LossReduction reduction = LossReduction::Mean);

}  // namespace graphix
