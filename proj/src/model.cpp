#include "graphix/model.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace graphix {

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::Vanilla: return "vanilla";
    case Variant::Severed: return "severed";
    case Variant::Graphix: return "graphix";
  }
  return "?";
}

std::optional<Variant> variant_from_name(std::string_view name) {
  if (name == "vanilla") return Variant::Vanilla;
  if (name == "severed") return Variant::Severed;
  if (name == "graphix") return Variant::Graphix;
  return std::nullopt;
}

EncoderConfig EncoderConfig::resolved() const {
  EncoderConfig c = *this;
  if (c.d_m == 0 || c.h == 0) throw std::invalid_argument("config: d_m and h must be > 0");
  if (c.d_k == 0) {
    if (c.d_m % c.h != 0)
      throw std::invalid_argument("config: d_m must be divisible by h when d_k is defaulted");
    c.d_k = c.d_m / c.h;
  }
  if (c.d_v == 0) {
    if (c.d_m % c.h != 0)
      throw std::invalid_argument("config: d_m must be divisible by h when d_v is defaulted");
    c.d_v = c.d_m / c.h;
  }
  if (c.d_ff == 0) c.d_ff = 4 * c.d_m;
  if (c.d_z == 0) c.d_z = c.d_m;
  if (c.g_heads == 0 || c.d_z % c.g_heads != 0)
    throw std::invalid_argument("config: d_z must be divisible by g_heads");
  if (c.num_relations < static_cast<std::size_t>(kNumRelationTypes))
    throw std::invalid_argument("config: num_relations must cover the relation vocabulary");
  if (c.ln_eps <= 0) throw std::invalid_argument("config: ln_eps must be > 0");
  return c;
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.d_m = j.value("d_m", c.d_m);
  c.h = j.value("h", c.h);
  c.d_k = j.value("d_k", c.d_k);
  c.d_v = j.value("d_v", c.d_v);
  c.d_ff = j.value("d_ff", c.d_ff);
  c.d_z = j.value("d_z", c.d_z);
  c.g_heads = j.value("g_heads", c.g_heads);
  c.layers = j.value("layers", c.layers);
  c.dec_layers = j.value("dec_layers", c.dec_layers);
  c.num_relations = j.value("num_relations", c.num_relations);
  c.max_len = j.value("max_len", c.max_len);
  c.severed_depth = j.value("severed_depth", c.severed_depth);
  c.per_layer_phi = j.value("per_layer_phi", c.per_layer_phi);
  c.ln_eps = j.value("ln_eps", c.ln_eps);
  if (j.contains("variant")) {
    const auto v = variant_from_name(j.at("variant").get<std::string>());
    if (!v)
      throw std::invalid_argument("config: unknown variant '" +
                                  j.at("variant").get<std::string>() + "'");
    c.variant = *v;
  }
  return c;
}

nlohmann::ordered_json EncoderConfig::to_json() const {
  return {{"d_m", d_m},
          {"h", h},
          {"d_k", d_k},
          {"d_v", d_v},
          {"d_ff", d_ff},
          {"d_z", d_z},
          {"g_heads", g_heads},
          {"layers", layers},
          {"dec_layers", dec_layers},
          {"num_relations", num_relations},
          {"max_len", max_len},
          {"severed_depth", severed_depth},
          {"per_layer_phi", per_layer_phi},
          {"variant", std::string(variant_name(variant))},
          {"ln_eps", ln_eps}};
}

EncoderConfig EncoderConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error(path + ": cannot open file");
  try {
    return from_json(nlohmann::json::parse(is));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": bad config JSON: " + e.what());
  }
}

int Vocab::add(const std::string& token) {
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  ids_.emplace(token, id);
  return id;
}

int Vocab::id(const std::string& token) const {
  auto it = ids_.find(token);
  if (it == ids_.end())
    throw std::out_of_range("vocab: token '" + token + "' not in vocabulary");
  return it->second;
}

std::optional<int> Vocab::find(const std::string& token) const {
  auto it = ids_.find(token);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::vector<int> Vocab::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const std::string& t : tokens) out.push_back(id(t));
  return out;
}

nlohmann::ordered_json Vocab::to_json() const {
  return nlohmann::ordered_json(tokens_);
}

Vocab Vocab::from_json(const nlohmann::json& j) {
  Vocab v;
  for (const auto& t : j) v.add(t.get<std::string>());
  return v;
}

ParamGroup param_group(const std::string& name) {
  if (name.rfind("dec.", 0) == 0) return ParamGroup::Decoder;
  if (name == "phi" || (name.size() > 4 && name.substr(name.size() - 4) == ".phi"))
    return ParamGroup::RelationEmbedding;
  if (name.find(".rgat.") != std::string::npos) return ParamGroup::Structural;
  return ParamGroup::Semantic;
}

bool is_semantic_param(const std::string& name) {
  return param_group(name) == ParamGroup::Semantic;
}

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

enum class Init { Xavier, Zero, Embedding };

// Every parameter gets its own name-keyed stream: values are independent of
// creation order and of which other parameters exist. Weight matrices use
// Xavier-uniform, biases start at zero, and embedding tables (tokens,
// positions, relations) use unit-variance uniform rows.
void add_param(ParamStore& store, const std::string& name, std::size_t rows,
               std::size_t cols, Init init = Init::Xavier) {
  if (init == Init::Zero) {
    store.add(name, Matrix(rows, cols));
    return;
  }
  Rng rng(store.seed() ^ fnv1a(name));
  if (init == Init::Embedding) {
    Matrix m(rows, cols);
    const double limit = std::sqrt(3.0);
    for (double& v : m.data()) v = rng.uniform(-limit, limit);
    store.add(name, std::move(m));
    return;
  }
  store.add(name, xavier_uniform(rows, cols, rng));
}

void add_attention_params(ParamStore& store, const std::string& prefix,
                          std::size_t d_in, std::size_t d_k_total,
                          std::size_t d_v_total, std::size_t d_out) {
  add_param(store, prefix + ".Wq", d_in, d_k_total);
  add_param(store, prefix + ".Wk", d_in, d_k_total);
  add_param(store, prefix + ".Wv", d_in, d_v_total);
  add_param(store, prefix + ".Wo", d_v_total, d_out);
}

void add_ffn_params(ParamStore& store, const std::string& prefix, std::size_t d,
                    std::size_t d_ff) {
  add_param(store, prefix + ".W1", d, d_ff);
  add_param(store, prefix + ".b1", 1, d_ff, Init::Zero);
  add_param(store, prefix + ".W2", d_ff, d);
  add_param(store, prefix + ".b2", 1, d, Init::Zero);
}

void add_rgat_params(ParamStore& store, const std::string& prefix,
                     const EncoderConfig& c) {
  add_attention_params(store, prefix, c.d_m, c.d_z, c.d_z, c.d_m);
  add_ffn_params(store, prefix + ".ffn", c.d_m, c.d_ff);
}

}  // namespace

ParamStore init_model_params(const EncoderConfig& cfg, std::size_t enc_vocab,
                             std::size_t dec_vocab, std::uint64_t seed) {
  const EncoderConfig c = cfg.resolved();
  ParamStore store(seed);
  store.meta()["config"] = c.to_json();

  add_param(store, "embed.tok", enc_vocab, c.d_m, Init::Embedding);
  add_param(store, "embed.pos", c.max_len, c.d_m, Init::Embedding);
  for (std::size_t l = 0; l < c.layers; ++l) {
    const std::string sem = "enc.l" + std::to_string(l) + ".sem";
    add_attention_params(store, sem, c.d_m, c.h * c.d_k, c.h * c.d_v, c.d_m);
    add_ffn_params(store, sem + ".ffn", c.d_m, c.d_ff);
  }
  if (c.variant == Variant::Graphix) {
    for (std::size_t l = 0; l < c.layers; ++l) {
      add_rgat_params(store, "enc.l" + std::to_string(l) + ".rgat", c);
      if (c.per_layer_phi)
        add_param(store, "enc.l" + std::to_string(l) + ".phi", c.num_relations, c.d_z, Init::Embedding);
    }
    if (!c.per_layer_phi) add_param(store, "phi", c.num_relations, c.d_z, Init::Embedding);
  } else if (c.variant == Variant::Severed) {
    for (std::size_t j = 0; j < c.severed_depth; ++j)
      add_rgat_params(store, "enc.sev" + std::to_string(j) + ".rgat", c);
    add_param(store, "phi", c.num_relations, c.d_z, Init::Embedding);
  }

  if (dec_vocab > 0) {
    add_param(store, "dec.embed.tok", dec_vocab, c.d_m, Init::Embedding);
    add_param(store, "dec.embed.pos", c.max_len, c.d_m, Init::Embedding);
    for (std::size_t l = 0; l < c.dec_layers; ++l) {
      const std::string dl = "dec.l" + std::to_string(l);
      add_attention_params(store, dl + ".self", c.d_m, c.h * c.d_k, c.h * c.d_v, c.d_m);
      add_attention_params(store, dl + ".cross", c.d_m, c.h * c.d_k, c.h * c.d_v, c.d_m);
      add_ffn_params(store, dl + ".ffn", c.d_m, c.d_ff);
    }
    add_param(store, "dec.out.W", c.d_m, dec_vocab);
    add_param(store, "dec.out.b", 1, dec_vocab, Init::Zero);
  }
  return store;
}

ParamStore migrate_semantic_params(const ParamStore& checkpoint,
                                   const EncoderConfig& cfg, std::size_t enc_vocab,
                                   std::size_t dec_vocab, std::uint64_t seed) {
  ParamStore fresh = init_model_params(cfg, enc_vocab, dec_vocab, seed);
  for (const std::string& name : fresh.names()) {
    if (!is_semantic_param(name)) continue;
    if (!checkpoint.contains(name))
      throw std::runtime_error("migrate: checkpoint is missing parameter '" + name + "'");
    const Matrix& src = checkpoint.at(name);
    const Matrix& dst = fresh.at(name);
    if (!dst.same_shape(src))
      throw std::runtime_error(
          "migrate: shape mismatch for '" + name + "': checkpoint " +
          std::to_string(src.rows()) + "x" + std::to_string(src.cols()) + ", config " +
          std::to_string(dst.rows()) + "x" + std::to_string(dst.cols()));
    fresh.set(name, src);
  }
  return fresh;
}

BoundParams::BoundParams(Tape& tape, const ParamStore& store) {
  for (const std::string& name : store.names()) {
    const Var v = tape.leaf(store.at(name));
    entries_.emplace_back(name, v);
    vars_.emplace(name, v);
  }
}

Var BoundParams::at(const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end())
    throw std::out_of_range("BoundParams: unknown parameter '" + name + "'");
  return it->second;
}

std::map<std::string, Matrix> BoundParams::grads(const Tape& tape) const {
  std::map<std::string, Matrix> out;
  for (const auto& [name, var] : entries_) out.emplace(name, tape.grad(var));
  return out;
}

Var mha(Tape& tape, const BoundParams& p, const std::string& prefix, Var query_in,
        Var kv_in, const EncoderConfig& cfg, const Matrix* mask) {
  const EncoderConfig c = cfg.resolved();
  const Var q_all = tape.matmul(query_in, p.at(prefix + ".Wq"));
  const Var k_all = tape.matmul(kv_in, p.at(prefix + ".Wk"));
  const Var v_all = tape.matmul(kv_in, p.at(prefix + ".Wv"));
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(c.d_k));

  std::vector<Var> heads;
  heads.reserve(c.h);
  for (std::size_t i = 0; i < c.h; ++i) {
    const Var q = tape.slice_cols(q_all, i * c.d_k, (i + 1) * c.d_k);
    const Var k = tape.slice_cols(k_all, i * c.d_k, (i + 1) * c.d_k);
    const Var v = tape.slice_cols(v_all, i * c.d_v, (i + 1) * c.d_v);
    Var logits = tape.scale(tape.matmul(q, tape.transpose(k)), inv_sqrt_dk);
    if (mask) logits = tape.add_const(logits, *mask);
    heads.push_back(tape.matmul(tape.row_softmax(logits), v));
  }
  return tape.matmul(c.h == 1 ? heads[0] : tape.concat_cols(heads),
                     p.at(prefix + ".Wo"));
}

Var ffn(Tape& tape, const BoundParams& p, const std::string& prefix, Var x) {
  const Var h1 = tape.relu(
      tape.add_row(tape.matmul(x, p.at(prefix + ".W1")), p.at(prefix + ".b1")));
  return tape.add_row(tape.matmul(h1, p.at(prefix + ".W2")), p.at(prefix + ".b2"));
}

Var semantic_block(Tape& tape, const BoundParams& p, const std::string& prefix,
                   Var hidden, const EncoderConfig& cfg) {
  const EncoderConfig c = cfg.resolved();
  const Var hat = mha(tape, p, prefix, hidden, hidden, c);
  return tape.layer_norm(tape.add(hat, ffn(tape, p, prefix + ".ffn", hat)), c.ln_eps);
}

Var rgat_block(Tape& tape, const BoundParams& p, const std::string& prefix, Var phi,
               Var node_states, const HeterogeneousGraph& graph,
               const EncoderConfig& cfg, RgatAttention* attention) {
  const EncoderConfig c = cfg.resolved();
  const std::size_t n = graph.nodes().size();
  if (tape.value(node_states).rows() != n)
    throw std::invalid_argument("rgat_block: node state rows must equal node count");

  const Var q_all = tape.matmul(node_states, p.at(prefix + ".Wq"));
  const Var k_all = tape.matmul(node_states, p.at(prefix + ".Wk"));
  const Var v_all = tape.matmul(node_states, p.at(prefix + ".Wv"));
  const std::size_t d_head = c.d_z / c.g_heads;
  const double inv_sqrt_dz = 1.0 / std::sqrt(static_cast<double>(d_head));

  std::vector<Var> messages;
  messages.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& field = graph.in_neighbors(i);
    if (field.empty())
      throw std::logic_error("rgat_block: node " + std::to_string(i) +
                             " has an empty reception field");
    std::vector<int> nbr, rel;
    nbr.reserve(field.size());
    rel.reserve(field.size());
    for (const auto& inc : field) {
      nbr.push_back(static_cast<int>(inc.neighbor));
      rel.push_back(static_cast<int>(inc.rel));
    }
    const Var k_nbr = tape.gather_rows(k_all, nbr);
    const Var v_nbr = tape.gather_rows(v_all, nbr);
    const Var phi_nbr = tape.gather_rows(phi, rel);
    const Var q_i = tape.gather_rows(q_all, {static_cast<int>(i)});

    std::vector<Var> head_msgs;
    head_msgs.reserve(c.g_heads);
    for (std::size_t g = 0; g < c.g_heads; ++g) {
      const std::size_t b = g * d_head, e = (g + 1) * d_head;
      const Var keys = tape.add(tape.slice_cols(k_nbr, b, e),
                                tape.slice_cols(phi_nbr, b, e));
      const Var logits = tape.scale(
          tape.matmul(tape.slice_cols(q_i, b, e), tape.transpose(keys)), inv_sqrt_dz);
      const Var alpha = tape.row_softmax(logits);
      if (attention) {
        const Matrix& a = tape.value(alpha);
        attention->rows.emplace_back(a.data().begin(), a.data().end());
      }
      const Var values = tape.add(tape.slice_cols(v_nbr, b, e),
                                  tape.slice_cols(phi_nbr, b, e));
      head_msgs.push_back(tape.matmul(alpha, values));
    }
    messages.push_back(c.g_heads == 1 ? head_msgs[0] : tape.concat_cols(head_msgs));
  }

  const Var gathered = tape.concat_rows(messages);
  const Var e_hat = tape.layer_norm(
      tape.add(node_states, tape.matmul(gathered, p.at(prefix + ".Wo"))), c.ln_eps);
  return tape.layer_norm(tape.add(e_hat, ffn(tape, p, prefix + ".ffn", e_hat)),
                         c.ln_eps);
}

std::vector<std::pair<int, int>> node_span_pairs(const SerializedInput& x) {
  std::vector<std::pair<int, int>> out;
  out.reserve(x.node_spans.size());
  for (const auto& [b, e] : x.node_spans)
    out.emplace_back(static_cast<int>(b), static_cast<int>(e));
  return out;
}

std::vector<int> position_to_node(const SerializedInput& x) {
  std::vector<int> out(x.tokens.size(), -1);
  for (std::size_t n = 0; n < x.node_spans.size(); ++n)
    for (std::size_t p = x.node_spans[n].first; p < x.node_spans[n].second; ++p)
      out[p] = static_cast<int>(n);
  return out;
}

EncoderInput EncoderInput::from_serialized(const SerializedInput& x, const Vocab& vocab,
                                           const HeterogeneousGraph* graph) {
  EncoderInput in;
  in.token_ids = vocab.encode(x.tokens);
  in.graph = graph;
  in.node_spans = node_span_pairs(x);
  in.row_of_pos = position_to_node(x);
  if (graph && graph->nodes().size() != x.node_spans.size())
    throw std::invalid_argument("encoder input: node count " +
                                std::to_string(graph->nodes().size()) +
                                " does not match span count " +
                                std::to_string(x.node_spans.size()));
  return in;
}

namespace {

Var embed_sequence(Tape& tape, const BoundParams& p, const std::string& tok_name,
                   const std::string& pos_name, const std::vector<int>& ids,
                   const EncoderConfig& c) {
  const Matrix& table = tape.value(p.at(tok_name));
  for (int id : ids)
    if (id < 0 || id >= static_cast<int>(table.rows()))
      throw std::out_of_range("embedding table does not cover token id " +
                              std::to_string(id));
  if (ids.size() > c.max_len)
    throw std::invalid_argument("sequence length " + std::to_string(ids.size()) +
                                " exceeds max_len " + std::to_string(c.max_len));
  std::vector<int> positions(ids.size());
  std::iota(positions.begin(), positions.end(), 0);
  return tape.add(tape.gather_rows(p.at(tok_name), ids),
                  tape.gather_rows(p.at(pos_name), positions));
}

Var structural_branch(Tape& tape, const BoundParams& p, const std::string& prefix,
                      Var phi, Var semantic, const EncoderInput& in,
                      const EncoderConfig& c, Var* pooled_out = nullptr) {
  const Var pooled = tape.segment_mean(semantic, in.node_spans);
  const Var node_out = rgat_block(tape, p, prefix, phi, pooled, *in.graph, c);
  if (pooled_out) *pooled_out = node_out;
  return tape.expand_rows(node_out, in.row_of_pos);
}

Var phi_for_layer(const BoundParams& p, const EncoderConfig& c, std::size_t layer) {
  return c.per_layer_phi ? p.at("enc.l" + std::to_string(layer) + ".phi")
                         : p.at("phi");
}

}  // namespace

Var graphix_layer(Tape& tape, const BoundParams& p, std::size_t layer, Var hidden,
                  const EncoderInput& in, const EncoderConfig& cfg) {
  const EncoderConfig c = cfg.resolved();
  const std::string base = "enc.l" + std::to_string(layer);
  const Var hs = semantic_block(tape, p, base + ".sem", hidden, c);
  if (c.variant == Variant::Vanilla) return hs;
  if (!in.graph) throw std::invalid_argument("graphix_layer: graph required");
  const Var scattered = structural_branch(tape, p, base + ".rgat",
                                          phi_for_layer(p, c, layer), hs, in, c);
  return tape.add(hs, scattered);
}

Var encode(Tape& tape, const BoundParams& p, const EncoderInput& in,
           const EncoderConfig& cfg) {
  const EncoderConfig c = cfg.resolved();
  Var h = embed_sequence(tape, p, "embed.tok", "embed.pos", in.token_ids, c);

  if (c.variant == Variant::Graphix) {
    for (std::size_t l = 0; l < c.layers; ++l)
      h = graphix_layer(tape, p, l, h, in, c);
    return h;
  }
  for (std::size_t l = 0; l < c.layers; ++l)
    h = semantic_block(tape, p, "enc.l" + std::to_string(l) + ".sem", h, c);
  if (c.variant == Variant::Vanilla) return h;

  // Severed: the structural stack runs once after the semantic stack and is
  // scattered back in a single step.
  if (!in.graph) throw std::invalid_argument("encode: severed variant requires a graph");
  Var e = tape.segment_mean(h, in.node_spans);
  for (std::size_t j = 0; j < c.severed_depth; ++j)
    e = rgat_block(tape, p, "enc.sev" + std::to_string(j) + ".rgat", p.at("phi"), e,
                   *in.graph, c);
  return tape.add(h, tape.expand_rows(e, in.row_of_pos));
}

Var decode(Tape& tape, const BoundParams& p, const std::vector<int>& y_in,
           Var encoder_states, const EncoderConfig& cfg) {
  const EncoderConfig c = cfg.resolved();
  Var h = embed_sequence(tape, p, "dec.embed.tok", "dec.embed.pos", y_in, c);

  const std::size_t t = y_in.size();
  Matrix causal(t, t);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = i + 1; j < t; ++j) causal.at(i, j) = -1e30;

  for (std::size_t l = 0; l < c.dec_layers; ++l) {
    const std::string dl = "dec.l" + std::to_string(l);
    h = tape.layer_norm(tape.add(h, mha(tape, p, dl + ".self", h, h, c, &causal)),
                        c.ln_eps);
    h = tape.layer_norm(
        tape.add(h, mha(tape, p, dl + ".cross", h, encoder_states, c)), c.ln_eps);
    h = tape.layer_norm(tape.add(h, ffn(tape, p, dl + ".ffn", h)), c.ln_eps);
  }
  return tape.add_row(tape.matmul(h, p.at("dec.out.W")), p.at("dec.out.b"));
}

LossResult seq2seq_loss(Tape& tape, const BoundParams& p, const EncoderInput& in,
                        const std::vector<int>& targets, const EncoderConfig& cfg,
                        LossReduction reduction) {
  if (targets.empty()) throw std::invalid_argument("seq2seq_loss: empty target");
  const Var enc = encode(tape, p, in, cfg);
  std::vector<int> y_in;
  y_in.reserve(targets.size());
  y_in.push_back(kBosId);
  y_in.insert(y_in.end(), targets.begin(), targets.end() - 1);
  const Var logits = decode(tape, p, y_in, enc, cfg);
  return {tape.cross_entropy(logits, targets, reduction), logits};
}

}  // namespace graphix
