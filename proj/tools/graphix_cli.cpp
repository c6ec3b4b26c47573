// Command-line surface for graph construction, serialization, encoding,
// gradient checking and toy training.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "graphix/export.hpp"
#include "graphix/graph.hpp"
#include "graphix/model.hpp"
#include "graphix/params.hpp"
#include "graphix/schema.hpp"
#include "graphix/serialize.hpp"
#include "graphix/training.hpp"

namespace {

using namespace graphix;

bool g_json = false;

int fail_validation(const std::string& message) {
  if (g_json)
    std::cout << nlohmann::json{{"error", message}, {"code", 2}}.dump() << "\n";
  else
    std::cerr << "error: " << message << "\n";
  return 2;
}

void write_output(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text << "\n";
    return;
  }
  std::ofstream os(out_path);
  if (!os) throw std::runtime_error("cannot open '" + out_path + "' for writing");
  os << text << "\n";
}

struct GraphArgs {
  std::string question_path;
  std::string schema_path;
  std::string values_csv;
  std::string mode = "bridge";

  void attach(CLI::App* cmd, bool need_mode = true) {
    cmd->add_option("--question", question_path, "question JSON file")->required();
    cmd->add_option("--schema", schema_path, "schema JSON file")->required();
    cmd->add_option("--values", values_csv, "candidate values CSV (column_id,value)");
    if (need_mode)
      cmd->add_option("--mode", mode, "linking mode: bridge | no_match")
          ->check(CLI::IsMember({"bridge", "no_match", "nomatch"}));
  }

  std::tuple<Question, Database, GraphOptions> load() const {
    Question q = load_question(question_path);
    Database db = load_database(schema_path);
    if (!values_csv.empty()) load_candidate_values_csv(db, values_csv);
    GraphOptions opts;
    opts.mode = *linking_mode_from_name(mode);
    return {std::move(q), std::move(db), opts};
  }
};

NodeRef resolve_node_label(const std::string& label, const Question& q,
                           const Database& db) {
  if (label == "*") return {NodeKind::Star, db.star_id()};
  if (label.rfind("q:", 0) == 0)
    return {NodeKind::Question, std::stoull(label.substr(2))};
  if (label.rfind("t:", 0) == 0 || label.rfind("c:", 0) == 0) {
    const std::string name = label.substr(2);
    if (label[0] == 't') {
      for (const Table& t : db.tables)
        if (t.display_name() == name) return {NodeKind::Table, t.id};
    } else {
      for (const Column& c : db.columns)
        if (!c.is_star() && c.display_name() == name) return {NodeKind::Column, c.id};
    }
    throw std::runtime_error("no schema item named '" + name + "'");
  }
  for (const QuestionToken& t : q.tokens)
    if (t.surface == label || t.lemma == label) return {NodeKind::Question, t.index};
  for (const Table& t : db.tables)
    if (t.display_name() == label) return {NodeKind::Table, t.id};
  for (const Column& c : db.columns)
    if (!c.is_star() && c.display_name() == label) return {NodeKind::Column, c.id};
  throw std::runtime_error("no node labelled '" + label +
                           "' (use q:IDX, t:NAME, c:NAME or *)");
}

Vocab vocab_from_tokens(const std::vector<std::string>& tokens) {
  Vocab v;
  for (const std::string& t : tokens) v.add(t);
  return v;
}

int cmd_build_graph(const GraphArgs& args, const std::string& out_path) {
  const auto [q, db, opts] = args.load();
  const HeterogeneousGraph g = build_graph(q, db, opts);
  const EdgeCountStats stats = edge_count_stats(q, db, opts);
  write_output(graph_to_json(g, q, db, stats).dump(2), out_path);
  return 0;
}

int cmd_stats(const std::string& graph_path) {
  std::ifstream is(graph_path);
  if (!is) throw std::runtime_error("cannot open '" + graph_path + "'");
  nlohmann::json j = nlohmann::json::parse(is);
  const auto& st = j.at("stats");
  const std::size_t bridge = st.at("bridge_count").get<std::size_t>();
  const std::size_t nomatch = st.at("nomatch_count").get<std::size_t>();
  if (g_json) {
    std::cout << nlohmann::json{{"mode", j.at("mode")},
                                {"forward_edges", st.at("forward_edges")},
                                {"bridge_count", bridge},
                                {"nomatch_count", nomatch}}
                     .dump()
              << "\n";
    return 0;
  }
  std::cout << "mode:            " << j.at("mode").get<std::string>() << "\n"
            << "forward edges:   " << st.at("forward_edges").get<std::size_t>() << "\n"
            << "bridge edges:    " << bridge << "  (|Q| + |T| + |C|)\n"
            << "no-match edges:  " << nomatch << "  (A x B)\n";
  return 0;
}

int cmd_serialize(const GraphArgs& args) {
  const auto [q, db, opts] = args.load();
  std::cout << serialize(q, db).text << "\n";
  return 0;
}

int cmd_path(const GraphArgs& args, const std::string& from, const std::string& to,
             std::size_t max_hops, bool with_mode_edges) {
  const auto [q, db, opts] = args.load();
  const HeterogeneousGraph g = build_graph(q, db, opts);
  const NodeRef src = resolve_node_label(from, q, db);
  const NodeRef dst = resolve_node_label(to, q, db);

  // Mode edges and self loops are connectivity devices, not reasoning
  // relations; exclude them from diagnostics unless asked.
  std::set<RelationType> allowed;
  if (!with_mode_edges) {
    for (int r = 0; r < kNumRelationTypes; ++r) allowed.insert(static_cast<RelationType>(r));
    for (RelationType r : {RelationType::Bridge, RelationType::BridgeInv,
                           RelationType::NoMatch, RelationType::NoMatchInv,
                           RelationType::SelfLoop})
      allowed.erase(r);
  }
  const auto path = find_multihop_path(g, src, dst, max_hops,
                                       with_mode_edges ? nullptr : &allowed);
  if (!path) {
    if (g_json)
      std::cout << nlohmann::json{{"found", false}}.dump() << "\n";
    else
      std::cout << "no path within " << max_hops << " hops\n";
    return 0;
  }
  auto label = [&q2 = q, &db2 = db](NodeRef n) { return node_label(n, q2, db2); };
  if (g_json) {
    auto hops = nlohmann::json::array();
    for (const Edge& e : path->hops)
      hops.push_back({{"src", label(e.src)},
                      {"rel", std::string(relation_name(e.rel))},
                      {"dst", label(e.dst)}});
    std::cout << nlohmann::json{{"found", true}, {"hops", hops}}.dump() << "\n";
  } else {
    std::cout << path->length() << "-hop path: " << render_path(*path, label) << "\n";
  }
  return 0;
}

int cmd_encode(const GraphArgs& args, const std::string& config_path,
               const std::string& checkpoint_path, std::uint64_t seed,
               const std::string& out_path) {
  const auto [q, db, opts] = args.load();
  const SerializedInput x = serialize(q, db);
  const HeterogeneousGraph g = build_graph(q, db, opts);

  EncoderConfig cfg;
  if (!config_path.empty()) cfg = EncoderConfig::load(config_path);
  cfg = cfg.resolved();

  ParamStore params;
  Vocab vocab;
  if (!checkpoint_path.empty()) {
    params = ParamStore::load(checkpoint_path);
    if (!params.meta().contains("input_vocab"))
      throw std::runtime_error("checkpoint has no input vocabulary");
    vocab = Vocab::from_json(params.meta().at("input_vocab"));
    if (config_path.empty() && params.meta().contains("config"))
      cfg = EncoderConfig::from_json(params.meta().at("config")).resolved();
  } else {
    vocab = vocab_from_tokens(x.tokens);
    params = init_model_params(cfg, vocab.size(), 0, seed);
  }

  const EncoderInput in = EncoderInput::from_serialized(x, vocab, &g);
  Tape tape;
  BoundParams bound(tape, params);
  const Matrix& h = tape.value(encode(tape, bound, in, cfg));

  nlohmann::ordered_json dump;
  dump["shape"] = {h.rows(), h.cols()};
  auto rows = nlohmann::ordered_json::array();
  for (std::size_t r = 0; r < h.rows(); ++r)
    rows.push_back(std::vector<double>(h.row(r), h.row(r) + h.cols()));
  dump["hidden_states"] = std::move(rows);
  write_output(dump.dump(), out_path);
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t d_m, std::size_t layers,
                  std::size_t heads, double epsilon) {
  EncoderConfig cfg;
  cfg.d_m = d_m;
  cfg.h = heads;
  cfg.layers = layers;
  cfg.variant = Variant::Graphix;
  cfg = cfg.resolved();

  const ToyTask task = ToyTask::make(TaskKind::SchemaEcho, seed);
  const ToySample s = task.sample(seed);
  const EncoderInput in = task.encoder_input(s);

  ParamStore params = init_model_params(cfg, task.input_vocab().size(),
                                        task.target_vocab().size(), seed);
  Tape tape;
  BoundParams bound(tape, params);
  const LossResult lr = seq2seq_loss(tape, bound, in, s.targets, cfg);
  tape.backward(lr.loss);
  const std::map<std::string, Matrix> analytic = bound.grads(tape);

  const auto loss_of = [&](const ParamStore& p) {
    Tape t;
    BoundParams b(t, p);
    return t.value(seq2seq_loss(t, b, in, s.targets, cfg).loss).at(0, 0);
  };
  const double max_rel = grad_check(loss_of, params, analytic, epsilon);
  const bool pass = max_rel < 1e-4;
  if (g_json)
    std::cout << nlohmann::json{{"max_rel_err", max_rel},
                                {"threshold", 1e-4},
                                {"parameters", params.total_values()},
                                {"pass", pass}}
                     .dump()
              << "\n";
  else
    std::cout << "max_rel_err " << max_rel << " over " << params.total_values()
              << " parameters: " << (pass ? "< 1e-4, PASS" : ">= 1e-4, FAIL") << "\n";
  return pass ? 0 : 2;
}

int cmd_train_toy(const std::string& task_name, std::size_t steps, double lr,
                  std::size_t batch, std::uint64_t seed, std::size_t d_m,
                  std::size_t layers, std::size_t heads, std::size_t max_len,
                  const std::string& variant_str, const std::string& trace_path,
                  const std::string& save_path, std::size_t eval_count) {
  const auto kind = task_kind_from_name(task_name);
  if (!kind) throw std::runtime_error("unknown task '" + task_name + "'");
  const auto variant = variant_from_name(variant_str);
  if (!variant) throw std::runtime_error("unknown variant '" + variant_str + "'");

  EncoderConfig cfg;
  cfg.d_m = d_m;
  cfg.layers = layers;
  cfg.h = heads;
  cfg.max_len = max_len;
  cfg.variant = *variant;
  cfg = cfg.resolved();

  const ToyTask task = ToyTask::make(*kind, seed);
  TrainConfig tc;
  tc.steps = steps;
  tc.lr = lr;
  tc.batch = batch;
  tc.init_seed = seed;
  const TrainResult result = train(task, cfg, tc);

  if (!trace_path.empty()) write_trace_csv(result.trace, trace_path);
  if (!save_path.empty()) result.params.save(save_path);

  nlohmann::ordered_json summary{{"task", task_name},
                                 {"variant", std::string(variant_name(*variant))},
                                 {"steps", steps},
                                 {"initial_loss", result.trace.front().loss},
                                 {"final_loss", result.trace.back().loss}};
  if (eval_count > 0)
    summary["held_out_token_accuracy"] =
        token_accuracy(task, result.params, cfg, 1u << 20, eval_count);
  if (g_json) {
    std::cout << summary.dump() << "\n";
  } else {
    std::cout << "task " << task_name << " (" << variant_name(*variant) << "), "
              << steps << " steps: loss " << result.trace.front().loss << " -> "
              << result.trace.back().loss << "\n";
    if (eval_count > 0)
      std::cout << "held-out token accuracy: "
                << summary["held_out_token_accuracy"].get<double>() << "\n";
  }
  return 0;
}

int cmd_compare_modes(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string fn = entry.path().filename().string();
    const std::string suffix = ".question.json";
    if (fn.size() > suffix.size() &&
        fn.compare(fn.size() - suffix.size(), suffix.size(), suffix) == 0)
      names.push_back(fn.substr(0, fn.size() - suffix.size()));
  }
  std::sort(names.begin(), names.end());
  if (names.empty())
    throw std::runtime_error("no *.question.json files in '" + dir + "'");

  auto rows = nlohmann::json::array();
  if (!g_json)
    std::cout << "example              A    B    no_match(AxB)  bridge(|Q|+|T|+|C|)\n";
  for (const std::string& name : names) {
    const Question q = load_question(dir + "/" + name + ".question.json");
    const Database db = load_database(dir + "/" + name + ".schema.json");
    const EdgeCountStats st = edge_count_stats(q, db, {});
    if (g_json) {
      rows.push_back({{"example", name},
                      {"unmatched_tokens", st.unmatched_tokens},
                      {"unmatched_schema_items", st.unmatched_schema_items},
                      {"nomatch_count", st.nomatch_count},
                      {"bridge_count", st.bridge_count}});
    } else {
      std::printf("%-20s %-4zu %-4zu %-14zu %zu\n", name.c_str(), st.unmatched_tokens,
                  st.unmatched_schema_items, st.nomatch_count, st.bridge_count);
    }
  }
  if (g_json) std::cout << rows.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"question-schema graph construction and graph-aware encoding"};
  app.require_subcommand(1);
  app.add_flag("--json", g_json, "machine-readable output and errors");

  GraphArgs build_args, ser_args, path_args, enc_args;
  std::string out_path, graph_path;
  auto* build = app.add_subcommand("build-graph", "build the question-schema graph");
  build_args.attach(build);
  build->add_option("--out", out_path, "write graph JSON here instead of stdout");

  auto* stats = app.add_subcommand("stats", "edge-count report for a graph JSON");
  stats->add_option("--graph", graph_path, "graph JSON from build-graph")->required();

  auto* ser = app.add_subcommand("serialize", "render the joint input sequence");
  ser_args.attach(ser, /*need_mode=*/false);

  std::string from_label, to_label;
  std::size_t max_hops = 4;
  bool with_mode_edges = false;
  auto* path = app.add_subcommand("path", "shortest relation path between two nodes");
  path_args.attach(path);
  path->add_option("--from", from_label, "source node label")->required();
  path->add_option("--to", to_label, "target node label")->required();
  path->add_option("--max-hops", max_hops, "hop limit (default 4)");
  path->add_flag("--with-mode-edges", with_mode_edges,
                 "also traverse bridge/no-match/self-loop edges");

  std::string config_path, checkpoint_path, enc_out;
  std::uint64_t seed = 1;
  auto* enc = app.add_subcommand("encode", "dump encoder hidden states");
  enc_args.attach(enc);
  enc->add_option("--config", config_path, "encoder config JSON");
  enc->add_option("--checkpoint", checkpoint_path, "parameter checkpoint");
  enc->add_option("--seed", seed, "random init seed when no checkpoint given");
  enc->add_option("--out", enc_out, "write hidden states here instead of stdout");

  std::uint64_t gc_seed = 1;
  std::size_t gc_dm = 8, gc_layers = 2, gc_heads = 2;
  double gc_eps = 1e-5;
  auto* gc = app.add_subcommand("gradcheck",
                                "analytic vs central-difference gradients");
  gc->add_option("--seed", gc_seed, "instance and parameter seed");
  gc->add_option("--dm", gc_dm, "model width (default 8)");
  gc->add_option("--layers", gc_layers, "encoder layers (default 2)");
  gc->add_option("--heads", gc_heads, "attention heads (default 2)");
  gc->add_option("--epsilon", gc_eps, "finite-difference step (default 1e-5)");

  std::string task_name = "copy", variant_str = "graphix", trace_path, save_path;
  std::size_t steps = 500, batch = 8, eval_count = 0, tt_dm = 32, tt_layers = 2;
  std::size_t tt_heads = 4, tt_max_len = 64;
  double lr = 0.1;
  std::uint64_t tt_seed = 1;
  auto* tt = app.add_subcommand("train-toy", "train on a toy task with plain SGD");
  tt->add_option("--task", task_name, "copy | schema-echo");
  tt->add_option("--steps", steps, "training steps (default 500)");
  tt->add_option("--lr", lr, "learning rate (default 0.1)");
  tt->add_option("--batch", batch, "batch size (default 8)");
  tt->add_option("--seed", tt_seed, "task/init seed");
  tt->add_option("--dm", tt_dm, "model width (default 32)");
  tt->add_option("--layers", tt_layers, "encoder layers (default 2)");
  tt->add_option("--heads", tt_heads, "attention heads (default 4)");
  tt->add_option("--max-len", tt_max_len, "position table size (default 64)");
  tt->add_option("--variant", variant_str, "vanilla | severed | graphix");
  tt->add_option("--out", trace_path, "write step,loss trace CSV here");
  tt->add_option("--save", save_path, "save final checkpoint here");
  tt->add_option("--eval", eval_count, "held-out samples for token accuracy");

  std::string dataset_dir;
  auto* cm = app.add_subcommand("compare-modes",
                                "A*B vs |Q|+|T|+|C| per example in a dataset dir");
  cm->add_option("--dir", dataset_dir, "directory of NAME.question.json/.schema.json")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (build->parsed()) return cmd_build_graph(build_args, out_path);
    if (stats->parsed()) return cmd_stats(graph_path);
    if (ser->parsed()) return cmd_serialize(ser_args);
    if (path->parsed())
      return cmd_path(path_args, from_label, to_label, max_hops, with_mode_edges);
    if (enc->parsed())
      return cmd_encode(enc_args, config_path, checkpoint_path, seed, enc_out);
    if (gc->parsed()) return cmd_gradcheck(gc_seed, gc_dm, gc_layers, gc_heads, gc_eps);
    if (tt->parsed())
      return cmd_train_toy(task_name, steps, lr, batch, tt_seed, tt_dm, tt_layers,
                           tt_heads, tt_max_len, variant_str, trace_path, save_path,
                           eval_count);
    if (cm->parsed()) return cmd_compare_modes(dataset_dir);
  } catch (const std::exception& e) {
    return fail_validation(e.what());
  }
  return 1;
}
