#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "graphix/model.hpp"
#include "graphix/training.hpp"
#include "testgen.hpp"

using namespace graphix;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double s = 1.0) {
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.uniform(-s, s);
  return m;
}

ParamStore attention_params(std::size_t d_m, std::size_t d_kv_total, std::size_t d_ff,
                            Rng& rng, const std::string& prefix) {
  ParamStore p(0);
  p.add(prefix + ".Wq", random_matrix(d_m, d_kv_total, rng, 0.5));
  p.add(prefix + ".Wk", random_matrix(d_m, d_kv_total, rng, 0.5));
  p.add(prefix + ".Wv", random_matrix(d_m, d_kv_total, rng, 0.5));
  p.add(prefix + ".Wo", random_matrix(d_kv_total, d_m, rng, 0.5));
  p.add(prefix + ".ffn.W1", random_matrix(d_m, d_ff, rng, 0.5));
  p.add(prefix + ".ffn.b1", random_matrix(1, d_ff, rng, 0.2));
  p.add(prefix + ".ffn.W2", random_matrix(d_ff, d_m, rng, 0.5));
  p.add(prefix + ".ffn.b2", random_matrix(1, d_m, rng, 0.2));
  return p;
}

// Literal step-by-step attention recomputation with explicit loops.
Matrix mha_oracle(const Matrix& H, const ParamStore& p, const std::string& prefix,
                  std::size_t h, std::size_t d_k, std::size_t d_v) {
  const std::size_t n = H.rows();
  const Matrix& Wq = p.at(prefix + ".Wq");
  const Matrix& Wk = p.at(prefix + ".Wk");
  const Matrix& Wv = p.at(prefix + ".Wv");
  const Matrix& Wo = p.at(prefix + ".Wo");

  Matrix concat(n, h * d_v);
  for (std::size_t head = 0; head < h; ++head) {
    Matrix q(n, d_k), k(n, d_k), v(n, d_v);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d_k; ++c) {
        double sq = 0, sk = 0;
        for (std::size_t m = 0; m < H.cols(); ++m) {
          sq += H.at(r, m) * Wq.at(m, head * d_k + c);
          sk += H.at(r, m) * Wk.at(m, head * d_k + c);
        }
        q.at(r, c) = sq;
        k.at(r, c) = sk;
      }
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d_v; ++c) {
        double sv = 0;
        for (std::size_t m = 0; m < H.cols(); ++m)
          sv += H.at(r, m) * Wv.at(m, head * d_v + c);
        v.at(r, c) = sv;
      }
    for (std::size_t r = 0; r < n; ++r) {
      std::vector<double> logits(n);
      double mx = -1e300;
      for (std::size_t m = 0; m < n; ++m) {
        double dot = 0;
        for (std::size_t c = 0; c < d_k; ++c) dot += q.at(r, c) * k.at(m, c);
        logits[m] = dot / std::sqrt(static_cast<double>(d_k));
        mx = std::max(mx, logits[m]);
      }
      double z = 0;
      for (double& l : logits) {
        l = std::exp(l - mx);
        z += l;
      }
      for (std::size_t c = 0; c < d_v; ++c) {
        double s = 0;
        for (std::size_t m = 0; m < n; ++m) s += logits[m] / z * v.at(m, c);
        concat.at(r, head * d_v + c) = s;
      }
    }
  }
  Matrix out(n, Wo.cols());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < Wo.cols(); ++j) {
      double s = 0;
      for (std::size_t c = 0; c < concat.cols(); ++c)
        s += concat.at(r, c) * Wo.at(c, j);
      out.at(r, j) = s;
    }
  return out;
}

Matrix ffn_oracle(const Matrix& X, const ParamStore& p, const std::string& prefix) {
  const Matrix& W1 = p.at(prefix + ".W1");
  const Matrix& b1 = p.at(prefix + ".b1");
  const Matrix& W2 = p.at(prefix + ".W2");
  const Matrix& b2 = p.at(prefix + ".b2");
  Matrix h1(X.rows(), W1.cols());
  for (std::size_t r = 0; r < X.rows(); ++r)
    for (std::size_t c = 0; c < W1.cols(); ++c) {
      double s = b1.at(0, c);
      for (std::size_t m = 0; m < X.cols(); ++m) s += X.at(r, m) * W1.at(m, c);
      h1.at(r, c) = std::max(0.0, s);
    }
  Matrix out(X.rows(), W2.cols());
  for (std::size_t r = 0; r < X.rows(); ++r)
    for (std::size_t c = 0; c < W2.cols(); ++c) {
      double s = b2.at(0, c);
      for (std::size_t m = 0; m < h1.cols(); ++m) s += h1.at(r, m) * W2.at(m, c);
      out.at(r, c) = s;
    }
  return out;
}

std::vector<double> layer_norm_row(std::vector<double> x, double eps) {
  double mean = 0, var = 0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  for (double& v : x) v = (v - mean) / std::sqrt(var + eps);
  return x;
}

// Per-node relational attention recomputed with explicit neighbor loops.
Matrix rgat_oracle(const Matrix& E, const HeterogeneousGraph& g, const ParamStore& p,
                   const std::string& prefix, const Matrix& phi, double eps) {
  const std::size_t n = E.rows();
  const std::size_t d = E.cols();
  const std::size_t dz = p.at(prefix + ".Wq").cols();
  auto project = [&](const Matrix& W, std::size_t row) {
    std::vector<double> out(W.cols(), 0.0);
    for (std::size_t c = 0; c < W.cols(); ++c)
      for (std::size_t m = 0; m < d; ++m) out[c] += E.at(row, m) * W.at(m, c);
    return out;
  };

  Matrix result(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& field = g.in_neighbors(i);
    const auto q = project(p.at(prefix + ".Wq"), i);
    std::vector<double> logits;
    for (const auto& inc : field) {
      const auto k = project(p.at(prefix + ".Wk"), inc.neighbor);
      double dot = 0;
      for (std::size_t c = 0; c < dz; ++c)
        dot += q[c] * (k[c] + phi.at(static_cast<std::size_t>(inc.rel), c));
      logits.push_back(dot / std::sqrt(static_cast<double>(dz)));
    }
    double mx = -1e300, z = 0;
    for (double l : logits) mx = std::max(mx, l);
    for (double& l : logits) {
      l = std::exp(l - mx);
      z += l;
    }
    std::vector<double> msg(dz, 0.0);
    for (std::size_t j = 0; j < field.size(); ++j) {
      const auto v = project(p.at(prefix + ".Wv"), field[j].neighbor);
      for (std::size_t c = 0; c < dz; ++c)
        msg[c] += logits[j] / z *
                  (v[c] + phi.at(static_cast<std::size_t>(field[j].rel), c));
    }
    const Matrix& Wo = p.at(prefix + ".Wo");
    std::vector<double> ehat(d, 0.0);
    for (std::size_t c = 0; c < d; ++c) {
      double s = E.at(i, c);
      for (std::size_t m = 0; m < dz; ++m) s += msg[m] * Wo.at(m, c);
      ehat[c] = s;
    }
    ehat = layer_norm_row(ehat, eps);

    Matrix row(1, d);
    for (std::size_t c = 0; c < d; ++c) row.at(0, c) = ehat[c];
    const Matrix f = ffn_oracle(row, p, prefix + ".ffn");
    std::vector<double> out(d);
    for (std::size_t c = 0; c < d; ++c) out[c] = ehat[c] + f.at(0, c);
    out = layer_norm_row(out, eps);
    for (std::size_t c = 0; c < d; ++c) result.at(i, c) = out[c];
  }
  return result;
}

HeterogeneousGraph path_graph_3() {
  const std::vector<NodeRef> nodes = {{NodeKind::Question, 0},
                                      {NodeKind::Question, 1},
                                      {NodeKind::Question, 2}};
  return assemble_graph(nodes,
                        {{nodes[0], nodes[1], RelationType::Distance1},
                         {nodes[1], nodes[2], RelationType::Distance1}});
}

std::vector<Edge> forward_edges_of(const HeterogeneousGraph& g) {
  std::vector<Edge> fw;
  for (const Edge& e : g.edges())
    if (e.rel != RelationType::SelfLoop && !is_inverse_relation(e.rel))
      fw.push_back(e);
  return fw;
}

EncoderConfig small_cfg(Variant variant = Variant::Graphix) {
  EncoderConfig cfg;
  cfg.d_m = 8;
  cfg.h = 2;
  cfg.layers = 2;
  cfg.dec_layers = 1;
  cfg.max_len = 32;
  cfg.variant = variant;
  return cfg.resolved();
}

struct TinyInstance {
  SerializedInput x;
  HeterogeneousGraph graph;
  Vocab vocab;
  EncoderInput input;
};

TinyInstance tiny_instance(std::uint64_t seed) {
  Rng rng(seed);
  testgen::GenOptions opts;
  opts.tiny = true;
  const auto inst = testgen::random_instance(rng, opts);
  TinyInstance t;
  t.x = serialize(inst.question, inst.db);
  t.graph = build_graph(inst.question, inst.db, {});
  for (const std::string& tok : t.x.tokens) t.vocab.add(tok);
  t.input = EncoderInput::from_serialized(t.x, t.vocab, &t.graph);
  return t;
}

}  // namespace

TEST_CASE("config defaults resolve to the stated relationships") {
  EncoderConfig cfg;
  cfg.d_m = 32;
  cfg.h = 4;
  const EncoderConfig c = cfg.resolved();
  CHECK(c.d_k == 8);
  CHECK(c.d_v == 8);
  CHECK(c.d_ff == 128);
  CHECK(c.d_z == 32);

  cfg.d_ff = 48;  // overridable
  CHECK(cfg.resolved().d_ff == 48);

  cfg.d_m = 30;
  cfg.h = 4;
  cfg.d_ff = 0;
  CHECK_THROWS_AS(cfg.resolved(), std::invalid_argument);
}

TEST_CASE("config json round trip") {
  EncoderConfig cfg = small_cfg(Variant::Severed);
  const EncoderConfig back = EncoderConfig::from_json(cfg.to_json());
  CHECK(back.d_m == cfg.d_m);
  CHECK(back.variant == Variant::Severed);
  CHECK(back.severed_depth == cfg.severed_depth);
}

TEST_CASE("mha matches the literal step-by-step oracle") {
  Rng rng(42);
  const std::size_t d_m = 8, h = 2;
  ParamStore p = attention_params(d_m, d_m, 4 * d_m, rng, "sem");
  const Matrix H = random_matrix(3, d_m, rng);

  EncoderConfig cfg;
  cfg.d_m = d_m;
  cfg.h = h;
  cfg.max_len = 16;
  cfg = cfg.resolved();

  Tape tape;
  BoundParams bound(tape, p);
  const Matrix got = tape.value(mha(tape, bound, "sem", tape.leaf(H), tape.leaf(H), cfg));
  const Matrix want = mha_oracle(H, p, "sem", h, cfg.d_k, cfg.d_v);
  CHECK(got.max_abs_diff(want) < 1e-12);
}

TEST_CASE("mha with zero value projection is zero") {
  Rng rng(1);
  ParamStore p = attention_params(8, 8, 32, rng, "sem");
  p.set("sem.Wv", Matrix(8, 8));
  EncoderConfig cfg = small_cfg();
  Tape tape;
  BoundParams bound(tape, p);
  const Var h = tape.leaf(random_matrix(4, 8, rng));
  const Matrix out = tape.value(mha(tape, bound, "sem", h, h, cfg));
  for (double v : out.data()) CHECK(v == 0.0);
}

TEST_CASE("mha with a single row reduces to the value path") {
  Rng rng(2);
  ParamStore p = attention_params(8, 8, 32, rng, "sem");
  EncoderConfig cfg = small_cfg();
  Tape tape;
  BoundParams bound(tape, p);
  const Matrix H = random_matrix(1, 8, rng);
  const Var h = tape.leaf(H);
  const Matrix got = tape.value(mha(tape, bound, "sem", h, h, cfg));
  // softmax over one key is exactly 1, so the output is (H Wv) Wo
  const Matrix want = matmul(matmul(H, p.at("sem.Wv")), p.at("sem.Wo"));
  CHECK(got.max_abs_diff(want) < 1e-14);
}

TEST_CASE("ffn matches the oracle and its degenerate cases") {
  Rng rng(3);
  ParamStore p = attention_params(8, 8, 32, rng, "sem");
  const Matrix X = random_matrix(5, 8, rng);
  {
    Tape tape;
    BoundParams bound(tape, p);
    const Matrix got = tape.value(ffn(tape, bound, "sem.ffn", tape.leaf(X)));
    CHECK(got.max_abs_diff(ffn_oracle(X, p, "sem.ffn")) < 1e-12);
  }

  SUBCASE("zero W1 and b1 broadcast b2") {
    p.set("sem.ffn.W1", Matrix(8, 32));
    p.set("sem.ffn.b1", Matrix(1, 32));
    Tape t2;
    BoundParams b2(t2, p);
    const Matrix out = t2.value(ffn(t2, b2, "sem.ffn", t2.leaf(X)));
    for (std::size_t r = 0; r < out.rows(); ++r)
      for (std::size_t c = 0; c < out.cols(); ++c)
        CHECK(out.at(r, c) == p.at("sem.ffn.b2").at(0, c));
  }
  SUBCASE("all-negative preactivations broadcast b2") {
    p.set("sem.ffn.b1", Matrix(1, 32, -100.0));
    Tape t2;
    BoundParams b2(t2, p);
    const Matrix out = t2.value(ffn(t2, b2, "sem.ffn", t2.leaf(X)));
    for (std::size_t r = 0; r < out.rows(); ++r)
      for (std::size_t c = 0; c < out.cols(); ++c)
        CHECK(out.at(r, c) == p.at("sem.ffn.b2").at(0, c));
  }
}

TEST_CASE("semantic_block composes attention, ffn, residual and norm") {
  Rng rng(4);
  ParamStore p = attention_params(8, 8, 32, rng, "sem");
  EncoderConfig cfg = small_cfg();
  const Matrix H = random_matrix(4, 8, rng);

  Tape tape;
  BoundParams bound(tape, p);
  const Matrix got = tape.value(semantic_block(tape, bound, "sem", tape.leaf(H), cfg));

  // stepwise composition through the same public ops
  Tape t2;
  BoundParams b2(t2, p);
  const Var hat = mha(t2, b2, "sem", t2.leaf(H), t2.leaf(H), cfg);
  const Var want = t2.layer_norm(t2.add(hat, ffn(t2, b2, "sem.ffn", hat)), cfg.ln_eps);
  CHECK(got == t2.value(want));

  // and against the fully independent oracle
  const Matrix hat_o = mha_oracle(H, p, "sem", cfg.h, cfg.d_k, cfg.d_v);
  Matrix sum = ffn_oracle(hat_o, p, "sem.ffn");
  for (std::size_t i = 0; i < sum.size(); ++i) sum.data()[i] += hat_o.data()[i];
  Matrix want_o(sum.rows(), sum.cols());
  for (std::size_t r = 0; r < sum.rows(); ++r) {
    const auto row = layer_norm_row(
        std::vector<double>(sum.row(r), sum.row(r) + sum.cols()), cfg.ln_eps);
    for (std::size_t c = 0; c < sum.cols(); ++c) want_o.at(r, c) = row[c];
  }
  CHECK(got.max_abs_diff(want_o) < 1e-11);
}

TEST_CASE("semantic_block with all-zero parameters is exactly zero") {
  ParamStore p(0);
  p.add("sem.Wq", Matrix(8, 8));
  p.add("sem.Wk", Matrix(8, 8));
  p.add("sem.Wv", Matrix(8, 8));
  p.add("sem.Wo", Matrix(8, 8));
  p.add("sem.ffn.W1", Matrix(8, 32));
  p.add("sem.ffn.b1", Matrix(1, 32));
  p.add("sem.ffn.W2", Matrix(32, 8));
  p.add("sem.ffn.b2", Matrix(1, 8));
  Rng rng(5);
  Tape tape;
  BoundParams bound(tape, p);
  const Matrix out = tape.value(
      semantic_block(tape, bound, "sem", tape.leaf(random_matrix(3, 8, rng)),
                     small_cfg()));
  for (double v : out.data()) CHECK(v == 0.0);
}

TEST_CASE("rgat: single node with only a self loop and zero phi row") {
  const std::vector<NodeRef> nodes = {{NodeKind::Question, 0}};
  const HeterogeneousGraph g = assemble_graph(nodes, {});
  Rng rng(6);
  ParamStore p = attention_params(8, 8, 32, rng, "rgat");
  p.add("phi", Matrix(kNumRelationTypes, 8));  // zero rows, incl. the self loop

  EncoderConfig cfg = small_cfg();
  Tape tape;
  BoundParams bound(tape, p);
  RgatAttention attn;
  rgat_block(tape, bound, "rgat", bound.at("phi"), tape.leaf(random_matrix(1, 8, rng)),
             g, cfg, &attn);
  REQUIRE(attn.rows.size() == 1);
  REQUIRE(attn.rows[0].size() == 1);
  CHECK(attn.rows[0][0] == 1.0);  // softmax of a single logit, exactly
}

TEST_CASE("rgat attention rows sum to one over the reception field") {
  Rng rng(7);
  for (int i = 0; i < 10; ++i) {
    const auto inst = testgen::random_instance(rng);
    const HeterogeneousGraph g = build_graph(inst.question, inst.db, {});
    ParamStore p = attention_params(8, 8, 32, rng, "rgat");
    p.add("phi", random_matrix(kNumRelationTypes, 8, rng));
    EncoderConfig cfg = small_cfg();
    Tape tape;
    BoundParams bound(tape, p);
    RgatAttention attn;
    rgat_block(tape, bound, "rgat", bound.at("phi"),
               tape.leaf(random_matrix(g.nodes().size(), 8, rng)), g, cfg, &attn);
    REQUIRE(attn.rows.size() == g.nodes().size());
    for (const auto& row : attn.rows) {
      double sum = 0;
      for (double a : row) sum += a;
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("rgat matches the explicit per-node oracle on a path graph") {
  const HeterogeneousGraph g = path_graph_3();
  Rng rng(8);
  ParamStore p = attention_params(8, 8, 32, rng, "rgat");
  p.add("phi", random_matrix(kNumRelationTypes, 8, rng));
  const Matrix E = random_matrix(3, 8, rng);
  EncoderConfig cfg = small_cfg();

  Tape tape;
  BoundParams bound(tape, p);
  const Matrix got =
      tape.value(rgat_block(tape, bound, "rgat", bound.at("phi"), tape.leaf(E), g, cfg));
  const Matrix want = rgat_oracle(E, g, p, "rgat", p.at("phi"), cfg.ln_eps);
  CHECK(got.max_abs_diff(want) < 1e-11);
}

TEST_CASE("rgat is exactly equivariant under node permutation") {
  Rng rng(9);
  for (int it = 0; it < 5; ++it) {
    const auto inst = testgen::random_instance(rng);
    const HeterogeneousGraph g = build_graph(inst.question, inst.db, {});
    const std::size_t n = g.nodes().size();

    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);

    std::vector<NodeRef> permuted_nodes(n);
    for (std::size_t i = 0; i < n; ++i) permuted_nodes[perm[i]] = g.nodes()[i];
    const HeterogeneousGraph pg =
        assemble_graph(permuted_nodes, forward_edges_of(g), g.mode());

    ParamStore p = attention_params(8, 8, 32, rng, "rgat");
    p.add("phi", random_matrix(kNumRelationTypes, 8, rng));
    EncoderConfig cfg = small_cfg();

    const Matrix E = random_matrix(n, 8, rng);
    Matrix PE(n, 8);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < 8; ++c) PE.at(perm[i], c) = E.at(i, c);

    Tape t1, t2;
    BoundParams b1(t1, p), b2(t2, p);
    const Matrix out =
        t1.value(rgat_block(t1, b1, "rgat", b1.at("phi"), t1.leaf(E), g, cfg));
    const Matrix pout =
        t2.value(rgat_block(t2, b2, "rgat", b2.at("phi"), t2.leaf(PE), pg, cfg));
    bool exact = true;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < 8; ++c)
        exact &= pout.at(perm[i], c) == out.at(i, c);  // bitwise
    CAPTURE(it);
    CHECK(exact);
  }
}

TEST_CASE("changing one edge relation changes the rgat output") {
  const std::vector<NodeRef> nodes = {{NodeKind::Table, 0}, {NodeKind::Column, 0}};
  const HeterogeneousGraph g = assemble_graph(
      nodes, {{nodes[0], nodes[1], RelationType::Has}});
  const HeterogeneousGraph g2 = assemble_graph(
      nodes, {{nodes[0], nodes[1], RelationType::PrimaryKey}});

  Rng rng(10);
  ParamStore p = attention_params(8, 8, 32, rng, "rgat");
  p.add("phi", random_matrix(kNumRelationTypes, 8, rng));
  EncoderConfig cfg = small_cfg();
  const Matrix E = random_matrix(2, 8, rng);

  Tape t1, t2;
  BoundParams b1(t1, p), b2(t2, p);
  const Matrix a = t1.value(rgat_block(t1, b1, "rgat", b1.at("phi"), t1.leaf(E), g, cfg));
  const Matrix b = t2.value(rgat_block(t2, b2, "rgat", b2.at("phi"), t2.leaf(E), g2, cfg));
  CHECK(a != b);
}

TEST_CASE("rgat supports multiple structural heads") {
  const HeterogeneousGraph g = path_graph_3();
  Rng rng(11);
  ParamStore p = attention_params(8, 8, 32, rng, "rgat");
  p.add("phi", random_matrix(kNumRelationTypes, 8, rng));
  EncoderConfig cfg = small_cfg();
  cfg.g_heads = 2;
  Tape tape;
  BoundParams bound(tape, p);
  RgatAttention attn;
  const Matrix out = tape.value(rgat_block(
      tape, bound, "rgat", bound.at("phi"), tape.leaf(random_matrix(3, 8, rng)), g,
      cfg, &attn));
  CHECK(out.rows() == 3);
  CHECK(attn.rows.size() == 6);  // nodes x heads
}

TEST_CASE("graphix_layer: vanilla variant is the semantic block alone") {
  const TinyInstance t = tiny_instance(12);
  EncoderConfig cfg = small_cfg(Variant::Vanilla);
  ParamStore p = init_model_params(cfg, t.vocab.size(), 0, 3);

  Tape tape;
  BoundParams bound(tape, p);
  const Var h = tape.leaf(Matrix(t.x.tokens.size(), cfg.d_m, 0.25));
  const Var out = graphix_layer(tape, bound, 0, h, t.input, cfg);

  Tape t2;
  BoundParams b2(t2, p);
  const Var want = semantic_block(
      t2, b2, "enc.l0.sem", t2.leaf(Matrix(t.x.tokens.size(), cfg.d_m, 0.25)), cfg);
  CHECK(tape.value(out) == t2.value(want));
}

TEST_CASE("graphix_layer scatters node vectors over their spans") {
  const TinyInstance t = tiny_instance(13);
  EncoderConfig cfg = small_cfg(Variant::Graphix);
  cfg.layers = 1;
  ParamStore p = init_model_params(cfg, t.vocab.size(), 0, 4);

  Rng rng(14);
  const Matrix H = random_matrix(t.x.tokens.size(), cfg.d_m, rng);

  Tape tape;
  BoundParams bound(tape, p);
  const Matrix got = tape.value(graphix_layer(tape, bound, 0, tape.leaf(H), t.input, cfg));

  // recompute the two branches separately
  Tape t2;
  BoundParams b2(t2, p);
  const Var hs = semantic_block(t2, b2, "enc.l0.sem", t2.leaf(H), cfg);
  const Var pooled = t2.segment_mean(hs, t.input.node_spans);
  const Var eg = rgat_block(t2, b2, "enc.l0.rgat", b2.at("phi"), pooled, t.graph, cfg);
  const Matrix& hs_v = t2.value(hs);
  const Matrix& eg_v = t2.value(eg);

  for (std::size_t pos = 0; pos < t.x.tokens.size(); ++pos) {
    const int node = t.input.row_of_pos[pos];
    for (std::size_t c = 0; c < cfg.d_m; ++c) {
      const double want =
          node < 0 ? hs_v.at(pos, c)
                   : hs_v.at(pos, c) + eg_v.at(static_cast<std::size_t>(node), c);
      CHECK(got.at(pos, c) == want);
    }
  }
}

TEST_CASE("encode with zero layers returns the input embeddings") {
  const TinyInstance t = tiny_instance(15);
  EncoderConfig cfg = small_cfg(Variant::Graphix);
  cfg.layers = 0;
  ParamStore p = init_model_params(cfg, t.vocab.size(), 0, 5);

  Tape tape;
  BoundParams bound(tape, p);
  const Matrix got = tape.value(encode(tape, bound, t.input, cfg));
  REQUIRE(got.rows() == t.x.tokens.size());
  for (std::size_t pos = 0; pos < t.x.tokens.size(); ++pos)
    for (std::size_t c = 0; c < cfg.d_m; ++c)
      CHECK(got.at(pos, c) ==
            p.at("embed.tok").at(static_cast<std::size_t>(t.input.token_ids[pos]), c) +
                p.at("embed.pos").at(pos, c));
}

TEST_CASE("encode output shape is N x d_m for every variant") {
  const TinyInstance t = tiny_instance(16);
  for (Variant v : {Variant::Vanilla, Variant::Severed, Variant::Graphix}) {
    EncoderConfig cfg = small_cfg(v);
    ParamStore p = init_model_params(cfg, t.vocab.size(), 0, 6);
    Tape tape;
    BoundParams bound(tape, p);
    const Matrix h = tape.value(encode(tape, bound, t.input, cfg));
    CHECK(h.rows() == t.x.tokens.size());
    CHECK(h.cols() == cfg.d_m);
    CHECK(h.all_finite());
  }
}

TEST_CASE("vanilla encode equals the pure semantic stack bit for bit") {
  const TinyInstance t = tiny_instance(17);
  EncoderConfig cfg = small_cfg(Variant::Vanilla);
  ParamStore p = init_model_params(cfg, t.vocab.size(), 0, 7);

  Tape tape;
  BoundParams bound(tape, p);
  const Matrix got = tape.value(encode(tape, bound, t.input, cfg));

  Tape t2;
  BoundParams b2(t2, p);
  std::vector<int> positions(t.input.token_ids.size());
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<int>(i);
  Var h = t2.add(t2.gather_rows(b2.at("embed.tok"), t.input.token_ids),
                 t2.gather_rows(b2.at("embed.pos"), positions));
  for (std::size_t l = 0; l < cfg.layers; ++l)
    h = semantic_block(t2, b2, "enc.l" + std::to_string(l) + ".sem", h, cfg);
  CHECK(got == t2.value(h));
}

TEST_CASE("zero-weighted structural branch is not the vanilla stack") {
  // The layer norms inside the structural block keep it nonlinear, so zeroing
  // its weights does not collapse graphix onto vanilla.
  const TinyInstance t = tiny_instance(18);
  EncoderConfig cfg = small_cfg(Variant::Graphix);
  ParamStore p = init_model_params(cfg, t.vocab.size(), 0, 8);
  for (const std::string& name : p.names())
    if (param_group(name) == ParamGroup::Structural ||
        param_group(name) == ParamGroup::RelationEmbedding)
      p.set(name, Matrix(p.at(name).rows(), p.at(name).cols()));

  Tape tape;
  BoundParams bound(tape, p);
  const Matrix graphix_out = tape.value(encode(tape, bound, t.input, cfg));

  EncoderConfig vcfg = cfg;
  vcfg.variant = Variant::Vanilla;
  Tape t2;
  BoundParams b2(t2, p);
  const Matrix vanilla_out = t2.value(encode(t2, b2, t.input, vcfg));
  CHECK(graphix_out != vanilla_out);
}

TEST_CASE("severed encode runs the structural stack once") {
  const TinyInstance t = tiny_instance(19);
  EncoderConfig cfg = small_cfg(Variant::Severed);
  ParamStore p = init_model_params(cfg, t.vocab.size(), 0, 9);
  CHECK(p.contains("enc.sev0.rgat.Wq"));
  CHECK(p.contains("enc.sev1.rgat.Wq"));
  CHECK_FALSE(p.contains("enc.l0.rgat.Wq"));

  Tape tape;
  BoundParams bound(tape, p);
  const Matrix h = tape.value(encode(tape, bound, t.input, cfg));
  CHECK(h.rows() == t.x.tokens.size());
  CHECK(h.all_finite());
}

TEST_CASE("per-layer relation embeddings are supported") {
  const TinyInstance t = tiny_instance(20);
  EncoderConfig cfg = small_cfg(Variant::Graphix);
  cfg.per_layer_phi = true;
  ParamStore p = init_model_params(cfg, t.vocab.size(), 0, 10);
  CHECK(p.contains("enc.l0.phi"));
  CHECK(p.contains("enc.l1.phi"));
  CHECK_FALSE(p.contains("phi"));
  Tape tape;
  BoundParams bound(tape, p);
  CHECK(tape.value(encode(tape, bound, t.input, cfg)).all_finite());
}

TEST_CASE("embedding coverage and max_len are enforced") {
  const TinyInstance t = tiny_instance(21);
  EncoderConfig cfg = small_cfg();
  ParamStore p = init_model_params(cfg, 2, 0, 11);  // vocabulary too small
  Tape tape;
  BoundParams bound(tape, p);
  CHECK_THROWS_AS(encode(tape, bound, t.input, cfg), std::out_of_range);

  EncoderConfig short_cfg = cfg;
  short_cfg.max_len = 2;
  ParamStore p2 = init_model_params(short_cfg, t.vocab.size(), 0, 11);
  Tape t2;
  BoundParams b2(t2, p2);
  CHECK_THROWS_AS(encode(t2, b2, t.input, short_cfg), std::invalid_argument);
}

TEST_CASE("parameter groups classify names") {
  CHECK(param_group("embed.tok") == ParamGroup::Semantic);
  CHECK(param_group("enc.l0.sem.Wq") == ParamGroup::Semantic);
  CHECK(param_group("enc.l1.rgat.ffn.W1") == ParamGroup::Structural);
  CHECK(param_group("phi") == ParamGroup::RelationEmbedding);
  CHECK(param_group("enc.l0.phi") == ParamGroup::RelationEmbedding);
  CHECK(param_group("dec.out.W") == ParamGroup::Decoder);
}

TEST_CASE("migration loads semantic parameters and reseeds the rest") {
  EncoderConfig cfg = small_cfg(Variant::Graphix);
  ParamStore original = init_model_params(cfg, 12, 6, 100);
  const std::string path = "migrate_test.ckpt";
  original.save(path);
  const ParamStore loaded = ParamStore::load(path);
  std::remove(path.c_str());

  const ParamStore migrated = migrate_semantic_params(loaded, cfg, 12, 6, 200);
  bool psi_differs = false;
  for (const std::string& name : migrated.names()) {
    if (is_semantic_param(name)) {
      CHECK(migrated.at(name) == original.at(name));  // bit identical
    } else if (original.contains(name) && migrated.at(name) != original.at(name)) {
      psi_differs = true;
    }
  }
  CHECK(psi_differs);

  SUBCASE("different seeds keep theta and change psi") {
    const ParamStore m2 = migrate_semantic_params(loaded, cfg, 12, 6, 300);
    bool psi_diff = false;
    for (const std::string& name : m2.names()) {
      if (is_semantic_param(name))
        CHECK(m2.at(name) == migrated.at(name));
      else if (m2.at(name) != migrated.at(name))
        psi_diff = true;
    }
    CHECK(psi_diff);
  }

  SUBCASE("shape mismatch names the parameter") {
    EncoderConfig wide = cfg;
    wide.d_m = 16;
    CHECK_THROWS_WITH_AS(migrate_semantic_params(loaded, wide, 12, 6, 1),
                         doctest::Contains("embed.tok"), std::runtime_error);
  }
}

TEST_CASE("full model gradients match central differences") {
  const TinyInstance t = tiny_instance(22);
  REQUIRE(t.x.tokens.size() <= 12);
  EncoderConfig cfg = small_cfg(Variant::Graphix);
  const std::size_t dec_vocab = 6;
  ParamStore params = init_model_params(cfg, t.vocab.size(), dec_vocab, 23);
  const std::vector<int> targets = {1, 4, 2};

  Tape tape;
  BoundParams bound(tape, params);
  const LossResult lr = seq2seq_loss(tape, bound, t.input, targets, cfg);
  tape.backward(lr.loss);
  const auto analytic = bound.grads(tape);

  const auto f = [&](const ParamStore& p) {
    Tape tp;
    BoundParams b(tp, p);
    return tp.value(seq2seq_loss(tp, b, t.input, targets, cfg).loss).at(0, 0);
  };
  CHECK(grad_check(f, params, analytic, 1e-5) < 1e-4);
}
