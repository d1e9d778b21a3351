#include <cmath>

#include "doctest.h"
#include "ftpg/errors.hpp"
#include "ftpg/rng.hpp"
#include "ftpg/translator.hpp"

using namespace ftpg;

namespace {

TranslatorConfig small_config() {
  TranslatorConfig cfg;
  cfg.d_model = 16;
  cfg.n_ctx = 4;
  cfg.n_heads = 4;
  cfg.ffn_mult = 2;
  return cfg;
}

Tensor unit_rows(std::size_t rows, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t({rows, d});
  for (double& v : t.data()) v = rng.gaussian();
  return l2_normalize(t);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("config validation") {
  TranslatorConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.n_heads = 5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.n_ctx = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.kv_len = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("schema: names and sizes") {
  const Schema schema = translator_schema(small_config());
  REQUIRE(schema.size() == 11);
  const char* expected[] = {"ffn_in", "ffn_out", "ln1_bias", "ln1_gain", "ln2_bias", "ln2_gain",
                            "queries", "w_k", "w_o", "w_q", "w_v"};
  for (std::size_t i = 0; i < schema.size(); ++i) CHECK(schema[i].name == expected[i]);
  // 16*64 + 32*16 + 4*16 + 4*16 + 4*256
  CHECK(schema_scalar_count(schema) == 2688);
  CHECK(init_params(small_config(), 1).scalar_count() == 2688);
}

TEST_CASE("init") {
  const TranslatorConfig cfg = small_config();
  const ParameterSet a = init_params(cfg, 1), b = init_params(cfg, 1), c = init_params(cfg, 2);
  CHECK(bitwise_equal(a, b));
  CHECK(a.checksum() == b.checksum());
  CHECK_FALSE(bitwise_equal(a.at("w_q").value, c.at("w_q").value));
  for (double v : a.at("ln1_gain").value.data()) CHECK(v == 1.0);
  for (double v : a.at("ln2_bias").value.data()) CHECK(v == 0.0);
  for (const char* zero : {"queries", "w_o", "ffn_out"}) {
    for (double v : a.at(zero).value.data()) CHECK(v == 0.0);
  }
  SUBCASE("projection scale is about 1/sqrt(d)") {
    double ss = 0.0;
    for (double v : a.at("w_k").value.data()) ss += v * v;
    CHECK(std::sqrt(ss / 256.0) == doctest::Approx(0.25).epsilon(0.2));
  }
  SUBCASE("initial context is exactly zero") {
    const ContextVectors ctx = generate_context(a, cfg, std::vector<Tensor>{unit_rows(1, 16, 3)});
    for (double v : ctx.items[0].data()) CHECK(v == 0.0);
  }
}

TEST_CASE("random_params: every tensor differs from the init and is seeded") {
  const TranslatorConfig cfg = small_config();
  const ParameterSet r1 = random_params(cfg, 5), r2 = random_params(cfg, 5), r3 = random_params(cfg, 6);
  CHECK(bitwise_equal(r1, r2));
  CHECK_FALSE(bitwise_equal(r1, r3));
  CHECK(r1.schema() == translator_schema(cfg));
  for (const auto& [name, p] : r1) {
    double nz = 0.0;
    for (double v : p.value.data()) nz += std::abs(v);
    CHECK(nz > 0.0);
  }
}

TEST_CASE("cross_attention") {
  SUBCASE("identical keys give uniform weights: output is the mean value row times w_o") {
    TranslatorConfig cfg = small_config();
    const ParameterSet params = random_params(cfg, 9);
    const TranslatorVars vars = bind_constant(params);
    const Tensor row = unit_rows(1, 16, 4);
    Tensor kv({3, 16});
    for (std::size_t r = 0; r < 3; ++r) std::copy(row.data().begin(), row.data().end(), kv.row(r).begin());
    const Tensor q = unit_rows(4, 16, 10);
    const Tensor out = cross_attention(vars, cfg, constant(q), constant(kv)).value();
    const Tensor expected = matmul(matmul(row, params.at("w_v").value), params.at("w_o").value);
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t c = 0; c < 16; ++c) CHECK(std::abs(out.at(r, c) - expected[c]) <= 1e-12);
    }
  }
  SUBCASE("single key row: output is kv W_v W_o for every query, independent of W_q") {
    TranslatorConfig cfg = small_config();
    ParameterSet params = random_params(cfg, 11);
    const Tensor kv = unit_rows(1, 16, 12);
    const Tensor q = unit_rows(4, 16, 13);
    const Tensor expected = matmul(matmul(kv, params.at("w_v").value), params.at("w_o").value);
    const Tensor out1 = cross_attention(bind_constant(params), cfg, constant(q), constant(kv)).value();
    for (double& v : params.at("w_q").value.data()) v *= -3.0;
    const Tensor out2 = cross_attention(bind_constant(params), cfg, constant(q), constant(kv)).value();
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t c = 0; c < 16; ++c) CHECK(std::abs(out1.at(r, c) - expected[c]) <= 1e-12);
    }
    CHECK(max_abs_diff(out1, out2) <= 1e-12);
  }
  SUBCASE("hand-computed single head, d=2, two keys") {
    TranslatorConfig cfg;
    cfg.d_model = 2;
    cfg.n_ctx = 1;
    cfg.n_heads = 1;
    cfg.ffn_mult = 1;
    ParameterSet params = init_params(cfg, 0);
    const Tensor eye = Tensor::matrix({{1, 0}, {0, 1}});
    for (const char* w : {"w_q", "w_k", "w_v", "w_o"}) params.at(w).value = eye;
    const Tensor q = Tensor::matrix({{1, 0}});
    const Tensor kv = Tensor::matrix({{2, 0}, {0, 1}});
    // scores = [2, 0] / sqrt(2); weights = softmax; out = weights . kv
    const double s0 = 2.0 / std::sqrt(2.0);
    const double w0 = std::exp(s0) / (std::exp(s0) + 1.0), w1 = 1.0 - w0;
    const Tensor out = cross_attention(bind_constant(params), cfg, constant(q), constant(kv)).value();
    CHECK(std::abs(out[0] - 2.0 * w0) <= 1e-12);
    CHECK(std::abs(out[1] - w1) <= 1e-12);
  }
  SUBCASE("shape errors") {
    const TranslatorConfig cfg = small_config();
    const ParameterSet params = init_params(cfg, 0);
    const TranslatorVars vars = bind_constant(params);
    CHECK_THROWS_AS(cross_attention(vars, cfg, constant(Tensor({4, 16})), constant(Tensor({1, 8}))), DimensionError);
    CHECK_THROWS_AS(cross_attention(vars, cfg, constant(Tensor({3, 16})), constant(Tensor({1, 16}))), DimensionError);
  }
}

TEST_CASE("batched generation") {
  TranslatorConfig cfg = small_config();
  cfg.d_model = 32;
  const ParameterSet params = random_params(cfg, 21);
  const Tensor emb = unit_rows(3, 32, 22);
  std::vector<Tensor> items;
  for (std::size_t b = 0; b < 3; ++b) items.push_back(Tensor({1, 32}, std::vector<double>(emb.row(b).begin(), emb.row(b).end())));

  const ContextVectors ctx = generate_context(params, cfg, items);
  CHECK(ctx.to_tensor().shape() == Shape{3, 4, 32});

  SUBCASE("packed input agrees with the item list") {
    const ContextVectors packed = generate_context(params, cfg, emb.reshaped({3, 1, 32}));
    CHECK(bitwise_equal(packed.to_tensor(), ctx.to_tensor()));
  }
  SUBCASE("identical rows give identical contexts") {
    const std::vector<Tensor> same{items[0], items[0]};
    const ContextVectors c2 = generate_context(params, cfg, same);
    CHECK(bitwise_equal(c2.items[0], c2.items[1]));
  }
  SUBCASE("property: permuting the batch permutes the outputs") {
    const std::vector<Tensor> perm{items[2], items[0], items[1]};
    const ContextVectors p = generate_context(params, cfg, perm);
    CHECK(bitwise_equal(p.items[0], ctx.items[2]));
    CHECK(bitwise_equal(p.items[1], ctx.items[0]));
    CHECK(bitwise_equal(p.items[2], ctx.items[1]));
  }
  SUBCASE("different class embeddings give different contexts") {
    CHECK(max_abs_diff(ctx.items[0], ctx.items[1]) > 1e-6);
  }
  SUBCASE("empty batch") {
    const ContextVectors none = generate_context(params, cfg, std::vector<Tensor>{});
    CHECK(none.batch() == 0);
    CHECK_THROWS_AS(none.to_tensor(), DimensionError);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(generate_context(params, cfg, std::vector<Tensor>{Tensor({1, 16})}), DimensionError);
    std::vector<Tensor> bad{items[0]};
    bad[0][3] = std::nan("");
    CHECK_THROWS_AS(generate_context(params, cfg, bad), NumericError);
    CHECK_THROWS_AS(generate_context(init_params(small_config(), 0), cfg, items), SchemaError);
  }
}

TEST_CASE("queries receive gradient") {
  const TranslatorConfig cfg = small_config();
  ParameterSet params = random_params(cfg, 31);
  const Tensor emb = unit_rows(1, 16, 32);
  const Tensor weights = unit_rows(4, 16, 33);
  backward(sum(mul(generate_context(bind(params), cfg, constant(emb)), constant(weights))));
  double norm2 = 0.0;
  for (double g : params.at("queries").grad.data()) norm2 += g * g;
  CHECK(std::sqrt(norm2) > 1e-8);
  for (const auto& [name, p] : params) CHECK_MESSAGE(p.grad_ready, name);
}

TEST_CASE("flatten and unflatten") {
  const ParameterSet params = random_params(small_config(), 41);
  const FlatParameters flat = flatten(params);
  CHECK(flat.values.size() == 2688);
  // lexicographic order: ffn_in comes first
  CHECK(flat.values[0] == params.at("ffn_in").value[0]);
  const ParameterSet back = unflatten(flat.values, flat.schema);
  CHECK(bitwise_equal(back, params));
  std::vector<double> short_values(flat.values.begin(), flat.values.end() - 1);
  CHECK_THROWS_AS(unflatten(short_values, flat.schema), SchemaError);
}

TEST_CASE("ParameterSet errors") {
  ParameterSet ps;
  ps.add("a", Tensor::vector({1}));
  CHECK_THROWS(ps.add("a", Tensor::vector({2})));
  CHECK_THROWS(ps.at("missing"));
  CHECK(ps.contains("a"));
  CHECK_FALSE(ps.contains("b"));
}
