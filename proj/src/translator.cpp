#include "ftpg/translator.hpp"

#include <cmath>

#include <fmt/format.h>

#include "ftpg/errors.hpp"
#include "ftpg/rng.hpp"

namespace ftpg {

namespace names = translator_names;

void TranslatorConfig::validate() const {
  if (d_model == 0) throw ConfigError("translator.d_model: must be positive");
  if (n_heads == 0 || d_model % n_heads != 0) {
    throw ConfigError(fmt::format("translator.n_heads: d_model {} is not divisible by {}", d_model, n_heads));
  }
  if (n_ctx < 1) throw ConfigError("translator.n_ctx: must be at least 1");
  if (kv_len < 1) throw ConfigError("translator.kv_len: must be at least 1");
  if (ffn_mult < 1) throw ConfigError("translator.ffn_mult: must be at least 1");
}

Schema translator_schema(const TranslatorConfig& c) {
  const std::size_t d = c.d_model, f = c.ffn_hidden();
  return {
      {names::kFfnIn, {d, 2 * f}}, {names::kFfnOut, {f, d}}, {names::kLn1Bias, {d}},
      {names::kLn1Gain, {d}},      {names::kLn2Bias, {d}},   {names::kLn2Gain, {d}},
      {names::kQueries, {c.n_ctx, d}}, {names::kWk, {d, d}},  {names::kWo, {d, d}},
      {names::kWq, {d, d}},        {names::kWv, {d, d}},
  };
}

ParameterSet init_params(const TranslatorConfig& config, std::uint64_t seed) {
  config.validate();
  const double weight_std = 1.0 / std::sqrt(static_cast<double>(config.d_model));
  ParameterSet params;
  for (const auto& entry : translator_schema(config)) {
    Tensor t(entry.shape);
    const std::string_view name = entry.name;
    if (name == names::kLn1Gain || name == names::kLn2Gain) {
      std::fill(t.data().begin(), t.data().end(), 1.0);
    } else if (name == names::kLn1Bias || name == names::kLn2Bias) {
      // zeros
    } else if (name == names::kQueries || name == names::kWo || name == names::kFfnOut) {
      // zeros: both residual branches start closed, so the initial context is exactly 0
    } else {
      Rng rng(hash64({seed, tag(name)}));
      for (double& v : t.data()) v = weight_std * rng.gaussian();
    }
    params.add(entry.name, std::move(t));
  }
  return params;
}

ParameterSet random_params(const TranslatorConfig& config, std::uint64_t seed) {
  config.validate();
  const double weight_std = 1.0 / std::sqrt(static_cast<double>(config.d_model));
  ParameterSet params;
  for (const auto& entry : translator_schema(config)) {
    Tensor t(entry.shape);
    const std::string_view name = entry.name;
    Rng rng(hash64({seed, tag("random"), tag(name)}));
    const bool gain = name == names::kLn1Gain || name == names::kLn2Gain;
    const bool bias = name == names::kLn1Bias || name == names::kLn2Bias;
    const double stddev = name == names::kQueries ? 0.02 : (gain || bias) ? 0.1 : weight_std;
    for (double& v : t.data()) v = (gain ? 1.0 : 0.0) + stddev * rng.gaussian();
    params.add(entry.name, std::move(t));
  }
  return params;
}

void require_translator_schema(const ParameterSet& params, const TranslatorConfig& config) {
  if (params.schema() != translator_schema(config)) {
    throw SchemaError(fmt::format("parameter set does not match the translator schema for d={}, m={}, ffn_mult={}",
                                  config.d_model, config.n_ctx, config.ffn_mult));
  }
}

TranslatorVars bind(ParameterSet& params) {
  return {leaf(params.at(names::kQueries)),  leaf(params.at(names::kWq)),      leaf(params.at(names::kWk)),
          leaf(params.at(names::kWv)),       leaf(params.at(names::kWo)),      leaf(params.at(names::kLn1Gain)),
          leaf(params.at(names::kLn1Bias)),  leaf(params.at(names::kLn2Gain)), leaf(params.at(names::kLn2Bias)),
          leaf(params.at(names::kFfnIn)),    leaf(params.at(names::kFfnOut))};
}

TranslatorVars bind_constant(const ParameterSet& params) {
  auto c = [&](const char* name) { return constant(params.at(name).value); };
  return {c(names::kQueries), c(names::kWq),      c(names::kWk),      c(names::kWv),
          c(names::kWo),      c(names::kLn1Gain), c(names::kLn1Bias), c(names::kLn2Gain),
          c(names::kLn2Bias), c(names::kFfnIn),   c(names::kFfnOut)};
}

Var cross_attention(const TranslatorVars& p, const TranslatorConfig& config, const Var& queries_in, const Var& kv) {
  const std::size_t d = config.d_model;
  if (kv.shape().size() != 2 || kv.shape()[1] != d) {
    throw DimensionError(fmt::format("cross_attention: key/value rows must be [L x {}], got {}", d,
                                     shape_str(kv.shape())));
  }
  if (queries_in.shape() != Shape{config.n_ctx, d}) {
    throw DimensionError(fmt::format("cross_attention: queries must be [{} x {}], got {}", config.n_ctx, d,
                                     shape_str(queries_in.shape())));
  }
  const Var q = matmul(queries_in, p.w_q);
  const Var k = matmul(kv, p.w_k);
  const Var v = matmul(kv, p.w_v);
  const std::size_t dh = config.head_dim();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<Var> heads;
  heads.reserve(config.n_heads);
  for (std::size_t h = 0; h < config.n_heads; ++h) {
    const Var qh = slice_cols(q, h * dh, dh);
    const Var kh = slice_cols(k, h * dh, dh);
    const Var vh = slice_cols(v, h * dh, dh);
    const Var weights = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt));
    heads.push_back(matmul(weights, vh));
  }
  return matmul(concat_cols(heads), p.w_o);
}

Var generate_context(const TranslatorVars& p, const TranslatorConfig& config, const Var& class_emb) {
  if (class_emb.shape() != Shape{config.kv_len, config.d_model}) {
    throw DimensionError(fmt::format("generate_context: class embedding must be [{} x {}], got {}", config.kv_len,
                                     config.d_model, shape_str(class_emb.shape())));
  }
  const Var attended = cross_attention(p, config, layer_norm(p.queries, p.ln1_gain, p.ln1_bias), class_emb);
  const Var u = add(p.queries, attended);
  const Var hidden = geglu(matmul(layer_norm(u, p.ln2_gain, p.ln2_bias), p.ffn_in));
  return add(u, matmul(hidden, p.ffn_out));
}

Tensor ContextVectors::to_tensor() const {
  if (items.empty()) throw DimensionError("context vectors: cannot pack an empty batch");
  const auto& first = items.front().shape();
  std::vector<double> data;
  data.reserve(items.size() * items.front().size());
  for (const auto& item : items) data.insert(data.end(), item.data().begin(), item.data().end());
  return Tensor({items.size(), first[0], first[1]}, std::move(data));
}

ContextVectors generate_context(const ParameterSet& params, const TranslatorConfig& config,
                                std::span<const Tensor> class_emb) {
  require_translator_schema(params, config);
  const TranslatorVars vars = bind_constant(params);
  ContextVectors out;
  out.items.reserve(class_emb.size());
  for (const auto& item : class_emb) {
    if (!item.all_finite()) throw NumericError("generate_context: class embedding holds non-finite values");
    out.items.push_back(generate_context(vars, config, constant(item)).value());
  }
  return out;
}

ContextVectors generate_context(const ParameterSet& params, const TranslatorConfig& config, const Tensor& class_emb) {
  if (class_emb.rank() != 3) {
    throw DimensionError(fmt::format("generate_context: expected [B x L x d], got {}", shape_str(class_emb.shape())));
  }
  const std::size_t batch = class_emb.dim(0), len = class_emb.dim(1), d = class_emb.dim(2);
  std::vector<Tensor> items;
  items.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<double> data(class_emb.data().begin() + static_cast<std::ptrdiff_t>(b * len * d),
                             class_emb.data().begin() + static_cast<std::ptrdiff_t>((b + 1) * len * d));
    items.emplace_back(Shape{len, d}, std::move(data));
  }
  return generate_context(params, config, items);
}

}  // namespace ftpg
