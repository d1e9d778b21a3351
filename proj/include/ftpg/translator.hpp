#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ftpg/autograd.hpp"
#include "ftpg/parameter_set.hpp"
#include "ftpg/tensor.hpp"

namespace ftpg {

struct TranslatorConfig {
  std::size_t d_model = 32;
  std::size_t n_ctx = 4;
  std::size_t n_heads = 4;
  std::size_t ffn_mult = 4;
  std::size_t kv_len = 1;

  std::size_t ffn_hidden() const noexcept { return ffn_mult * d_model; }
  std::size_t head_dim() const noexcept { return d_model / n_heads; }

  /// Throws ConfigError when an invariant is violated.
  void validate() const;
};

/// Parameter names of the translator, in lexicographic order.
namespace translator_names {
inline constexpr const char* kFfnIn = "ffn_in";
inline constexpr const char* kFfnOut = "ffn_out";
inline constexpr const char* kLn1Bias = "ln1_bias";
inline constexpr const char* kLn1Gain = "ln1_gain";
inline constexpr const char* kLn2Bias = "ln2_bias";
inline constexpr const char* kLn2Gain = "ln2_gain";
inline constexpr const char* kQueries = "queries";
inline constexpr const char* kWk = "w_k";
inline constexpr const char* kWo = "w_o";
inline constexpr const char* kWq = "w_q";
inline constexpr const char* kWv = "w_v";
}  // namespace translator_names

/// Names and shapes of the translator parameters, derived from the config.
Schema translator_schema(const TranslatorConfig& config);

/// Projections w_q, w_k, w_v, ffn_in ~ N(0, 1/d); queries, w_o and ffn_out
/// zero; layer-norm gains 1 and biases 0. The zero tensors make the initial
/// context exactly 0. Each random tensor draws from the stream (seed, name).
ParameterSet init_params(const TranslatorConfig& config, std::uint64_t seed);

/// Every tensor random: queries ~ N(0, 0.02^2), projections ~ N(0, 1/d),
/// gains 1 + N(0, 0.1^2), biases N(0, 0.1^2). A generic point for gradient
/// and property checks, where the zero init would hide most paths.
ParameterSet random_params(const TranslatorConfig& config, std::uint64_t seed);

/// Throws SchemaError unless `params` carries exactly the translator schema.
void require_translator_schema(const ParameterSet& params, const TranslatorConfig& config);

/// Graph handles for one forward pass over a translator parameter set.
struct TranslatorVars {
  Var queries, w_q, w_k, w_v, w_o;
  Var ln1_gain, ln1_bias, ln2_gain, ln2_bias;
  Var ffn_in, ffn_out;
};

/// Leaves that receive gradients on backward().
TranslatorVars bind(ParameterSet& params);
/// Constant handles for gradient-free evaluation.
TranslatorVars bind_constant(const ParameterSet& params);

/// Multi-head scaled dot-product attention of `queries_in` [m x d] over
/// `kv` [L x d], heads concatenated then projected by w_o. No residual.
Var cross_attention(const TranslatorVars& p, const TranslatorConfig& config, const Var& queries_in, const Var& kv);

/// One pre-norm block: u = q + attn(LN1(q), kv); ctx = u + FFN(LN2(u)) with
/// FFN(x) = geglu(x * ffn_in) * ffn_out. Returns [n_ctx x d_model].
Var generate_context(const TranslatorVars& p, const TranslatorConfig& config, const Var& class_emb);

/// Context vectors for a batch: one [n_ctx x d_model] tensor per item.
struct ContextVectors {
  std::vector<Tensor> items;

  std::size_t batch() const noexcept { return items.size(); }
  /// Packs into [batch x n_ctx x d_model]; requires batch() > 0.
  Tensor to_tensor() const;
};

/// Gradient-free batched generation over items of shape [kv_len x d_model].
ContextVectors generate_context(const ParameterSet& params, const TranslatorConfig& config,
                                std::span<const Tensor> class_emb);
/// Same, for a packed [batch x kv_len x d_model] tensor.
ContextVectors generate_context(const ParameterSet& params, const TranslatorConfig& config,
                                const Tensor& class_emb);

}  // namespace ftpg
