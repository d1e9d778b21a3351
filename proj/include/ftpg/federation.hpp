#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ftpg/autograd.hpp"
#include "ftpg/encoders.hpp"
#include "ftpg/experiment.hpp"
#include "ftpg/parameter_set.hpp"
#include "ftpg/partition.hpp"
#include "ftpg/rng.hpp"
#include "ftpg/translator.hpp"

namespace ftpg {

/// lr0 * (1 + cos(pi * t / total)) / 2 for 0 <= t <= total.
double cosine_lr(double lr0, std::size_t t, std::size_t total);

/// Momentum buffers, one per parameter.
struct OptimizerState {
  std::map<std::string, Tensor, std::less<>> velocity;

  static OptimizerState zeros_like(const ParameterSet& params);
};

/// Classical momentum SGD with weight decay folded into the gradient:
///   g' = grad + wd * theta;  v = mu * v + g';  theta -= lr * v
void sgd_step(ParameterSet& params, OptimizerState& state, double lr, const OptimizerConfig& opt);

/// Cross-entropy of cosine-similarity logits between image features and the
/// text features of `class_emb` rows (one class per row), scaled by 1/temperature.
Var contrastive_loss(const TranslatorVars& vars, const TranslatorConfig& config, const FrozenTextHead& head,
                     const Tensor& class_emb, const Tensor& images, std::span<const std::size_t> labels,
                     double temperature);

struct ClientData {
  ClientSpec spec;
  FewShotSet data;
};

struct ClientUpdate {
  std::size_t client_id = 0;
  ParameterSet params;
  std::size_t num_samples = 0;
  double mean_loss = 0.0;
};

/// One client's round: copy theta, then `epochs` passes of shuffled
/// mini-batches with a fresh momentum buffer. theta_global is not touched.
ClientUpdate local_update(const ParameterSet& theta_global, const ClientData& client, const SyntheticWorld& world,
                          const FrozenTextHead& head, const TranslatorConfig& translator, const OptimizerConfig& opt,
                          double lr, std::size_t epochs, Rng& rng);

/// max(1, round(fraction * n)) distinct ids drawn with hash64(seed, round),
/// sorted ascending.
std::vector<std::size_t> select_clients(std::size_t n_clients, double fraction, std::size_t round,
                                        std::uint64_t seed);

/// Uniform coordinatewise mean, accumulated in ascending client id order.
ParameterSet fedavg(std::span<const ClientUpdate> updates);

struct RoundLog {
  std::size_t round = 0;  // 1-based
  double lr = 0.0;
  std::vector<std::size_t> selected;
  std::vector<double> mean_loss;  // aligned with selected
};

/// One JSON object per line: {"t":..,"lr":..,"selected":[..],"mean_loss":[..]}.
std::string to_json_line(const RoundLog& log);

/// World, frozen head and client datasets of a run.
struct Federation {
  SyntheticWorld world;
  FrozenTextHead head;
  std::vector<ClientData> clients;
};

/// Builds the federation for a finalized config. An optional table replaces
/// the synthetic class embeddings.
Federation build_federation(const ExperimentConfig& config, const EmbeddingTable* embeddings = nullptr);

struct TrainingResult {
  ParameterSet params;
  std::vector<RoundLog> logs;
};

using RoundCallback = std::function<void(const RoundLog&, const ParameterSet&)>;

/// Full federated loop over config.federation.rounds rounds; the learning
/// rate of round t (0-based) is cosine_lr(lr0, t, rounds).
TrainingResult run_training(const ExperimentConfig& config, const Federation& federation,
                            const RoundCallback& on_round = {});

/// Stream of client `client_id` in round `round`, used for batch shuffling.
Rng client_round_rng(const ExperimentConfig& config, std::size_t round, std::size_t client_id);

}  // namespace ftpg
