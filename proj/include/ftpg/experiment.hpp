#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "ftpg/encoders.hpp"
#include "ftpg/translator.hpp"

namespace ftpg {

struct OptimizerConfig {
  double lr0 = 0.003;
  double momentum = 0.9;
  double weight_decay = 1e-5;
  std::size_t batch_size = 32;
  double temperature = 0.01;

  void validate() const;
};

struct FederationConfig {
  std::size_t n_clients = 6;
  std::size_t classes_per_client = 10;
  std::size_t shots = 8;
  std::size_t rounds = 50;
  std::size_t local_epochs = 1;
  double fraction = 1.0;
  // Threads for local updates within a round. Results do not depend on it.
  std::size_t workers = 1;
  // Write a checkpoint every this many rounds during `train` (0: final only).
  std::size_t checkpoint_every = 0;

  void validate() const;
};

struct EvalConfig {
  std::size_t n_test = 50;
  std::string report_dir = "reports";
};

/// Every run-level setting. World seed and d_model are not independent keys:
/// the seed is derived from master_seed and translator.d_model follows world.d.
struct ExperimentConfig {
  WorldConfig world;
  TranslatorConfig translator;
  OptimizerConfig optimizer;
  FederationConfig federation;
  EvalConfig eval;
  std::uint64_t master_seed = 1;

  /// Applies derived fields (world seed, translator width) and validates.
  void finalize();
  void validate() const;
};

/// Child seeds of a run, all hash64(master_seed, tag(stream name)).
struct SeedPlan {
  std::uint64_t world = 0;
  std::uint64_t head = 0;
  std::uint64_t init = 0;
  std::uint64_t partition = 0;
  std::uint64_t data = 0;
  std::uint64_t selection = 0;
  std::uint64_t shuffle = 0;
  std::uint64_t eval = 0;
};

SeedPlan derive_seeds(std::uint64_t master_seed);

}  // namespace ftpg
