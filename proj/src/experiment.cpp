#include "ftpg/experiment.hpp"

#include <fmt/format.h>

#include "ftpg/errors.hpp"
#include "ftpg/rng.hpp"

namespace ftpg {

void OptimizerConfig::validate() const {
  if (!(lr0 >= 0.0)) throw ConfigError("optimizer.lr0: must be non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("optimizer.momentum: must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("optimizer.weight_decay: must be non-negative");
  if (batch_size == 0) throw ConfigError("optimizer.batch_size: must be positive");
  if (!(temperature > 0.0)) throw ConfigError("optimizer.temperature: must be positive");
}

void FederationConfig::validate() const {
  if (n_clients == 0) throw ConfigError("federation.n_clients: must be positive");
  if (classes_per_client == 0) throw ConfigError("federation.classes_per_client: must be positive");
  if (shots == 0) throw ConfigError("federation.shots: must be positive");
  if (rounds == 0) throw ConfigError("federation.rounds: must be positive");
  if (local_epochs == 0) throw ConfigError("federation.local_epochs: must be positive");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("federation.fraction: must lie in (0, 1]");
  if (workers == 0) throw ConfigError("federation.workers: must be positive");
}

void ExperimentConfig::finalize() {
  world.seed = derive_seeds(master_seed).world;
  translator.d_model = world.d;
  validate();
}

void ExperimentConfig::validate() const {
  world.validate();
  translator.validate();
  optimizer.validate();
  federation.validate();
  if (translator.d_model != world.d) {
    throw ConfigError(fmt::format("world.d: translator width {} differs from world.d {}", translator.d_model, world.d));
  }
  if (translator.kv_len != 1) {
    throw ConfigError("translator.kv_len: the simulator supplies one embedding row per class, so it must be 1");
  }
  if (federation.n_clients * federation.classes_per_client > world.n_base) {
    throw ConfigError(fmt::format("federation.classes_per_client: {} clients x {} classes exceeds world.n_base = {}", federation.n_clients,
                                  federation.classes_per_client, world.n_base));
  }
  if (eval.n_test == 0) throw ConfigError("eval.n_test: must be positive");
}

SeedPlan derive_seeds(std::uint64_t master_seed) {
  auto child = [&](std::string_view name) { return hash64({master_seed, tag(name)}); };
  return {child("world"),     child("head"),      child("init"),    child("partition"),
          child("data"),      child("selection"), child("shuffle"), child("eval")};
}

}  // namespace ftpg
