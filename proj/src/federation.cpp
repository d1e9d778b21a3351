#include "ftpg/federation.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numbers>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "ftpg/errors.hpp"

namespace ftpg {

double cosine_lr(double lr0, std::size_t t, std::size_t total) {
  if (total == 0) throw ContractError("cosine_lr: total rounds must be at least 1");
  if (t > total) throw ContractError(fmt::format("cosine_lr: step {} is past the end of the schedule ({})", t, total));
  const double progress = static_cast<double>(t) / static_cast<double>(total);
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

OptimizerState OptimizerState::zeros_like(const ParameterSet& params) {
  OptimizerState state;
  for (const auto& [name, p] : params) state.velocity.emplace(name, Tensor(p.value.shape()));
  return state;
}

void sgd_step(ParameterSet& params, OptimizerState& state, double lr, const OptimizerConfig& opt) {
  if (state.velocity.size() != params.count()) {
    throw SchemaError("sgd_step: optimizer state does not match the parameter set");
  }
  for (const auto& [name, p] : params) {
    if (!p.grad_ready) throw ContractError(fmt::format("sgd_step: parameter '{}' has no gradient", name));
    auto it = state.velocity.find(name);
    if (it == state.velocity.end() || it->second.shape() != p.value.shape()) {
      throw SchemaError(fmt::format("sgd_step: no matching velocity for '{}'", name));
    }
  }
  for (auto& [name, p] : params) {
    auto v = state.velocity.find(name)->second.data();
    auto theta = p.value.data();
    const auto grad = p.grad.data();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = grad[i] + opt.weight_decay * theta[i];
      v[i] = opt.momentum * v[i] + g;
      theta[i] -= lr * v[i];
    }
  }
}

Var contrastive_loss(const TranslatorVars& vars, const TranslatorConfig& config, const FrozenTextHead& head,
                     const Tensor& class_emb, const Tensor& images, std::span<const std::size_t> labels,
                     double temperature) {
  if (config.kv_len != 1) {
    throw ContractError("contrastive_loss: expects one embedding row per class (kv_len = 1)");
  }
  const std::size_t d = config.d_model;
  if (class_emb.rank() != 2 || class_emb.last_dim() != d || images.rank() != 2 || images.last_dim() != d) {
    throw DimensionError(fmt::format("contrastive_loss: class embeddings {} and images {} must both be [n x {}]",
                                     shape_str(class_emb.shape()), shape_str(images.shape()), d));
  }
  std::vector<Var> text;
  text.reserve(class_emb.dim(0));
  for (std::size_t k = 0; k < class_emb.dim(0); ++k) {
    const auto row = class_emb.row(k);
    const Var emb = constant(Tensor({1, d}, std::vector<double>(row.begin(), row.end())));
    text.push_back(text_feature(head, generate_context(vars, config, emb), emb));
  }
  const Var logits = scale(matmul(constant(images), transpose(concat_rows(text))), 1.0 / temperature);
  return cross_entropy(logits, labels);
}

ClientUpdate local_update(const ParameterSet& theta_global, const ClientData& client, const SyntheticWorld& world,
                          const FrozenTextHead& head, const TranslatorConfig& translator, const OptimizerConfig& opt,
                          double lr, std::size_t epochs, Rng& rng) {
  const FewShotSet& data = client.data;
  if (data.size() == 0) {
    throw ContractError(fmt::format("local_update: client {} has an empty dataset", client.spec.client_id));
  }
  if (epochs == 0) throw ContractError("local_update: need at least one epoch");
  require_translator_schema(theta_global, translator);

  const std::size_t d = world.dim();
  Tensor class_emb({data.class_map.size(), d});
  for (std::size_t k = 0; k < data.class_map.size(); ++k) {
    const auto src = world.class_embeddings.row(data.class_map[k]);
    std::copy(src.begin(), src.end(), class_emb.row(k).begin());
  }

  ClientUpdate update{client.spec.client_id, theta_global, data.size(), 0.0};
  ParameterSet& theta = update.params;
  OptimizerState state = OptimizerState::zeros_like(theta);

  std::vector<std::size_t> order(data.size());
  double loss_total = 0.0;
  std::size_t batches = 0;
  for (std::size_t e = 0; e < epochs; ++e) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
      const std::size_t n = std::min(opt.batch_size, order.size() - start);
      Tensor images({n, d});
      std::vector<std::size_t> labels(n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t idx = order[start + i];
        const auto src = data.features.row(idx);
        std::copy(src.begin(), src.end(), images.row(i).begin());
        labels[i] = data.labels[idx];
      }
      const Var loss =
          contrastive_loss(bind(theta), translator, head, class_emb, images, labels, opt.temperature);
      theta.zero_grad();
      backward(loss);
      sgd_step(theta, state, lr, opt);
      loss_total += loss.value()[0];
      ++batches;
    }
  }
  update.mean_loss = loss_total / static_cast<double>(batches);
  return update;
}

std::vector<std::size_t> select_clients(std::size_t n_clients, double fraction, std::size_t round,
                                        std::uint64_t seed) {
  if (n_clients == 0) throw ContractError("select_clients: no clients");
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ContractError(fmt::format("select_clients: fraction {} outside (0, 1]", fraction));
  }
  const auto wanted = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n_clients)));
  const std::size_t count = std::clamp<std::size_t>(wanted, 1, n_clients);
  std::vector<std::size_t> ids(n_clients);
  for (std::size_t i = 0; i < n_clients; ++i) ids[i] = i;
  Rng rng(hash64({seed, round}));
  // Partial Fisher-Yates: the first `count` slots become a uniform sample.
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(n_clients - i));
    std::swap(ids[i], ids[j]);
  }
  ids.resize(count);
  std::sort(ids.begin(), ids.end());
  return ids;
}

ParameterSet fedavg(std::span<const ClientUpdate> updates) {
  if (updates.empty()) throw AggregationError("fedavg: no client updates to aggregate");
  std::vector<const ClientUpdate*> sorted;
  sorted.reserve(updates.size());
  for (const auto& u : updates) sorted.push_back(&u);
  std::sort(sorted.begin(), sorted.end(),
            [](const ClientUpdate* a, const ClientUpdate* b) { return a->client_id < b->client_id; });

  const Schema schema = sorted.front()->params.schema();
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i]->client_id == sorted[i - 1]->client_id) {
      throw AggregationError(fmt::format("fedavg: client {} submitted more than one update", sorted[i]->client_id));
    }
    if (sorted[i]->params.schema() != schema) {
      throw AggregationError(fmt::format("fedavg: client {} and client {} have different parameter schemas",
                                         sorted.front()->client_id, sorted[i]->client_id));
    }
  }

  // Running mean m_k = m_{k-1} + (x_k - m_{k-1}) / k: a single update or k
  // identical updates come back bit-for-bit unchanged.
  ParameterSet mean = sorted.front()->params;
  for (std::size_t k = 1; k < sorted.size(); ++k) {
    const double inv = 1.0 / static_cast<double>(k + 1);
    for (auto& [name, p] : mean) {
      auto dst = p.value.data();
      const auto src = sorted[k]->params.at(name).value.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += (src[i] - dst[i]) * inv;
    }
  }
  mean.zero_grad();
  return mean;
}

std::string to_json_line(const RoundLog& log) {
  nlohmann::ordered_json j;
  j["t"] = log.round;
  j["lr"] = log.lr;
  j["selected"] = log.selected;
  j["mean_loss"] = log.mean_loss;
  return j.dump();
}

Federation build_federation(const ExperimentConfig& config, const EmbeddingTable* embeddings) {
  config.validate();
  const SeedPlan seeds = derive_seeds(config.master_seed);
  Federation fed;
  fed.world = build_world(config.world);
  if (embeddings) fed.world = with_class_embeddings(std::move(fed.world), *embeddings);
  fed.head = build_text_head(config.world.d, seeds.head);
  const auto specs = partition_classes(fed.world.base_ids, config.federation.n_clients,
                                       config.federation.classes_per_client, seeds.partition);
  for (const auto& spec : specs) {
    fed.clients.push_back({spec, build_client_dataset(fed.world, spec, config.federation.shots, seeds.data)});
  }
  return fed;
}

Rng client_round_rng(const ExperimentConfig& config, std::size_t round, std::size_t client_id) {
  return Rng(hash64({derive_seeds(config.master_seed).shuffle, round, client_id}));
}

TrainingResult run_training(const ExperimentConfig& config, const Federation& federation,
                            const RoundCallback& on_round) {
  config.validate();
  const SeedPlan seeds = derive_seeds(config.master_seed);
  const auto& fc = config.federation;

  TrainingResult result;
  result.params = init_params(config.translator, seeds.init);

  for (std::size_t t = 0; t < fc.rounds; ++t) {
    RoundLog log;
    log.round = t + 1;
    log.lr = cosine_lr(config.optimizer.lr0, t, fc.rounds);
    log.selected = select_clients(fc.n_clients, fc.fraction, t, seeds.selection);

    std::vector<ClientUpdate> updates(log.selected.size());
    std::vector<std::exception_ptr> errors(log.selected.size());
    auto work = [&](std::size_t slot) {
      try {
        const std::size_t id = log.selected[slot];
        Rng rng = client_round_rng(config, t, id);
        updates[slot] = local_update(result.params, federation.clients.at(id), federation.world, federation.head,
                                     config.translator, config.optimizer, log.lr, fc.local_epochs, rng);
      } catch (...) {
        errors[slot] = std::current_exception();
      }
    };
    const std::size_t workers = std::min(fc.workers, log.selected.size());
    if (workers <= 1) {
      for (std::size_t s = 0; s < log.selected.size(); ++s) work(s);
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          for (std::size_t s = w; s < log.selected.size(); s += workers) work(s);
        });
      }
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }

    for (const auto& u : updates) log.mean_loss.push_back(u.mean_loss);
    result.params = fedavg(updates);
    if (on_round) on_round(log, result.params);
    result.logs.push_back(std::move(log));
  }
  return result;
}

}  // namespace ftpg
