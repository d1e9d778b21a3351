#include "ftpg/partition.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "ftpg/errors.hpp"
#include "ftpg/rng.hpp"

namespace ftpg {

std::vector<ClientSpec> partition_classes(std::span<const std::size_t> base_ids, std::size_t n_clients,
                                          std::size_t classes_per_client, std::uint64_t seed) {
  if (n_clients == 0 || classes_per_client == 0) {
    throw ContractError("partition: need at least one client and one class per client");
  }
  if (n_clients * classes_per_client > base_ids.size()) {
    throw CapacityError(fmt::format("partition: {} clients x {} classes = {} exceeds the {} base classes", n_clients,
                                    classes_per_client, n_clients * classes_per_client, base_ids.size()));
  }
  std::vector<std::size_t> pool(base_ids.begin(), base_ids.end());
  Rng rng(seed);
  rng.shuffle(pool);

  std::vector<ClientSpec> specs(n_clients);
  for (std::size_t k = 0; k < n_clients; ++k) {
    specs[k].client_id = k;
    const auto first = pool.begin() + static_cast<std::ptrdiff_t>(k * classes_per_client);
    specs[k].class_ids.assign(first, first + static_cast<std::ptrdiff_t>(classes_per_client));
    std::sort(specs[k].class_ids.begin(), specs[k].class_ids.end());
  }
  return specs;
}

FewShotSet build_client_dataset(const SyntheticWorld& world, const ClientSpec& spec, std::size_t shots,
                                std::uint64_t seed) {
  if (spec.class_ids.empty() || shots == 0) {
    throw ContractError(fmt::format("client {}: needs at least one class and one shot", spec.client_id));
  }
  if (!std::is_sorted(spec.class_ids.begin(), spec.class_ids.end()) ||
      std::adjacent_find(spec.class_ids.begin(), spec.class_ids.end()) != spec.class_ids.end()) {
    throw ContractError(fmt::format("client {}: class ids must be sorted and unique", spec.client_id));
  }
  for (auto id : spec.class_ids) {
    if (!std::binary_search(world.base_ids.begin(), world.base_ids.end(), id)) {
      throw ContractError(fmt::format("client {}: class {} is not a base class", spec.client_id, id));
    }
  }

  const std::size_t d = world.dim();
  FewShotSet set;
  set.class_map = spec.class_ids;
  set.features = Tensor({spec.class_ids.size() * shots, d});
  std::size_t row = 0;
  for (std::size_t local = 0; local < spec.class_ids.size(); ++local) {
    const std::size_t class_id = spec.class_ids[local];
    Rng rng(hash64({seed, spec.client_id, class_id}));
    for (std::size_t s = 0; s < shots; ++s, ++row) {
      const Tensor feature = sample_image(world, class_id, rng);
      std::copy(feature.data().begin(), feature.data().end(), set.features.row(row).begin());
      set.labels.push_back(local);
    }
  }
  return set;
}

}  // namespace ftpg
