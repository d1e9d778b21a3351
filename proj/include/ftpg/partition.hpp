#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ftpg/encoders.hpp"
#include "ftpg/tensor.hpp"

namespace ftpg {

struct ClientSpec {
  std::size_t client_id = 0;
  std::vector<std::size_t> class_ids;  // sorted, unique, all base classes
};

/// M-shot training data of one client. Labels index into class_map, the
/// client's own label space.
struct FewShotSet {
  Tensor features;  // [K*M x d]
  std::vector<std::size_t> labels;
  std::vector<std::size_t> class_map;  // local label -> global class id

  std::size_t size() const noexcept { return labels.size(); }
};

/// Seeded shuffle of base_ids cut into n_clients consecutive blocks of
/// classes_per_client. Leftover classes stay unassigned.
std::vector<ClientSpec> partition_classes(std::span<const std::size_t> base_ids, std::size_t n_clients,
                                          std::size_t classes_per_client, std::uint64_t seed);

/// `shots` draws per class, each class from the stream hash64(seed, client, class).
FewShotSet build_client_dataset(const SyntheticWorld& world, const ClientSpec& spec, std::size_t shots,
                                std::uint64_t seed);

}  // namespace ftpg
