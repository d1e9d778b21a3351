#include "ftpg/encoders.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "ftpg/container.hpp"
#include "ftpg/errors.hpp"

namespace ftpg {

namespace {

constexpr const char* kEmbeddingKind = "kind=embedding-table\n";

// Unit row of `source` perturbed by sigma * N(0, I/d), renormalised.
void perturb_row(std::span<const double> source, double sigma, Rng& rng, std::span<double> out) {
  const double step = sigma / std::sqrt(static_cast<double>(source.size()));
  for (std::size_t j = 0; j < source.size(); ++j) out[j] = source[j] + step * rng.gaussian();
  const double n = std::max(norm(out), kNormalizeEps);
  for (double& v : out) v /= n;
}

}  // namespace

void WorldConfig::validate() const {
  if (d == 0) throw ConfigError("world.d: must be positive");
  if (n_base < 2) {
    throw ConfigError(fmt::format("world.n_base: {} given but at least 2 base classes are needed to form new-class pairs",
                                  n_base));
  }
  if (!(sigma_img >= 0.0)) throw ConfigError("world.sigma_img: must be non-negative");
  if (!(sigma_text >= 0.0)) throw ConfigError("world.sigma_text: must be non-negative");
  if (!(interp_lo >= 0.0 && interp_lo <= interp_hi && interp_hi <= 1.0)) {
    throw ConfigError(fmt::format("world.interp_lo: interpolation range [{}, {}] must satisfy 0 <= lo <= hi <= 1", interp_lo,
                                  interp_hi));
  }
}

Tensor SyntheticWorld::center(std::size_t class_id) const {
  if (class_id >= num_classes()) {
    throw IndexError(fmt::format("class id {} out of range ({} classes)", class_id, num_classes()));
  }
  const auto r = centers.row(class_id);
  return Tensor::vector({r.begin(), r.end()});
}

Tensor SyntheticWorld::class_embedding(std::size_t class_id) const {
  if (class_id >= num_classes()) {
    throw IndexError(fmt::format("class id {} out of range ({} classes)", class_id, num_classes()));
  }
  const auto r = class_embeddings.row(class_id);
  return Tensor::vector({r.begin(), r.end()});
}

std::uint64_t SyntheticWorld::checksum() const {
  return ftpg::checksum(class_embeddings, ftpg::checksum(centers, config.seed));
}

SyntheticWorld build_world(const WorldConfig& config) {
  config.validate();
  const std::size_t d = config.d, total = config.n_base + config.n_new;
  SyntheticWorld world;
  world.config = config;
  world.centers = Tensor({total, d});

  Rng center_rng(hash64({config.seed, tag("centers")}));
  for (std::size_t c = 0; c < config.n_base; ++c) {
    auto row = world.centers.row(c);
    for (double& v : row) v = center_rng.gaussian();
    const double n = std::max(norm(row), kNormalizeEps);
    for (double& v : row) v /= n;
    world.base_ids.push_back(c);
  }

  Rng pair_rng(hash64({config.seed, tag("new-pairs")}));
  for (std::size_t k = 0; k < config.n_new; ++k) {
    const std::size_t a = pair_rng.below(config.n_base);
    std::size_t b = pair_rng.below(config.n_base - 1);
    if (b >= a) ++b;
    const double lambda = pair_rng.uniform(config.interp_lo, config.interp_hi);
    const std::size_t c = config.n_base + k;
    auto row = world.centers.row(c);
    const auto ra = world.centers.row(a);
    const auto rb = world.centers.row(b);
    for (std::size_t j = 0; j < d; ++j) row[j] = lambda * ra[j] + (1.0 - lambda) * rb[j];
    const double n = std::max(norm(row), kNormalizeEps);
    for (double& v : row) v /= n;
    world.new_ids.push_back(c);
    world.new_parents.emplace_back(a, b);
  }

  world.class_embeddings = world.centers;
  if (config.sigma_text > 0.0) {
    for (std::size_t c = 0; c < total; ++c) {
      Rng rng(hash64({config.seed, tag("text-noise"), c}));
      perturb_row(world.centers.row(c), config.sigma_text, rng, world.class_embeddings.row(c));
    }
  }
  return world;
}

Tensor sample_image(const SyntheticWorld& world, std::size_t class_id, Rng& rng) {
  Tensor out = world.center(class_id);
  if (world.config.sigma_img > 0.0) {
    const Tensor center = out;
    perturb_row(center.data(), world.config.sigma_img, rng, out.data());
  }
  return out;
}

std::uint64_t FrozenTextHead::checksum() const { return ftpg::checksum(w2, ftpg::checksum(w1)); }

FrozenTextHead build_text_head(std::size_t d, std::uint64_t seed) {
  const double stddev = 1.0 / std::sqrt(static_cast<double>(d));
  FrozenTextHead head{Tensor({d, d}), Tensor({d, d})};
  Rng r1(hash64({seed, tag("w1")}));
  for (double& v : head.w1.data()) v = stddev * r1.gaussian();
  Rng r2(hash64({seed, tag("w2")}));
  for (double& v : head.w2.data()) v = stddev * r2.gaussian();
  return head;
}

Var text_feature(const FrozenTextHead& head, const Var& ctx, const Var& class_emb) {
  const std::size_t d = head.w1.dim(0);
  if (ctx.shape().size() != 2 || ctx.shape()[1] != d) {
    throw DimensionError(fmt::format("text_feature: context must be [m x {}], got {}", d, shape_str(ctx.shape())));
  }
  if (class_emb.shape() != Shape{1, d}) {
    throw DimensionError(fmt::format("text_feature: class embedding must be [1 x {}], got {}", d,
                                     shape_str(class_emb.shape())));
  }
  const Var pooled = mean_rows(ctx);
  const Var correction = matmul(gelu(matmul(pooled, constant(head.w1))), constant(head.w2));
  return l2_normalize(add(class_emb, correction));
}

Tensor text_feature(const FrozenTextHead& head, const Tensor& ctx, const Tensor& class_emb) {
  const std::size_t d = head.w1.dim(0);
  if (class_emb.size() != d) {
    throw DimensionError(fmt::format("text_feature: class embedding has {} values, expected {}", class_emb.size(), d));
  }
  return text_feature(head, constant(ctx), constant(class_emb.reshaped({1, d}))).value();
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table) {
  if (table.values.rank() != 2 || table.values.dim(0) != table.class_ids.size()) {
    throw DimensionError("embedding table: need one [rows x d] value row per class id");
  }
  std::vector<double> ids(table.class_ids.begin(), table.class_ids.end());
  Container c;
  c.tensors.push_back({"class_ids", Tensor::vector(std::move(ids))});
  c.tensors.push_back({"embeddings", table.values});
  c.text = kEmbeddingKind;
  write_container(path, c);
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  const Container c = decode_container(read_file(path));
  if (c.text != kEmbeddingKind) throw FormatError("container is not an embedding table", 0);
  const Tensor* ids = c.find("class_ids");
  const Tensor* values = c.find("embeddings");
  if (!ids || !values || c.tensors.size() != 2) {
    throw FormatError("embedding table needs exactly the tensors 'class_ids' and 'embeddings'", 0);
  }
  if (ids->rank() != 1 || values->rank() != 2 || values->dim(0) != ids->size()) {
    throw FormatError(fmt::format("embedding table shapes disagree: ids {} vs embeddings {}", shape_str(ids->shape()),
                                  shape_str(values->shape())),
                      0);
  }
  EmbeddingTable table;
  table.values = *values;
  for (std::size_t r = 0; r < ids->size(); ++r) {
    const double id = (*ids)[r];
    if (!std::isfinite(id) || id < 0.0 || std::floor(id) != id) {
      throw DataError(fmt::format("embedding table row {}: class id {} is not a non-negative integer", r, id));
    }
    table.class_ids.push_back(static_cast<std::size_t>(id));
    auto row = table.values.row(r);
    for (double v : row) {
      if (!std::isfinite(v)) throw DataError(fmt::format("embedding table row {}: non-finite entry", r));
    }
    const double n = norm(row);
    if (std::abs(n - 1.0) > 1e-6) {
      const double denom = std::max(n, kNormalizeEps);
      for (double& v : row) v /= denom;
    }
  }
  return table;
}

SyntheticWorld with_class_embeddings(SyntheticWorld world, const EmbeddingTable& table) {
  const std::size_t total = world.num_classes();
  if (table.values.last_dim() != world.dim()) {
    throw DimensionError(fmt::format("embedding table dimension {} does not match world dimension {}",
                                     table.values.last_dim(), world.dim()));
  }
  std::vector<bool> seen(total, false);
  for (std::size_t r = 0; r < table.class_ids.size(); ++r) {
    const std::size_t id = table.class_ids[r];
    if (id >= total || seen[id]) {
      throw DataError(fmt::format("embedding table row {}: class id {} is out of range or repeated", r, id));
    }
    seen[id] = true;
    const auto src = table.values.row(r);
    std::copy(src.begin(), src.end(), world.class_embeddings.row(id).begin());
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw DataError(fmt::format("embedding table covers {} of {} classes", table.class_ids.size(), total));
  }
  return world;
}

}  // namespace ftpg
