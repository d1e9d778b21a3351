#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "ftpg/autograd.hpp"
#include "ftpg/rng.hpp"
#include "ftpg/tensor.hpp"
#include "ftpg/translator.hpp"

namespace ftpg {

struct WorldConfig {
  std::size_t d = 32;
  std::size_t n_base = 60;
  std::size_t n_new = 20;
  // Noise scales are expected norms: the perturbation is sigma * g with
  // g ~ N(0, I/d), so a given sigma means the same thing at any d.
  double sigma_img = 0.5;
  double sigma_text = 2.5;
  double interp_lo = 0.3;
  double interp_hi = 0.7;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Seeded stand-in for a frozen vision-language embedding space.
struct SyntheticWorld {
  WorldConfig config;
  Tensor centers;           // [classes x d], unit rows
  Tensor class_embeddings;  // [classes x d], unit rows
  std::vector<std::size_t> base_ids;
  std::vector<std::size_t> new_ids;
  // Parent base classes of each new class, aligned with new_ids.
  std::vector<std::pair<std::size_t, std::size_t>> new_parents;

  std::size_t num_classes() const noexcept { return centers.dim(0); }
  std::size_t dim() const noexcept { return centers.last_dim(); }
  Tensor center(std::size_t class_id) const;
  Tensor class_embedding(std::size_t class_id) const;
  std::uint64_t checksum() const;
};

SyntheticWorld build_world(const WorldConfig& config);

/// Feature of one image of `class_id`: l2_normalize(center + sigma_img * g).
/// Returns the center itself when sigma_img is zero.
Tensor sample_image(const SyntheticWorld& world, std::size_t class_id, Rng& rng);

/// Frozen residual text head. Never updated; treated as constants in graphs.
struct FrozenTextHead {
  Tensor w1;  // [d x d]
  Tensor w2;  // [d x d]

  std::uint64_t checksum() const;
};

FrozenTextHead build_text_head(std::size_t d, std::uint64_t seed);

/// l2_normalize(class_emb + gelu(meanpool(ctx) * w1) * w2), a [1 x d] row.
/// Differentiable with respect to ctx and class_emb.
Var text_feature(const FrozenTextHead& head, const Var& ctx, const Var& class_emb);
Tensor text_feature(const FrozenTextHead& head, const Tensor& ctx, const Tensor& class_emb);

/// Externally supplied class embeddings, one row per class.
struct EmbeddingTable {
  std::vector<std::size_t> class_ids;
  Tensor values;  // [rows x d]
};

/// Stores the table in the shared tensor container.
void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table);

/// Reads a table; rows further than 1e-6 from unit norm are normalised.
/// Throws FormatError (with byte offset) or DataError (with row index).
EmbeddingTable load_embeddings(const std::filesystem::path& path);

/// Replaces the world's class embeddings with a loaded table. The table must
/// cover every class id exactly once at the world's dimension.
SyntheticWorld with_class_embeddings(SyntheticWorld world, const EmbeddingTable& table);

}  // namespace ftpg
