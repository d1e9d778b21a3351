#include <cmath>

#include "doctest.h"
#include "ftpg/container.hpp"
#include "ftpg/encoders.hpp"
#include "ftpg/errors.hpp"
#include "support.hpp"

using namespace ftpg;
using ftpg::testing::TempDir;

namespace {

WorldConfig small_world(std::uint64_t seed = 3) {
  WorldConfig c;
  c.d = 16;
  c.n_base = 12;
  c.n_new = 5;
  c.seed = seed;
  return c;
}

double row_norm(const Tensor& t, std::size_t r) { return norm(t.row(r)); }

}  // namespace

TEST_CASE("world shapes, unit rows and determinism") {
  const SyntheticWorld w = build_world(small_world());
  CHECK(w.centers.shape() == Shape{17, 16});
  CHECK(w.class_embeddings.shape() == Shape{17, 16});
  CHECK(w.base_ids.size() == 12);
  CHECK(w.new_ids.size() == 5);
  CHECK(w.new_ids.front() == 12);
  for (std::size_t r = 0; r < 17; ++r) {
    CHECK(std::abs(row_norm(w.centers, r) - 1.0) <= 1e-12);
    CHECK(std::abs(row_norm(w.class_embeddings, r) - 1.0) <= 1e-12);
  }
  const SyntheticWorld again = build_world(small_world());
  CHECK(bitwise_equal(w.centers, again.centers));
  CHECK(bitwise_equal(w.class_embeddings, again.class_embeddings));
  CHECK(w.checksum() == again.checksum());
  CHECK(w.checksum() != build_world(small_world(4)).checksum());
}

TEST_CASE("new classes lie between their two parents") {
  const SyntheticWorld w = build_world(small_world());
  for (std::size_t k = 0; k < w.new_ids.size(); ++k) {
    const auto [a, b] = w.new_parents[k];
    CHECK(a != b);
    CHECK(a < 12);
    CHECK(b < 12);
    const auto c = w.centers.row(w.new_ids[k]);
    const double ab = dot(w.centers.row(a), w.centers.row(b));
    CHECK(dot(c, w.centers.row(a)) >= ab - 1e-12);
    CHECK(dot(c, w.centers.row(b)) >= ab - 1e-12);
  }
}

TEST_CASE("text noise") {
  WorldConfig c = small_world();
  c.sigma_text = 0.0;
  const SyntheticWorld clean = build_world(c);
  CHECK(bitwise_equal(clean.centers, clean.class_embeddings));
  const SyntheticWorld noisy = build_world(small_world());
  CHECK(bitwise_equal(clean.centers, noisy.centers));
  CHECK_FALSE(bitwise_equal(noisy.centers, noisy.class_embeddings));
}

TEST_CASE("world validation") {
  WorldConfig c = small_world();
  c.n_base = 1;
  CHECK_THROWS_AS(build_world(c), ConfigError);
  c = small_world();
  c.sigma_img = -1.0;
  CHECK_THROWS_AS(build_world(c), ConfigError);
  c = small_world();
  c.interp_lo = 0.8;
  CHECK_THROWS_AS(build_world(c), ConfigError);
}

TEST_CASE("sample_image") {
  WorldConfig c = small_world();
  SUBCASE("zero noise returns the center") {
    c.sigma_img = 0.0;
    const SyntheticWorld w = build_world(c);
    Rng rng(1);
    CHECK(bitwise_equal(sample_image(w, 2, rng), w.center(2)));
  }
  SUBCASE("unit norm, seeded") {
    const SyntheticWorld w = build_world(c);
    Rng r1(5), r2(5);
    const Tensor a = sample_image(w, 3, r1), b = sample_image(w, 3, r2);
    CHECK(bitwise_equal(a, b));
    CHECK(std::abs(norm(a.data()) - 1.0) <= 1e-12);
  }
  SUBCASE("small noise stays close to the center") {
    c.sigma_img = 0.1;
    const SyntheticWorld w = build_world(c);
    Rng rng(7);
    double total = 0.0;
    for (int i = 0; i < 2000; ++i) total += dot(sample_image(w, 1, rng).data(), w.centers.row(1));
    CHECK(total / 2000 > 0.99);
  }
  SUBCASE("bad class id") {
    const SyntheticWorld w = build_world(c);
    Rng rng(1);
    CHECK_THROWS_AS(sample_image(w, 17, rng), IndexError);
  }
}

TEST_CASE("text_feature") {
  SUBCASE("zero context returns the class embedding for 100 classes") {
    const FrozenTextHead head = build_text_head(32, 9);
    WorldConfig c;
    c.n_base = 80;
    c.n_new = 20;
    c.seed = 2;
    const SyntheticWorld w = build_world(c);
    const Tensor ctx({4, 32});
    double worst = 0.0;
    for (std::size_t k = 0; k < 100; ++k) {
      const Tensor f = text_feature(head, ctx, w.class_embedding(k));
      for (std::size_t j = 0; j < 32; ++j) worst = std::max(worst, std::abs(f[j] - w.class_embeddings.at(k, j)));
    }
    CHECK(worst <= 1e-12);
  }
  SUBCASE("unit norm for arbitrary context") {
    const FrozenTextHead head = build_text_head(8, 1);
    Rng rng(3);
    Tensor ctx({2, 8}), emb({8});
    for (double& v : ctx.data()) v = 5 * rng.gaussian();
    for (double& v : emb.data()) v = rng.gaussian();
    const Tensor f = text_feature(head, ctx, l2_normalize(emb));
    CHECK(f.shape() == Shape{1, 8});
    CHECK(std::abs(norm(f.data()) - 1.0) <= 1e-12);
  }
  SUBCASE("shape errors") {
    const FrozenTextHead head = build_text_head(8, 1);
    CHECK_THROWS_AS(text_feature(head, Tensor({2, 4}), Tensor({8})), DimensionError);
    CHECK_THROWS_AS(text_feature(head, Tensor({2, 8}), Tensor({4})), DimensionError);
  }
  SUBCASE("head is deterministic") {
    CHECK(build_text_head(8, 1).checksum() == build_text_head(8, 1).checksum());
    CHECK(build_text_head(8, 1).checksum() != build_text_head(8, 2).checksum());
  }
}

TEST_CASE("embedding tables") {
  TempDir dir;
  const SyntheticWorld w = build_world(small_world());
  EmbeddingTable table;
  for (std::size_t k = 0; k < 17; ++k) table.class_ids.push_back(16 - k);
  table.values = Tensor({17, 16});
  for (std::size_t k = 0; k < 17; ++k) {
    const auto src = w.class_embeddings.row(16 - k);
    std::copy(src.begin(), src.end(), table.values.row(k).begin());
  }

  SUBCASE("round trip and substitution") {
    save_embeddings(dir / "emb.ftpg", table);
    const EmbeddingTable back = load_embeddings(dir / "emb.ftpg");
    CHECK(back.class_ids == table.class_ids);
    CHECK(bitwise_equal(back.values, table.values));
    const SyntheticWorld w2 = with_class_embeddings(w, back);
    CHECK(bitwise_equal(w2.class_embeddings, w.class_embeddings));
  }
  SUBCASE("truncated file") {
    save_embeddings(dir / "emb.ftpg", table);
    const std::string bytes = read_file(dir / "emb.ftpg");
    write_file_atomic(dir / "cut.ftpg", bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(load_embeddings(dir / "cut.ftpg"), FormatError);
  }
  SUBCASE("a row of norm 2 is normalised") {
    for (double& v : table.values.row(4)) v *= 2.0;
    save_embeddings(dir / "emb.ftpg", table);
    const EmbeddingTable back = load_embeddings(dir / "emb.ftpg");
    CHECK(std::abs(norm(back.values.row(4)) - 1.0) <= 1e-12);
    CHECK(std::abs(back.values.at(4, 0) - table.values.at(4, 0) / 2.0) <= 1e-15);
  }
  SUBCASE("NaN entry names its row") {
    table.values.at(6, 2) = std::nan("");
    save_embeddings(dir / "emb.ftpg", table);
    try {
      load_embeddings(dir / "emb.ftpg");
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("row 6") != std::string::npos);
    }
  }
  SUBCASE("incomplete or repeated coverage") {
    EmbeddingTable partial = table;
    partial.class_ids.pop_back();
    partial.values = Tensor({16, 16}, std::vector<double>(table.values.data().begin(), table.values.data().end() - 16));
    CHECK_THROWS_AS(with_class_embeddings(w, partial), DataError);
    EmbeddingTable repeated = table;
    repeated.class_ids[1] = repeated.class_ids[0];
    CHECK_THROWS_AS(with_class_embeddings(w, repeated), DataError);
  }
  SUBCASE("wrong dimension") {
    EmbeddingTable narrow{table.class_ids, Tensor({17, 8}, 0.25)};
    CHECK_THROWS_AS(with_class_embeddings(w, narrow), DimensionError);
  }
  SUBCASE("a checkpoint-like container is not an embedding table") {
    Container c;
    c.tensors.push_back({"class_ids", Tensor::vector({0})});
    c.tensors.push_back({"embeddings", Tensor({1, 16})});
    write_container(dir / "other.ftpg", c);
    CHECK_THROWS_AS(load_embeddings(dir / "other.ftpg"), FormatError);
  }
}
