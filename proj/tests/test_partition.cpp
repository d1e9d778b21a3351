#include <algorithm>
#include <numeric>
#include <set>

#include "doctest.h"
#include "ftpg/encoders.hpp"
#include "ftpg/errors.hpp"
#include "ftpg/partition.hpp"

using namespace ftpg;

namespace {

std::vector<std::size_t> iota_ids(std::size_t n) {
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

}  // namespace

TEST_CASE("partition covers exactly N*K base classes, disjointly") {
  const auto ids = iota_ids(60);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto specs = partition_classes(ids, 6, 10, seed);
    REQUIRE(specs.size() == 6);
    std::set<std::size_t> seen;
    for (std::size_t k = 0; k < 6; ++k) {
      CHECK(specs[k].client_id == k);
      CHECK(specs[k].class_ids.size() == 10);
      CHECK(std::is_sorted(specs[k].class_ids.begin(), specs[k].class_ids.end()));
      seen.insert(specs[k].class_ids.begin(), specs[k].class_ids.end());
    }
    CHECK(seen.size() == 60);
  }
}

TEST_CASE("partition examples") {
  const auto ids = iota_ids(60);
  SUBCASE("one client holds K classes") {
    const auto specs = partition_classes(ids, 1, 60, 4);
    CHECK(specs[0].class_ids == ids);
  }
  SUBCASE("three clients of twenty leave nothing over") {
    const auto specs = partition_classes(ids, 3, 20, 4);
    std::size_t total = 0;
    for (const auto& s : specs) total += s.class_ids.size();
    CHECK(total == 60);
  }
  SUBCASE("leftover classes stay unassigned") {
    const auto specs = partition_classes(ids, 4, 10, 4);
    std::set<std::size_t> seen;
    for (const auto& s : specs) seen.insert(s.class_ids.begin(), s.class_ids.end());
    CHECK(seen.size() == 40);
  }
  SUBCASE("over capacity") {
    try {
      partition_classes(ids, 7, 10, 4);
      FAIL("expected CapacityError");
    } catch (const CapacityError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("70") != std::string::npos);
      CHECK(msg.find("60") != std::string::npos);
    }
  }
  SUBCASE("degenerate requests") {
    CHECK_THROWS_AS(partition_classes(ids, 0, 10, 1), ContractError);
    CHECK_THROWS_AS(partition_classes(ids, 2, 0, 1), ContractError);
  }
  SUBCASE("seeded") {
    CHECK(partition_classes(ids, 6, 10, 9)[2].class_ids == partition_classes(ids, 6, 10, 9)[2].class_ids);
    bool any_diff = false;
    for (std::size_t k = 0; k < 6; ++k) {
      any_diff |= partition_classes(ids, 6, 10, 9)[k].class_ids != partition_classes(ids, 6, 10, 10)[k].class_ids;
    }
    CHECK(any_diff);
  }
}

TEST_CASE("client datasets") {
  WorldConfig wc;
  wc.d = 16;
  wc.n_base = 30;
  wc.n_new = 5;
  wc.seed = 7;
  const SyntheticWorld world = build_world(wc);

  SUBCASE("K*M samples with M per label") {
    const ClientSpec spec{2, {1, 4, 9, 11, 12, 15, 20, 21, 25, 29}};
    const FewShotSet set = build_client_dataset(world, spec, 8, 3);
    CHECK(set.size() == 80);
    CHECK(set.features.shape() == Shape{80, 16});
    CHECK(set.class_map == spec.class_ids);
    std::vector<std::size_t> counts(10, 0);
    for (auto l : set.labels) ++counts.at(l);
    for (auto c : counts) CHECK(c == 8);
  }
  SUBCASE("one shot") {
    const FewShotSet set = build_client_dataset(world, {0, {3, 5}}, 1, 3);
    CHECK(set.size() == 2);
    CHECK(set.labels == std::vector<std::size_t>{0, 1});
  }
  SUBCASE("deterministic") {
    const ClientSpec spec{1, {2, 3}};
    CHECK(bitwise_equal(build_client_dataset(world, spec, 4, 3).features,
                        build_client_dataset(world, spec, 4, 3).features));
    CHECK_FALSE(bitwise_equal(build_client_dataset(world, spec, 4, 3).features,
                              build_client_dataset(world, spec, 4, 4).features));
  }
  SUBCASE("a (client, class) stream does not depend on the other classes") {
    const FewShotSet a = build_client_dataset(world, {1, {2, 7}}, 3, 5);
    const FewShotSet b = build_client_dataset(world, {1, {7, 9, 10}}, 3, 5);
    for (std::size_t s = 0; s < 3; ++s) {
      const auto ra = a.features.row(3 + s), rb = b.features.row(s);
      CHECK(std::equal(ra.begin(), ra.end(), rb.begin()));
    }
    const FewShotSet other_client = build_client_dataset(world, {2, {7}}, 3, 5);
    CHECK_FALSE(std::equal(b.features.row(0).begin(), b.features.row(0).end(), other_client.features.row(0).begin()));
  }
  SUBCASE("invalid specs") {
    CHECK_THROWS_AS(build_client_dataset(world, {0, {}}, 2, 1), ContractError);
    CHECK_THROWS_AS(build_client_dataset(world, {0, {3}}, 0, 1), ContractError);
    CHECK_THROWS_AS(build_client_dataset(world, {0, {5, 3}}, 2, 1), ContractError);
    CHECK_THROWS_AS(build_client_dataset(world, {0, {31}}, 2, 1), ContractError);
  }
}
