#include "ftpg/selfcheck.hpp"

#include <fmt/format.h>

#include "ftpg/encoders.hpp"
#include "ftpg/evaluation.hpp"
#include "ftpg/federation.hpp"
#include "ftpg/rng.hpp"
#include "ftpg/translator.hpp"

namespace ftpg {

namespace {

Tensor random_unit_rows(std::size_t rows, std::size_t d, Rng& rng) {
  Tensor t({rows, d});
  for (double& v : t.data()) v = rng.gaussian();
  return l2_normalize(t);
}

}  // namespace

GradCheckResult composite_gradcheck(std::uint64_t seed) {
  TranslatorConfig cfg;
  cfg.d_model = 16;
  cfg.n_ctx = 4;
  cfg.n_heads = 4;
  cfg.kv_len = 1;
  const FrozenTextHead head = build_text_head(cfg.d_model, hash64({seed, tag("head")}));
  Rng rng(hash64({seed, tag("inputs")}));
  const Tensor classes = random_unit_rows(3, cfg.d_model, rng);
  const Tensor images = random_unit_rows(2, cfg.d_model, rng);
  const std::vector<std::size_t> labels{0, 2};
  ParameterSet params = random_params(cfg, seed);
  return grad_check(
      [&](ParameterSet& p) { return contrastive_loss(bind(p), cfg, head, classes, images, labels, 0.01); }, params);
}

std::vector<CheckLine> fixture_checks() {
  const ReferenceFixture& fixture = reference_fixture();
  const auto ours = fixture_ours(fixture);
  const SummaryTable summary = summarize(ours);
  const ComparisonTable cmp = compare_to_reference(summary, fixture);

  std::vector<CheckLine> lines;
  auto expect = [&](std::string name, const std::string& got, const std::string& want) {
    lines.push_back({std::move(name), got == want, fmt::format("got {}, expected {}", got, want)});
  };
  expect("fixture base average", format2(summary.base_avg), "74.58");
  expect("fixture new average", format2(summary.new_avg), "76.00");
  expect("fixture gap average", format2(summary.gap_avg, true), "+1.43");
  expect("reference base average", format2(cmp.average.base_ref), "74.47");
  expect("reference new average", format2(cmp.average.new_ref), "76.23");
  expect("base delta", format2(cmp.average.base_delta, true), "+0.11");
  expect("new delta", format2(cmp.average.new_delta, true), "-0.23");
  expect("gap delta", format2(cmp.gap_delta, true), "-0.33");
  return lines;
}

}  // namespace ftpg
