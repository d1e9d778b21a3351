#include <cmath>
#include <regex>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "ftpg/container.hpp"
#include "ftpg/errors.hpp"
#include "ftpg/evaluation.hpp"
#include "ftpg/experiment.hpp"
#include "support.hpp"

using namespace ftpg;
using ftpg::testing::TempDir;

namespace {

SyntheticWorld small_world(double sigma_img, double sigma_text, std::size_t n_new = 5) {
  WorldConfig c;
  c.d = 16;
  c.n_base = 10;
  c.n_new = n_new;
  c.sigma_img = sigma_img;
  c.sigma_text = sigma_text;
  c.seed = 8;
  return build_world(c);
}

TranslatorConfig small_translator() {
  TranslatorConfig t;
  t.d_model = 16;
  return t;
}

struct Bar {
  std::string dataset, split;
  double height;
  std::string fill;
};

std::vector<Bar> bars(const std::string& svg) {
  static const std::regex re(
      R"re(<rect class="bar" data-dataset="([^"]*)"(?: data-split="([^"]*)")? data-value="[^"]*" x="[^"]*" y="[^"]*" width="[^"]*" height="([^"]*)" fill="([^"]*)"/>)re");
  std::vector<Bar> out;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), re); it != std::sregex_iterator(); ++it) {
    out.push_back({(*it)[1], (*it)[2], std::stod((*it)[3]), (*it)[4]});
  }
  return out;
}

}  // namespace

TEST_CASE("accuracy_percent") {
  const std::vector<std::size_t> pred{0, 1, 2, 2}, labels{0, 1, 2, 3};
  CHECK(accuracy_percent(pred, labels) == 75.0);
  CHECK(accuracy_percent(labels, labels) == 100.0);
  CHECK_THROWS_AS(accuracy_percent(pred, std::vector<std::size_t>{0}), ContractError);
  CHECK_THROWS_AS(accuracy_percent(std::vector<std::size_t>{}, std::vector<std::size_t>{}), ContractError);
}

TEST_CASE("generalization gap") {
  CHECK(generalization_gap(70.0, 75.5) == 5.5);
  CHECK(generalization_gap(97.2, 95.2) == doctest::Approx(-2.0));
  for (double a : {0.0, 31.5, 62.62, 100.0}) {
    for (double b : {0.0, 35.7, 60.51, 100.0}) CHECK(generalization_gap(a, b) == -generalization_gap(b, a));
  }
  const EvalResult r = EvalResult::make("x", 62.62, 60.51);
  CHECK(r.gap == 60.51 - 62.62);
}

TEST_CASE("evaluation on synthetic worlds") {
  SUBCASE("noise-free world classifies perfectly") {
    const SyntheticWorld w = small_world(0.0, 0.0);
    const FrozenTextHead head = build_text_head(16, 1);
    const TranslatorConfig cfg = small_translator();
    CHECK(evaluate_zero_context(w, head, cfg, Split::kBase, 5, 0.01, 3) == 100.0);
    CHECK(evaluate_zero_context(w, head, cfg, Split::kNew, 5, 0.01, 3) == 100.0);
  }
  SUBCASE("text features equal to the image centers give 100%") {
    const SyntheticWorld w = small_world(0.0, 2.5);
    const auto& ids = split_ids(w, Split::kBase);
    Tensor text({ids.size(), 16});
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto src = w.centers.row(ids[i]);
      std::copy(src.begin(), src.end(), text.row(i).begin());
    }
    CHECK(evaluate_with_text_features(w, ids, text, 3, 0.01, 1) == 100.0);
  }
  SUBCASE("initial parameters evaluate exactly like the zero context") {
    const SyntheticWorld w = small_world(0.5, 2.5);
    const FrozenTextHead head = build_text_head(16, 1);
    const TranslatorConfig cfg = small_translator();
    const ParameterSet theta = init_params(cfg, 4);
    for (Split s : {Split::kBase, Split::kNew}) {
      CHECK(evaluate(theta, w, head, cfg, s, 20, 0.01, 6) == evaluate_zero_context(w, head, cfg, s, 20, 0.01, 6));
    }
  }
  SUBCASE("evaluation does not touch the parameters and is seeded") {
    const SyntheticWorld w = small_world(0.5, 2.5);
    const FrozenTextHead head = build_text_head(16, 1);
    const TranslatorConfig cfg = small_translator();
    const ParameterSet theta = random_params(cfg, 4);
    const ParameterSet copy = theta;
    const double a = evaluate(theta, w, head, cfg, Split::kBase, 20, 0.01, 6);
    CHECK(bitwise_equal(theta, copy));
    CHECK(a == evaluate(theta, w, head, cfg, Split::kBase, 20, 0.01, 6));
    CHECK(a >= 0.0);
    CHECK(a <= 100.0);
  }
  SUBCASE("empty new split") {
    const SyntheticWorld w = small_world(0.5, 2.5, 0);
    CHECK_THROWS_AS(evaluate_zero_context(w, build_text_head(16, 1), small_translator(), Split::kNew, 5, 0.01, 1),
                    ContractError);
  }
  SUBCASE("misaligned text features") {
    const SyntheticWorld w = small_world(0.5, 2.5);
    const auto& ids = split_ids(w, Split::kBase);
    CHECK_THROWS_AS(evaluate_with_text_features(w, ids, Tensor({3, 16}), 3, 0.01, 1), DimensionError);
  }
}

TEST_CASE("display rounding") {
  CHECK(format2(1.425) == "1.43");
  CHECK(format2(1.425, true) == "+1.43");
  CHECK(format2(-1.425) == "-1.43");
  CHECK(format2(74.5833333) == "74.58");
  CHECK(format2(0.0, true) == "0.00");
  CHECK(format2(-0.001, true) == "0.00");
  CHECK(format2(100.0) == "100.00");
  CHECK(format2(-0.33, true) == "-0.33");
  CHECK(display_cents(0.125) == 13);
  CHECK(display_cents(-0.125) == -13);
  CHECK(display_cents(2.675) == 268);
}

TEST_CASE("summary and comparison on the reference fixture") {
  const ReferenceFixture& fixture = reference_fixture();
  REQUIRE(fixture.rows.size() == 6);
  const auto ours = fixture_ours(fixture);
  const SummaryTable summary = summarize(ours);
  // Independent arithmetic on the printed per-row values.
  CHECK(summary.base_avg == doctest::Approx((96.84 + 71.60 + 31.63 + 94.95 + 89.82 + 62.62) / 6));
  CHECK(summary.new_avg == doctest::Approx((95.41 + 78.30 + 35.57 + 94.57 + 91.65 + 60.51) / 6));
  CHECK(format2(summary.base_avg) == "74.58");
  CHECK(format2(summary.new_avg) == "76.00");
  CHECK(format2(summary.gap_avg, true) == "+1.43");

  const ComparisonTable cmp = compare_to_reference(summary, fixture);
  CHECK(format2(cmp.average.base_ref) == "74.47");
  CHECK(format2(cmp.average.new_ref) == "76.23");
  CHECK(format2(cmp.average.base_delta, true) == "+0.11");
  CHECK(format2(cmp.average.new_delta, true) == "-0.23");
  CHECK(format2(cmp.gap_ref, true) == "+1.76");
  CHECK(format2(cmp.gap_delta, true) == "-0.33");
  CHECK(format2(cmp.rows[0].base_delta, true) == "-0.36");
  CHECK(format2(cmp.rows[5].new_delta, true) == "-1.19");

  const std::string text = format_comparison(cmp);
  CHECK(text.find("gap: reference +1.76 ours +1.43 delta -0.33") != std::string::npos);
  CHECK(format_summary(summary).find("Average") != std::string::npos);
}

TEST_CASE("comparison edge cases") {
  SUBCASE("a single row") {
    const std::vector<EvalResult> one{EvalResult::make("DTD", 62.62, 60.51)};
    const SummaryTable s = summarize(one);
    CHECK(s.gap_avg == one[0].gap);
    const ComparisonTable c = compare_to_reference(s, reference_fixture());
    CHECK(format2(c.average.base_delta, true) == "+0.12");
    CHECK(format2(c.gap_ref, true) == "-0.80");
  }
  SUBCASE("unknown dataset") {
    const std::vector<EvalResult> rows{EvalResult::make("synthetic", 60, 40)};
    CHECK_THROWS_AS(compare_to_reference(summarize(rows), reference_fixture()), LookupError);
  }
  SUBCASE("empty summary") { CHECK_THROWS_AS(summarize(std::vector<EvalResult>{}), ContractError); }
}

TEST_CASE("CSV and JSON") {
  const std::vector<EvalResult> rows{EvalResult::make("a", 60.0, 62.5), EvalResult::make("b, c", 50.125, 40.0)};
  const SummaryTable s = summarize(rows);
  CHECK(summary_csv(s) == "name,base,new,gap\na,60.00,62.50,+2.50\n\"b, c\",50.13,40.00,-10.13\n");
  const auto j = nlohmann::json::parse(summary_json(s));
  CHECK(j["datasets"].size() == 2);
  CHECK(j["datasets"][0]["base"].get<double>() == 60.0);
  CHECK(j["datasets"][1]["display"]["base"] == "50.13");
  CHECK(j["average"]["name"] == "Average");
  const auto cj = nlohmann::json::parse(comparison_json(compare_to_reference(summarize(fixture_ours(reference_fixture())),
                                                                              reference_fixture())));
  CHECK(cj["average"]["base"]["delta"] == "+0.11");
  CHECK(cj["gap"]["delta"] == "-0.33");
}

TEST_CASE("charts") {
  const auto ours = fixture_ours(reference_fixture());
  SUBCASE("error bars: one per dataset and split, Aircraft tallest") {
    const auto b = bars(render_error_chart(ours));
    REQUIRE(b.size() == 12);
    const auto tallest = std::max_element(b.begin(), b.end(), [](const Bar& x, const Bar& y) { return x.height < y.height; });
    CHECK(tallest->dataset == "FGVC Aircraft");
    for (const auto& bar : b) CHECK(bar.fill == (bar.split == "base" ? "#1f77b4" : "#ff7f0e"));
    // heights are proportional to the error rate
    CHECK(b[0].height / b[2].height == doctest::Approx((100 - 96.84) / (100 - 71.60)).epsilon(1e-3));
  }
  SUBCASE("gap bars: sign picks the color") {
    const auto b = bars(render_gap_chart(ours));
    REQUIRE(b.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) CHECK(b[i].fill == (ours[i].gap >= 0 ? "#2ca02c" : "#d62728"));
    CHECK(b[0].fill == "#d62728");
    CHECK(b[1].fill == "#2ca02c");
  }
  SUBCASE("escaping") {
    const std::vector<EvalResult> rows{EvalResult::make("a<b & \"c\"", 50, 50)};
    const std::string svg = render_error_chart(rows);
    CHECK(svg.find("a&lt;b &amp; &quot;c&quot;") != std::string::npos);
  }
  SUBCASE("files are written and byte-identical across runs") {
    TempDir d1, d2;
    const ChartFiles f1 = emit_charts(ours, d1.path());
    const ChartFiles f2 = emit_charts(ours, d2.path());
    CHECK(f1.error_rates.filename() == "error_rates.svg");
    CHECK(f1.gap.filename() == "generalization_gap.svg");
    CHECK(read_file(f1.error_rates) == read_file(f2.error_rates));
    CHECK(read_file(f1.gap) == read_file(f2.gap));
    CHECK(read_file(f1.gap).rfind("<svg", 0) == 0);
  }
  SUBCASE("no results") {
    TempDir d;
    CHECK_THROWS_AS(render_error_chart(std::vector<EvalResult>{}), ContractError);
    CHECK_THROWS_AS(emit_charts(std::vector<EvalResult>{}, d.path()), ContractError);
  }
}
