#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ftpg/encoders.hpp"
#include "ftpg/parameter_set.hpp"
#include "ftpg/translator.hpp"

namespace ftpg {

enum class Split { kBase, kNew };

std::string_view to_string(Split split);
const std::vector<std::size_t>& split_ids(const SyntheticWorld& world, Split split);

/// Text feature of every class in `ids`, [ids.size() x d], from generated context.
Tensor class_text_features(const ParameterSet& params, const TranslatorConfig& config, const FrozenTextHead& head,
                           const SyntheticWorld& world, std::span<const std::size_t> ids);

/// Text features with all context vectors zero (the zero-shot analogue).
Tensor zero_context_text_features(const FrozenTextHead& head, const SyntheticWorld& world,
                                  std::span<const std::size_t> ids, std::size_t n_ctx);

double accuracy_percent(std::span<const std::size_t> predictions, std::span<const std::size_t> labels);

/// Draws n_test images per class (class c from stream hash64(seed, c)) and
/// classifies each by the argmax of cosine / temperature over `text` rows,
/// which are aligned with `ids`. Returns 100 * correct / total.
double evaluate_with_text_features(const SyntheticWorld& world, std::span<const std::size_t> ids, const Tensor& text,
                                   std::size_t n_test, double temperature, std::uint64_t seed);

double evaluate(const ParameterSet& params, const SyntheticWorld& world, const FrozenTextHead& head,
                const TranslatorConfig& config, Split split, std::size_t n_test, double temperature,
                std::uint64_t seed);

double evaluate_zero_context(const SyntheticWorld& world, const FrozenTextHead& head, const TranslatorConfig& config,
                             Split split, std::size_t n_test, double temperature, std::uint64_t seed);

/// new - base, in percentage points.
double generalization_gap(double base_acc, double new_acc);

struct EvalResult {
  std::string dataset;
  double base_acc = 0.0;
  double new_acc = 0.0;
  double gap = 0.0;

  static EvalResult make(std::string dataset, double base_acc, double new_acc);
};

struct SummaryTable {
  std::vector<EvalResult> rows;
  double base_avg = 0.0;
  double new_avg = 0.0;
  double gap_avg = 0.0;  // mean of per-row gaps, not new_avg - base_avg after rounding
};

SummaryTable summarize(std::span<const EvalResult> results);

/// Value in hundredths, rounded half away from zero. Binary noise within
/// 1e-6 of a half-cent counts as an exact half (1.425 -> 143).
std::int64_t display_cents(double value);

/// Two-decimal display string; `signed_value` adds '+' to positive values.
std::string format2(double value, bool signed_value = false);

struct ReferenceRow {
  std::string dataset;
  double original_base;
  double original_new;
  double ours_base;
  double ours_new;
};

/// Published per-dataset accuracies of the reference replication, plus the
/// original gap average, which is printed but not derivable from the rows.
struct ReferenceFixture {
  std::vector<ReferenceRow> rows;
  double published_original_gap = 0.0;
};

const ReferenceFixture& reference_fixture();
std::vector<EvalResult> fixture_ours(const ReferenceFixture& fixture);
std::vector<EvalResult> fixture_original(const ReferenceFixture& fixture);

struct DeltaRow {
  std::string dataset;
  double base_ours = 0.0, base_ref = 0.0, base_delta = 0.0;
  double new_ours = 0.0, new_ref = 0.0, new_delta = 0.0;
  double gap_ours = 0.0;
};

/// Deltas are differences of the two-decimal display values, the way the
/// published tables compute them.
struct ComparisonTable {
  std::vector<DeltaRow> rows;
  DeltaRow average;
  double gap_ref = 0.0;
  double gap_delta = 0.0;
};

/// Throws LookupError for datasets missing from the fixture.
ComparisonTable compare_to_reference(const SummaryTable& summary, const ReferenceFixture& fixture);

std::string format_summary(const SummaryTable& summary);
std::string format_comparison(const ComparisonTable& table);

std::string summary_csv(const SummaryTable& summary);
std::string summary_json(const SummaryTable& summary);
std::string comparison_json(const ComparisonTable& table);

/// Grouped error-rate bars (100 - accuracy) per dataset and split.
std::string render_error_chart(std::span<const EvalResult> results);
/// Signed generalization-gap bars, green above zero and red below.
std::string render_gap_chart(std::span<const EvalResult> results);

struct ChartFiles {
  std::filesystem::path error_rates;
  std::filesystem::path gap;
};

/// Writes error_rates.svg and generalization_gap.svg into `dir`.
ChartFiles emit_charts(std::span<const EvalResult> results, const std::filesystem::path& dir);

}  // namespace ftpg
