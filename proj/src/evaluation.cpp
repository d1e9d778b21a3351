#include "ftpg/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "ftpg/container.hpp"
#include "ftpg/errors.hpp"
#include "ftpg/rng.hpp"

namespace ftpg {

std::string_view to_string(Split split) { return split == Split::kBase ? "base" : "new"; }

const std::vector<std::size_t>& split_ids(const SyntheticWorld& world, Split split) {
  return split == Split::kBase ? world.base_ids : world.new_ids;
}

Tensor class_text_features(const ParameterSet& params, const TranslatorConfig& config, const FrozenTextHead& head,
                           const SyntheticWorld& world, std::span<const std::size_t> ids) {
  require_translator_schema(params, config);
  const std::size_t d = world.dim();
  const TranslatorVars vars = bind_constant(params);
  Tensor out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const Var emb = constant(world.class_embedding(ids[i]).reshaped({1, d}));
    const Var text = text_feature(head, generate_context(vars, config, emb), emb);
    std::copy(text.value().data().begin(), text.value().data().end(), out.row(i).begin());
  }
  return out;
}

Tensor zero_context_text_features(const FrozenTextHead& head, const SyntheticWorld& world,
                                  std::span<const std::size_t> ids, std::size_t n_ctx) {
  const std::size_t d = world.dim();
  const Tensor zeros({n_ctx, d});
  Tensor out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const Tensor text = text_feature(head, zeros, world.class_embedding(ids[i]));
    std::copy(text.data().begin(), text.data().end(), out.row(i).begin());
  }
  return out;
}

double accuracy_percent(std::span<const std::size_t> predictions, std::span<const std::size_t> labels) {
  if (predictions.size() != labels.size() || labels.empty()) {
    throw ContractError("accuracy: predictions and labels must be non-empty and equally long");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i] == labels[i] ? 1 : 0;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(labels.size());
}

double evaluate_with_text_features(const SyntheticWorld& world, std::span<const std::size_t> ids, const Tensor& text,
                                   std::size_t n_test, double temperature, std::uint64_t seed) {
  if (ids.empty()) throw ContractError("evaluate: the split has no classes");
  if (n_test == 0) throw ContractError("evaluate: n_test must be positive");
  if (!(temperature > 0.0)) throw ContractError("evaluate: temperature must be positive");
  if (text.rank() != 2 || text.dim(0) != ids.size() || text.last_dim() != world.dim()) {
    throw DimensionError(fmt::format("evaluate: text features {} do not match {} classes", shape_str(text.shape()),
                                     ids.size()));
  }
  std::vector<std::size_t> predictions, labels;
  predictions.reserve(ids.size() * n_test);
  labels.reserve(ids.size() * n_test);
  for (std::size_t label = 0; label < ids.size(); ++label) {
    Rng rng(hash64({seed, ids[label]}));
    for (std::size_t s = 0; s < n_test; ++s) {
      const Tensor image = sample_image(world, ids[label], rng);
      std::size_t best = 0;
      double best_logit = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < ids.size(); ++k) {
        const double logit = dot(image.data(), text.row(k)) / temperature;
        if (logit > best_logit) {
          best_logit = logit;
          best = k;
        }
      }
      predictions.push_back(best);
      labels.push_back(label);
    }
  }
  return accuracy_percent(predictions, labels);
}

double evaluate(const ParameterSet& params, const SyntheticWorld& world, const FrozenTextHead& head,
                const TranslatorConfig& config, Split split, std::size_t n_test, double temperature,
                std::uint64_t seed) {
  const auto& ids = split_ids(world, split);
  if (ids.empty()) throw ContractError(fmt::format("evaluate: the {} split is empty", to_string(split)));
  const Tensor text = class_text_features(params, config, head, world, ids);
  return evaluate_with_text_features(world, ids, text, n_test, temperature, seed);
}

double evaluate_zero_context(const SyntheticWorld& world, const FrozenTextHead& head, const TranslatorConfig& config,
                             Split split, std::size_t n_test, double temperature, std::uint64_t seed) {
  const auto& ids = split_ids(world, split);
  if (ids.empty()) throw ContractError(fmt::format("evaluate: the {} split is empty", to_string(split)));
  const Tensor text = zero_context_text_features(head, world, ids, config.n_ctx);
  return evaluate_with_text_features(world, ids, text, n_test, temperature, seed);
}

double generalization_gap(double base_acc, double new_acc) { return new_acc - base_acc; }

EvalResult EvalResult::make(std::string dataset, double base_acc, double new_acc) {
  return {std::move(dataset), base_acc, new_acc, generalization_gap(base_acc, new_acc)};
}

SummaryTable summarize(std::span<const EvalResult> results) {
  if (results.empty()) throw ContractError("summarize: no results");
  SummaryTable table;
  table.rows.assign(results.begin(), results.end());
  for (const auto& r : results) {
    table.base_avg += r.base_acc;
    table.new_avg += r.new_acc;
    table.gap_avg += r.gap;
  }
  const auto n = static_cast<double>(results.size());
  table.base_avg /= n;
  table.new_avg /= n;
  table.gap_avg /= n;
  return table;
}

std::int64_t display_cents(double value) {
  const double scaled = value * 100.0;
  const double lower = std::floor(scaled);
  if (std::abs((scaled - lower) - 0.5) < 1e-6) {
    return static_cast<std::int64_t>(scaled >= 0.0 ? lower + 1.0 : lower);
  }
  return static_cast<std::int64_t>(std::llround(scaled));
}

std::string format2(double value, bool signed_value) {
  const std::int64_t cents = display_cents(value);
  const std::int64_t mag = std::llabs(cents);
  const char* sign = cents < 0 ? "-" : (signed_value && cents > 0 ? "+" : "");
  return fmt::format("{}{}.{:02d}", sign, mag / 100, mag % 100);
}

const ReferenceFixture& reference_fixture() {
  static const ReferenceFixture fixture{
      {
          {"Caltech101", 97.2, 95.2, 96.84, 95.41},
          {"Oxford Flowers", 70.8, 78.7, 71.60, 78.30},
          {"FGVC Aircraft", 31.5, 35.7, 31.63, 35.57},
          {"Oxford Pets", 94.9, 94.5, 94.95, 94.57},
          {"Food-101", 89.9, 91.6, 89.82, 91.65},
          {"DTD", 62.5, 61.7, 62.62, 60.51},
      },
      1.76,
  };
  return fixture;
}

std::vector<EvalResult> fixture_ours(const ReferenceFixture& fixture) {
  std::vector<EvalResult> out;
  for (const auto& r : fixture.rows) out.push_back(EvalResult::make(r.dataset, r.ours_base, r.ours_new));
  return out;
}

std::vector<EvalResult> fixture_original(const ReferenceFixture& fixture) {
  std::vector<EvalResult> out;
  for (const auto& r : fixture.rows) out.push_back(EvalResult::make(r.dataset, r.original_base, r.original_new));
  return out;
}

namespace {

double display_delta(double ours, double ref) {
  return static_cast<double>(display_cents(ours) - display_cents(ref)) / 100.0;
}

}  // namespace

ComparisonTable compare_to_reference(const SummaryTable& summary, const ReferenceFixture& fixture) {
  ComparisonTable table;
  std::vector<EvalResult> refs;
  for (const auto& row : summary.rows) {
    auto it = std::find_if(fixture.rows.begin(), fixture.rows.end(),
                           [&](const ReferenceRow& r) { return r.dataset == row.dataset; });
    if (it == fixture.rows.end()) {
      throw LookupError(fmt::format("compare: dataset '{}' is not in the reference fixture", row.dataset));
    }
    refs.push_back(EvalResult::make(it->dataset, it->original_base, it->original_new));
    table.rows.push_back({row.dataset, row.base_acc, it->original_base, display_delta(row.base_acc, it->original_base),
                          row.new_acc, it->original_new, display_delta(row.new_acc, it->original_new), row.gap});
  }
  const SummaryTable ref = summarize(refs);
  table.average = {"Average",
                   summary.base_avg,
                   ref.base_avg,
                   display_delta(summary.base_avg, ref.base_avg),
                   summary.new_avg,
                   ref.new_avg,
                   display_delta(summary.new_avg, ref.new_avg),
                   summary.gap_avg};
  // The original gap average is a published figure; with the full fixture it
  // is taken as printed, otherwise from the reference rows in use.
  table.gap_ref = refs.size() == fixture.rows.size() ? fixture.published_original_gap : ref.gap_avg;
  table.gap_delta = display_delta(summary.gap_avg, table.gap_ref);
  return table;
}

std::string format_summary(const SummaryTable& summary) {
  std::string out = fmt::format("{:<16} {:>8} {:>8} {:>8}\n", "dataset", "base", "new", "gap");
  for (const auto& r : summary.rows) {
    out += fmt::format("{:<16} {:>8} {:>8} {:>8}\n", r.dataset, format2(r.base_acc), format2(r.new_acc),
                       format2(r.gap, true));
  }
  out += fmt::format("{:<16} {:>8} {:>8} {:>8}\n", "Average", format2(summary.base_avg), format2(summary.new_avg),
                     format2(summary.gap_avg, true));
  return out;
}

std::string format_comparison(const ComparisonTable& table) {
  std::string out = fmt::format("{:<16} {:>9} {:>9} {:>8} {:>9} {:>9} {:>8} {:>8}\n", "dataset", "base_ref",
                                "base", "d_base", "new_ref", "new", "d_new", "gap");
  auto line = [&](const DeltaRow& r) {
    out += fmt::format("{:<16} {:>9} {:>9} {:>8} {:>9} {:>9} {:>8} {:>8}\n", r.dataset, format2(r.base_ref),
                       format2(r.base_ours), format2(r.base_delta, true), format2(r.new_ref), format2(r.new_ours),
                       format2(r.new_delta, true), format2(r.gap_ours, true));
  };
  for (const auto& r : table.rows) line(r);
  line(table.average);
  out += fmt::format("gap: reference {} ours {} delta {}\n", format2(table.gap_ref, true),
                     format2(table.average.gap_ours, true), format2(table.gap_delta, true));
  return out;
}

std::string summary_csv(const SummaryTable& summary) {
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + "\"";
  };
  std::string out = "name,base,new,gap\n";
  for (const auto& r : summary.rows) {
    out += fmt::format("{},{},{},{}\n", quote(r.dataset), format2(r.base_acc), format2(r.new_acc), format2(r.gap, true));
  }
  return out;
}

namespace {

nlohmann::ordered_json result_json(const EvalResult& r) {
  nlohmann::ordered_json j;
  j["name"] = r.dataset;
  j["base"] = r.base_acc;
  j["new"] = r.new_acc;
  j["gap"] = r.gap;
  j["display"] = {{"base", format2(r.base_acc)}, {"new", format2(r.new_acc)}, {"gap", format2(r.gap, true)}};
  return j;
}

}  // namespace

std::string summary_json(const SummaryTable& summary) {
  nlohmann::ordered_json j;
  j["datasets"] = nlohmann::ordered_json::array();
  for (const auto& r : summary.rows) j["datasets"].push_back(result_json(r));
  j["average"] = result_json({"Average", summary.base_avg, summary.new_avg, summary.gap_avg});
  return j.dump(2) + "\n";
}

std::string comparison_json(const ComparisonTable& table) {
  auto row = [](const DeltaRow& r) {
    nlohmann::ordered_json j;
    j["name"] = r.dataset;
    j["base"] = {{"reference", format2(r.base_ref)}, {"ours", format2(r.base_ours)}, {"delta", format2(r.base_delta, true)}};
    j["new"] = {{"reference", format2(r.new_ref)}, {"ours", format2(r.new_ours)}, {"delta", format2(r.new_delta, true)}};
    j["gap"] = format2(r.gap_ours, true);
    return j;
  };
  nlohmann::ordered_json j;
  j["datasets"] = nlohmann::ordered_json::array();
  for (const auto& r : table.rows) j["datasets"].push_back(row(r));
  j["average"] = row(table.average);
  j["gap"] = {{"reference", format2(table.gap_ref, true)},
              {"ours", format2(table.average.gap_ours, true)},
              {"delta", format2(table.gap_delta, true)}};
  return j.dump(2) + "\n";
}

namespace {

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr double kWidth = 760, kHeight = 420, kLeft = 60, kRight = 20, kTop = 40, kBottom = 80;

std::string svg_open(std::string_view title) {
  return fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" viewBox=\"0 0 {:.0f} {:.0f}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{:.1f}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
      kWidth, kHeight, kWidth, kHeight, kWidth / 2, xml_escape(title));
}

void require_results(std::span<const EvalResult> results) {
  if (results.empty()) throw ContractError("charts: no results to plot");
}

}  // namespace

std::string render_error_chart(std::span<const EvalResult> results) {
  require_results(results);
  const double plot_w = kWidth - kLeft - kRight, plot_h = kHeight - kTop - kBottom;
  const double group_w = plot_w / static_cast<double>(results.size());
  const double bar_w = group_w * 0.35;
  auto y_of = [&](double v) { return kTop + plot_h * (1.0 - v / 100.0); };

  std::string svg = svg_open("Error rate by dataset and split");
  for (int tick = 0; tick <= 100; tick += 20) {
    const double y = y_of(tick);
    svg += fmt::format("<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"#dddddd\"/>\n", kLeft, y,
                       kWidth - kRight, y);
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{}%</text>\n", kLeft - 6, y + 4, tick);
  }
  const char* colors[2] = {"#1f77b4", "#ff7f0e"};
  const char* splits[2] = {"base", "new"};
  for (std::size_t i = 0; i < results.size(); ++i) {
    const double gx = kLeft + group_w * static_cast<double>(i);
    const double errors[2] = {100.0 - results[i].base_acc, 100.0 - results[i].new_acc};
    for (int s = 0; s < 2; ++s) {
      const double x = gx + group_w * 0.15 + bar_w * s;
      const double y = y_of(errors[s]);
      svg += fmt::format(
          "<rect class=\"bar\" data-dataset=\"{}\" data-split=\"{}\" data-value=\"{}\" x=\"{:.2f}\" y=\"{:.2f}\" "
          "width=\"{:.2f}\" height=\"{:.2f}\" fill=\"{}\"/>\n",
          xml_escape(results[i].dataset), splits[s], format2(errors[s]), x, y, bar_w, kTop + plot_h - y, colors[s]);
    }
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n", gx + group_w / 2,
                       kTop + plot_h + 18, xml_escape(results[i].dataset));
  }
  svg += fmt::format("<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"black\"/>\n", kLeft,
                     kTop + plot_h, kWidth - kRight, kTop + plot_h);
  const double ly = kHeight - 24;
  for (int s = 0; s < 2; ++s) {
    const double lx = kLeft + 160.0 * s;
    svg += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n", lx, ly - 10,
                       colors[s]);
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\">{} classes</text>\n", lx + 18, ly, splits[s]);
  }
  svg += "</svg>\n";
  return svg;
}

std::string render_gap_chart(std::span<const EvalResult> results) {
  require_results(results);
  const double plot_w = kWidth - kLeft - kRight, plot_h = kHeight - kTop - kBottom;
  double extent = 1.0;
  for (const auto& r : results) extent = std::max(extent, std::abs(r.gap));
  extent = std::ceil(extent);
  const double group_w = plot_w / static_cast<double>(results.size());
  const double bar_w = group_w * 0.6;
  auto y_of = [&](double v) { return kTop + plot_h * (0.5 - v / (2.0 * extent)); };

  std::string svg = svg_open("Generalization gap (new - base, points)");
  for (int k = -2; k <= 2; ++k) {
    const double v = extent * k / 2.0;
    const double y = y_of(v);
    svg += fmt::format("<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"#dddddd\"/>\n", kLeft, y,
                       kWidth - kRight, y);
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{}</text>\n", kLeft - 6, y + 4,
                       format2(v, true));
  }
  const double zero_y = y_of(0.0);
  for (std::size_t i = 0; i < results.size(); ++i) {
    const double gap = results[i].gap;
    const bool positive = gap >= 0.0;
    const double x = kLeft + group_w * static_cast<double>(i) + (group_w - bar_w) / 2;
    const double y = positive ? y_of(gap) : zero_y;
    svg += fmt::format(
        "<rect class=\"bar\" data-dataset=\"{}\" data-value=\"{}\" x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" "
        "height=\"{:.2f}\" fill=\"{}\"/>\n",
        xml_escape(results[i].dataset), format2(gap, true), x, y, bar_w, std::abs(y_of(gap) - zero_y),
        positive ? "#2ca02c" : "#d62728");
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n", x + bar_w / 2,
                       positive ? y - 4 : y_of(gap) + 14, format2(gap, true));
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n", x + bar_w / 2,
                       kTop + plot_h + 18, xml_escape(results[i].dataset));
  }
  svg += fmt::format("<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"black\"/>\n", kLeft, zero_y,
                     kWidth - kRight, zero_y);
  svg += "</svg>\n";
  return svg;
}

ChartFiles emit_charts(std::span<const EvalResult> results, const std::filesystem::path& dir) {
  require_results(results);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("cannot create '{}': {}", dir.string(), ec.message()));
  ChartFiles files{dir / "error_rates.svg", dir / "generalization_gap.svg"};
  write_file_atomic(files.error_rates, render_error_chart(results));
  write_file_atomic(files.gap, render_gap_chart(results));
  return files;
}

}  // namespace ftpg
