#include "ftpg/cli.hpp"

#include <chrono>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "ftpg/config.hpp"
#include "ftpg/container.hpp"
#include "ftpg/errors.hpp"
#include "ftpg/evaluation.hpp"
#include "ftpg/federation.hpp"
#include "ftpg/selfcheck.hpp"

namespace ftpg {

namespace fs = std::filesystem;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const FormatError*>(&e) ||
      dynamic_cast<const DataError*>(&e)) {
    return 2;
  }
  return 1;
}

namespace {

struct ConfigArgs {
  std::string path;
  std::vector<std::string> sets;

  void attach(CLI::App* app) {
    app->add_option("--config", path, "key=value config file (defaults apply to absent keys)");
    app->add_option("--set", sets, "override, key=value; may repeat")->allow_extra_args(false);
  }

  ExperimentConfig load() const { return path.empty() ? parse_config("", sets) : parse_config_file(path, sets); }
};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("cannot create '{}': {}", dir.string(), ec.message()));
}

Tensor ids_tensor(const std::vector<std::size_t>& ids) {
  std::vector<double> values(ids.begin(), ids.end());
  return Tensor::vector(std::move(values));
}

int cmd_make_world(const ConfigArgs& cfg_args, const std::string& out_dir, std::ostream& out) {
  const ExperimentConfig config = cfg_args.load();
  const SeedPlan seeds = derive_seeds(config.master_seed);
  const SyntheticWorld world = build_world(config.world);
  const FrozenTextHead head = build_text_head(config.world.d, seeds.head);
  ensure_dir(out_dir);

  Container dump;
  dump.tensors.push_back({"centers", world.centers});
  dump.tensors.push_back({"class_embeddings", world.class_embeddings});
  dump.tensors.push_back({"base_ids", ids_tensor(world.base_ids)});
  if (!world.new_ids.empty()) dump.tensors.push_back({"new_ids", ids_tensor(world.new_ids)});
  dump.tensors.push_back({"text_head.w1", head.w1});
  dump.tensors.push_back({"text_head.w2", head.w2});
  dump.text = config_echo(config);
  const fs::path world_path = fs::path(out_dir) / "world.ftpg";
  write_container(world_path, dump);

  EmbeddingTable table;
  for (std::size_t c = 0; c < world.num_classes(); ++c) table.class_ids.push_back(c);
  table.values = world.class_embeddings;
  const fs::path emb_path = fs::path(out_dir) / "embeddings.ftpg";
  save_embeddings(emb_path, table);

  out << fmt::format("world: {} base + {} new classes at d={}, checksum {:016x}\n", world.base_ids.size(),
                     world.new_ids.size(), world.dim(), world.checksum());
  out << fmt::format("wrote {}\nwrote {}\n", world_path.string(), emb_path.string());
  return 0;
}

std::optional<EmbeddingTable> maybe_embeddings(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return load_embeddings(path);
}

int cmd_train(const ConfigArgs& cfg_args, const std::string& out_dir, const std::string& emb_path, bool quiet,
              std::ostream& out) {
  const ExperimentConfig config = cfg_args.load();
  const auto table = maybe_embeddings(emb_path);
  const Federation fed = build_federation(config, table ? &*table : nullptr);
  ensure_dir(out_dir);
  const fs::path dir(out_dir);

  const fs::path log_path = dir / "rounds.jsonl";
  std::ofstream log(log_path, std::ios::binary | std::ios::trunc);
  if (!log) throw IoError(fmt::format("cannot write '{}'", log_path.string()));

  const auto every = config.federation.checkpoint_every;
  const TrainingResult result = run_training(config, fed, [&](const RoundLog& r, const ParameterSet& params) {
    log << to_json_line(r) << '\n';
    if (!log) throw IoError(fmt::format("write to '{}' failed", log_path.string()));
    if (every > 0 && r.round % every == 0 && r.round != config.federation.rounds) {
      save_checkpoint(dir / fmt::format("checkpoint_round_{:04d}.ftpg", r.round), params, config,
                      static_cast<std::uint32_t>(r.round));
    }
    if (!quiet) {
      double mean = 0.0;
      for (double l : r.mean_loss) mean += l;
      mean /= static_cast<double>(r.mean_loss.size());
      out << fmt::format("round {}/{}  lr {:.6f}  clients {}  loss {:.4f}\n", r.round, config.federation.rounds, r.lr,
                         r.selected.size(), mean);
    }
  });
  log.close();

  const fs::path ckpt = dir / "checkpoint.ftpg";
  save_checkpoint(ckpt, result.params, config, static_cast<std::uint32_t>(config.federation.rounds));
  out << fmt::format("wrote {} and {}\n", ckpt.string(), log_path.string());
  return 0;
}

int cmd_eval(const ConfigArgs& cfg_args, const std::string& ckpt_path, const std::string& emb_path,
             std::string out_dir, const std::string& name, std::ostream& out) {
  ExperimentConfig config;
  if (cfg_args.path.empty()) {
    // The checkpoint carries the config it was trained with.
    config = parse_config(load_checkpoint(ckpt_path).config_text, cfg_args.sets, ckpt_path + " (config echo)");
  } else {
    config = cfg_args.load();
  }
  const Checkpoint ckpt = load_checkpoint(ckpt_path, config);
  const auto table = maybe_embeddings(emb_path);
  const Federation fed = build_federation(config, table ? &*table : nullptr);
  const SeedPlan seeds = derive_seeds(config.master_seed);
  const auto n = config.eval.n_test;
  const double tau = config.optimizer.temperature;

  auto acc = [&](Split s) { return evaluate(ckpt.params, fed.world, fed.head, config.translator, s, n, tau, seeds.eval); };
  auto zero = [&](Split s) { return evaluate_zero_context(fed.world, fed.head, config.translator, s, n, tau, seeds.eval); };
  const EvalResult trained = EvalResult::make(name, acc(Split::kBase), fed.world.new_ids.empty() ? 0.0 : acc(Split::kNew));
  const EvalResult baseline =
      EvalResult::make(name, zero(Split::kBase), fed.world.new_ids.empty() ? 0.0 : zero(Split::kNew));

  nlohmann::ordered_json j;
  j["name"] = name;
  j["round"] = ckpt.round;
  j["base"] = trained.base_acc;
  j["new"] = trained.new_acc;
  j["gap"] = trained.gap;
  j["zero_context"] = {{"base", baseline.base_acc}, {"new", baseline.new_acc}, {"gap", baseline.gap}};
  if (out_dir.empty()) out_dir = config.eval.report_dir;
  ensure_dir(out_dir);
  const fs::path path = fs::path(out_dir) / "eval.json";
  write_file_atomic(path, j.dump(2) + "\n");

  out << fmt::format("{:<14} {:>8} {:>8} {:>8}\n", "", "base", "new", "gap");
  out << fmt::format("{:<14} {:>8} {:>8} {:>8}\n", "generated", format2(trained.base_acc), format2(trained.new_acc),
                     format2(trained.gap, true));
  out << fmt::format("{:<14} {:>8} {:>8} {:>8}\n", "zero-context", format2(baseline.base_acc),
                     format2(baseline.new_acc), format2(baseline.gap, true));
  out << fmt::format("wrote {}\n", path.string());
  return 0;
}

EvalResult read_eval_result(const std::string& path) {
  const std::string text = read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(fmt::format("{}: not valid JSON", path), e.byte);
  }
  try {
    return EvalResult::make(j.at("name").get<std::string>(), j.at("base").get<double>(), j.at("new").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("{}: expected fields name, base and new ({})", path, e.what()));
  }
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out_dir, std::ostream& out) {
  std::vector<EvalResult> results;
  if (inputs.empty()) {
    results = fixture_ours(reference_fixture());
  } else {
    for (const auto& p : inputs) results.push_back(read_eval_result(p));
  }
  const SummaryTable summary = summarize(results);
  ensure_dir(out_dir);
  const fs::path dir(out_dir);
  write_file_atomic(dir / "summary.csv", summary_csv(summary));
  write_file_atomic(dir / "summary.json", summary_json(summary));
  emit_charts(results, dir);
  out << format_summary(summary);

  bool comparable = true;
  for (const auto& r : results) {
    bool found = false;
    for (const auto& row : reference_fixture().rows) found = found || row.dataset == r.dataset;
    comparable = comparable && found;
  }
  if (comparable) {
    const ComparisonTable cmp = compare_to_reference(summary, reference_fixture());
    write_file_atomic(dir / "comparison.json", comparison_json(cmp));
    out << "\n" << format_comparison(cmp);
    out << fmt::format("average deltas: base {} new {}\n", format2(cmp.average.base_delta, true),
                       format2(cmp.average.new_delta, true));
  }
  out << fmt::format("wrote reports to {}\n", dir.string());
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  const GradCheckResult r = composite_gradcheck(seed);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out << fmt::format("gradcheck: {} coordinates, max relative error {:.3e} ({}[{}]), {} above 1e-6, {:.2f} s\n",
                     r.checked, r.max_rel_error, r.worst_parameter, r.worst_index, r.failed, secs);
  out << (r.passed() ? "PASS\n" : "FAIL\n");
  return r.passed() ? 0 : 1;
}

int cmd_selftest(std::ostream& out) {
  bool ok = true;
  for (const auto& line : fixture_checks()) {
    out << fmt::format("{} {} ({})\n", line.passed ? "PASS" : "FAIL", line.name, line.detail);
    ok = ok && line.passed;
  }
  return ok ? 0 : 1;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Federated prompt-generation simulator"};
  app.require_subcommand(1);

  ConfigArgs world_cfg, train_cfg, eval_cfg;
  std::string world_out, train_out, train_emb, eval_ckpt, eval_emb, eval_out, eval_name = "synthetic",
                                                                             report_out = "reports";
  std::vector<std::string> report_inputs;
  bool train_quiet = false;
  std::uint64_t grad_seed = 7;

  auto* make_world = app.add_subcommand("make-world", "write the synthetic world and its class embedding table");
  world_cfg.attach(make_world);
  make_world->add_option("--out", world_out, "output directory")->required();

  auto* train = app.add_subcommand("train", "run federated training; writes rounds.jsonl and checkpoints");
  train_cfg.attach(train);
  train->add_option("--out", train_out, "output directory")->required();
  train->add_option("--embeddings", train_emb, "class embedding table replacing the synthetic one");
  train->add_flag("--quiet", train_quiet, "no per-round lines");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on base and new classes");
  eval_cfg.attach(eval);
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--embeddings", eval_emb, "class embedding table replacing the synthetic one");
  eval->add_option("--out", eval_out, "output directory (default: eval.report_dir)");
  eval->add_option("--name", eval_name, "dataset name recorded in eval.json");

  auto* report = app.add_subcommand("report", "summary tables and charts; the reference fixture if no results given");
  report->add_option("results", report_inputs, "eval.json files");
  report->add_option("--out", report_out, "output directory");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the training composite");
  gradcheck->add_option("--seed", grad_seed, "seed of the random check point");

  auto* selftest = app.add_subcommand("selftest", "reproduce the reference table arithmetic");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (make_world->parsed()) return cmd_make_world(world_cfg, world_out, out);
    if (train->parsed()) return cmd_train(train_cfg, train_out, train_emb, train_quiet, out);
    if (eval->parsed()) return cmd_eval(eval_cfg, eval_ckpt, eval_emb, eval_out, eval_name, out);
    if (report->parsed()) return cmd_report(report_inputs, report_out, out);
    if (gradcheck->parsed()) return cmd_gradcheck(grad_seed, out);
    if (selftest->parsed()) return cmd_selftest(out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  err << app.help();
  return 1;
}

}  // namespace ftpg
