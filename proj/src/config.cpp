#include "ftpg/config.hpp"

#include <charconv>
#include <map>
#include <optional>

#include <fmt/format.h>

#include "ftpg/container.hpp"
#include "ftpg/errors.hpp"
#include "ftpg/translator.hpp"

namespace ftpg {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc() || ptr != end) {
    throw ConfigError(fmt::format("{}: cannot parse '{}' as {}", key, text,
                                  std::is_floating_point_v<T> ? "a number" : "a non-negative integer"));
  }
  return value;
}

template <typename T, typename Field>
ConfigKey number_key(std::string_view name, std::string_view doc, Field field) {
  return {name, doc,
          [name, field](ExperimentConfig& c, std::string_view v) { field(c) = parse_number<T>(name, v); },
          [field](const ExperimentConfig& c) { return fmt::format("{}", field(c)); }};
}

#define FTPG_SIZE_KEY(name, doc, member) \
  number_key<std::size_t>(name, doc, [](auto& c) -> auto& { return c.member; })
#define FTPG_DOUBLE_KEY(name, doc, member) \
  number_key<double>(name, doc, [](auto& c) -> auto& { return c.member; })

std::vector<ConfigKey> make_keys() {
  std::vector<ConfigKey> keys;
  keys.push_back(number_key<std::uint64_t>("seed", "master seed; every random stream is derived from it",
                                           [](auto& c) -> auto& { return c.master_seed; }));
  keys.push_back(FTPG_SIZE_KEY("world.d", "embedding width (the translator width follows it)", world.d));
  keys.push_back(FTPG_SIZE_KEY("world.n_base", "number of base (training) classes", world.n_base));
  keys.push_back(FTPG_SIZE_KEY("world.n_new", "number of held-out new classes", world.n_new));
  keys.push_back(FTPG_DOUBLE_KEY("world.sigma_img", "expected norm of image feature noise", world.sigma_img));
  keys.push_back(FTPG_DOUBLE_KEY("world.sigma_text", "expected norm of class embedding noise", world.sigma_text));
  keys.push_back(FTPG_DOUBLE_KEY("world.interp_lo", "lower end of the new-class interpolation weight", world.interp_lo));
  keys.push_back(FTPG_DOUBLE_KEY("world.interp_hi", "upper end of the new-class interpolation weight", world.interp_hi));
  keys.push_back(FTPG_SIZE_KEY("translator.n_ctx", "context vectors generated per class", translator.n_ctx));
  keys.push_back(FTPG_SIZE_KEY("translator.n_heads", "attention heads; must divide world.d", translator.n_heads));
  keys.push_back(FTPG_SIZE_KEY("translator.ffn_mult", "feed-forward hidden width as a multiple of world.d",
                               translator.ffn_mult));
  keys.push_back(FTPG_SIZE_KEY("translator.kv_len", "class embedding rows attended to (the simulator supplies 1)",
                               translator.kv_len));
  keys.push_back(FTPG_DOUBLE_KEY("optimizer.lr0", "initial learning rate of the cosine schedule", optimizer.lr0));
  keys.push_back(FTPG_DOUBLE_KEY("optimizer.momentum", "SGD momentum", optimizer.momentum));
  keys.push_back(FTPG_DOUBLE_KEY("optimizer.weight_decay", "L2 weight decay added to the gradient",
                                 optimizer.weight_decay));
  keys.push_back(FTPG_SIZE_KEY("optimizer.batch_size", "local mini-batch size", optimizer.batch_size));
  keys.push_back(FTPG_DOUBLE_KEY("optimizer.temperature", "divisor of the cosine logits, in training and evaluation",
                                 optimizer.temperature));
  keys.push_back(FTPG_SIZE_KEY("federation.n_clients", "number of clients", federation.n_clients));
  keys.push_back(FTPG_SIZE_KEY("federation.classes_per_client", "base classes per client (disjoint across clients)",
                               federation.classes_per_client));
  keys.push_back(FTPG_SIZE_KEY("federation.shots", "training images per class per client", federation.shots));
  keys.push_back(FTPG_SIZE_KEY("federation.rounds", "communication rounds", federation.rounds));
  keys.push_back(FTPG_SIZE_KEY("federation.local_epochs", "passes over local data per round",
                               federation.local_epochs));
  keys.push_back(FTPG_DOUBLE_KEY("federation.fraction", "fraction of clients selected each round",
                                 federation.fraction));
  keys.push_back(FTPG_SIZE_KEY("federation.workers", "threads for local updates; results do not depend on it",
                               federation.workers));
  keys.push_back(FTPG_SIZE_KEY("federation.checkpoint_every",
                               "train writes a checkpoint every this many rounds (0: final only)",
                               federation.checkpoint_every));
  keys.push_back(FTPG_SIZE_KEY("eval.n_test", "test images per class", eval.n_test));
  keys.push_back({"eval.report_dir", "directory for eval and report outputs",
                  [](ExperimentConfig& c, std::string_view v) {
                    if (v.empty()) throw ConfigError("eval.report_dir: must not be empty");
                    c.eval.report_dir = std::string(v);
                  },
                  [](const ExperimentConfig& c) { return c.eval.report_dir; }});
  return keys;
}

#undef FTPG_SIZE_KEY
#undef FTPG_DOUBLE_KEY

const ConfigKey* find_key(std::string_view name) {
  for (const auto& k : config_keys()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

struct Assignment {
  std::string_view key;
  std::string_view value;
};

std::optional<Assignment> split_line(std::string_view line, const std::string& where) {
  const std::string_view body = trim(line);
  if (body.empty() || body.front() == '#') return std::nullopt;
  const auto eq = body.find('=');
  if (eq == std::string_view::npos) throw ConfigError(fmt::format("{}: expected key=value, got '{}'", where, body));
  return Assignment{trim(body.substr(0, eq)), trim(body.substr(eq + 1))};
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = make_keys();
  return keys;
}

ExperimentConfig parse_config(std::string_view text, std::span<const std::string> overrides, std::string_view source) {
  ExperimentConfig config;
  std::map<std::string, std::string, std::less<>> set_at;

  auto apply = [&](const Assignment& a, const std::string& where) {
    const ConfigKey* key = find_key(a.key);
    if (!key) throw ConfigError(fmt::format("{}: unknown key '{}'", where, a.key));
    try {
      key->set(config, a.value);
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("{}: {}", where, e.what()));
    }
    set_at[std::string(a.key)] = where;
  };

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    ++line_no;
    const std::string where = fmt::format("{}:{}", source, line_no);
    if (auto a = split_line(text.substr(pos, nl - pos), where)) apply(*a, where);
    pos = nl + 1;
  }
  for (std::size_t i = 0; i < overrides.size(); ++i) {
    const std::string where = fmt::format("--set #{}", i + 1);
    auto a = split_line(overrides[i], where);
    if (!a) throw ConfigError(fmt::format("{}: expected key=value, got '{}'", where, overrides[i]));
    apply(*a, where);
  }

  try {
    config.finalize();
  } catch (const ConfigError& e) {
    // Messages start with the offending key; point at where it was set.
    const std::string_view msg = e.what();
    const std::string_view key = msg.substr(0, msg.find(':'));
    const auto it = set_at.find(key);
    const std::string where = it != set_at.end() ? it->second : fmt::format("{} (default)", source);
    throw ConfigError(fmt::format("{}: {}", where, msg));
  }
  return config;
}

ExperimentConfig parse_config_file(const std::filesystem::path& path, std::span<const std::string> overrides) {
  return parse_config(read_file(path), overrides, path.string());
}

std::string config_echo(const ExperimentConfig& config) {
  std::string out;
  for (const auto& k : config_keys()) out += fmt::format("{}={}\n", k.name, k.get(config));
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params, const ExperimentConfig& config,
                     std::uint32_t round) {
  Container c;
  for (const auto& [name, p] : params) c.tensors.push_back({name, p.value});
  c.text = config_echo(config);
  c.round = round;
  write_container(path, c);
}

namespace {

Checkpoint to_checkpoint(Container c) {
  Checkpoint out;
  std::size_t offset = 12;
  for (auto& t : c.tensors) {
    try {
      out.params.add(t.name, std::move(t.value));
    } catch (const SchemaError& e) {
      throw FormatError(e.what(), offset);
    }
    offset += 4 + t.name.size() + 4 + 4 * out.params.at(t.name).value.rank() + 8 * out.params.at(t.name).value.size();
  }
  out.config_text = std::move(c.text);
  out.round = c.round;
  return out;
}

}  // namespace

Checkpoint load_checkpoint(const std::filesystem::path& path) { return to_checkpoint(read_container(path)); }

Checkpoint load_checkpoint(const std::filesystem::path& path, const ExperimentConfig& config) {
  Container c = read_container(path);
  const Schema expected = translator_schema(config.translator);
  std::size_t offset = 12;
  for (std::size_t i = 0; i < std::max(expected.size(), c.tensors.size()); ++i) {
    if (i >= c.tensors.size()) {
      throw FormatError(fmt::format("checkpoint: tensor '{}' is missing", expected[i].name), offset);
    }
    const auto& t = c.tensors[i];
    if (i >= expected.size() || t.name != expected[i].name || t.value.shape() != expected[i].shape) {
      throw FormatError(fmt::format("checkpoint: tensor {} '{}' {} does not match the configured translator schema",
                                    i, t.name, shape_str(t.value.shape())),
                        offset);
    }
    offset += 4 + t.name.size() + 4 + 4 * t.value.rank() + 8 * t.value.size();
  }
  return to_checkpoint(std::move(c));
}

}  // namespace ftpg
