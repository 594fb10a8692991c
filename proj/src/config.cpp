#include "fedquad/config.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "fedquad/error.hpp"
#include "fedquad/io.hpp"
#include "fedquad/kernels.hpp"

namespace fedquad {
namespace {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

std::vector<std::string_view> split_list(std::string_view v) {
  std::vector<std::string_view> out;
  v = trim(v);
  if (v.empty()) return out;
  while (true) {
    const auto comma = v.find(',');
    out.push_back(trim(v.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  for (auto item : out) {
    if (item.empty()) throw ConfigError("empty list item");
  }
  return out;
}

template <typename T>
T parse_number(std::string_view v) {
  v = trim(v);
  T out{};
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("expected a number, got '" + std::string(v) + "'");
  }
  return out;
}

double parse_real(std::string_view v) {
  const double x = parse_number<double>(v);
  if (!std::isfinite(x)) throw ConfigError("value must be finite");
  return x;
}

std::size_t parse_count(std::string_view v, std::size_t min_value) {
  const auto x = parse_number<std::size_t>(v);
  if (x < min_value) throw ConfigError("must be >= " + std::to_string(min_value));
  return x;
}

bool parse_bool(std::string_view v) {
  v = trim(v);
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("expected true or false, got '" + std::string(v) + "'");
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

template <typename T, typename F>
std::string join(const std::vector<T>& xs, F fmt) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ", ";
    out += fmt(xs[i]);
  }
  return out;
}

std::string fmt_size(std::size_t x) { return std::to_string(x); }

std::vector<std::size_t> parse_sizes(std::string_view v, std::size_t min_value) {
  std::vector<std::size_t> out;
  for (auto item : split_list(v)) out.push_back(parse_count(item, min_value));
  return out;
}

std::array<double, 3> parse_triple(std::string_view v, bool positive) {
  const auto items = split_list(v);
  if (items.size() != 3) throw ConfigError("expected three comma-separated values");
  std::array<double, 3> out{};
  for (std::size_t i = 0; i < 3; ++i) {
    out[i] = parse_real(items[i]);
    if (positive && !(out[i] > 0.0)) throw ConfigError("values must be > 0");
  }
  return out;
}

double non_negative(std::string_view v) {
  const double x = parse_real(v);
  if (!(x >= 0.0)) throw ConfigError("must be >= 0");
  return x;
}

double positive(std::string_view v) {
  const double x = parse_real(v);
  if (!(x > 0.0)) throw ConfigError("must be > 0");
  return x;
}

struct Field {
  const char* section;
  const char* key;
  std::function<void(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

const std::vector<Field>& fields() {
  using C = ExperimentConfig;
  using V = std::string_view;
  static const std::vector<Field> table = {
      {"experiment", "seed", [](C& c, V v) { c.seed = parse_number<std::uint64_t>(v); },
       [](const C& c) { return std::to_string(c.seed); }},
      {"experiment", "workers", [](C& c, V v) { c.workers = parse_count(v, 1); },
       [](const C& c) { return std::to_string(c.workers); }},
      {"experiment", "kernels",
       [](C& c, V v) {
         if (v != "auto") kernels::parse_backend(v);
         c.kernels = std::string(v);
       },
       [](const C& c) { return c.kernels; }},

      {"dataset", "kind",
       [](C& c, V v) {
         if (v == "blobs") c.dataset.kind = DatasetKind::kBlobs;
         else if (v == "cifar10") c.dataset.kind = DatasetKind::kCifar10;
         else if (v == "cifar100") c.dataset.kind = DatasetKind::kCifar100;
         else throw ConfigError("expected blobs, cifar10 or cifar100, got '" + std::string(v) + "'");
       },
       [](const C& c) { return std::string(dataset_kind_name(c.dataset.kind)); }},
      {"dataset", "path", [](C& c, V v) { c.dataset.path = std::string(v); },
       [](const C& c) { return c.dataset.path; }},
      {"dataset", "num_classes", [](C& c, V v) { c.dataset.blobs.num_classes = parse_count(v, 2); },
       [](const C& c) { return std::to_string(c.dataset.blobs.num_classes); }},
      {"dataset", "per_class", [](C& c, V v) { c.dataset.blobs.per_class = parse_count(v, 1); },
       [](const C& c) { return std::to_string(c.dataset.blobs.per_class); }},
      {"dataset", "test_per_class", [](C& c, V v) { c.dataset.blobs.test_per_class = parse_count(v, 1); },
       [](const C& c) { return std::to_string(c.dataset.blobs.test_per_class); }},
      {"dataset", "dim", [](C& c, V v) { c.dataset.blobs.dim = parse_count(v, 1); },
       [](const C& c) { return std::to_string(c.dataset.blobs.dim); }},
      {"dataset", "spread", [](C& c, V v) { c.dataset.blobs.spread = non_negative(v); },
       [](const C& c) { return format_double(c.dataset.blobs.spread); }},
      {"dataset", "radius", [](C& c, V v) { c.dataset.blobs.radius = positive(v); },
       [](const C& c) { return format_double(c.dataset.blobs.radius); }},
      {"dataset", "norm_mean",
       [](C& c, V v) {
         if (!c.dataset.norm) c.dataset.norm = ChannelNorm{};
         c.dataset.norm->mean = parse_triple(v, false);
       },
       [](const C& c) {
         return c.dataset.norm ? join(std::vector<double>(c.dataset.norm->mean.begin(), c.dataset.norm->mean.end()),
                                      format_double)
                               : std::string();
       }},
      {"dataset", "norm_std",
       [](C& c, V v) {
         if (!c.dataset.norm) c.dataset.norm = ChannelNorm{};
         c.dataset.norm->stddev = parse_triple(v, true);
       },
       [](const C& c) {
         return c.dataset.norm
                    ? join(std::vector<double>(c.dataset.norm->stddev.begin(), c.dataset.norm->stddev.end()),
                           format_double)
                    : std::string();
       }},

      {"partition", "scheme",
       [](C& c, V v) {
         if (v == "iid") c.partition.scheme = PartitionScheme::kIid;
         else if (v == "dirichlet") c.partition.scheme = PartitionScheme::kDirichlet;
         else throw ConfigError("expected iid or dirichlet, got '" + std::string(v) + "'");
       },
       [](const C& c) { return std::string(partition_scheme_name(c.partition.scheme)); }},
      {"partition", "alpha",
       [](C& c, V v) {
         const double a = parse_real(v);
         if (!(a > 0.0)) throw ConfigError("alpha must be > 0");
         c.partition.alpha = a;
       },
       [](const C& c) { return format_double(c.partition.alpha); }},
      {"partition", "max_attempts", [](C& c, V v) { c.partition.max_attempts = parse_count(v, 1); },
       [](const C& c) { return std::to_string(c.partition.max_attempts); }},

      {"model", "kind",
       [](C& c, V v) {
         if (v == "auto") c.model.kind.reset();
         else if (v == "mlp") c.model.kind = ModelKind::kMlp;
         else if (v == "cnn") c.model.kind = ModelKind::kCnn;
         else throw ConfigError("expected auto, mlp or cnn, got '" + std::string(v) + "'");
       },
       [](const C& c) { return c.model.kind ? std::string(model_kind_name(*c.model.kind)) : std::string("auto"); }},
      {"model", "hidden_dims", [](C& c, V v) { c.model.hidden_dims = parse_sizes(v, 1); },
       [](const C& c) { return join(c.model.hidden_dims, fmt_size); }},
      {"model", "embedding_dim", [](C& c, V v) { c.model.embedding_dim = parse_count(v, 1); },
       [](const C& c) { return std::to_string(c.model.embedding_dim); }},
      {"model", "conv_channels",
       [](C& c, V v) {
         auto ch = parse_sizes(v, 1);
         if (ch.size() != 3) throw ConfigError("expected three channel widths");
         c.model.conv_channels = ch;
       },
       [](const C& c) { return join(c.model.conv_channels, fmt_size); }},

      {"federation", "num_clients", [](C& c, V v) { c.fed.num_clients = parse_count(v, 1); },
       [](const C& c) { return std::to_string(c.fed.num_clients); }},
      {"federation", "rounds", [](C& c, V v) { c.fed.rounds = parse_count(v, 1); },
       [](const C& c) { return std::to_string(c.fed.rounds); }},
      {"federation", "local_epochs", [](C& c, V v) { c.fed.local_epochs = parse_count(v, 1); },
       [](const C& c) { return std::to_string(c.fed.local_epochs); }},
      {"federation", "batch_size", [](C& c, V v) { c.fed.batch_size = parse_count(v, 1); },
       [](const C& c) { return std::to_string(c.fed.batch_size); }},
      {"federation", "participation",
       [](C& c, V v) {
         const double f = parse_real(v);
         if (!(f > 0.0 && f <= 1.0)) throw ConfigError("participation must be in (0, 1]");
         c.fed.participation = f;
       },
       [](const C& c) { return format_double(c.fed.participation); }},

      {"method", "name", [](C& c, V v) { c.fed.objective.method = parse_method(v); },
       [](const C& c) { return std::string(method_name(c.fed.objective.method)); }},
      {"method", "beta", [](C& c, V v) { c.fed.objective.quad.beta = non_negative(v); },
       [](const C& c) { return format_double(c.fed.objective.quad.beta); }},
      {"method", "m1", [](C& c, V v) { c.fed.objective.quad.m1 = non_negative(v); },
       [](const C& c) { return format_double(c.fed.objective.quad.m1); }},
      {"method", "m2", [](C& c, V v) { c.fed.objective.quad.m2 = non_negative(v); },
       [](const C& c) { return format_double(c.fed.objective.quad.m2); }},
      {"method", "margin", [](C& c, V v) { c.fed.objective.margin = non_negative(v); },
       [](const C& c) { return format_double(c.fed.objective.margin); }},
      {"method", "temperature", [](C& c, V v) { c.fed.objective.temperature = positive(v); },
       [](const C& c) { return format_double(c.fed.objective.temperature); }},
      {"method", "squared_distance", [](C& c, V v) { c.fed.objective.quad.squared_distance = parse_bool(v); },
       [](const C& c) { return fmt_bool(c.fed.objective.quad.squared_distance); }},
      {"method", "use_ce", [](C& c, V v) { c.fed.objective.use_ce = parse_bool(v); },
       [](const C& c) { return fmt_bool(c.fed.objective.use_ce); }},

      {"optimizer", "lr", [](C& c, V v) { c.fed.adam.lr = non_negative(v); },
       [](const C& c) { return format_double(c.fed.adam.lr); }},
      {"optimizer", "beta1",
       [](C& c, V v) {
         const double b = parse_real(v);
         if (!(b >= 0.0 && b < 1.0)) throw ConfigError("must be in [0, 1)");
         c.fed.adam.beta1 = b;
       },
       [](const C& c) { return format_double(c.fed.adam.beta1); }},
      {"optimizer", "beta2",
       [](C& c, V v) {
         const double b = parse_real(v);
         if (!(b >= 0.0 && b < 1.0)) throw ConfigError("must be in [0, 1)");
         c.fed.adam.beta2 = b;
       },
       [](const C& c) { return format_double(c.fed.adam.beta2); }},
      {"optimizer", "eps", [](C& c, V v) { c.fed.adam.eps = positive(v); },
       [](const C& c) { return format_double(c.fed.adam.eps); }},
      {"optimizer", "weight_decay", [](C& c, V v) { c.fed.adam.weight_decay = non_negative(v); },
       [](const C& c) { return format_double(c.fed.adam.weight_decay); }},

      {"output", "dir", [](C& c, V v) { c.output.dir = std::string(v); },
       [](const C& c) { return c.output.dir; }},
      {"output", "export_rounds", [](C& c, V v) { c.output.export_rounds = parse_sizes(v, 0); },
       [](const C& c) { return join(c.output.export_rounds, fmt_size); }},
      {"output", "export_max_samples", [](C& c, V v) { c.output.export_max_samples = parse_count(v, 1); },
       [](const C& c) { return std::to_string(c.output.export_max_samples); }},

      {"grid", "beta",
       [](C& c, V v) {
         c.grid.beta.clear();
         for (auto item : split_list(v)) c.grid.beta.push_back(non_negative(item));
       },
       [](const C& c) { return join(c.grid.beta, format_double); }},
      {"grid", "m1",
       [](C& c, V v) {
         c.grid.m1.clear();
         for (auto item : split_list(v)) c.grid.m1.push_back(non_negative(item));
       },
       [](const C& c) { return join(c.grid.m1, format_double); }},
      {"grid", "m2",
       [](C& c, V v) {
         c.grid.m2.clear();
         for (auto item : split_list(v)) c.grid.m2.push_back(non_negative(item));
       },
       [](const C& c) { return join(c.grid.m2, format_double); }},
      {"grid", "use_ce",
       [](C& c, V v) {
         c.grid.use_ce.clear();
         for (auto item : split_list(v)) c.grid.use_ce.push_back(parse_bool(item));
       },
       [](const C& c) { return join(c.grid.use_ce, fmt_bool); }},
  };
  return table;
}

}  // namespace

std::string_view dataset_kind_name(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::kBlobs:
      return "blobs";
    case DatasetKind::kCifar10:
      return "cifar10";
    case DatasetKind::kCifar100:
      return "cifar100";
  }
  return "unknown";
}

std::string_view partition_scheme_name(PartitionScheme scheme) {
  return scheme == PartitionScheme::kIid ? "iid" : "dirichlet";
}

std::string_view model_kind_name(ModelKind kind) { return kind == ModelKind::kMlp ? "mlp" : "cnn"; }

ExperimentConfig default_config() { return ExperimentConfig{}; }

ExperimentConfig parse_config_text(std::string_view text, std::string_view source) {
  ExperimentConfig cfg = default_config();
  std::map<std::string, const Field*, std::less<>> by_path;
  std::set<std::string, std::less<>> sections;
  for (const auto& f : fields()) {
    by_path[std::string(f.section) + "." + f.key] = &f;
    sections.insert(f.section);
  }
  std::set<std::string> seen;
  std::string section;
  std::size_t line_no = 0;
  std::string_view rest = text;
  while (!rest.empty()) {
    ++line_no;
    const auto nl = rest.find('\n');
    std::string_view line = rest.substr(0, nl);
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    const std::string where = std::string(source) + ":" + std::to_string(line_no) + ": ";
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "malformed section header '" + std::string(line) + "'");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (!sections.contains(section)) throw ConfigError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected 'key = value', got '" + std::string(line) + "'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError(where + "key '" + key + "' outside any section");
    const std::string path = section + "." + key;
    const auto it = by_path.find(path);
    if (it == by_path.end()) throw ConfigError(where + "unknown key " + path);
    if (!seen.insert(path).second) throw ConfigError(where + "duplicate key " + path);
    try {
      it->second->set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + path + ": " + e.what());
    }
  }
  finalize(cfg);
  return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  return parse_config_text(text, path.string());
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    if (section != f.section) {
      if (!section.empty()) out += '\n';
      section = f.section;
      out += "[" + section + "]\n";
    }
    const std::string value = f.get(cfg);
    if (value.empty() && (std::string_view(f.key) == "norm_mean" || std::string_view(f.key) == "norm_std")) continue;
    out += std::string(f.key) + " = " + value + "\n";
  }
  return out;
}

void finalize(ExperimentConfig& cfg) {
  cfg.fed.seed = cfg.seed;
  cfg.fed.workers = cfg.workers;
  const bool images = cfg.dataset.kind != DatasetKind::kBlobs;
  if (!cfg.model.kind) cfg.model.kind = images ? ModelKind::kCnn : ModelKind::kMlp;
  if (images && *cfg.model.kind == ModelKind::kMlp) {
    throw ConfigError("model.kind: mlp needs a feature-vector dataset (dataset.kind=blobs)");
  }
  if (!images && *cfg.model.kind == ModelKind::kCnn) {
    throw ConfigError("model.kind: cnn needs an image dataset (cifar10 or cifar100)");
  }
  if (!(cfg.partition.alpha > 0.0)) throw ConfigError("partition.alpha: alpha must be > 0");
  for (std::size_t r : cfg.output.export_rounds) {
    if (r > cfg.fed.rounds) {
      throw ConfigError("output.export_rounds: round " + std::to_string(r) + " exceeds federation.rounds");
    }
  }
  if (cfg.grid.beta.empty() || cfg.grid.m1.empty() || cfg.grid.m2.empty() || cfg.grid.use_ce.empty()) {
    throw ConfigError("grid: every grid axis needs at least one value");
  }
  validate(cfg.fed);
}

ModelSpec model_spec(const ExperimentConfig& cfg, const Dataset& train) {
  ModelSpec spec;
  spec.kind = cfg.model.kind.value_or(ModelKind::kMlp);
  spec.input_shape = train.sample_shape();
  spec.hidden_dims = cfg.model.hidden_dims;
  spec.conv_channels = cfg.model.conv_channels;
  spec.embedding_dim = cfg.model.embedding_dim;
  spec.num_classes = train.num_classes;
  return spec;
}

}  // namespace fedquad
