#include "mgaze/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <variant>

#include <json.hpp>
#include <tomlplusplus/toml.hpp>

#include "mgaze/errors.hpp"

namespace mgaze {

namespace {

static_assert(std::is_same_v<std::size_t, std::uint64_t>, "counts and seeds share one field kind");
using FieldPtr = std::variant<std::uint64_t*, long*, double*, bool*, std::string*, Indicator*>;

struct Field {
  std::string key;
  FieldPtr ptr;
};

const char* const kTables[] = {"source", "target", "noise"};

void add_domain_fields(std::vector<Field>& out, const std::string& prefix, SyntheticDomainConfig& d) {
  out.push_back({prefix + "domain_id", &d.domain_id});
  out.push_back({prefix + "n_samples", &d.n_samples});
  out.push_back({prefix + "pitch_min_deg", &d.pitch_min_deg});
  out.push_back({prefix + "pitch_max_deg", &d.pitch_max_deg});
  out.push_back({prefix + "yaw_min_deg", &d.yaw_min_deg});
  out.push_back({prefix + "yaw_max_deg", &d.yaw_max_deg});
  out.push_back({prefix + "input_dim", &d.input_dim});
  out.push_back({prefix + "style_dim", &d.style_dim});
  out.push_back({prefix + "embed_hidden", &d.embed_hidden});
  out.push_back({prefix + "style_mean", &d.style_mean});
  out.push_back({prefix + "style_std", &d.style_std});
  out.push_back({prefix + "style_gain", &d.style_gain});
  out.push_back({prefix + "obs_noise", &d.obs_noise});
  out.push_back({prefix + "embedding_seed", &d.embedding_seed});
  out.push_back({prefix + "sample_seed", &d.sample_seed});
}

std::vector<Field> fields(ExperimentConfig& c) {
  TrainConfig& t = c.train;
  std::vector<Field> out = {
      {"K", &t.K},
      {"t_percent", &t.t_percent},
      {"lambda", &t.lambda},
      {"tau", &t.tau},
      {"alpha", &t.alpha},
      {"batch_clean", &t.batch_clean},
      {"batch_noisy", &t.batch_noisy},
      {"learning_rate", &t.learning_rate},
      {"warmup_epochs", &t.warmup_epochs},
      {"max_epochs", &t.max_epochs},
      {"init_seed", &t.init_seed},
      {"data_seed", &t.data_seed},
      {"shuffle_seed", &t.shuffle_seed},
      {"detach_teacher", &t.detach_teacher},
      {"include_diag_in_eta", &t.include_diag_in_eta},
      {"warmup_uses_align", &t.warmup_uses_align},
      {"indicator", &t.indicator},
      {"score_batch", &t.score_batch},
      {"hidden_width", &t.hidden_width},
      {"feature_dim", &t.feature_dim},
      {"projection_hidden", &t.projection_hidden},
      {"projection_dim", &t.projection_dim},
      {"checkpoint_every", &t.checkpoint_every},
  };
  add_domain_fields(out, "source.", c.source);
  add_domain_fields(out, "target.", c.target);
  out.push_back({"noise.ratio", &c.noise.ratio});
  out.push_back({"noise.sigma_deg", &c.noise.sigma_deg});
  out.push_back({"noise.seed", &c.noise.seed});
  return out;
}

Field* find_field(std::vector<Field>& all, std::string_view key) {
  for (auto& f : all) {
    if (f.key == key) return &f;
  }
  return nullptr;
}

template <typename T>
T parse_number(const std::string& key, std::string_view text) {
  T value{};
  const char* first = text.data();
  const char* last = first + text.size();
  if (!text.empty() && text.front() == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || first == last) {
    throw ConfigError(key + ": invalid value '" + std::string(text) + "'");
  }
  return value;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

void set_from_text(Field& field, std::string_view text) {
  const std::string& key = field.key;
  std::visit(
      [&](auto* p) {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, bool>) {
          if (text == "true") {
            *p = true;
          } else if (text == "false") {
            *p = false;
          } else {
            throw ConfigError(key + ": expected true or false, got '" + std::string(text) + "'");
          }
        } else if constexpr (std::is_same_v<T, std::string>) {
          *p = std::string(text);
        } else if constexpr (std::is_same_v<T, Indicator>) {
          try {
            *p = indicator_from_string(std::string(text));
          } catch (const Error& e) {
            throw ConfigError(key + ": " + e.what());
          }
        } else if constexpr (std::is_unsigned_v<T>) {
          if (!text.empty() && text.front() == '-') {
            throw ConfigError(key + ": must be non-negative, got '" + std::string(text) + "'");
          }
          *p = parse_number<T>(key, text);
        } else {
          *p = parse_number<T>(key, text);
        }
      },
      field.ptr);
}

std::string to_text(const Field& field) {
  return std::visit(
      [](auto* p) -> std::string {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, bool>) {
          return *p ? "true" : "false";
        } else if constexpr (std::is_same_v<T, std::string>) {
          return *p;
        } else if constexpr (std::is_same_v<T, Indicator>) {
          return to_string(*p);
        } else if constexpr (std::is_same_v<T, double>) {
          return format_double(*p);
        } else {
          return std::to_string(*p);
        }
      },
      field.ptr);
}

std::string quote(const std::string& text) {
  std::string out = "\"";
  for (char c : text) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + '"';
}

bool is_quoted(const FieldPtr& ptr) {
  return std::holds_alternative<std::string*>(ptr) || std::holds_alternative<Indicator*>(ptr);
}

bool is_table_name(std::string_view name) {
  for (const char* t : kTables) {
    if (name == t) return true;
  }
  return false;
}

void assign(std::vector<Field>& all, const std::string& key, std::string_view text) {
  Field* f = find_field(all, key);
  if (f == nullptr) throw ConfigError("unknown config key '" + key + "'");
  set_from_text(*f, text);
}

std::string toml_scalar_text(const std::string& key, const toml::node& node) {
  if (auto s = node.as_string()) return s->get();
  if (auto i = node.as_integer()) return std::to_string(i->get());
  if (auto d = node.as_floating_point()) return format_double(d->get());
  if (auto b = node.as_boolean()) return b->get() ? "true" : "false";
  throw ConfigError(key + ": unsupported value type");
}

std::string json_scalar_text(const std::string& key, const nlohmann::json& node) {
  if (node.is_string()) return node.get<std::string>();
  if (node.is_number_unsigned()) return std::to_string(node.get<std::uint64_t>());
  if (node.is_number_integer()) return std::to_string(node.get<std::int64_t>());
  if (node.is_number_float()) return format_double(node.get<double>());
  if (node.is_boolean()) return node.get<bool>() ? "true" : "false";
  throw ConfigError(key + ": unsupported value type");
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

SyntheticDomainConfig ExperimentConfig::default_target_domain() {
  SyntheticDomainConfig d;
  d.domain_id = "target";
  d.n_samples = 2000;
  d.style_mean = 1.0;
  d.sample_seed = 99;
  return d;
}

void validate(const ExperimentConfig& cfg) {
  validate(cfg.train);
  validate(cfg.source);
  validate(cfg.target);
  if (!(cfg.noise.ratio >= 0.0 && cfg.noise.ratio <= 1.0)) throw ConfigError("noise.ratio must lie in [0, 1]");
  if (!(cfg.noise.sigma_deg >= 0.0)) throw ConfigError("noise.sigma_deg must be non-negative");
  if (cfg.source.input_dim != cfg.target.input_dim) {
    throw ConfigError("target.input_dim must equal source.input_dim");
  }
}

ExperimentConfig parse_toml_config(std::string_view text) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "TOML line " << e.source().begin.line << ": " << e.description();
    throw ConfigError(msg.str());
  }
  ExperimentConfig cfg;
  auto all = fields(cfg);
  for (const auto& [k, node] : root) {
    const std::string key(k.str());
    if (const toml::table* sub = node.as_table()) {
      if (!is_table_name(key)) throw ConfigError("unknown config table '" + key + "'");
      for (const auto& [sk, snode] : *sub) {
        const std::string dotted = key + "." + std::string(sk.str());
        assign(all, dotted, toml_scalar_text(dotted, snode));
      }
    } else {
      assign(all, key, toml_scalar_text(key, node));
    }
  }
  return cfg;
}

ExperimentConfig parse_json_config(std::string_view text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("JSON config must be an object");
  ExperimentConfig cfg;
  auto all = fields(cfg);
  for (const auto& [key, node] : root.items()) {
    if (node.is_object()) {
      if (!is_table_name(key)) throw ConfigError("unknown config table '" + key + "'");
      for (const auto& [sk, snode] : node.items()) {
        const std::string dotted = key + "." + sk;
        assign(all, dotted, json_scalar_text(dotted, snode));
      }
    } else {
      assign(all, key, json_scalar_text(key, node));
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  ExperimentConfig cfg = path.extension() == ".json" ? parse_json_config(text) : parse_toml_config(text);
  validate(cfg);
  return cfg;
}

void apply_override(ExperimentConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
  }
  auto trim = [](std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
  };
  const std::string key(trim(assignment.substr(0, eq)));
  std::string_view value = trim(assignment.substr(eq + 1));
  if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front()) {
    value = value.substr(1, value.size() - 2);
  }
  auto all = fields(cfg);
  assign(all, key, value);
}

std::vector<std::string> config_keys() {
  ExperimentConfig cfg;
  std::vector<std::string> keys;
  for (const auto& f : fields(cfg)) keys.push_back(f.key);
  return keys;
}

std::string to_toml(const ExperimentConfig& cfg) {
  ExperimentConfig copy = cfg;
  auto all = fields(copy);
  std::ostringstream out;
  std::string table;
  for (const auto& f : all) {
    std::string key = f.key;
    const auto dot = key.find('.');
    if (dot != std::string::npos) {
      const std::string t = key.substr(0, dot);
      if (t != table) {
        out << "\n[" << t << "]\n";
        table = t;
      }
      key = key.substr(dot + 1);
    }
    out << key << " = ";
    if (is_quoted(f.ptr)) {
      out << quote(to_text(f));
    } else {
      out << to_text(f);
    }
    out << '\n';
  }
  return out.str();
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t config_hash(const ExperimentConfig& cfg) { return fnv1a(to_toml(cfg)); }

}  // namespace mgaze
