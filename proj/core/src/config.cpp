#include "csf/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace csf {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double_or_throw(const std::string& text, const std::string& what) {
  const std::string t = trim(text);
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size()) {
    throw std::invalid_argument("config: " + what + ": '" + text + "' is not a number");
  }
  return v;
}

long long parse_int_or_throw(const std::string& text, const std::string& what) {
  const std::string t = trim(text);
  char* end = nullptr;
  const long long v = std::strtoll(t.c_str(), &end, 10);
  if (t.empty() || end != t.c_str() + t.size()) {
    throw std::invalid_argument("config: " + what + ": '" + text + "' is not an integer");
  }
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// ConfigFile
// ---------------------------------------------------------------------------

ConfigFile ConfigFile::parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_string(ss.str(), path);
}

ConfigFile ConfigFile::parse_string(const std::string& text, const std::string& origin) {
  ConfigFile cf;
  cf.origin_ = origin;
  std::istringstream is(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3) {
        throw std::invalid_argument("config: " + origin + ":" + std::to_string(line_no) +
                                    ": malformed section header '" + t + "'");
      }
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: " + origin + ":" + std::to_string(line_no) +
                                  ": expected key = value, got '" + t + "'");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) {
      throw std::invalid_argument("config: " + origin + ":" + std::to_string(line_no) +
                                  ": empty key");
    }
    if (section.empty()) {
      throw std::invalid_argument("config: " + origin + ":" + std::to_string(line_no) + ": key '" +
                                  key + "' appears before any [section] header");
    }
    auto [it, inserted] = cf.sections_[section].emplace(key, Entry{value, line_no, false});
    if (!inserted) {
      throw std::invalid_argument("config: " + origin + ":" + std::to_string(line_no) +
                                  ": duplicate key '" + section + "." + key + "' (first at line " +
                                  std::to_string(it->second.line) + ")");
    }
  }
  return cf;
}

const ConfigFile::Entry* ConfigFile::find(const std::string& section,
                                          const std::string& key) const {
  auto sit = sections_.find(section);
  if (sit == sections_.end()) return nullptr;
  auto kit = sit->second.find(key);
  if (kit == sit->second.end()) return nullptr;
  return &kit->second;
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
  return find(section, key) != nullptr;
}

std::string ConfigFile::get_string(const std::string& section, const std::string& key,
                                   const std::string& fallback) const {
  const Entry* e = find(section, key);
  if (e == nullptr) return fallback;
  e->used = true;
  return e->value;
}

double ConfigFile::get_double(const std::string& section, const std::string& key,
                              double fallback) const {
  const Entry* e = find(section, key);
  if (e == nullptr) return fallback;
  e->used = true;
  return parse_double_or_throw(e->value, origin_ + ":" + std::to_string(e->line) + ": " + section +
                                             "." + key);
}

Index ConfigFile::get_int(const std::string& section, const std::string& key,
                          Index fallback) const {
  const Entry* e = find(section, key);
  if (e == nullptr) return fallback;
  e->used = true;
  return static_cast<Index>(parse_int_or_throw(
      e->value, origin_ + ":" + std::to_string(e->line) + ": " + section + "." + key));
}

bool ConfigFile::get_bool(const std::string& section, const std::string& key,
                          bool fallback) const {
  const Entry* e = find(section, key);
  if (e == nullptr) return fallback;
  e->used = true;
  const std::string v = trim(e->value);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("config: " + origin_ + ":" + std::to_string(e->line) + ": " +
                              section + "." + key + ": '" + v + "' is not a boolean");
}

std::uint64_t ConfigFile::get_u64(const std::string& section, const std::string& key,
                                  std::uint64_t fallback) const {
  const Entry* e = find(section, key);
  if (e == nullptr) return fallback;
  e->used = true;
  const long long v = parse_int_or_throw(
      e->value, origin_ + ":" + std::to_string(e->line) + ": " + section + "." + key);
  if (v < 0) {
    throw std::invalid_argument("config: " + section + "." + key + " must be non-negative");
  }
  return static_cast<std::uint64_t>(v);
}

std::vector<std::uint64_t> ConfigFile::get_u64_list(
    const std::string& section, const std::string& key,
    const std::vector<std::uint64_t>& fallback) const {
  const Entry* e = find(section, key);
  if (e == nullptr) return fallback;
  e->used = true;
  std::vector<std::uint64_t> out;
  for (const std::string& part : split(e->value, ',')) {
    const std::string t = trim(part);
    if (t.empty()) continue;
    const long long v = parse_int_or_throw(
        t, origin_ + ":" + std::to_string(e->line) + ": " + section + "." + key);
    if (v < 0) {
      throw std::invalid_argument("config: " + section + "." + key +
                                  " entries must be non-negative");
    }
    out.push_back(static_cast<std::uint64_t>(v));
  }
  if (out.empty()) {
    throw std::invalid_argument("config: " + origin_ + ":" + std::to_string(e->line) + ": " +
                                section + "." + key + " lists no values");
  }
  return out;
}

void ConfigFile::ensure_all_consumed() const {
  for (const auto& [section, keys] : sections_) {
    for (const auto& [key, entry] : keys) {
      if (!entry.used) {
        throw std::invalid_argument("config: " + origin_ + ":" + std::to_string(entry.line) +
                                    ": unknown key '" + section + "." + key + "'");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Structured value formats
// ---------------------------------------------------------------------------

PathSpec parse_path_spec(const std::string& text) {
  PathSpec path;
  std::istringstream is(text);
  std::string token;
  while (is >> token) {
    const std::size_t colon = token.find(':');
    if (colon == std::string::npos) {
      throw std::invalid_argument("config: path spec token '" + token +
                                  "' must be conv:... or pool:...");
    }
    const std::string kind = token.substr(0, colon);
    const std::string body = token.substr(colon + 1);
    std::map<std::string, std::string> kv;
    for (const std::string& part : split(body, ',')) {
      if (trim(part).empty()) continue;
      const auto pieces = split(part, '=');
      if (pieces.size() != 2) {
        throw std::invalid_argument("config: path spec field '" + part + "' must be key=value");
      }
      kv[trim(pieces[0])] = trim(pieces[1]);
    }
    auto take = [&kv, &token](const std::string& key, Index fallback) {
      auto it = kv.find(key);
      if (it == kv.end()) return fallback;
      const Index v = static_cast<Index>(parse_int_or_throw(it->second, "path spec '" + token + "'"));
      kv.erase(it);
      return v;
    };
    if (kind == "conv") {
      StageSpec stage;
      stage.conv.kernel = take("k", 0);
      stage.conv.stride = take("s", 1);
      stage.conv.padding = take("p", 0);
      stage.conv.dilation = take("d", 1);
      stage.conv.out_channels = take("out", 0);
      if (stage.conv.kernel < 1) {
        throw std::invalid_argument("config: path spec '" + token + "' needs k >= 1");
      }
      path.stages.push_back(stage);
    } else if (kind == "pool") {
      if (path.stages.empty() || path.stages.back().pool.has_value()) {
        throw std::invalid_argument("config: pool clause '" + token +
                                    "' must follow a conv clause");
      }
      PoolSpec pool;
      pool.window = take("w", 0);
      pool.stride = take("s", pool.window);
      if (pool.window < 1) {
        throw std::invalid_argument("config: path spec '" + token + "' needs w >= 1");
      }
      path.stages.back().pool = pool;
    } else {
      throw std::invalid_argument("config: path spec token '" + token +
                                  "' must be conv:... or pool:...");
    }
    if (!kv.empty()) {
      throw std::invalid_argument("config: path spec '" + token + "' has unknown field '" +
                                  kv.begin()->first + "'");
    }
  }
  if (path.stages.empty()) {
    throw std::invalid_argument("config: path spec '" + text + "' defines no conv layers");
  }
  return path;
}

std::string format_path_spec(const PathSpec& path) {
  std::string out;
  for (const StageSpec& st : path.stages) {
    if (!out.empty()) out += ' ';
    out += "conv:k=" + std::to_string(st.conv.kernel) + ",s=" + std::to_string(st.conv.stride) +
           ",p=" + std::to_string(st.conv.padding) + ",d=" + std::to_string(st.conv.dilation) +
           ",out=" + std::to_string(st.conv.out_channels);
    if (st.pool.has_value()) {
      out += " pool:w=" + std::to_string(st.pool->window) +
             ",s=" + std::to_string(st.pool->stride);
    }
  }
  return out;
}

std::vector<BandSpec> parse_bands(const std::string& text) {
  std::vector<BandSpec> bands;
  for (const std::string& clause : split(text, ';')) {
    const std::string t = trim(clause);
    if (t.empty()) continue;
    const auto parts = split(t, ':');
    if (parts.size() != 3) {
      throw std::invalid_argument("config: band '" + t + "' must be center:width:amplitude");
    }
    BandSpec b;
    b.center_hz = parse_double_or_throw(parts[0], "band center");
    b.bandwidth_hz = parse_double_or_throw(parts[1], "band width");
    b.amplitude_uv = parse_double_or_throw(parts[2], "band amplitude");
    bands.push_back(b);
  }
  if (bands.empty()) {
    throw std::invalid_argument("config: band list '" + text + "' defines no bands");
  }
  return bands;
}

std::string format_bands(const std::vector<BandSpec>& bands) {
  std::string out;
  for (const BandSpec& b : bands) {
    if (!out.empty()) out += ';';
    out += format_double(b.center_hz) + ':' + format_double(b.bandwidth_hz) + ':' +
           format_double(b.amplitude_uv);
  }
  return out;
}

GateActivation parse_gate_activation(const std::string& name) {
  if (name == "sigmoid") return GateActivation::Sigmoid;
  if (name == "tanh") return GateActivation::Tanh;
  if (name == "softmax") return GateActivation::Softmax;
  throw std::invalid_argument("config: gate activation '" + name +
                              "' is not one of sigmoid, tanh, softmax");
}

std::string format_gate_activation(GateActivation g) {
  switch (g) {
    case GateActivation::Sigmoid:
      return "sigmoid";
    case GateActivation::Tanh:
      return "tanh";
    case GateActivation::Softmax:
      return "softmax";
  }
  throw std::logic_error("config: unknown gate activation");
}

MaskMode parse_mask_mode(const std::string& name) {
  if (name == "subtract-diag") return MaskMode::SubtractDiag;
  if (name == "neg-inf-diag") return MaskMode::NegInfDiag;
  throw std::invalid_argument("config: mask mode '" + name +
                              "' is not one of subtract-diag, neg-inf-diag");
}

std::string format_mask_mode(MaskMode m) {
  return m == MaskMode::SubtractDiag ? "subtract-diag" : "neg-inf-diag";
}

GeluForm parse_gelu_form(const std::string& name) {
  if (name == "exact") return GeluForm::Exact;
  if (name == "tanh") return GeluForm::Tanh;
  throw std::invalid_argument("config: gelu form '" + name + "' is not one of exact, tanh");
}

std::string format_gelu_form(GeluForm g) { return g == GeluForm::Exact ? "exact" : "tanh"; }

// ---------------------------------------------------------------------------
// RunConfig
// ---------------------------------------------------------------------------

RunConfig RunConfig::defaults() {
  RunConfig cfg;
  cfg.data = SyntheticSpec::defaults();
  cfg.noise.corrupted_channel_count = std::max<Index>(1, cfg.data.channels / 3);
  cfg.model = ModelConfig::defaults();
  cfg.model.encoder.channels = cfg.data.channels;
  cfg.model.loss.classes = cfg.data.classes;
  return cfg;
}

namespace {

ModelConfig model_config_from(const ConfigFile& cf, Index default_channels,
                              Index default_classes) {
  ModelConfig model = ModelConfig::defaults();
  const Index embed = cf.get_int("model", "embed_dim", 32);
  const Index channels = cf.get_int("encoder", "channels", default_channels);

  EncoderConfig enc = EncoderConfig::defaults(channels, embed);
  enc.dropout_rate = cf.get_double("encoder", "dropout", enc.dropout_rate);
  enc.gelu_form = parse_gelu_form(cf.get_string("encoder", "gelu", "exact"));
  if (cf.has("encoder", "small_path")) {
    enc.small_path = parse_path_spec(cf.get_string("encoder", "small_path", ""));
  }
  if (cf.has("encoder", "large_path")) {
    enc.large_path = parse_path_spec(cf.get_string("encoder", "large_path", ""));
  }
  model.encoder = enc;

  model.attention.embed_dim = embed;
  model.attention.heads = cf.get_int("attention", "heads", model.attention.heads);
  model.attention.ffn_dim = cf.get_int("attention", "ffn_dim", model.attention.ffn_dim);
  model.attention.depth = cf.get_int("attention", "depth", model.attention.depth);
  model.attention.gate_activation =
      parse_gate_activation(cf.get_string("attention", "gate", "sigmoid"));
  model.attention.rope_base = cf.get_double("attention", "rope_base", model.attention.rope_base);
  model.attention.mask_mode = parse_mask_mode(cf.get_string("attention", "mask", "subtract-diag"));
  model.attention.gelu_form = model.encoder.gelu_form;

  model.loss.lambda = cf.get_double("loss", "lambda", model.loss.lambda);
  model.loss.tau = cf.get_double("loss", "tau", model.loss.tau);
  model.loss.classes = cf.get_int("loss", "classes", default_classes);

  model.seeds = cf.get_u64_list("train", "seeds", model.seeds);
  model.epochs = cf.get_int("train", "epochs", model.epochs);
  model.batch_size = cf.get_int("train", "batch_size", model.batch_size);
  model.learning_rate = cf.get_double("train", "learning_rate", model.learning_rate);
  model.weight_decay = cf.get_double("train", "weight_decay", model.weight_decay);
  return model;
}

RunConfig run_config_from(const ConfigFile& cf) {
  RunConfig cfg = RunConfig::defaults();

  cfg.data_seed = cf.get_u64("data", "seed", cfg.data_seed);
  cfg.data.channels = cf.get_int("data", "channels", cfg.data.channels);
  cfg.data.length = cf.get_int("data", "length", cfg.data.length);
  cfg.data.sampling_rate = cf.get_double("data", "sampling_rate", cfg.data.sampling_rate);
  cfg.data.classes = cf.get_int("data", "classes", cfg.data.classes);
  cfg.data.subjects_per_class =
      cf.get_int("data", "subjects_per_class", cfg.data.subjects_per_class);
  cfg.data.segments_per_subject =
      cf.get_int("data", "segments_per_subject", cfg.data.segments_per_subject);
  cfg.data.background_std = cf.get_double("data", "background_std", cfg.data.background_std);
  cfg.data.amplitude_jitter = cf.get_double("data", "amplitude_jitter", cfg.data.amplitude_jitter);
  cfg.data.randomize_phase = cf.get_bool("data", "randomize_phase", cfg.data.randomize_phase);
  if (cfg.data.classes < 2) {
    throw std::invalid_argument("config: data.classes must be >= 2");
  }
  cfg.data.class_bands = default_bands(cfg.data.classes);
  for (Index k = 0; k < cfg.data.classes; ++k) {
    const std::string key = "class" + std::to_string(k) + "_bands";
    if (cf.has("data", key)) {
      cfg.data.class_bands[static_cast<std::size_t>(k)] =
          parse_bands(cf.get_string("data", key, ""));
    }
  }

  cfg.noise.corrupted_channel_count = cf.get_int("noise", "corrupted_channels",
                                                 std::max<Index>(1, cfg.data.channels / 3));
  cfg.noise.noise_std = cf.get_double("noise", "std", cfg.noise.noise_std);
  cfg.noise.noise_mean = cf.get_double("noise", "mean", cfg.noise.noise_mean);
  cfg.noise.seed = cf.get_u64("noise", "seed", cfg.noise.seed);

  cfg.split.train = cf.get_double("split", "train", cfg.split.train);
  cfg.split.val = cf.get_double("split", "val", cfg.split.val);
  cfg.split.test = cf.get_double("split", "test", cfg.split.test);
  cfg.split_seed = cf.get_u64("split", "seed", cfg.split_seed);

  cfg.model = model_config_from(cf, cfg.data.channels, cfg.data.classes);
  cf.ensure_all_consumed();
  return cfg;
}

}  // namespace

RunConfig run_config_from_file(const std::string& path) {
  return run_config_from(ConfigFile::parse_file(path));
}

RunConfig run_config_from_string(const std::string& text) {
  return run_config_from(ConfigFile::parse_string(text));
}

namespace {

void append_model_sections(std::string& out, const ModelConfig& m, bool with_dims) {
  out += "[model]\n";
  out += "embed_dim = " + std::to_string(m.encoder.embed_dim) + "\n\n";

  out += "[encoder]\n";
  if (with_dims) out += "channels = " + std::to_string(m.encoder.channels) + "\n";
  out += "dropout = " + format_double(m.encoder.dropout_rate) + "\n";
  out += "gelu = " + format_gelu_form(m.encoder.gelu_form) + "\n";
  out += "small_path = " + format_path_spec(m.encoder.small_path) + "\n";
  out += "large_path = " + format_path_spec(m.encoder.large_path) + "\n\n";

  out += "[attention]\n";
  out += "heads = " + std::to_string(m.attention.heads) + "\n";
  out += "ffn_dim = " + std::to_string(m.attention.ffn_dim) + "\n";
  out += "depth = " + std::to_string(m.attention.depth) + "\n";
  out += "gate = " + format_gate_activation(m.attention.gate_activation) + "\n";
  out += "rope_base = " + format_double(m.attention.rope_base) + "\n";
  out += "mask = " + format_mask_mode(m.attention.mask_mode) + "\n\n";

  out += "[loss]\n";
  if (with_dims) out += "classes = " + std::to_string(m.loss.classes) + "\n";
  out += "lambda = " + format_double(m.loss.lambda) + "\n";
  out += "tau = " + format_double(m.loss.tau) + "\n\n";

  out += "[train]\n";
  out += "seeds = ";
  for (std::size_t i = 0; i < m.seeds.size(); ++i) {
    if (i > 0) out += ',';
    out += std::to_string(m.seeds[i]);
  }
  out += "\n";
  out += "epochs = " + std::to_string(m.epochs) + "\n";
  out += "batch_size = " + std::to_string(m.batch_size) + "\n";
  out += "learning_rate = " + format_double(m.learning_rate) + "\n";
  out += "weight_decay = " + format_double(m.weight_decay) + "\n";
}

}  // namespace

std::string format_run_config(const RunConfig& config) {
  std::string out;
  out += "[data]\n";
  out += "seed = " + std::to_string(config.data_seed) + "\n";
  out += "channels = " + std::to_string(config.data.channels) + "\n";
  out += "length = " + std::to_string(config.data.length) + "\n";
  out += "sampling_rate = " + format_double(config.data.sampling_rate) + "\n";
  out += "classes = " + std::to_string(config.data.classes) + "\n";
  out += "subjects_per_class = " + std::to_string(config.data.subjects_per_class) + "\n";
  out += "segments_per_subject = " + std::to_string(config.data.segments_per_subject) + "\n";
  out += "background_std = " + format_double(config.data.background_std) + "\n";
  out += "amplitude_jitter = " + format_double(config.data.amplitude_jitter) + "\n";
  out += std::string("randomize_phase = ") + (config.data.randomize_phase ? "true" : "false") +
         "\n";
  for (Index k = 0; k < static_cast<Index>(config.data.class_bands.size()); ++k) {
    out += "class" + std::to_string(k) + "_bands = " +
           format_bands(config.data.class_bands[static_cast<std::size_t>(k)]) + "\n";
  }
  out += "\n[noise]\n";
  out += "corrupted_channels = " + std::to_string(config.noise.corrupted_channel_count) + "\n";
  out += "std = " + format_double(config.noise.noise_std) + "\n";
  out += "mean = " + format_double(config.noise.noise_mean) + "\n";
  out += "seed = " + std::to_string(config.noise.seed) + "\n";
  out += "\n[split]\n";
  out += "train = " + format_double(config.split.train) + "\n";
  out += "val = " + format_double(config.split.val) + "\n";
  out += "test = " + format_double(config.split.test) + "\n";
  out += "seed = " + std::to_string(config.split_seed) + "\n\n";
  append_model_sections(out, config.model, false);
  return out;
}

std::string format_model_config(const ModelConfig& config) {
  std::string out;
  append_model_sections(out, config, true);
  return out;
}

ModelConfig parse_model_config(const std::string& text) {
  ConfigFile cf = ConfigFile::parse_string(text, "<checkpoint>");
  ModelConfig model = model_config_from(cf, 6, 3);
  cf.ensure_all_consumed();
  return model;
}

}  // namespace csf
