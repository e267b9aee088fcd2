#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "csf/common.hpp"
#include "csf/data.hpp"
#include "csf/model.hpp"

namespace csf {

// Minimal INI-style configuration: [section] headers, key = value lines,
// '#'/';' comments. Every getter records the keys it consumed so
// ensure_all_consumed() can reject typos, naming the key and line.
class ConfigFile {
 public:
  static ConfigFile parse_file(const std::string& path);
  static ConfigFile parse_string(const std::string& text, const std::string& origin = "<inline>");

  bool has(const std::string& section, const std::string& key) const;
  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  Index get_int(const std::string& section, const std::string& key, Index fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  std::uint64_t get_u64(const std::string& section, const std::string& key,
                        std::uint64_t fallback) const;
  std::vector<std::uint64_t> get_u64_list(const std::string& section, const std::string& key,
                                          const std::vector<std::uint64_t>& fallback) const;

  void ensure_all_consumed() const;
  const std::string& origin() const { return origin_; }

 private:
  struct Entry {
    std::string value;
    int line = 0;
    mutable bool used = false;
  };
  const Entry* find(const std::string& section, const std::string& key) const;
  std::map<std::string, std::map<std::string, Entry>> sections_;
  std::string origin_;
};

// "conv:k=7,s=2,p=3,d=1,out=32 pool:w=2,s=2 conv:..." — a pool clause binds
// to the conv before it. out omitted (or 0) means the embedding dim.
PathSpec parse_path_spec(const std::string& text);
std::string format_path_spec(const PathSpec& path);

// "center:width:amplitude" clauses separated by ';', e.g. "2:1:50;12:2:30".
std::vector<BandSpec> parse_bands(const std::string& text);
std::string format_bands(const std::vector<BandSpec>& bands);

GateActivation parse_gate_activation(const std::string& name);
std::string format_gate_activation(GateActivation g);
MaskMode parse_mask_mode(const std::string& name);
std::string format_mask_mode(MaskMode m);
GeluForm parse_gelu_form(const std::string& name);
std::string format_gelu_form(GeluForm g);

// Everything one experiment needs: generation spec, noise spec, split
// fractions, and the model/training configuration.
struct RunConfig {
  SyntheticSpec data;
  std::uint64_t data_seed = 1;  // generation stream root ([data] seed)
  NoiseInjectionSpec noise;
  SplitFractions split;
  std::uint64_t split_seed = 0;  // subject-split shuffle root ([split] seed)
  ModelConfig model;

  static RunConfig defaults();
};

// Parses a config file over the defaults; unknown keys raise. The [data]
// channel/class counts seed the model's encoder/loss dimensions (training
// later re-derives them from the actual dataset header).
RunConfig run_config_from_file(const std::string& path);
RunConfig run_config_from_string(const std::string& text);

// Canonical full-default echo: every effective field, fixed order, no
// timestamps — byte-identical across runs with equal settings.
std::string format_run_config(const RunConfig& config);

// The [model]-side subset; stored in checkpoints for mismatch detection.
std::string format_model_config(const ModelConfig& config);
ModelConfig parse_model_config(const std::string& text);

}  // namespace csf
