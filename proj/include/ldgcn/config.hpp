#pragma once

#include <cstdint>
#include <cstdio>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ldgcn/data.hpp"
#include "ldgcn/dwt.hpp"
#include "ldgcn/model.hpp"
#include "ldgcn/pipeline.hpp"
#include "ldgcn/pruning.hpp"
#include "ldgcn/train.hpp"

namespace ldgcn {

// The one declarative record behind every run: a flat key=value file plus
// command-line overrides (flags > file > defaults). Unknown keys are rejected
// outright so a typo cannot silently fall back to a default.
struct RunConfig {
  // signal / graph
  std::string wavelet = "db4";
  uint64_t wavelet_levels = 3;
  std::string band_edges = "[0,4,8,12,20]";  // fixed by the band definitions
  uint64_t band_k = 8;
  double view_global = 0.8;
  double view_local = 0.3;
  // seeds
  uint64_t seed_model = 1;
  uint64_t seed_train = 2;
  uint64_t seed_augment = 3;
  // network
  uint64_t conv_channels = 8;
  uint64_t dw_kernel_a = 3;
  uint64_t dw_kernel_b = 5;
  double partial_ratio = 0.5;
  uint64_t fc_hidden = 256;
  uint64_t input_len = 384;
  std::string variant = "standard";
  // optimization
  uint64_t epochs = 30;
  double learning_rate = 0.0015;
  uint64_t batch_size = 32;
  // pruning
  double prune_channels = 0.10;
  double prune_neurons = 0.30;
  // io
  std::string dataset;
  std::string dataset_format = "eegd";
  std::string out_dir = ".";

  void set(const std::string& key, const std::string& value);
  std::map<std::string, std::string> entries() const;

  PipelineConfig pipeline_config() const {
    PipelineConfig p;
    p.wavelet.wavelet = wavelet_from_string(wavelet);
    p.wavelet.levels = static_cast<size_t>(wavelet_levels);
    p.band_k = static_cast<size_t>(band_k);
    p.view_global = view_global;
    p.view_local = view_local;
    p.seed_augment = seed_augment;
    return p;
  }
  ModelConfig model_config() const {
    ModelConfig m;
    m.conv_channels = static_cast<size_t>(conv_channels);
    m.dw_kernel_a = static_cast<size_t>(dw_kernel_a);
    m.dw_kernel_b = static_cast<size_t>(dw_kernel_b);
    m.partial_ratio = partial_ratio;
    m.fc_hidden = static_cast<size_t>(fc_hidden);
    m.input_len = static_cast<size_t>(input_len);
    m.variant = variant_from_string(variant);
    return m;
  }
  TrainConfig train_config() const {
    TrainConfig t;
    t.epochs = static_cast<size_t>(epochs);
    t.learning_rate = learning_rate;
    t.batch_size = static_cast<size_t>(batch_size);
    t.seed = seed_train;
    return t;
  }
  PruneConfig prune_config() const {
    PruneConfig p;
    p.channel_ratio = prune_channels;
    p.neuron_ratio = prune_neurons;
    return p;
  }
  DataFormat data_format() const {
    if (dataset_format == "eegd") return DataFormat::eegd;
    if (dataset_format == "csv") return DataFormat::csv;
    throw std::invalid_argument("dataset_format must be eegd or csv");
  }

  void validate() const {
    pipeline_config().validate();
    model_config().validate();
    train_config().validate();
    prune_config().validate();
    data_format();
  }
};

namespace detail {

inline uint64_t parse_u64(const std::string& key, const std::string& value) {
  if (value.empty() || value[0] == '-')
    throw std::invalid_argument("config key " + key + " needs a non-negative integer");
  size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(value, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != value.size())
    throw std::invalid_argument("config key " + key + " needs a non-negative integer, got '" +
                                value + "'");
  return static_cast<uint64_t>(v);
}

inline double parse_double(const std::string& key, const std::string& value) {
  size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != value.size())
    throw std::invalid_argument("config key " + key + " needs a number, got '" + value + "'");
  return v;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

inline void RunConfig::set(const std::string& key, const std::string& value) {
  using detail::parse_double;
  using detail::parse_u64;
  if (key == "wavelet") wavelet = value;
  else if (key == "wavelet_levels") wavelet_levels = parse_u64(key, value);
  else if (key == "band_edges") {
    // The four bands are fixed; the key exists so config files can state them,
    // not so they can be changed.
    std::string digits;
    for (char c : value)
      if (c != '[' && c != ']' && c != ' ') digits.push_back(c);
    if (digits != "0,4,8,12,20")
      throw std::invalid_argument("band_edges are fixed at [0,4,8,12,20]");
    band_edges = "[0,4,8,12,20]";
  }
  else if (key == "band_k") band_k = parse_u64(key, value);
  else if (key == "view_global") view_global = parse_double(key, value);
  else if (key == "view_local") view_local = parse_double(key, value);
  else if (key == "seed_model") seed_model = parse_u64(key, value);
  else if (key == "seed_train") seed_train = parse_u64(key, value);
  else if (key == "seed_augment") seed_augment = parse_u64(key, value);
  else if (key == "conv_channels") conv_channels = parse_u64(key, value);
  else if (key == "dw_kernel_a") dw_kernel_a = parse_u64(key, value);
  else if (key == "dw_kernel_b") dw_kernel_b = parse_u64(key, value);
  else if (key == "partial_ratio") partial_ratio = parse_double(key, value);
  else if (key == "fc_hidden") fc_hidden = parse_u64(key, value);
  else if (key == "input_len") input_len = parse_u64(key, value);
  else if (key == "variant") variant = value;
  else if (key == "epochs") epochs = parse_u64(key, value);
  else if (key == "learning_rate") learning_rate = parse_double(key, value);
  else if (key == "batch_size") batch_size = parse_u64(key, value);
  else if (key == "prune_channels") prune_channels = parse_double(key, value);
  else if (key == "prune_neurons") prune_neurons = parse_double(key, value);
  else if (key == "dataset") dataset = value;
  else if (key == "dataset_format") dataset_format = value;
  else if (key == "out_dir") out_dir = value;
  else throw std::invalid_argument("unknown config key: " + key);
}

inline std::map<std::string, std::string> RunConfig::entries() const {
  using detail::format_double;
  return {
      {"wavelet", wavelet},
      {"wavelet_levels", std::to_string(wavelet_levels)},
      {"band_edges", band_edges},
      {"band_k", std::to_string(band_k)},
      {"view_global", format_double(view_global)},
      {"view_local", format_double(view_local)},
      {"seed_model", std::to_string(seed_model)},
      {"seed_train", std::to_string(seed_train)},
      {"seed_augment", std::to_string(seed_augment)},
      {"conv_channels", std::to_string(conv_channels)},
      {"dw_kernel_a", std::to_string(dw_kernel_a)},
      {"dw_kernel_b", std::to_string(dw_kernel_b)},
      {"partial_ratio", format_double(partial_ratio)},
      {"fc_hidden", std::to_string(fc_hidden)},
      {"input_len", std::to_string(input_len)},
      {"variant", variant},
      {"epochs", std::to_string(epochs)},
      {"learning_rate", format_double(learning_rate)},
      {"batch_size", std::to_string(batch_size)},
      {"prune_channels", format_double(prune_channels)},
      {"prune_neurons", format_double(prune_neurons)},
      {"dataset", dataset},
      {"dataset_format", dataset_format},
      {"out_dir", out_dir},
  };
}

// Apply a key=value config file. Lines may carry #-comments; values may be
// double-quoted. Every key must be known.
inline void apply_config_text(RunConfig& cfg, const std::string& text) {
  size_t start = 0, line_no = 0;
  while (start <= text.size()) {
    size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key=value");
    std::string key = detail::trim(line.substr(0, eq));
    std::string value = detail::trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    if (key.empty())
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": empty key");
    cfg.set(key, value);
  }
}

inline void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::vector<uint8_t> bytes = read_file_bytes(path);
  apply_config_text(cfg, std::string(bytes.begin(), bytes.end()));
}

inline uint64_t fnv1a64(const std::string& bytes) {
  uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Stable fingerprint of the effective configuration, for tagging reports.
inline std::string config_hash(const RunConfig& cfg) {
  std::string canon;
  for (const auto& [k, v] : cfg.entries()) {
    canon += k;
    canon += '=';
    canon += v;
    canon += '\n';
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(canon)));
  return buf;
}

}  // namespace ldgcn
