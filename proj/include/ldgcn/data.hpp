#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ldgcn/io_util.hpp"
#include "ldgcn/rng.hpp"
#include "ldgcn/signal.hpp"

namespace ldgcn {

// Standard 30-electrode montage assumed for raw multi-channel files (the
// canonical binary format carries no names). Oz sits at index 28.
inline const std::vector<std::string>& montage30() {
  static const std::vector<std::string> names = {
      "Fp1", "Fp2", "F7",  "F3",  "Fz",  "F4",  "F8",  "FT7", "FC3", "FCz",
      "FC4", "FT8", "T3",  "C3",  "Cz",  "C4",  "T4",  "TP7", "CP3", "CPz",
      "CP4", "TP8", "T5",  "P3",  "Pz",  "P4",  "T6",  "O1",  "Oz",  "O2"};
  return names;
}

// A loaded dataset. For multi-channel data each window's samples hold all
// channels concatenated channel-major (length n_channels * window_len) until
// select_channel reduces them to a single channel.
struct Dataset {
  std::vector<EegWindow> windows;
  std::vector<std::string> channel_names;
  size_t window_len = 0;
  double sample_rate = 500.0;

  size_t n_channels() const { return channel_names.size(); }
  std::vector<uint16_t> subject_ids() const {
    std::set<uint16_t> ids;
    for (const EegWindow& w : windows) ids.insert(w.subject_id);
    return {ids.begin(), ids.end()};
  }
};

enum class DataFormat { eegd, csv };

namespace detail {

inline std::vector<std::string> channel_names_for(size_t n_channels) {
  if (n_channels == 30) return montage30();
  if (n_channels == 1) return {"Oz"};
  std::vector<std::string> names(n_channels);
  for (size_t i = 0; i < n_channels; ++i) names[i] = "ch" + std::to_string(i);
  return names;
}

inline Label label_from_byte(uint8_t b, size_t window_index) {
  if (b == 0) return Label::Alert;
  if (b == 1) return Label::Drowsiness;
  if (b == 255) return Label::Unlabeled;
  throw std::runtime_error("unknown label value " + std::to_string(b) + " in window " +
                           std::to_string(window_index));
}

}  // namespace detail

inline Dataset dataset_from_eegd_bytes(const std::vector<uint8_t>& bytes) {
  ByteReader r(bytes);
  if (r.remaining() < 4 || r.str(4) != "EEGD")
    throw std::runtime_error("bad dataset file: wrong magic");
  uint32_t n_windows = r.u32();
  uint32_t n_channels = r.u32();
  uint32_t window_len = r.u32();
  uint32_t sample_rate = r.u32();
  if (n_channels < 1) throw std::runtime_error("bad dataset file: zero channels");
  if (window_len < 2) throw std::runtime_error("bad dataset file: window length < 2");
  if (sample_rate == 0) throw std::runtime_error("bad dataset file: zero sample rate");

  Dataset ds;
  ds.channel_names = detail::channel_names_for(n_channels);
  ds.window_len = window_len;
  ds.sample_rate = static_cast<double>(sample_rate);
  ds.windows.reserve(n_windows);
  for (uint32_t i = 0; i < n_windows; ++i) {
    try {
      EegWindow w;
      w.subject_id = r.u16();
      w.label = detail::label_from_byte(r.u8(), i);
      w.sample_rate = ds.sample_rate;
      size_t count = static_cast<size_t>(n_channels) * window_len;
      w.samples.resize(count);
      for (size_t s = 0; s < count; ++s) w.samples[s] = r.f32();
      ds.windows.push_back(std::move(w));
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("truncated dataset file in window " + std::to_string(i) + ": " +
                               e.what());
    }
  }
  if (r.remaining() != 0) throw std::runtime_error("bad dataset file: trailing bytes");
  return ds;
}

inline std::vector<uint8_t> dataset_to_eegd_bytes(const Dataset& ds) {
  std::vector<uint8_t> out;
  size_t per_window = ds.n_channels() * ds.window_len;
  out.reserve(20 + ds.windows.size() * (3 + 4 * per_window));
  put_bytes(out, "EEGD", 4);
  put_u32(out, static_cast<uint32_t>(ds.windows.size()));
  put_u32(out, static_cast<uint32_t>(ds.n_channels()));
  put_u32(out, static_cast<uint32_t>(ds.window_len));
  put_u32(out, static_cast<uint32_t>(std::lround(ds.sample_rate)));
  for (const EegWindow& w : ds.windows) {
    if (w.samples.size() != per_window)
      throw std::invalid_argument("window sample count does not match dataset shape");
    put_u16(out, w.subject_id);
    put_u8(out, static_cast<uint8_t>(w.label));
    for (double v : w.samples) put_f32(out, static_cast<float>(v));
  }
  return out;
}

inline Dataset dataset_from_csv_text(const std::string& text) {
  Dataset ds;
  ds.sample_rate = 500.0;  // the CSV form carries no rate; canonical default
  std::istringstream in(text);
  std::string line;
  size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (row == 0 && line.rfind("subject", 0) == 0) continue;  // optional header
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    fields.push_back(cur);
    if (fields.size() < 4)
      throw std::runtime_error("csv row " + std::to_string(row) + ": too few columns");
    size_t len = fields.size() - 2;
    if (ds.window_len == 0) {
      ds.window_len = len;
      ds.channel_names = {"Oz"};
    } else if (len != ds.window_len) {
      throw std::runtime_error("csv row " + std::to_string(row) + ": column count mismatch");
    }
    EegWindow w;
    w.sample_rate = ds.sample_rate;
    try {
      size_t pos = 0;
      long subject = std::stol(fields[0], &pos);
      if (pos != fields[0].size() || subject < 0 || subject > 0xffff) throw std::invalid_argument("");
      w.subject_id = static_cast<uint16_t>(subject);
      long lab = std::stol(fields[1], &pos);
      if (pos != fields[1].size() || lab < 0 || lab > 255) throw std::invalid_argument("");
      w.label = detail::label_from_byte(static_cast<uint8_t>(lab), row);
      w.samples.resize(len);
      for (size_t i = 0; i < len; ++i) {
        w.samples[i] = std::stod(fields[i + 2], &pos);
        if (pos != fields[i + 2].size()) throw std::invalid_argument("");
      }
    } catch (const std::invalid_argument&) {
      throw std::runtime_error("csv row " + std::to_string(row) + ": malformed value");
    }
    ds.windows.push_back(std::move(w));
    ++row;
  }
  if (ds.windows.empty()) throw std::runtime_error("csv file holds no windows");
  return ds;
}

inline std::string dataset_to_csv_text(const Dataset& ds) {
  if (ds.n_channels() != 1)
    throw std::invalid_argument("csv export is defined for single-channel datasets");
  std::string out = "subject,label";
  for (size_t i = 0; i < ds.window_len; ++i) out += ",s" + std::to_string(i);
  out += "\n";
  char buf[40];
  for (const EegWindow& w : ds.windows) {
    out += std::to_string(w.subject_id);
    out += ",";
    out += std::to_string(static_cast<unsigned>(static_cast<uint8_t>(w.label)));
    for (double v : w.samples) {
      std::snprintf(buf, sizeof(buf), ",%.17g", v);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

inline Dataset load_dataset(const std::string& path, DataFormat format) {
  if (format == DataFormat::eegd) return dataset_from_eegd_bytes(read_file_bytes(path));
  std::vector<uint8_t> bytes = read_file_bytes(path);
  return dataset_from_csv_text(std::string(bytes.begin(), bytes.end()));
}

inline void save_dataset(const std::string& path, const Dataset& ds, DataFormat format) {
  if (format == DataFormat::eegd)
    write_file_atomic(path, dataset_to_eegd_bytes(ds));
  else
    write_file_atomic(path, dataset_to_csv_text(ds));
}

// Reduce a multi-channel dataset to one named electrode. Window and label
// counts are unchanged; selecting the only channel of single-channel data is
// the identity.
inline Dataset select_channel(const Dataset& ds, const std::string& name) {
  auto it = std::find(ds.channel_names.begin(), ds.channel_names.end(), name);
  if (it == ds.channel_names.end())
    throw std::invalid_argument("unknown channel name: " + name);
  if (ds.n_channels() == 1) return ds;
  size_t idx = static_cast<size_t>(it - ds.channel_names.begin());
  Dataset out;
  out.channel_names = {name};
  out.window_len = ds.window_len;
  out.sample_rate = ds.sample_rate;
  out.windows.reserve(ds.windows.size());
  for (const EegWindow& w : ds.windows) {
    EegWindow sel;
    sel.subject_id = w.subject_id;
    sel.label = w.label;
    sel.sample_rate = w.sample_rate;
    sel.samples.assign(w.samples.begin() + idx * ds.window_len,
                       w.samples.begin() + (idx + 1) * ds.window_len);
    out.windows.push_back(std::move(sel));
  }
  return out;
}

struct LosoFold {
  uint16_t subject = 0;
  std::vector<size_t> train_indices;
  std::vector<size_t> test_indices;
};

// Leave-one-subject-out: one fold per subject (ascending id), test = that
// subject's windows, train = everything else.
inline std::vector<LosoFold> loso_splits(const Dataset& ds) {
  std::vector<uint16_t> subjects = ds.subject_ids();
  if (subjects.size() < 2)
    throw std::invalid_argument("leave-one-subject-out needs at least 2 subjects");
  std::vector<LosoFold> folds;
  folds.reserve(subjects.size());
  for (uint16_t s : subjects) {
    LosoFold fold;
    fold.subject = s;
    for (size_t i = 0; i < ds.windows.size(); ++i) {
      if (ds.windows[i].subject_id == s)
        fold.test_indices.push_back(i);
      else
        fold.train_indices.push_back(i);
    }
    folds.push_back(std::move(fold));
  }
  return folds;
}

struct SynthConfig {
  size_t n_per_class = 100;
  uint64_t seed = 0;
  double drowsy_band_gain = 3.0;  // multiplier on the 4-12 Hz components
  double noise_std = 0.1;
  size_t n_subjects = 2;
  size_t window_len = 384;
  double sample_rate = 500.0;

  void validate() const {
    if (n_per_class < 1) throw std::invalid_argument("n_per_class must be >= 1");
    if (!(drowsy_band_gain > 1.0)) throw std::invalid_argument("drowsy_band_gain must be > 1");
    if (!(noise_std >= 0.0)) throw std::invalid_argument("noise_std must be >= 0");
    if (n_subjects < 1) throw std::invalid_argument("n_subjects must be >= 1");
    if (window_len < 2) throw std::invalid_argument("window_len must be >= 2");
    if (!(sample_rate > 0.0)) throw std::invalid_argument("sample_rate must be positive");
  }
};

// Deterministic synthetic EEG: a pink-ish sum of 1..24 Hz sinusoids with
// jittered amplitudes and random phases plus white noise. The drowsy class
// scales every component in [4, 12) Hz by drowsy_band_gain, mimicking the
// elevated theta/alpha power of real drowsiness. Window i of class c draws
// from stream c*n_per_class+i of the seed, so datasets are reproducible and
// per-window independent. Subjects alternate round-robin within each class.
inline Dataset synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.channel_names = {"Oz"};
  ds.window_len = cfg.window_len;
  ds.sample_rate = cfg.sample_rate;
  constexpr size_t kMaxHz = 24;
  for (size_t cls = 0; cls < 2; ++cls) {
    for (size_t i = 0; i < cfg.n_per_class; ++i) {
      Rng rng(mix_seed(cfg.seed, cls * cfg.n_per_class + i));
      EegWindow w;
      w.subject_id = static_cast<uint16_t>(1 + i % cfg.n_subjects);
      w.label = cls == 0 ? Label::Alert : Label::Drowsiness;
      w.sample_rate = cfg.sample_rate;
      w.samples.assign(cfg.window_len, 0.0);
      for (size_t f = 1; f <= kMaxHz; ++f) {
        double phase = rng.next_uniform(0.0, 2.0 * std::numbers::pi);
        double amp = rng.next_uniform(0.75, 1.25) / static_cast<double>(f);
        if (cls == 1 && f >= 4 && f < 12) amp *= cfg.drowsy_band_gain;
        double omega = 2.0 * std::numbers::pi * static_cast<double>(f) / cfg.sample_rate;
        for (size_t t = 0; t < cfg.window_len; ++t)
          w.samples[t] += amp * std::sin(omega * static_cast<double>(t) + phase);
      }
      if (cfg.noise_std > 0.0)
        for (size_t t = 0; t < cfg.window_len; ++t)
          w.samples[t] += cfg.noise_std * rng.next_normal();
      ds.windows.push_back(std::move(w));
    }
  }
  return ds;
}

}  // namespace ldgcn
