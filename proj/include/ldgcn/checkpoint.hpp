#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ldgcn/io_util.hpp"
#include "ldgcn/model.hpp"

namespace ldgcn {

// Binary checkpoint ("LDGC"): magic, format version, the model configuration,
// then the named, shaped tensors and pruning masks. All integers and floats
// are little-endian; tensor data is stored as f32. Tensors and masks that are
// empty (absent from the architecture variant, or a default-constructed
// parameter set) are skipped by the writer and required to be absent by the
// reader, so file contents mirror the architecture exactly.
inline constexpr uint32_t kCheckpointVersion = 1;

inline std::vector<uint8_t> checkpoint_to_bytes(const ModelConfig& cfg,
                                                const ModelParams& params) {
  std::vector<uint8_t> out;
  put_bytes(out, "LDGC", 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<uint32_t>(cfg.in_channels));
  put_u32(out, static_cast<uint32_t>(cfg.conv_channels));
  put_u32(out, static_cast<uint32_t>(cfg.dw_kernel_a));
  put_u32(out, static_cast<uint32_t>(cfg.dw_kernel_b));
  put_u32(out, static_cast<uint32_t>(cfg.fc_hidden));
  put_u32(out, static_cast<uint32_t>(cfg.n_classes));
  put_u32(out, static_cast<uint32_t>(cfg.input_len));
  put_u32(out, static_cast<uint32_t>(cfg.variant));
  put_f32(out, static_cast<float>(cfg.partial_ratio));

  uint32_t n_tensors = 0;
  params.for_each([&](std::string_view, const Tensor& t, bool) {
    if (!t.empty()) ++n_tensors;
  });
  put_u32(out, n_tensors);
  params.for_each([&](std::string_view name, const Tensor& t, bool) {
    if (t.empty()) return;
    put_u32(out, static_cast<uint32_t>(name.size()));
    put_bytes(out, name.data(), name.size());
    put_u32(out, static_cast<uint32_t>(t.dims.size()));
    for (size_t d : t.dims) put_u32(out, static_cast<uint32_t>(d));
    for (double v : t.data) put_f32(out, static_cast<float>(v));
  });

  auto put_mask = [&](std::string_view name, const std::vector<uint8_t>& mask) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    put_bytes(out, name.data(), name.size());
    put_u32(out, static_cast<uint32_t>(mask.size()));
    put_bytes(out, mask.data(), mask.size());
  };
  uint32_t n_masks = (params.channel_mask.empty() ? 0 : 1) + (params.neuron_mask.empty() ? 0 : 1);
  put_u32(out, n_masks);
  if (!params.channel_mask.empty()) put_mask("channel_mask", params.channel_mask);
  if (!params.neuron_mask.empty()) put_mask("neuron_mask", params.neuron_mask);
  return out;
}

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
};

inline Checkpoint checkpoint_from_bytes(const std::vector<uint8_t>& bytes) {
  ByteReader r(bytes);
  if (r.remaining() < 4 || r.str(4) != "LDGC")
    throw std::runtime_error("bad checkpoint file: wrong magic");
  uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));

  ModelConfig cfg;
  cfg.in_channels = r.u32();
  cfg.conv_channels = r.u32();
  cfg.dw_kernel_a = r.u32();
  cfg.dw_kernel_b = r.u32();
  cfg.fc_hidden = r.u32();
  cfg.n_classes = r.u32();
  cfg.input_len = r.u32();
  uint32_t variant = r.u32();
  if (variant > static_cast<uint32_t>(Variant::no_partialconv))
    throw std::runtime_error("bad checkpoint file: unknown variant " + std::to_string(variant));
  cfg.variant = static_cast<Variant>(variant);
  cfg.partial_ratio = static_cast<double>(r.f32());
  cfg.validate();

  // Expected shapes for this configuration; empty tensors must stay absent.
  TensorSet expected = make_zero_set(cfg);
  std::map<std::string, Tensor*, std::less<>> slots;
  Checkpoint ck;
  ck.config = cfg;
  static_cast<TensorSet&>(ck.params) = expected;
  ck.params.for_each([&](std::string_view name, Tensor& t, bool) {
    slots.emplace(std::string(name), &t);
  });

  std::set<std::string> seen;
  uint32_t n_tensors = r.u32();
  for (uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = r.str(r.u32());
    auto it = slots.find(name);
    if (it == slots.end())
      throw std::runtime_error("bad checkpoint file: unknown tensor " + name);
    if (!seen.insert(name).second)
      throw std::runtime_error("bad checkpoint file: duplicate tensor " + name);
    Tensor& t = *it->second;
    if (t.empty())
      throw std::runtime_error("bad checkpoint file: tensor " + name +
                               " does not belong to this variant");
    uint32_t rank = r.u32();
    if (rank != t.dims.size())
      throw std::runtime_error("bad checkpoint file: tensor " + name + " rank mismatch");
    for (size_t d = 0; d < rank; ++d)
      if (r.u32() != t.dims[d])
        throw std::runtime_error("bad checkpoint file: tensor " + name + " shape mismatch");
    for (size_t k = 0; k < t.numel(); ++k) t.data[k] = static_cast<double>(r.f32());
  }
  ck.params.for_each([&](std::string_view name, Tensor& t, bool) {
    if (!t.empty() && seen.find(std::string(name)) == seen.end())
      throw std::runtime_error("bad checkpoint file: missing tensor " + std::string(name));
  });

  size_t want_channel = cfg.total_channels();
  size_t want_neuron = cfg.has_fc1() ? cfg.fc_hidden : 0;
  ck.params.channel_mask.clear();
  ck.params.neuron_mask.clear();
  uint32_t n_masks = r.u32();
  for (uint32_t i = 0; i < n_masks; ++i) {
    std::string name = r.str(r.u32());
    uint32_t len = r.u32();
    std::vector<uint8_t>* mask = nullptr;
    size_t want = 0;
    if (name == "channel_mask") {
      mask = &ck.params.channel_mask;
      want = want_channel;
    } else if (name == "neuron_mask") {
      mask = &ck.params.neuron_mask;
      want = want_neuron;
    } else {
      throw std::runtime_error("bad checkpoint file: unknown mask " + name);
    }
    if (!mask->empty())
      throw std::runtime_error("bad checkpoint file: duplicate mask " + name);
    if (len != want || len == 0)
      throw std::runtime_error("bad checkpoint file: mask " + name + " length mismatch");
    mask->assign(len, 0);
    r.raw(mask->data(), len);
    for (uint8_t b : *mask)
      if (b > 1) throw std::runtime_error("bad checkpoint file: mask " + name + " holds non-binary value");
  }
  if (ck.params.channel_mask.size() != want_channel)
    throw std::runtime_error("bad checkpoint file: missing mask channel_mask");
  if (ck.params.neuron_mask.size() != want_neuron)
    throw std::runtime_error("bad checkpoint file: missing mask neuron_mask");
  if (r.remaining() != 0) throw std::runtime_error("bad checkpoint file: trailing bytes");

  for (double v : ck.params.bn_rvar.data)
    if (!(v > 0.0))
      throw std::runtime_error("bad checkpoint file: running variance must be positive");

  // Pruned weights are stored as zeros; anything else means the masks and
  // tensors disagree.
  TensorSet freedom = weight_freedom(cfg, ck.params.channel_mask, ck.params.neuron_mask);
  std::vector<Tensor*> pt = detail::tensor_list(static_cast<TensorSet&>(ck.params));
  std::vector<Tensor*> ft = detail::tensor_list(freedom);
  for (size_t ti = 0; ti < pt.size(); ++ti)
    for (size_t k = 0; k < pt[ti]->numel(); ++k)
      if (ft[ti]->data[k] == 0.0 && pt[ti]->data[k] != 0.0)
        throw std::runtime_error("bad checkpoint file: masked weight is non-zero");
  return ck;
}

inline void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                            const ModelParams& params) {
  write_file_atomic(path, checkpoint_to_bytes(cfg, params));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  return checkpoint_from_bytes(read_file_bytes(path));
}

}  // namespace ldgcn
