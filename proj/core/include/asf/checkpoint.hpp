#pragma once

#include <map>

#include "asf/head.hpp"
#include "asf/tensor_io.hpp"

namespace asf {

// ASFH checkpoint format:
//   magic "ASFH" | version u16 LE | C u32 | C' u32 | K u32 | A u32 | n u32 |
//   dropout_rate f64 | tensor count u32 | per tensor:
//   name length u16 | name bytes | rank u8 | dims u64 LE | f32 LE row-major
// Ablation variants are recoverable from which tensors are present and the
// shape of `queries`.

inline constexpr std::uint16_t kAsfhVersion = 1;

inline void save_checkpoint(const std::filesystem::path& path,
                            const HeadParams<float>& params) {
  using namespace detail_io;
  std::vector<std::uint8_t> out;
  put_bytes(out, "ASFH", 4);
  put_le<std::uint16_t>(out, kAsfhVersion);
  const auto& cfg = params.config();
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.backbone_channels));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.feature_channels));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.observations));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.activities));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.groups));
  put_le<double>(out, cfg.dropout_rate);
  const auto named = params.named_params();
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(named.size()));
  for (const auto& np : named) {
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(np.name.size()));
    put_bytes(out, np.name.data(), np.name.size());
    put_le<std::uint8_t>(out, 0);  // dtype f32
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(np.var->value.rank()));
    for (auto d : np.var->value.shape()) put_le<std::uint64_t>(out, d);
    put_bytes(out, np.var->value.raw(), np.var->value.size() * sizeof(float));
  }
  write_file(path, out);
}

inline HeadParams<float> load_checkpoint(const std::filesystem::path& path) {
  using namespace detail_io;
  const auto in = read_file(path);
  std::size_t off = 0;
  if (in.size() < 4 || std::memcmp(in.data(), "ASFH", 4) != 0)
    throw FormatError("bad checkpoint magic at byte offset 0");
  off = 4;
  const auto version = get_le<std::uint16_t>(in, off, "version");
  if (version != kAsfhVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  HeadConfig cfg;
  cfg.backbone_channels = get_le<std::uint32_t>(in, off, "C");
  cfg.feature_channels = get_le<std::uint32_t>(in, off, "C'");
  cfg.observations = get_le<std::uint32_t>(in, off, "K");
  cfg.activities = get_le<std::uint32_t>(in, off, "A");
  cfg.groups = get_le<std::uint32_t>(in, off, "n");
  cfg.dropout_rate = get_le<double>(in, off, "dropout rate");
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid checkpoint config: ") + e.what());
  }
  const auto count = get_le<std::uint32_t>(in, off, "tensor count");
  std::map<std::string, Tensor<float>> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = get_le<std::uint16_t>(in, off, "name length");
    if (off + name_len > in.size())
      throw FormatError("truncated tensor name at byte offset " + std::to_string(off));
    std::string name(reinterpret_cast<const char*>(in.data() + off), name_len);
    off += name_len;
    auto any = decode_tensor_body(in, off, /*exact_end=*/false);
    auto* t = std::get_if<Tensor<float>>(&any);
    if (!t) throw FormatError("checkpoint tensor '" + name + "' is not f32");
    if (!tensors.emplace(name, std::move(*t)).second)
      throw FormatError("duplicate checkpoint tensor '" + name + "'");
  }
  if (off != in.size())
    throw FormatError("trailing bytes at offset " + std::to_string(off));

  HeadVariant variant;
  variant.correlation = tensors.count("w_theta") > 0;
  auto qit = tensors.find("queries");
  if (qit == tensors.end()) throw FormatError("checkpoint missing 'queries'");
  variant.activity_specific = qit->second.dim(0) == cfg.activities;

  HeadParams<float> params(cfg, variant, /*seed=*/0);
  auto named = params.named_params();
  if (named.size() != tensors.size())
    throw FormatError("checkpoint holds " + std::to_string(tensors.size()) +
                      " tensors, expected " + std::to_string(named.size()));
  for (auto& np : named) {
    auto it = tensors.find(np.name);
    if (it == tensors.end())
      throw FormatError("checkpoint missing tensor '" + np.name + "'");
    if (it->second.shape() != np.var->value.shape())
      throw FormatError("checkpoint tensor '" + np.name + "' has shape " +
                        shape_str(it->second.shape()) + ", expected " +
                        shape_str(np.var->value.shape()));
    np.var->value = std::move(it->second);
  }
  return params;
}

}  // namespace asf
