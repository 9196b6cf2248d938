#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "asf/head.hpp"
#include "asf/rng.hpp"
#include "asf/tensor.hpp"

namespace asf {

// Half-open spatio-temporal box in full-rate video coordinates where one
// activity's channel signature was painted.
struct TruthRegion {
  std::size_t activity = 0;
  std::size_t t0 = 0, t1 = 0;
  std::size_t w0 = 0, w1 = 0;
  std::size_t h0 = 0, h1 = 0;

  bool operator==(const TruthRegion&) const = default;
};

struct SyntheticVideo {
  Tensor<float> frames;  // channels x T_full x W x H
  std::vector<std::uint8_t> labels;
  std::vector<TruthRegion> regions;  // one per positive label
  bool is_eval = false;
};

struct ForcedPair {
  std::size_t first = 0, second = 0;
  double prob = 1.0;
};

struct ForbiddenPair {
  std::size_t first = 0, second = 0;
};

struct DatasetSpec {
  std::size_t num_videos = 200;
  std::size_t activities = 6;
  std::size_t t_full = 256;
  std::size_t width = 4;
  std::size_t height = 4;
  std::size_t channels = 8;
  std::size_t min_activities = 1;
  std::size_t max_activities = 3;
  std::vector<ForcedPair> forced_pairs;
  std::vector<ForbiddenPair> forbidden_pairs;
  double snr = 4.0;
  double eval_fraction = 0.25;
  std::uint64_t seed = 1;

  void validate() const;
};

// Deterministic under seed; each video draws from its own derived stream,
// so generation order (or parallel generation) cannot change the output.
std::vector<SyntheticVideo> generate_dataset(const DatasetSpec& spec);

// 32 frames at indices offset, offset+rate, ..., offset+31*rate.
Tensor<float> sample_clip(const SyntheticVideo& video, std::size_t rate,
                          std::size_t offset);

// Frozen random projection standing in for the video backbone: temporal
// mean-pooling by `temporal_pool`, then a fixed channel projection plus a
// fixed bias. Never trained.
class BackboneStub {
 public:
  BackboneStub(std::size_t in_channels, std::size_t out_channels,
               std::size_t temporal_pool, std::uint64_t seed);

  std::size_t in_channels() const { return in_channels_; }
  std::size_t out_channels() const { return out_channels_; }
  std::size_t temporal_pool() const { return temporal_pool_; }

  FeatureVolume<float> forward(const Tensor<float>& clip) const;

 private:
  std::size_t in_channels_, out_channels_, temporal_pool_;
  Tensor<float> proj_;  // C x channels
  Tensor<float> bias_;  // C
};

// Per-activity channel signatures used by the generator (unit vectors,
// orthogonalized while A <= channels). Exposed for tests.
std::vector<std::vector<float>> activity_signatures(const DatasetSpec& spec);

// --- on-disk dataset ---------------------------------------------------

// Writes dir/video_NNNN.asft plus dir/manifest.json (tensor path, label
// string, truth regions, split per record).
void write_dataset(const std::filesystem::path& dir, const DatasetSpec& spec,
                   const std::vector<SyntheticVideo>& videos);

struct LoadedDataset {
  DatasetSpec spec;
  std::vector<SyntheticVideo> videos;

  std::vector<std::size_t> split_indices(bool eval) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < videos.size(); ++i)
      if (videos[i].is_eval == eval) idx.push_back(i);
    return idx;
  }
};

LoadedDataset load_dataset(const std::filesystem::path& dir);

// Fraction of an activity map's mass that falls inside a truth region, and
// the fraction of feature cells inside it (the uniform baseline). A feature
// cell maps to the video frame at the centre of its pooled clip window.
struct LocalizationScore {
  double mass_in_region = 0.0;
  double region_fraction = 0.0;
};

LocalizationScore localization_score(const Tensor<float>& raw_map,
                                     const TruthRegion& region, std::size_t rate,
                                     std::size_t offset,
                                     std::size_t temporal_pool);

}  // namespace asf
