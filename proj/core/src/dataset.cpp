#include "asf/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "asf/tensor_io.hpp"

namespace asf {

using ordered_json = nlohmann::ordered_json;

void DatasetSpec::validate() const {
  if (num_videos == 0 || activities == 0 || t_full == 0 || width == 0 ||
      height == 0 || channels == 0)
    throw ConfigError("dataset spec fields must be positive");
  if (min_activities == 0 || min_activities > max_activities ||
      max_activities > activities)
    throw ConfigError("activities_per_video range [" +
                      std::to_string(min_activities) + "," +
                      std::to_string(max_activities) + "] invalid for A=" +
                      std::to_string(activities));
  if (snr <= 0) throw ConfigError("snr must be positive");
  if (eval_fraction < 0 || eval_fraction >= 1)
    throw ConfigError("eval_fraction must be in [0,1)");
  auto check_index = [this](std::size_t a, const char* what) {
    if (a >= activities)
      throw ConfigError(std::string(what) + " index " + std::to_string(a) +
                        " out of range for A=" + std::to_string(activities));
  };
  std::set<std::pair<std::size_t, std::size_t>> forbidden;
  for (const auto& p : forbidden_pairs) {
    check_index(p.first, "forbidden pair");
    check_index(p.second, "forbidden pair");
    if (p.first == p.second)
      throw ConfigError("forbidden pair may not be reflexive");
    forbidden.insert({std::min(p.first, p.second), std::max(p.first, p.second)});
  }
  for (const auto& p : forced_pairs) {
    check_index(p.first, "forced pair");
    check_index(p.second, "forced pair");
    if (p.first == p.second) throw ConfigError("forced pair may not be reflexive");
    if (p.prob < 0 || p.prob > 1)
      throw ConfigError("forced pair probability must be in [0,1]");
    if (forbidden.count({std::min(p.first, p.second), std::max(p.first, p.second)}))
      throw ConfigError("pair (" + std::to_string(p.first) + "," +
                        std::to_string(p.second) + ") is both forced and forbidden");
  }
}

std::vector<std::vector<float>> activity_signatures(const DatasetSpec& spec) {
  Rng rng = Rng(spec.seed).derive(0xA11);
  std::vector<std::vector<double>> sig(spec.activities,
                                       std::vector<double>(spec.channels));
  for (auto& s : sig)
    for (auto& v : s) v = rng.normal();
  // Gram-Schmidt while the channel budget allows; beyond that keep the raw
  // directions (still distinct with high probability).
  for (std::size_t a = 0; a < sig.size(); ++a) {
    if (a < spec.channels) {
      for (std::size_t b = 0; b < a; ++b) {
        double dot = 0;
        for (std::size_t c = 0; c < spec.channels; ++c) dot += sig[a][c] * sig[b][c];
        for (std::size_t c = 0; c < spec.channels; ++c) sig[a][c] -= dot * sig[b][c];
      }
    }
    double norm = 0;
    for (double v : sig[a]) norm += v * v;
    norm = std::sqrt(std::max(norm, 1e-12));
    for (auto& v : sig[a]) v /= norm;
  }
  std::vector<std::vector<float>> out(sig.size());
  for (std::size_t a = 0; a < sig.size(); ++a)
    out[a] = std::vector<float>(sig[a].begin(), sig[a].end());
  return out;
}

namespace {

std::vector<std::uint8_t> draw_labels(const DatasetSpec& spec, Rng& rng) {
  const std::size_t a = spec.activities;
  auto violates = [&spec](const std::vector<std::uint8_t>& l) {
    for (const auto& p : spec.forbidden_pairs)
      if (l[p.first] && l[p.second]) return true;
    return false;
  };
  std::vector<std::uint8_t> labels(a, 0);
  const std::size_t count =
      spec.min_activities +
      rng.uniform_index(spec.max_activities - spec.min_activities + 1);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::fill(labels.begin(), labels.end(), 0);
    std::size_t placed = 0;
    while (placed < count) {
      const std::size_t pick = rng.uniform_index(a);
      if (!labels[pick]) {
        labels[pick] = 1;
        ++placed;
      }
    }
    if (!violates(labels)) break;
  }
  if (violates(labels)) {
    // dense forbidden graphs: fall back to a single activity
    std::fill(labels.begin(), labels.end(), 0);
    labels[rng.uniform_index(a)] = 1;
  }
  // forced pairs: conditional on `first`, `second` co-occurs with prob p
  for (const auto& p : spec.forced_pairs) {
    if (!labels[p.first]) continue;
    labels[p.second] = rng.bernoulli(p.prob) ? 1 : 0;
  }
  if (std::none_of(labels.begin(), labels.end(), [](std::uint8_t v) { return v; }))
    labels[rng.uniform_index(a)] = 1;
  return labels;
}

}  // namespace

std::vector<SyntheticVideo> generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  const auto signatures = activity_signatures(spec);
  const Rng root(spec.seed);
  const std::size_t n_eval = static_cast<std::size_t>(
      spec.eval_fraction * static_cast<double>(spec.num_videos));

  std::vector<SyntheticVideo> videos(spec.num_videos);
  for (std::size_t vi = 0; vi < spec.num_videos; ++vi) {
    Rng rng = root.derive(vi + 1);
    SyntheticVideo& v = videos[vi];
    v.is_eval = vi >= spec.num_videos - n_eval;
    v.labels = draw_labels(spec, rng);

    std::vector<std::size_t> positives;
    for (std::size_t a = 0; a < spec.activities; ++a)
      if (v.labels[a]) positives.push_back(a);

    // temporally disjoint slots, one per positive activity, with a random
    // spatial box of roughly half the extent per axis
    const std::size_t slots = positives.size();
    const std::size_t bw = std::max<std::size_t>(1, spec.width / 2);
    const std::size_t bh = std::max<std::size_t>(1, spec.height / 2);
    for (std::size_t p = 0; p < slots; ++p) {
      TruthRegion r;
      r.activity = positives[p];
      r.t0 = p * spec.t_full / slots;
      r.t1 = (p + 1) * spec.t_full / slots;
      r.w0 = rng.uniform_index(spec.width - bw + 1);
      r.w1 = r.w0 + bw;
      r.h0 = rng.uniform_index(spec.height - bh + 1);
      r.h1 = r.h0 + bh;
      v.regions.push_back(r);
    }

    v.frames = Tensor<float>({spec.channels, spec.t_full, spec.width, spec.height});
    for (std::size_t i = 0; i < v.frames.size(); ++i)
      v.frames[i] = static_cast<float>(rng.normal());
    const std::size_t twh = spec.t_full * spec.width * spec.height;
    for (const auto& r : v.regions) {
      const auto& sig = signatures[r.activity];
      for (std::size_t c = 0; c < spec.channels; ++c) {
        const float amp = static_cast<float>(spec.snr) * sig[c];
        float* chan = v.frames.raw() + c * twh;
        for (std::size_t t = r.t0; t < r.t1; ++t)
          for (std::size_t w = r.w0; w < r.w1; ++w)
            for (std::size_t h = r.h0; h < r.h1; ++h)
              chan[(t * spec.width + w) * spec.height + h] += amp;
      }
    }
  }
  return videos;
}

Tensor<float> sample_clip(const SyntheticVideo& video, std::size_t rate,
                          std::size_t offset) {
  constexpr std::size_t kClipFrames = 32;
  const std::size_t ch = video.frames.dim(0);
  const std::size_t t_full = video.frames.dim(1);
  const std::size_t w = video.frames.dim(2);
  const std::size_t h = video.frames.dim(3);
  if (rate == 0 || offset + kClipFrames * rate > t_full)
    throw DimensionError("clip (rate " + std::to_string(rate) + ", offset " +
                         std::to_string(offset) + ") overruns video of " +
                         std::to_string(t_full) + " frames");
  Tensor<float> clip({ch, kClipFrames, w, h});
  const std::size_t frame = w * h;
  for (std::size_t c = 0; c < ch; ++c)
    for (std::size_t i = 0; i < kClipFrames; ++i) {
      const float* src = video.frames.raw() + (c * t_full + offset + i * rate) * frame;
      std::copy(src, src + frame, clip.raw() + (c * kClipFrames + i) * frame);
    }
  return clip;
}

BackboneStub::BackboneStub(std::size_t in_channels, std::size_t out_channels,
                           std::size_t temporal_pool, std::uint64_t seed)
    : in_channels_(in_channels),
      out_channels_(out_channels),
      temporal_pool_(temporal_pool),
      proj_({out_channels, in_channels}),
      bias_({out_channels}) {
  if (!in_channels || !out_channels || !temporal_pool)
    throw ConfigError("backbone stub dimensions must be positive");
  Rng rng(seed ^ 0xBACBACBACULL);
  const double s = 1.0 / std::sqrt(static_cast<double>(in_channels));
  for (std::size_t i = 0; i < proj_.size(); ++i)
    proj_[i] = static_cast<float>(rng.normal() * s);
  for (std::size_t i = 0; i < bias_.size(); ++i)
    bias_[i] = static_cast<float>(rng.normal());
}

FeatureVolume<float> BackboneStub::forward(const Tensor<float>& clip) const {
  if (clip.rank() != 4 || clip.dim(0) != in_channels_)
    throw DimensionError("clip shape " + shape_str(clip.shape()) +
                         " does not match stub input channels " +
                         std::to_string(in_channels_));
  const std::size_t frames = clip.dim(1), w = clip.dim(2), h = clip.dim(3);
  if (frames % temporal_pool_ != 0)
    throw DimensionError("clip frames " + std::to_string(frames) +
                         " not divisible by temporal pool " +
                         std::to_string(temporal_pool_));
  const std::size_t t = frames / temporal_pool_;
  const std::size_t m = t * w * h;
  const std::size_t frame = w * h;

  // pooled[c][t][w][h]
  Tensor<float> pooled({in_channels_, t, w, h});
  const float inv_pool = 1.0f / static_cast<float>(temporal_pool_);
  for (std::size_t c = 0; c < in_channels_; ++c)
    for (std::size_t ti = 0; ti < t; ++ti) {
      float* dst = pooled.raw() + (c * t + ti) * frame;
      for (std::size_t f = 0; f < temporal_pool_; ++f) {
        const float* src =
            clip.raw() + (c * frames + ti * temporal_pool_ + f) * frame;
        for (std::size_t p = 0; p < frame; ++p) dst[p] += src[p];
      }
      for (std::size_t p = 0; p < frame; ++p) dst[p] *= inv_pool;
    }

  Tensor<float> out({out_channels_, m});
  for (std::size_t cc = 0; cc < out_channels_; ++cc) {
    float* orow = out.raw() + cc * m;
    for (std::size_t p = 0; p < m; ++p) orow[p] = bias_[cc];
    for (std::size_t c = 0; c < in_channels_; ++c) {
      const float pw = proj_.at(cc, c);
      const float* prow = pooled.raw() + c * m;
      for (std::size_t p = 0; p < m; ++p) orow[p] += pw * prow[p];
    }
  }
  return FeatureVolume<float>(std::move(out), t, w, h);
}

LocalizationScore localization_score(const Tensor<float>& raw_map,
                                     const TruthRegion& region, std::size_t rate,
                                     std::size_t offset,
                                     std::size_t temporal_pool) {
  if (raw_map.rank() != 3)
    throw DimensionError("activity map must be T x W x H, got " +
                         shape_str(raw_map.shape()));
  const std::size_t t = raw_map.dim(0), w = raw_map.dim(1), h = raw_map.dim(2);
  LocalizationScore score;
  std::size_t inside_cells = 0;
  for (std::size_t ti = 0; ti < t; ++ti) {
    const std::size_t centre_frame =
        offset + rate * (ti * temporal_pool + temporal_pool / 2);
    const bool t_in = centre_frame >= region.t0 && centre_frame < region.t1;
    for (std::size_t wi = 0; wi < w; ++wi)
      for (std::size_t hi = 0; hi < h; ++hi) {
        const bool in = t_in && wi >= region.w0 && wi < region.w1 &&
                        hi >= region.h0 && hi < region.h1;
        if (in) {
          ++inside_cells;
          score.mass_in_region += raw_map[(ti * w + wi) * h + hi];
        }
      }
  }
  score.region_fraction =
      static_cast<double>(inside_cells) / static_cast<double>(t * w * h);
  return score;
}

// --- manifest I/O ------------------------------------------------------

namespace {

ordered_json spec_to_json(const DatasetSpec& s) {
  ordered_json j;
  j["num_videos"] = s.num_videos;
  j["activities"] = s.activities;
  j["t_full"] = s.t_full;
  j["width"] = s.width;
  j["height"] = s.height;
  j["channels"] = s.channels;
  j["min_activities"] = s.min_activities;
  j["max_activities"] = s.max_activities;
  j["snr"] = s.snr;
  j["eval_fraction"] = s.eval_fraction;
  j["seed"] = s.seed;
  j["forced_pairs"] = ordered_json::array();
  for (const auto& p : s.forced_pairs)
    j["forced_pairs"].push_back({p.first, p.second, p.prob});
  j["forbidden_pairs"] = ordered_json::array();
  for (const auto& p : s.forbidden_pairs)
    j["forbidden_pairs"].push_back({p.first, p.second});
  return j;
}

DatasetSpec spec_from_json(const ordered_json& j) {
  DatasetSpec s;
  s.num_videos = j.at("num_videos");
  s.activities = j.at("activities");
  s.t_full = j.at("t_full");
  s.width = j.at("width");
  s.height = j.at("height");
  s.channels = j.at("channels");
  s.min_activities = j.at("min_activities");
  s.max_activities = j.at("max_activities");
  s.snr = j.at("snr");
  s.eval_fraction = j.at("eval_fraction");
  s.seed = j.at("seed");
  for (const auto& p : j.at("forced_pairs"))
    s.forced_pairs.push_back({p.at(0), p.at(1), p.at(2)});
  for (const auto& p : j.at("forbidden_pairs"))
    s.forbidden_pairs.push_back({p.at(0), p.at(1)});
  return s;
}

std::string label_string(const std::vector<std::uint8_t>& labels) {
  std::string s(labels.size(), '0');
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i]) s[i] = '1';
  return s;
}

std::string video_file_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "video_%04zu.asft", index);
  return buf;
}

}  // namespace

void write_dataset(const std::filesystem::path& dir, const DatasetSpec& spec,
                   const std::vector<SyntheticVideo>& videos) {
  std::filesystem::create_directories(dir);
  ordered_json manifest;
  manifest["format"] = "asf-dataset";
  manifest["version"] = 1;
  manifest["spec"] = spec_to_json(spec);
  manifest["videos"] = ordered_json::array();
  for (std::size_t i = 0; i < videos.size(); ++i) {
    const auto& v = videos[i];
    const std::string name = video_file_name(i);
    write_tensor(dir / name, v.frames);
    ordered_json rec;
    rec["tensor"] = name;
    rec["labels"] = label_string(v.labels);
    rec["split"] = v.is_eval ? "eval" : "train";
    rec["regions"] = ordered_json::array();
    for (const auto& r : v.regions)
      rec["regions"].push_back(
          {r.activity, r.t0, r.t1, r.w0, r.w1, r.h0, r.h1});
    manifest["videos"].push_back(std::move(rec));
  }
  std::ofstream f(dir / "manifest.json", std::ios::trunc);
  if (!f) throw IoError("cannot write " + (dir / "manifest.json").string());
  f << manifest.dump(2) << "\n";
  if (!f) throw IoError("short write to " + (dir / "manifest.json").string());
}

LoadedDataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream f(dir / "manifest.json");
  if (!f) throw IoError("cannot open " + (dir / "manifest.json").string());
  ordered_json manifest;
  try {
    f >> manifest;
  } catch (const std::exception& e) {
    throw FormatError("manifest parse error: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != "asf-dataset" ||
      manifest.value("version", 0) != 1)
    throw FormatError("not an asf-dataset manifest");

  LoadedDataset ds;
  ds.spec = spec_from_json(manifest.at("spec"));
  for (const auto& rec : manifest.at("videos")) {
    SyntheticVideo v;
    v.frames = read_tensor_as<float>(dir / rec.at("tensor").get<std::string>());
    const std::string ls = rec.at("labels");
    v.labels.reserve(ls.size());
    for (char c : ls) {
      if (c != '0' && c != '1') throw FormatError("non-binary label string");
      v.labels.push_back(c == '1');
    }
    v.is_eval = rec.at("split").get<std::string>() == "eval";
    for (const auto& r : rec.at("regions"))
      v.regions.push_back(
          {r.at(0), r.at(1), r.at(2), r.at(3), r.at(4), r.at(5), r.at(6)});
    ds.videos.push_back(std::move(v));
  }
  return ds;
}

}  // namespace asf
