#include <doctest.h>

#include <filesystem>

#include "asf/dataset.hpp"
#include "test_util.hpp"

using namespace asf;

namespace {

DatasetSpec small_spec() {
  DatasetSpec s;
  s.num_videos = 24;
  s.activities = 5;
  s.t_full = 128;
  s.width = 4;
  s.height = 4;
  s.channels = 8;
  s.seed = 11;
  return s;
}

}  // namespace

TEST_CASE("spec validation rejects contradictory pair rules") {
  auto s = small_spec();
  s.forced_pairs = {{0, 1, 0.9}};
  s.forbidden_pairs = {{1, 0}};
  CHECK_THROWS_AS(s.validate(), ConfigError);

  s = small_spec();
  s.forbidden_pairs = {{2, 2}};
  CHECK_THROWS_AS(s.validate(), ConfigError);

  s = small_spec();
  s.forced_pairs = {{0, 9, 0.5}};
  CHECK_THROWS_AS(s.validate(), ConfigError);

  s = small_spec();
  s.min_activities = 4;
  s.max_activities = 2;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("activity signatures are unit orthogonal while channels allow") {
  auto s = small_spec();
  auto sig = activity_signatures(s);
  REQUIRE(sig.size() == s.activities);
  for (std::size_t a = 0; a < sig.size(); ++a) {
    double norm = 0;
    for (float v : sig[a]) norm += double(v) * v;
    CHECK(norm == doctest::Approx(1.0).epsilon(1e-5));
    for (std::size_t b = 0; b < a; ++b) {
      double dot = 0;
      for (std::size_t c = 0; c < s.channels; ++c)
        dot += double(sig[a][c]) * sig[b][c];
      CHECK(std::abs(dot) < 1e-5);
    }
  }
}

TEST_CASE("generation is deterministic under the seed") {
  auto s = small_spec();
  auto d1 = generate_dataset(s);
  auto d2 = generate_dataset(s);
  REQUIRE(d1.size() == d2.size());
  for (std::size_t i = 0; i < d1.size(); ++i) {
    CHECK(test::bitwise_equal(d1[i].frames, d2[i].frames));
    CHECK(d1[i].labels == d2[i].labels);
    CHECK(d1[i].regions == d2[i].regions);
    CHECK(d1[i].is_eval == d2[i].is_eval);
  }
  s.seed += 1;
  auto d3 = generate_dataset(s);
  CHECK_FALSE(test::bitwise_equal(d1[0].frames, d3[0].frames));
}

TEST_CASE("dataset structure: labels, regions, split sizes") {
  auto s = small_spec();
  s.num_videos = 40;
  auto d = generate_dataset(s);
  std::size_t n_eval = 0;
  for (const auto& v : d) {
    std::size_t positives = 0;
    for (auto l : v.labels) positives += l;
    CHECK(positives >= 1);
    CHECK(v.regions.size() == positives);
    for (const auto& r : v.regions) {
      CHECK(v.labels[r.activity] == 1);
      CHECK(r.t1 <= s.t_full);
      CHECK(r.t0 < r.t1);
      CHECK(r.w1 <= s.width);
      CHECK(r.h1 <= s.height);
    }
    // regions temporally disjoint
    for (std::size_t i = 1; i < v.regions.size(); ++i)
      CHECK(v.regions[i - 1].t1 <= v.regions[i].t0);
    n_eval += v.is_eval;
  }
  CHECK(n_eval == std::size_t(s.eval_fraction * 40));
}

TEST_CASE("forbidden pairs never co-occur") {
  auto s = small_spec();
  s.num_videos = 150;
  s.max_activities = 3;
  s.forbidden_pairs = {{0, 1}, {2, 3}};
  for (const auto& v : generate_dataset(s)) {
    CHECK_FALSE(bool(v.labels[0] && v.labels[1]));
    CHECK_FALSE(bool(v.labels[2] && v.labels[3]));
  }
}

TEST_CASE("forced pair hits its conditional rate within 3 sigma") {
  auto s = small_spec();
  s.num_videos = 600;
  s.forced_pairs = {{0, 1, 0.8}};
  std::size_t first = 0, both = 0;
  for (const auto& v : generate_dataset(s)) {
    if (!v.labels[0]) continue;
    ++first;
    both += v.labels[1];
  }
  REQUIRE(first > 50);
  const double phat = double(both) / double(first);
  const double sd = std::sqrt(0.8 * 0.2 / double(first));
  CHECK(std::abs(phat - 0.8) < 3 * sd);
}

TEST_CASE("sample_clip frame arithmetic") {
  auto s = small_spec();
  auto d = generate_dataset(s);
  const auto& v = d[0];

  auto clip = sample_clip(v, 2, 5);
  CHECK(clip.shape() == Shape{s.channels, 32, s.width, s.height});
  const std::size_t frame = s.width * s.height;
  for (std::size_t c = 0; c < s.channels; ++c)
    for (std::size_t i = 0; i < 32; ++i)
      for (std::size_t p = 0; p < frame; ++p)
        CHECK(clip[(c * 32 + i) * frame + p] ==
              v.frames[(c * s.t_full + 5 + 2 * i) * frame + p]);

  // rate 1, offset 0 copies the first 32 frames verbatim
  auto head32 = sample_clip(v, 1, 0);
  for (std::size_t c = 0; c < s.channels; ++c)
    for (std::size_t i = 0; i < 32 * frame; ++i)
      CHECK(head32[c * 32 * frame + i] == v.frames[c * s.t_full * frame + i]);

  CHECK_THROWS_AS(sample_clip(v, 4, 1), DimensionError);  // 1 + 128 > 128
  CHECK_THROWS_AS(sample_clip(v, 0, 0), DimensionError);
}

TEST_CASE("backbone stub: determinism, bias, pooling") {
  BackboneStub b1(8, 16, 8, 5), b2(8, 16, 8, 5), b3(8, 16, 8, 6);
  Rng rng(44);
  auto clip = test::random_tensor<float>({8, 32, 3, 3}, rng);
  auto f1 = b1.forward(clip), f2 = b2.forward(clip), f3 = b3.forward(clip);
  CHECK(test::bitwise_equal(f1.data, f2.data));
  CHECK_FALSE(test::bitwise_equal(f1.data, f3.data));
  CHECK(f1.data.shape() == Shape{16, 4 * 3 * 3});
  CHECK(f1.t == 4);

  // all-zero clip -> every column equals the bias, and not all zeros
  finite_checks() = true;
  Tensor<float> zeros({8, 32, 3, 3});
  auto fz = b1.forward(zeros);
  bool any_nonzero = false;
  for (std::size_t c = 0; c < 16; ++c)
    for (std::size_t m = 1; m < fz.positions(); ++m) {
      CHECK(fz.data.at(c, m) == fz.data.at(c, 0));
      any_nonzero = any_nonzero || fz.data.at(c, m) != 0.0f;
    }
  CHECK(any_nonzero);

  // constant-in-time clip -> pooling is exact, output constant over t
  Tensor<float> steady({8, 32, 3, 3});
  Rng r2(9);
  for (std::size_t c = 0; c < 8; ++c)
    for (std::size_t p = 0; p < 9; ++p) {
      const float val = float(r2.uniform(-1, 1));
      for (std::size_t t = 0; t < 32; ++t) steady[(c * 32 + t) * 9 + p] = val;
    }
  auto fs = b1.forward(steady);
  for (std::size_t c = 0; c < 16; ++c)
    for (std::size_t t = 1; t < 4; ++t)
      for (std::size_t p = 0; p < 9; ++p)
        CHECK(fs.data.at(c, t * 9 + p) == fs.data.at(c, 0 * 9 + p));

  CHECK_THROWS_AS(b1.forward(test::random_tensor<float>({7, 32, 3, 3}, rng)),
                  DimensionError);
  CHECK_THROWS_AS(b1.forward(test::random_tensor<float>({8, 30, 3, 3}, rng)),
                  DimensionError);
}

TEST_CASE("truth regions carry the painted signature energy") {
  auto s = small_spec();
  s.snr = 6.0;
  auto d = generate_dataset(s);
  auto sigs = activity_signatures(s);
  const std::size_t frame = s.width * s.height;
  const std::size_t twh = s.t_full * frame;
  for (std::size_t vi = 0; vi < 5; ++vi) {
    const auto& v = d[vi];
    for (const auto& r : v.regions) {
      // mean signature projection inside vs outside the region (same frames)
      double inside = 0, outside = 0;
      std::size_t n_in = 0, n_out = 0;
      for (std::size_t t = r.t0; t < r.t1; ++t)
        for (std::size_t w = 0; w < s.width; ++w)
          for (std::size_t h = 0; h < s.height; ++h) {
            double proj = 0;
            for (std::size_t c = 0; c < s.channels; ++c)
              proj += double(sigs[r.activity][c]) *
                      v.frames[c * twh + (t * s.width + w) * s.height + h];
            const bool in = w >= r.w0 && w < r.w1 && h >= r.h0 && h < r.h1;
            if (in) {
              inside += proj;
              ++n_in;
            } else {
              outside += proj;
              ++n_out;
            }
          }
      REQUIRE(n_in > 0);
      REQUIRE(n_out > 0);
      // inside mean should sit near snr, outside near 0 (noise)
      CHECK(inside / n_in > s.snr - 1.5);
      CHECK(std::abs(outside / n_out) < 1.5);
    }
  }
}

TEST_CASE("dataset write/load round trip") {
  auto s = small_spec();
  s.num_videos = 6;
  s.forced_pairs = {{0, 1, 0.5}};
  s.forbidden_pairs = {{2, 3}};
  auto d = generate_dataset(s);
  const auto dir = std::filesystem::temp_directory_path() / "asf_ds_rt";
  std::filesystem::remove_all(dir);
  write_dataset(dir, s, d);
  auto loaded = load_dataset(dir);
  CHECK(loaded.spec.num_videos == s.num_videos);
  CHECK(loaded.spec.forced_pairs.size() == 1);
  CHECK(loaded.spec.forbidden_pairs.size() == 1);
  REQUIRE(loaded.videos.size() == d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(test::bitwise_equal(loaded.videos[i].frames, d[i].frames));
    CHECK(loaded.videos[i].labels == d[i].labels);
    CHECK(loaded.videos[i].regions == d[i].regions);
    CHECK(loaded.videos[i].is_eval == d[i].is_eval);
  }
  const auto train_idx = loaded.split_indices(false);
  const auto eval_idx = loaded.split_indices(true);
  CHECK(train_idx.size() + eval_idx.size() == d.size());
  std::filesystem::remove_all(dir);

  CHECK_THROWS_AS(load_dataset(dir / "missing"), IoError);
}

TEST_CASE("localization score geometry") {
  // 4x2x2 map, all mass in cell (t=1, w=0, h=0)
  Tensor<float> map({4, 2, 2});
  map[(1 * 2 + 0) * 2 + 0] = 1.0f;

  TruthRegion r;
  r.activity = 0;
  // with rate=1, pool=2: cell t covers centre frame 2t+1
  r.t0 = 2;
  r.t1 = 6;  // covers centres 3 (t=1) and 5 (t=2)
  r.w0 = 0;
  r.w1 = 1;
  r.h0 = 0;
  r.h1 = 1;
  auto sc = localization_score(map, r, /*rate=*/1, /*offset=*/0, /*pool=*/2);
  CHECK(sc.mass_in_region == doctest::Approx(1.0));
  CHECK(sc.region_fraction == doctest::Approx(2.0 / 16.0));

  // shifting the offset moves the hot cell out of the region
  auto sc2 = localization_score(map, r, 1, /*offset=*/8, 2);
  CHECK(sc2.mass_in_region == 0.0);

  CHECK_THROWS_AS(localization_score(Tensor<float>({2, 2}), r, 1, 0, 2),
                  DimensionError);
}
