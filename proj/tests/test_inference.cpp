#include <cmath>
#include <random>

#include "doctest.h"
#include "segae/inference.hpp"
#include "segae/patches.hpp"
#include "test_util.hpp"

using namespace segae;

namespace {

ModelParameters small_model() {
  ModelConfig c;
  c.base_filters = 2;
  c.n_scales = 2;
  c.patch_size = {8, 8, 8};
  auto p = build_model(c, 17);
  p.mixing_weights = {0.9, 0.8, 0.3, 1.4, 0.0};
  return p;
}

}  // namespace

TEST_CASE("lesion channel selection") {
  ModelParameters p;
  p.mixing_weights = {0.2, 1.0, 0.4, 2.5, 0.7};
  CHECK(select_lesion_channel(p).channel == 3);
  CHECK_FALSE(select_lesion_channel(p).tie);
  CHECK(select_lesion_channel(p, 1).channel == 1);
  p.mixing_weights = {1.0, 2.0, 2.0, 0.5, 0.1};
  const auto s = select_lesion_channel(p);
  CHECK(s.channel == 1);
  CHECK(s.tie);
  CHECK_THROWS_AS(select_lesion_channel(p, 5), ConfigError);
  CHECK_THROWS_AS(select_lesion_channel(p, -1), ConfigError);
}

TEST_CASE("binarize is inclusive and matches a voxel loop") {
  Volume3D half({2, 1, 1}, {}, 0.5);
  CHECK(binarize(half).count() == 2);
  CHECK(binarize(Volume3D({3, 3, 3}, {}, 0.0)).empty());
  std::mt19937_64 rng(13);
  const auto v = testutil::random_volume({8, 8, 8}, rng);
  for (double t : {0.1, 0.5, 0.93}) {
    const auto m = binarize(v, t);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(m[i] == (v[i] >= t));
  }
}

TEST_CASE("predicted memberships stay on the simplex inside the brain") {
  const auto params = small_model();
  std::mt19937_64 rng(3);
  const Dims3 d{13, 11, 10};
  const auto vol = testutil::random_channels(d, rng);
  const auto wm = testutil::random_mask(d, rng, 0.5);
  auto brain = testutil::random_mask(d, rng, 0.8);
  InferenceConfig cfg;
  cfg.predict_stride = 2;
  const auto maps = predict_memberships(params, vol, wm, brain, cfg);
  REQUIRE(maps.size() == 5);
  for (std::size_t i = 0; i < maps[0].size(); ++i) {
    double s = 0;
    for (const auto& m : maps) {
      CHECK(m[i] >= 0.0);
      CHECK(m[i] <= 1.0);
      s += m[i];
    }
    if (brain[i])
      CHECK(std::abs(s - 1.0) < 1e-6);
    else
      CHECK(s == 0.0);
  }
  const auto again = predict_memberships(params, vol, wm, brain, cfg);
  for (std::size_t c = 0; c < 5; ++c) CHECK(again[c] == maps[c]);
  CHECK(is_subset(binarize(maps[3]), brain));
}

TEST_CASE("a volume of exactly one patch equals a single forward call") {
  const auto params = small_model();
  std::mt19937_64 rng(4);
  const Dims3 d{8, 8, 8};
  const auto vol = testutil::random_channels(d, rng);
  const auto wm = testutil::random_mask(d, rng, 0.5);
  const BinaryMask brain(d, {}, true);
  const auto maps = predict_memberships(params, vol, wm, brain);
  const auto out = forward(params, normalize_unit_wm(vol, wm));
  for (int c = 0; c < 5; ++c) CHECK(maps[c] == out.memberships.to_volume(c));
}

TEST_CASE("prediction rejects small volumes and mismatched masks") {
  const auto params = small_model();
  std::mt19937_64 rng(5);
  const auto vol = testutil::random_channels({7, 9, 9}, rng);
  const BinaryMask full({7, 9, 9}, {}, true);
  CHECK_THROWS_AS(predict_memberships(params, vol, full, full), DimensionError);
  const auto big = testutil::random_channels({9, 9, 9}, rng);
  CHECK_THROWS_AS(predict_memberships(params, big, BinaryMask({9, 9, 9}, {}, true), full),
                  DimensionError);
  // Origins 0, 9, 12 on a 20-voxel axis leave voxel 8 uncovered by 8-voxel patches.
  InferenceConfig wide;
  wide.predict_stride = 9;
  const auto large = testutil::random_channels({20, 8, 8}, rng);
  const BinaryMask large_mask({20, 8, 8}, {}, true);
  CHECK_THROWS_AS(predict_memberships(params, large, large_mask, large_mask, wide), ConfigError);
  // A single patch per axis needs no overlap, whatever the stride.
  CHECK_NOTHROW(predict_memberships(params, big, BinaryMask({9, 9, 9}, {}, true),
                                    BinaryMask({9, 9, 9}, {}, true), wide));
  InferenceConfig bad;
  bad.threshold = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
