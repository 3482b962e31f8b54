#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "segae/nifti.hpp"
#include "segae/patches.hpp"
#include "test_util.hpp"

using namespace segae;
namespace fs = std::filesystem;

TEST_CASE("plan_patches covers the volume with the documented edge rule") {
  SUBCASE("160^3 with stride 40") {
    const auto g = plan_patches({160, 160, 160}, {80, 80, 80}, {40, 40, 40});
    CHECK(plan_axis(160, 80, 40) == std::vector<int>{0, 40, 80});
    CHECK(g.origins.size() == 27);
  }
  SUBCASE("patch equals volume") {
    for (int s : {1, 20, 40, 200}) {
      const auto g = plan_patches({80, 80, 80}, {80, 80, 80}, {s, s, s});
      REQUIRE(g.origins.size() == 1);
      CHECK(g.origins[0] == Index3{0, 0, 0});
    }
  }
  SUBCASE("last origin appended") {
    CHECK(plan_axis(100, 80, 40) == std::vector<int>{0, 20});
    CHECK(plan_patches({100, 80, 80}, {80, 80, 80}, {40, 40, 40}).origins.size() == 2);
    CHECK(plan_axis(96, 80, 20) == std::vector<int>{0, 16});
    CHECK(plan_axis(96, 80, 40) == std::vector<int>{0, 16});
  }
  SUBCASE("volume smaller than patch") {
    CHECK_THROWS_AS(plan_patches({60, 80, 80}, {80, 80, 80}, {40, 40, 40}), DimensionError);
  }
  SUBCASE("every voxel covered for random shapes") {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 200; ++t) {
      const int d = 1 + static_cast<int>(rng() % 30);
      const int p = 1 + static_cast<int>(rng() % d);
      const int s = 1 + static_cast<int>(rng() % p);  // gaps appear once the stride exceeds the patch
      const auto o = plan_axis(d, p, s);
      std::vector<int> hit(d, 0);
      for (int v : o)
        for (int i = 0; i < p; ++i) ++hit[v + i];
      for (int h : hit) CHECK(h > 0);
      CHECK(o.back() == d - p);
    }
  }
}

TEST_CASE("extract_patch matches index arithmetic") {
  const Dims3 dims{4, 4, 4};
  Volume3D v(dims, {});
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i) * 0.5;
  CHECK(extract_patch(v, {0, 0, 0}, dims) == v);
  for (int ox = 0; ox < 3; ++ox)
    for (int oy = 0; oy < 3; ++oy)
      for (int oz = 0; oz < 3; ++oz) {
        const Dims3 ps{2, 2, 2};
        const auto p = extract_patch(v, {ox, oy, oz}, ps);
        for (int z = 0; z < 2; ++z)
          for (int y = 0; y < 2; ++y)
            for (int x = 0; x < 2; ++x) CHECK(p(x, y, z) == v(ox + x, oy + y, oz + z));
      }
  const Volume3D c(dims, {}, 3.25);
  const auto cp = extract_patch(c, {1, 0, 2}, {3, 4, 2});
  for (double x : cp.data()) CHECK(x == 3.25);
  CHECK_THROWS_AS(extract_patch(v, {2, 0, 0}, {3, 3, 3}), DimensionError);
}

TEST_CASE("assemble_patches averages overlaps") {
  const Dims3 dims{6, 1, 1};
  std::vector<PlacedPatch> ps;
  ps.push_back({{0, 0, 0}, Volume3D({4, 1, 1}, {}, 0.0)});
  ps.push_back({{2, 0, 0}, Volume3D({4, 1, 1}, {}, 1.0)});
  const auto out = assemble_patches(ps, dims);
  CHECK(out(0, 0, 0) == 0.0);
  CHECK(out(2, 0, 0) == 0.5);
  CHECK(out(3, 0, 0) == 0.5);
  CHECK(out(5, 0, 0) == 1.0);

  std::vector<PlacedPatch> constant;
  for (int o : plan_axis(6, 4, 1)) constant.push_back({{o, 0, 0}, Volume3D({4, 1, 1}, {}, 7.0)});
  const auto flat = assemble_patches(constant, dims);
  for (double x : flat.data()) CHECK(x == 7.0);

  std::vector<PlacedPatch> gap{{{0, 0, 0}, Volume3D({2, 1, 1}, {}, 1.0)}};
  CHECK_THROWS_AS(assemble_patches(gap, dims), CoverageError);
}

TEST_CASE("normalize_unit_wm divides each channel by its WM mean") {
  const Dims3 dims{3, 1, 1};
  BinaryMask wm(dims, {});
  wm.set(0, 0, 0, true);
  wm.set(1, 0, 0, true);
  Volume3D a(dims, {}, std::vector<double>{2, 4, 6});
  Volume3D b(dims, {}, 5.0);
  Volume3D c(dims, {}, std::vector<double>{1, 3, 8});
  const auto n = normalize_unit_wm(MultiChannelVolume(a, b, c), wm);
  CHECK(n.channel(0)(2, 0, 0) == doctest::Approx(2.0).epsilon(1e-15));
  for (double x : n.channel(1).data()) CHECK(x == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(n.channel(2)(2, 0, 0) == doctest::Approx(4.0).epsilon(1e-15));

  std::mt19937_64 rng(3);
  const auto rv = testutil::random_channels({7, 6, 5}, rng);
  const auto rm = testutil::random_mask({7, 6, 5}, rng, 0.4);
  const auto rn = normalize_unit_wm(rv, rm);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    double s = 0;
    for (std::size_t i = 0; i < rm.size(); ++i)
      if (rm[i]) s += rn.channel(ch)[i];
    CHECK(std::abs(s / static_cast<double>(rm.count()) - 1.0) < 1e-9);
  }

  CHECK_THROWS_AS(normalize_unit_wm(MultiChannelVolume(a, b, c), BinaryMask(dims, {})),
                  NormalizationError);
  Volume3D z(dims, {}, 0.0);
  CHECK_THROWS_AS(normalize_unit_wm(MultiChannelVolume(a, z, c), wm), NormalizationError);
}

TEST_CASE("threshold_at_least is inclusive") {
  Volume3D v({3, 1, 1}, {}, std::vector<double>{0.49999, 0.5, 0.9});
  const auto m = threshold_at_least(v, 0.5);
  CHECK_FALSE(m[0]);
  CHECK(m[1]);
  CHECK(m[2]);
}

TEST_CASE("NIfTI round trip keeps values, spacing and masks") {
  const auto dir = testutil::scratch_dir("nifti");
  std::mt19937_64 rng(9);
  const Spacing3 sp{0.8, 0.8, 0.8};
  Volume3D v({5, 4, 3}, sp);
  std::normal_distribution<double> g(0, 10);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = g(rng);
  nifti::save_volume(v, dir / "v.nii.gz");
  const auto back = nifti::load_volume(dir / "v.nii.gz");
  CHECK(back == v);
  CHECK(back.spacing() == sp);

  auto m = testutil::random_mask({5, 4, 3}, rng, 0.3, sp);
  nifti::save_mask(m, dir / "m.nii.gz");
  CHECK(nifti::load_mask(dir / "m.nii.gz") == m);
  CHECK(nifti::load_mask_like(dir / "m.nii.gz", {5, 4, 3}, sp) == m);
  CHECK_THROWS_AS(nifti::load_mask_like(dir / "m.nii.gz", {5, 4, 4}, sp), DimensionError);

  // Same object saved twice gives the same bytes.
  nifti::save_volume(v, dir / "v2.nii.gz");
  CHECK(testutil::read_bytes(dir / "v.nii.gz") == testutil::read_bytes(dir / "v2.nii.gz"));

  testutil::write_bytes(dir / "bad.nii.gz", "not a nifti file");
  CHECK_THROWS_AS(nifti::load_volume(dir / "bad.nii.gz"), FormatError);
  CHECK_THROWS(nifti::load_volume(dir / "missing.nii.gz"));
}
