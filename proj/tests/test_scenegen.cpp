#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

#include "bacon/dataset.hpp"
#include "bacon/scenegen.hpp"
#include "support.hpp"

using namespace bacon;
using namespace bacon::scenegen;

namespace {

// Depth of the first surface hit by the ray through column x (pixel units,
// may be fractional) and row y of the camera at `offset`, straight from the spec.
double ray_cast(const SceneSpec& spec, double offset, double x, int y) {
  const double cx = 0.5 * (spec.width - 1), cy = 0.5 * (spec.height - 1);
  const double u = x - cx, t = y - cy;
  double best = spec.background_depth;
  for (const Layer& l : spec.layers) {
    const double s = u + spec.focal * offset / l.depth;
    const bool inside =
        s >= spec.focal * l.x0 && s <= spec.focal * l.x1 && t >= spec.focal * l.y0 && t <= spec.focal * l.y1;
    if (inside) best = std::min(best, l.depth);
  }
  return best;
}

}  // namespace

TEST_CASE("camera offsets are centred with a uniform step") {
  const auto o = rig_offsets({5, 0.5, 0});
  REQUIRE(o.size() == 5);
  CHECK(o[0] == -1.0);
  CHECK(o[2] == 0.0);
  CHECK(o[4] == 1.0);
}

TEST_CASE("exact depth candidates give integer disparities on every baseline") {
  RigConfig rig{5, 0.5, 64};
  const auto depths = exact_depth_candidates(480, rig, 16, 40);
  REQUIRE(depths.size() >= 2);
  for (double z : depths) {
    CHECK(z >= 16);
    CHECK(z <= 40);
    for (int n = 1; n < 5; ++n) {
      const double d = n * 0.5 * 480 / z;
      CHECK(d == std::round(d));
    }
  }
}

TEST_CASE("ground-truth disparity follows baseline times focal over depth") {
  const auto frames = test::standard_frames(3, 17);
  for (const auto& f : frames) {
    for (int i = 0; i < f.n_views(); ++i)
      for (int j = 0; j < f.n_views(); ++j) {
        if (i == j) continue;
        const Map& d = f.gt_disparity(i, j);
        const double b = std::abs(f.camera_offsets[j] - f.camera_offsets[i]);
        for (std::size_t p = 0; p < d.size(); ++p) {
          REQUIRE(d[p] >= 0);
          REQUIRE(d[p] == b * f.focal / f.depth[i][p]);
        }
      }
  }
}

TEST_CASE("disparities scale exactly with the baseline ratio") {
  const auto frames = test::standard_frames(3, 23);
  for (const auto& f : frames) {
    const Map& d1 = f.gt_disparity(0, 1);
    for (int j = 2; j < f.n_views(); ++j) {
      const Map& dj = f.gt_disparity(0, j);
      for (std::size_t p = 0; p < d1.size(); ++p) REQUIRE(dj[p] == j * d1[p]);
    }
    // Adjacent disparities stay in the designed band.
    for (double v : d1.values()) {
      CHECK(v >= 6);
      CHECK(v <= 15);
    }
  }
}

TEST_CASE("rendered depth agrees with an independent ray cast") {
  const auto f = test::standard_frames(2, 5)[1];
  for (int k = 0; k < f.n_views(); ++k)
    for (int y = 0; y < f.height(); y += 3)
      for (int x = 0; x < f.width(); x += 3) REQUIRE(f.depth[k](y, x) == ray_cast(f.spec, f.camera_offsets[k], x, y));
}

TEST_CASE("occlusion masks agree with ray-cast visibility") {
  const auto frames = test::standard_frames(4, 31);
  for (const auto& f : frames)
    for (auto [i, j] : {std::pair{0, 1}, std::pair{2, 0}, std::pair{1, 4}, std::pair{4, 3}}) {
      const Mask& occ = f.gt_occlusion(i, j);
      const double oi = f.camera_offsets[i], oj = f.camera_offsets[j];
      std::size_t n_occ = 0;
      for (int y = 0; y < f.height(); ++y)
        for (int x = 0; x < f.width(); ++x) {
          const double z = ray_cast(f.spec, oi, x, y);
          const double xt = x - (oj - oi) * f.focal / z;
          bool expect = xt < 0 || xt > f.width() - 1;
          if (!expect) expect = ray_cast(f.spec, oj, xt, y) < z;
          REQUIRE(static_cast<bool>(occ(y, x)) == expect);
          n_occ += expect;
        }
      CHECK(n_occ > 0);
    }
}

TEST_CASE("occluded set grows with the baseline on single-foreground scenes") {
  SceneRanges r;
  r.min_layers = r.max_layers = 1;
  const RigConfig rig{5, 0.5, 64};
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto f = render_frame(sample_scene(r, {}, rig, s), rig, s);
    for (int j = 1; j + 1 < f.n_views(); ++j) {
      const Mask& narrow = f.gt_occlusion(0, j);
      const Mask& wide = f.gt_occlusion(0, j + 1);
      for (std::size_t p = 0; p < narrow.size(); ++p)
        if (narrow[p]) REQUIRE(wide[p]);
    }
  }
}

TEST_CASE("rendering is deterministic in the seed") {
  const RigConfig rig{5, 0.5, 64};
  const auto spec = sample_scene({}, {}, rig, 99);
  const auto a = render_frame(spec, rig, 7), b = render_frame(spec, rig, 7);
  CHECK(a.views == b.views);
  CHECK(a.disparity == b.disparity);
  const auto c = render_frame(sample_scene({}, {}, rig, 100), rig, 7);
  CHECK_FALSE(a.views == c.views);
}

TEST_CASE("scenes whose widest disparity exceeds the network range are rejected") {
  SceneRanges r;
  r.depth_min = 4;  // widest pair would see 240 px
  const RigConfig rig{5, 0.5, 64};
  const auto spec = sample_scene(r, {}, rig, 3);
  CHECK(max_rig_disparity(spec, rig) > 63);
  CHECK_THROWS_AS(render_frame(spec, rig, 3), DisparityOverflow);
}

TEST_CASE("dataset round trip through PNG and PFM is exact") {
  namespace fs = std::filesystem;
  const auto frames = test::standard_frames(2, 41);
  const fs::path root = fs::temp_directory_path() / "bacon_test_dataset_rt";
  fs::remove_all(root);
  dataset::write_dataset(frames, root);
  const auto back = dataset::read_dataset(root);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].id == frames[i].id);
    CHECK(back[i].views == frames[i].views);
    CHECK(back[i].disparity == frames[i].disparity);
    CHECK(back[i].occlusion == frames[i].occlusion);
    CHECK(back[i].camera_offsets == frames[i].camera_offsets);
  }
  CHECK(dataset::read_manifest(root)["frames"].size() == 2);
  fs::remove_all(root);
}

TEST_CASE("generating the same config twice writes byte-identical files") {
  namespace fs = std::filesystem;
  auto cfg = config::default_config();
  cfg.dataset.n_frames = 2;
  const fs::path a = fs::temp_directory_path() / "bacon_test_gen_a", b = fs::temp_directory_path() / "bacon_test_gen_b";
  for (const auto& p : {a, b}) {
    cfg.dataset.path = p.string();
    experiment::write_generated(experiment::generate_frames(cfg.dataset, cfg.arch), cfg.dataset, "h", true);
  }
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a);
    REQUIRE(fs::exists(b / rel));
    CHECK(slurp(e.path()) == slurp(b / rel));
    ++n;
  }
  CHECK(n > 10);
  CHECK_THROWS_AS(
      experiment::write_generated(experiment::generate_frames(cfg.dataset, cfg.arch), cfg.dataset, "h", false),
      Error);
  fs::remove_all(a);
  fs::remove_all(b);
}
