#include <doctest.h>

#include "bacon/imgeom.hpp"
#include "support.hpp"

using namespace bacon;
using namespace bacon::imgeom;

TEST_CASE("bilinear sampling interpolates horizontally and flags out-of-range taps") {
  Image img(1, 1, 5);
  for (int x = 0; x < 5; ++x) img(0, 0, x) = 10.0 * x;
  Map xs(1, 5);
  xs[0] = 0.0;
  xs[1] = 1.25;
  xs[2] = 4.0;
  xs[3] = -1.0;
  xs[4] = 4.5;
  const auto r = bilinear_sample(img, xs);
  CHECK(r.values(0, 0, 0) == 0.0);
  CHECK(r.values(0, 0, 1) == doctest::Approx(12.5).epsilon(1e-15));
  CHECK(r.values(0, 0, 2) == 40.0);
  CHECK(r.values(0, 0, 3) == 0.0);   // clamped to the left edge
  CHECK(r.values(0, 0, 4) == 40.0);  // clamped to the right edge
  CHECK(r.validity[0] == 1);
  CHECK(r.validity[2] == 1);
  CHECK(r.validity[3] == 0);
  CHECK(r.validity[4] == 0);
}

TEST_CASE("bilinear sampling rejects mismatched coordinate maps") {
  CHECK_THROWS_AS(bilinear_sample(Image(3, 4, 5), Map(4, 6)), ShapeMismatch);
}

TEST_CASE("warp backward matches central differences") {
  const Image tgt = test::smooth_image(8, 24, 3);
  Map d = test::random_map(8, 24, 1.2, 4.7, 4);
  const Image g = test::random_image(3, 8, 24, 5);
  const Map analytic = warp_backward(tgt, d, g);
  auto objective = [&](const Map& disp) {
    const auto w = warp_target_to_ref(tgt, disp);
    double s = 0;
    for (std::size_t i = 0; i < g.values().size(); ++i) s += g.values()[i] * w.recon.values()[i];
    return s;
  };
  double worst = 0;
  for (std::size_t p = 0; p < d.size(); ++p) {
    const double x = p % 24;
    // Skip taps that leave the image or sit on an integer knot.
    const double xs = x - d[p];
    if (xs < 0.01 || std::abs(xs - std::round(xs)) < 0.01) continue;
    const double keep = d[p];
    const double num = test::central_difference(
        [&](double v) {
          d[p] = v;
          return objective(d);
        },
        keep, 1e-6);
    d[p] = keep;
    worst = std::max(worst, test::rel_error(analytic[p], num));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("warping with ground-truth disparity reproduces the reference on visible pixels") {
  const auto frames = test::standard_frames(4, 77);
  for (const auto& f : frames)
    for (auto [i, j] : {std::pair{0, 1}, std::pair{1, 3}, std::pair{3, 1}, std::pair{4, 0}}) {
      const auto pair = canonicalize_pair(f.views[i], f.views[j], f.target_on_left(i, j));
      const Map d = pair.flipped ? flip_horizontal(f.gt_disparity(i, j)) : f.gt_disparity(i, j);
      const Mask occ = pair.flipped ? flip_horizontal(f.gt_occlusion(i, j)) : f.gt_occlusion(i, j);
      const auto w = warp_target_to_ref(pair.tgt, d);
      double worst = 0;
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < f.height(); ++y)
          for (int x = 0; x < f.width(); ++x)
            if (!occ(y, x)) worst = std::max(worst, std::abs(w.recon(c, y, x) - pair.ref(c, y, x)));
      CHECK(worst < 1e-6);
    }
}

TEST_CASE("canonicalization mirrors pairs whose target is on the left") {
  const Image a = test::random_image(3, 4, 7, 1), b = test::random_image(3, 4, 7, 2);
  const auto right = canonicalize_pair(a, b, false);
  CHECK_FALSE(right.flipped);
  CHECK(right.ref == a);
  const auto left = canonicalize_pair(a, b, true);
  CHECK(left.flipped);
  CHECK(left.ref == flip_horizontal(a));
  CHECK(left.tgt == flip_horizontal(b));
  CHECK(flip_horizontal(flip_horizontal(a)) == a);
  const Map d = test::random_map(4, 7, 0, 5, 3);
  CHECK(decanonicalize_disparity(decanonicalize_disparity(d, true), true) == d);
  CHECK(decanonicalize_disparity(d, false) == d);
}
