#include <doctest.h>

#include "bacon/imgeom.hpp"
#include "bacon/losses.hpp"
#include "support.hpp"

using namespace bacon;
using namespace bacon::losses;

namespace {

const LossConfig kCfg{};

// Central-difference check of a scalar function of `x` against `analytic`.
template <class F>
double worst_rel_error(std::span<double> x, std::span<const double> analytic, F&& f, double h = 1e-6) {
  double worst = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f();
    x[i] = keep - h;
    const double down = f();
    x[i] = keep;
    worst = std::max(worst, test::rel_error(analytic[i], (up - down) / (2 * h)));
  }
  return worst;
}

double dot(const Map& a, const Map& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("contrastive term vanishes when the student equals the rescaled teacher") {
  const Map dt = test::random_map(9, 13, 0, 20, 1);
  for (double r : {0.25, 1.0 / 3.0, 0.5, 2.0 / 3.0, 1.5, 2.0, 4.0}) {
    Map ds = dt;
    for (auto& v : ds.values()) v *= r;
    const Map c = contrastive_map(ds, dt, r);
    for (double v : c.values()) REQUIRE(v == 0.0);
  }
}

TEST_CASE("photometric map is zero on identical images") {
  const Image a = test::random_image(3, 11, 17, 2);
  const Map photo = photometric_map(a, a, kCfg), ssim = ssim_map(a, a, kCfg);
  for (double v : photo.values()) REQUIRE(v == 0.0);
  for (double v : ssim.values()) REQUIRE(v == 1.0);
}

TEST_CASE("smoothness is zero on constant disparity") {
  const Image a = test::random_image(3, 10, 12, 3);
  CHECK(smoothness_loss(Map(10, 12, 7.25), a) == 0.0);
  CHECK(smoothness_loss(test::random_map(10, 12, 0, 5, 4), a) > 0.0);
}

TEST_CASE("attention map truth table on random masks") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const Mask mt = test::random_mask(16, 16, seed), ms = test::random_mask(16, 16, seed + 100);
    const auto a = attention_map(mt, ms);
    const auto u = attention_map(mt, ms, false);
    std::array<int, 4> seen{};
    for (std::size_t i = 0; i < mt.size(); ++i) {
      const int expect = !mt[i] ? 0 : (ms[i] ? 1 : 2);
      REQUIRE(a[i] == expect);
      REQUIRE(u[i] == (mt[i] ? 1 : 0));
      seen[2 * mt[i] + ms[i]]++;
    }
    for (int n : seen) CHECK(n > 0);
  }
}

TEST_CASE("valid mask combines threshold, auto-mask and warp validity") {
  Map photo(1, 4), ident(1, 4);
  Mask valid(1, 4, 1);
  photo[0] = 0.05, ident[0] = 0.2;  // passes all
  photo[1] = 0.15, ident[1] = 0.2;  // fails the threshold
  photo[2] = 0.05, ident[2] = 0.01;  // fails auto-masking
  photo[3] = 0.05, ident[3] = 0.2;
  valid[3] = 0;  // warped out of view
  const Mask full = valid_mask(photo, ident, valid, 0.1);
  CHECK(full[0] == 1);
  CHECK(full[1] == 0);
  CHECK(full[2] == 0);
  CHECK(full[3] == 0);
  LossPolicy none;
  none.threshold_mask = none.auto_mask = false;
  const Mask loose = valid_mask(photo, ident, valid, 0.1, none);
  CHECK(loose[1] == 1);
  CHECK(loose[2] == 1);
  CHECK(loose[3] == 0);
}

TEST_CASE("SSIM gradient matches central differences") {
  const Image a = test::random_image(3, 8, 8, 10);
  Image b = test::random_image(3, 8, 8, 11);
  const Map g = test::random_map(8, 8, -1, 1, 12);
  const Image an = ssim_backward(a, b, kCfg, g);
  CHECK(worst_rel_error(b.values(), an.values(), [&] { return dot(ssim_map(a, b, kCfg), g); }) < 1e-4);
}

TEST_CASE("photometric gradient matches central differences") {
  const Image a = test::random_image(3, 8, 8, 20);
  Image b = test::random_image(3, 8, 8, 21);
  const Map g = test::random_map(8, 8, -1, 1, 22);
  const Image an = photometric_backward(a, b, kCfg, g);
  CHECK(worst_rel_error(b.values(), an.values(), [&] { return dot(photometric_map(a, b, kCfg), g); }) < 1e-4);
}

TEST_CASE("smoothness gradient matches central differences") {
  const Image img = test::random_image(3, 8, 8, 30);
  Map d = test::random_map(8, 8, 0, 10, 31);
  const Map an = smoothness_backward(d, img);
  CHECK(worst_rel_error(d.values(), an.values(), [&] { return smoothness_loss(d, img); }) < 1e-4);
}

TEST_CASE("contrastive gradient matches central differences") {
  Map ds = test::random_map(8, 8, 0, 10, 40);
  const Map dt = test::random_map(8, 8, 0, 10, 41);
  const Map g = test::random_map(8, 8, 0, 2, 42);
  const Map an = contrastive_backward(ds, dt, 0.5, g);
  CHECK(worst_rel_error(ds.values(), an.values(), [&] { return dot(contrastive_map(ds, dt, 0.5), g); }) < 1e-4);
}

TEST_CASE("pair photometric gradient matches central differences on both target sides") {
  for (bool left : {false, true}) {
    const Image ref = test::smooth_image(8, 8, 50), tgt = test::smooth_image(8, 8, 51);
    Map d = test::random_map(8, 8, 0.3, 2.7, 52);
    const Map g = test::random_map(8, 8, -1, 1, 53);
    const Map an = pair_photometric_backward(ref, tgt, left, d, kCfg, g);
    const double err = worst_rel_error(d.values(), an.values(),
                                       [&] { return dot(pair_photometric(ref, tgt, left, d, kCfg).photo, g); });
    CHECK(err < 1e-4);
  }
}

TEST_CASE("total loss gradient matches central differences for every ablation policy") {
  const Image ref = test::smooth_image(8, 8, 60), tgt = test::smooth_image(8, 8, 61);
  const Map dt = test::random_map(8, 8, 0.5, 3, 62);
  // A teacher mask with both values so all attention branches are exercised.
  const Mask mt = test::random_mask(8, 8, 63);
  LossConfig cfg = kCfg;
  cfg.tau = 0.3;  // keeps part of the random student mask true
  std::vector<LossPolicy> policies(4);
  policies[1].use_contrastive = false;
  policies[2].use_photometric = policies[2].use_smoothness = false;
  policies[3].occlusion_aware = false;
  policies[3].photometric_masked_mean = false;
  for (bool left : {false, true})
    for (const auto& pol : policies) {
      Map ds = test::random_map(8, 8, 0.3, 2.7, 64);
      const auto res = total_loss(ds, dt, 0.5, ref, tgt, left, mt, cfg, pol);
      const double err = worst_rel_error(ds.values(), res.grad_student.values(), [&] {
        return total_loss(ds, dt, 0.5, ref, tgt, left, mt, cfg, pol).report.total;
      });
      CHECK(err < 1e-4);
    }
}

TEST_CASE("total loss combines the weighted terms") {
  const Image ref = test::smooth_image(8, 8, 70), tgt = test::smooth_image(8, 8, 71);
  const Map ds = test::random_map(8, 8, 0.3, 2.7, 72), dt = test::random_map(8, 8, 0.5, 3, 73);
  const Mask mt(8, 8, 1);
  const auto res = total_loss(ds, dt, 0.5, ref, tgt, false, mt, kCfg);
  const auto& r = res.report;
  CHECK(r.total == doctest::Approx(r.contrastive + kCfg.lambda_p * r.photometric + kCfg.lambda_s * r.smoothness)
                       .epsilon(1e-14));
  double c = 0;
  const Map cm = contrastive_map(ds, dt, 0.5);
  for (std::size_t i = 0; i < cm.size(); ++i) c += r.maps.attention[i] * cm[i];
  CHECK(r.contrastive == doctest::Approx(c / 64.0).epsilon(1e-14));
}

TEST_CASE("an empty student mask zeroes the photometric term") {
  const Image ref = test::smooth_image(8, 8, 80), tgt = test::smooth_image(8, 8, 81);
  LossConfig cfg = kCfg;
  cfg.tau = 0.0;  // nothing passes the threshold
  const auto res = total_loss(Map(8, 8, 1.0), Map(8, 8, 1.0), 1.0, ref, tgt, false, Mask(8, 8, 1), cfg);
  CHECK(res.report.photometric == 0.0);
  CHECK(std::isfinite(res.report.total));
}

TEST_CASE("loss config defaults tie lambda_s to lambda_p") {
  const auto c = LossConfig::with_lambda_p(10);
  CHECK(c.lambda_s == doctest::Approx(0.01));
  LossConfig bad;
  bad.alpha = 1.5;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}
