#include <doctest.h>

#include "bacon/imgeom.hpp"
#include "bacon/losses.hpp"
#include "bacon/stereonet.hpp"
#include "support.hpp"

using namespace bacon;
using namespace bacon::stereonet;

namespace {

ArchConfig tiny_arch() {
  ArchConfig a;
  a.d_max = 8;
  a.encoder_layers = 2;
  a.hidden_channels = 4;
  a.feature_channels = 4;
  a.init_cost_scale = 4.0;
  return a;
}

// Target shifted so that ref(x) = tgt(x − shift).
std::pair<Image, Image> shifted_pair(int h, int w, int shift, std::uint64_t seed) {
  const Image wide = test::smooth_image(h, w + shift, seed);
  return {crop(wide, 0, shift, h, w), crop(wide, 0, 0, h, w)};
}

}  // namespace

TEST_CASE("parameter count matches the closed form") {
  ArchConfig a;
  a.hidden_channels = a.feature_channels = 16;
  a.encoder_layers = 4;
  const auto p = init_params(1, a);
  CHECK(p.parameter_count() == 7409);
  CHECK(expected_parameter_count(a) == 7409);
  CHECK(init_params(3, tiny_arch()).parameter_count() == expected_parameter_count(tiny_arch()));
}

TEST_CASE("initialization is deterministic and finite") {
  const auto a = init_params(5, {}), b = init_params(5, {}), c = init_params(6, {});
  CHECK(a == b);
  CHECK_FALSE(a == c);
  CHECK(a.all_finite());
  CHECK(a.at("cost.log_scale").data[0] == doctest::Approx(std::log(ArchConfig{}.init_cost_scale)));
}

TEST_CASE("soft-argmin of a one-hot cost volume is the hot index") {
  // Costs are negated similarities: a very low cost at k = 7 dominates.
  CostVolume cv(16, 2, 3, 0.0);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 3; ++x) cv(7, y, x) = -1e4;
  const Map d = soft_argmin(cv, 1.0);
  for (double v : d.values()) CHECK(v == 7.0);
}

TEST_CASE("soft-argmin of a flat cost volume is the mid disparity") {
  CostVolume cv(10, 1, 2, 3.0);
  const Map d = soft_argmin(cv, 1.0);
  for (double v : d.values()) CHECK(v == doctest::Approx(4.5).epsilon(1e-14));
}

TEST_CASE("network output is bounded by the disparity range") {
  const auto [ref, tgt] = shifted_pair(12, 40, 3, 1);
  auto a = tiny_arch();
  const auto p = init_params(2, a);
  const auto out = forward(p, ref, tgt, nullptr, true);
  REQUIRE(out.disparity.height() == 12);
  REQUIRE(out.disparity.width() == 40);
  for (double v : out.disparity.values()) {
    CHECK(v >= 0.0);
    CHECK(v <= a.d_max - 1);
  }
  REQUIRE(out.cost_volume);
  CHECK(out.cost_volume->depth == a.d_max);
}

TEST_CASE("forward rejects bad inputs") {
  const auto p = init_params(2, tiny_arch());
  CHECK_THROWS_AS(forward(p, Image(3, 8, 8), Image(3, 8, 8)), InvalidArgument);  // d_max ≥ width
  CHECK_THROWS_AS(forward(p, Image(1, 8, 16), Image(1, 8, 16)), InvalidArgument);
  CHECK_THROWS_AS(forward(p, Image(3, 8, 16), Image(3, 8, 17)), ShapeMismatch);
  auto a = tiny_arch();
  a.max_input_width = 32;
  CHECK_THROWS_AS(forward(init_params(2, a), Image(3, 8, 40), Image(3, 8, 40)), InvalidArgument);
}

TEST_CASE("parameter sets check compatibility by name and shape") {
  const auto a = init_params(1, tiny_arch());
  auto b = a;
  CHECK(a.compatible(b));
  b.at("enc.0.bias").shape = {5};
  b.at("enc.0.bias").data.resize(5);
  CHECK_FALSE(a.compatible(b));
  CHECK_THROWS_WITH_AS(a.require_compatible(b, "test"), doctest::Contains("enc.0.bias"), ShapeMismatch);
  CHECK(params_from_json(to_json(a)) == a);
}

TEST_CASE("network gradient matches central differences") {
  const auto [ref, tgt] = shifted_pair(16, 32, 3, 7);
  auto a = tiny_arch();
  a.dilations = {1, 2};
  auto p = init_params(11, a);
  const Map g = test::random_map(16, 32, -1, 1, 12);
  ForwardCache cache;
  forward(p, ref, tgt, &cache);
  const ParamSet an = backward(p, cache, g);
  auto objective = [&] {
    const auto d = forward(p, ref, tgt).disparity;
    double s = 0;
    for (std::size_t i = 0; i < d.size(); ++i) s += g[i] * d[i];
    return s;
  };
  double worst = 0;
  for (auto& [name, t] : p.entries())
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      const double keep = t.data[i];
      const double num = test::central_difference(
          [&](double v) {
            t.data[i] = v;
            return objective();
          },
          keep, 1e-6);
      t.data[i] = keep;
      worst = std::max(worst, test::rel_error(an.at(name).data[i], num, 1e-4));
    }
  CHECK(worst < 1e-4);
}

TEST_CASE("end-to-end loss gradient w.r.t. student parameters matches central differences") {
  // Student sees a right-hand target; the teacher disparity is a constant.
  const auto [ref, tgt] = shifted_pair(16, 32, 2, 21);
  auto p = init_params(13, tiny_arch());
  const Map dt = test::random_map(16, 32, 1.5, 2.5, 22);
  const Mask mt = test::random_mask(16, 32, 23);
  losses::LossConfig cfg;
  cfg.tau = 0.3;
  auto total = [&](ForwardCache* cache) {
    const auto d = forward(p, ref, tgt, cache).disparity;
    return losses::total_loss(d, dt, 1.0, ref, tgt, false, mt, cfg);
  };
  ForwardCache cache;
  const auto res = total(&cache);
  const ParamSet an = backward(p, cache, res.grad_student);
  double worst = 0;
  for (auto& [name, t] : p.entries())
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      const double keep = t.data[i];
      const double num = test::central_difference(
          [&](double v) {
            t.data[i] = v;
            return total(nullptr).report.total;
          },
          keep, 1e-6);
      t.data[i] = keep;
      worst = std::max(worst, test::rel_error(an.at(name).data[i], num, 1e-6));
    }
  CHECK(worst < 1e-3);
}

TEST_CASE("arch config validation") {
  ArchConfig a;
  a.dilations = {1, 2};
  CHECK_THROWS_AS(a.validate(), InvalidArgument);
  a.dilations = {1, 2, 4, 0};
  CHECK_THROWS_AS(a.validate(), InvalidArgument);
  a.dilations = {1, 2, 4, 8};
  CHECK_NOTHROW(a.validate());
  CHECK(arch_from_json(to_json(a)) == a);
}
