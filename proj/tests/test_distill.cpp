#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>

#include "bacon/distill.hpp"
#include "bacon/log.hpp"
#include "support.hpp"

using namespace bacon;
using namespace bacon::distill;

namespace {

stereonet::ArchConfig small_arch() {
  stereonet::ArchConfig a;
  a.d_max = 16;
  a.encoder_layers = 2;
  a.hidden_channels = 4;
  a.feature_channels = 4;
  a.init_cost_scale = 30;
  return a;
}

TrainConfig small_train(long steps) {
  TrainConfig c;
  c.steps = steps;
  c.batch = 2;
  c.crop_height = 16;
  c.crop_width = 48;
  c.seed = 9;
  c.lr.lr_max = 1e-3;
  c.lr.total_steps = steps;
  return c;
}

const std::vector<scenegen::MultiBaselineFrame>& frames() {
  static const auto f = test::standard_frames(3, 123);
  return f;
}

}  // namespace

TEST_CASE("every triplet satisfies r times B_t equals B_s exactly") {
  for (int k : {3, 4, 5, 7})
    for (double step : {0.5, 0.3, 0.25}) {
      const auto o = scenegen::rig_offsets({k, step, 0});
      for (int r = 0; r < k; ++r)
        for (int s = 0; s < k; ++s)
          for (int t = 0; t < k; ++t) {
            if (r == s || r == t || s == t) continue;
            const auto tri = make_triplet(o, r, s, t);
            REQUIRE(tri.r * tri.B_t == tri.B_s);
            REQUIRE(tri.flip_student == (s < r));
            REQUIRE(tri.flip_teacher == (t < r));
          }
    }
}

TEST_CASE("triplet construction rejects repeated views") {
  const auto o = scenegen::rig_offsets({5, 0.5, 0});
  CHECK_THROWS_AS(make_triplet(o, 1, 1, 2), InvalidArgument);
  CHECK_THROWS_AS(make_triplet(o, 1, 2, 2), InvalidArgument);
  CHECK_THROWS_AS(make_triplet(o, 0, 1, 5), InvalidArgument);
  const std::vector<double> two{0.0, 0.5};
  Rng rng(1);
  CHECK_THROWS_AS(sample_triplet(two, rng), InvalidArgument);
}

TEST_CASE("triplet sampling covers every ordered assignment") {
  const auto o = scenegen::rig_offsets({5, 0.5, 0});
  Rng rng(4);
  std::map<std::tuple<int, int, int>, int> counts;
  const int n = 60000;
  for (int i = 0; i < n; ++i) {
    const auto t = sample_triplet(o, rng);
    counts[{t.ref_idx, t.student_tgt_idx, t.teacher_tgt_idx}]++;
  }
  REQUIRE(counts.size() == 60);  // 5 · 4 · 3
  for (const auto& [_, c] : counts) CHECK(std::abs(c - n / 60) < 200);
}

TEST_CASE("teacher refuses augmented inputs") {
  const auto p = stereonet::init_params(1, small_arch());
  Image a = test::random_image(3, 8, 32, 1), b = test::random_image(3, 8, 32, 2);
  CHECK_NOTHROW(teacher_predict(p, a, b, false));
  b.set_augmented(true);
  CHECK_THROWS_AS(teacher_predict(p, a, b, false), InvalidArgument);
}

TEST_CASE("student augmentation shares jitter across the pair and erases per image") {
  const Image a = test::random_image(3, 32, 48, 3);
  SUBCASE("jitter only") {
    AugmentConfig cfg;
    cfg.probability = 1.0;
    cfg.max_erase = 0;
    Rng rng(5);
    const auto [x, y] = augment_student(a, a, rng, cfg);
    CHECK(x.augmented());
    CHECK(y.augmented());
    CHECK(x == y);  // identical inputs, shared jitter
    CHECK_FALSE(x == a);
    for (double v : x.values()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  SUBCASE("nothing applied") {
    AugmentConfig cfg;
    cfg.probability = 0.0;
    cfg.max_erase = 0;
    Rng rng(6);
    const auto [x, y] = augment_student(a, a, rng, cfg);
    CHECK(x == a);
    CHECK(y == a);
  }
  SUBCASE("erasing is independent per image") {
    AugmentConfig cfg;
    cfg.brightness = cfg.contrast = cfg.saturation = cfg.hue = 0.0;
    int differ = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
      Rng rng(s);
      const auto [x, y] = augment_student(a, a, rng, cfg);
      differ += !(x == y);
    }
    CHECK(differ > 0);
  }
}

TEST_CASE("erasing fills exactly the rectangle") {
  Image a = test::random_image(3, 10, 12, 8);
  const Image before = a;
  Rng rng(1);
  erase_rect(a, {2, 3, 6, 7}, rng);
  CHECK(a.augmented());
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 10; ++y)
      for (int x = 0; x < 12; ++x) {
        const bool inside = x >= 2 && x < 6 && y >= 3 && y < 7;
        if (!inside) REQUIRE(a(c, y, x) == before(c, y, x));
      }
}

TEST_CASE("momentum schedule endpoints and midpoint") {
  const MomentumSchedule s{0.996, 1000};
  CHECK(momentum_at(s, 0) == 0.996);
  CHECK(momentum_at(s, 1000) == 1.0);
  CHECK(momentum_at(s, 500) == doctest::Approx(0.998).epsilon(1e-15));
  for (long k = 1; k <= 1000; ++k) REQUIRE(momentum_at(s, k) >= momentum_at(s, k - 1));
  CHECK_THROWS_AS(momentum_at(s, 1001), InvalidArgument);
  CHECK_THROWS_AS(momentum_at(s, -1), InvalidArgument);
}

TEST_CASE("EMA update endpoints and blend") {
  const auto t = stereonet::init_params(1, small_arch()), s = stereonet::init_params(2, small_arch());
  CHECK(ema_update(t, s, 1.0) == t);
  CHECK(ema_update(t, s, 0.0) == s);
  const auto h = ema_update(t, s, 0.25);
  for (const auto& [name, x] : h.entries())
    for (std::size_t i = 0; i < x.data.size(); ++i)
      REQUIRE(x.data[i] == 0.25 * t.at(name).data[i] + 0.75 * s.at(name).data[i]);
  CHECK_THROWS_AS(ema_update(t, s, 1.5), InvalidArgument);
}

TEST_CASE("one-cycle learning rate") {
  const OneCycle s{2e-4, 1000, 0.01, 25, 1e4};
  CHECK(learning_rate(s, 0) == doctest::Approx(8e-6));
  CHECK(learning_rate(s, 10) == doctest::Approx(2e-4));
  CHECK(learning_rate(s, 1000) == doctest::Approx(8e-10));
  CHECK(learning_rate(s, 505) == doctest::Approx(0.5 * (2e-4 + 8e-10)));
}

TEST_CASE("Adam step matches a hand computation") {
  stereonet::ParamSet p, g;
  p.add("w", {2}, 0.0);
  g.add("w", {2}, 0.0);
  p.at("w").data = {1.0, -2.0};
  g.at("w").data = {0.5, -4.0};
  auto st = adam_init(p);
  const auto q = adam_step(p, g, st, 0.1, {});
  // First step: bias-corrected m/√v = sign(g).
  CHECK(q.at("w").data[0] == doctest::Approx(1.0 - 0.1));
  CHECK(q.at("w").data[1] == doctest::Approx(-2.0 + 0.1));
  CHECK(st.t == 1);
}

TEST_CASE("train step: stop-gradient, EMA identity and determinism") {
  auto cfg = small_train(20);
  const auto s0 = init_state(small_arch(), 3);
  CHECK(s0.teacher == s0.student);
  const auto r = train_step(s0, frames(), cfg);
  REQUIRE(r.applied);
  CHECK(r.state.step == 1);
  for (const auto& [_, t] : r.teacher_grad.entries())
    for (double v : t.data) REQUIRE(v == 0.0);
  CHECK_FALSE(r.state.student == s0.student);
  CHECK(r.momentum == cfg.m_base);
  for (const auto& [name, t] : r.state.teacher.entries())
    for (std::size_t i = 0; i < t.data.size(); ++i)
      REQUIRE(t.data[i] ==
              r.momentum * s0.teacher.at(name).data[i] + (1 - r.momentum) * r.state.student.at(name).data[i]);
  const auto again = train_step(s0, frames(), cfg);
  CHECK(again.state.student == r.state.student);
  CHECK(again.report.total == r.report.total);

  cfg.ema = false;
  const auto frozen = train_step(s0, frames(), cfg);
  CHECK(frozen.state.teacher == s0.teacher);
}

TEST_CASE("non-finite losses skip the update and eventually abort") {
  auto cfg = small_train(20);
  auto s = init_state(small_arch(), 3);
  s.student.at("enc.0.bias").data[0] = std::nan("");
  const long warnings = log::warning_count();
  auto r = train_step(s, frames(), cfg);
  CHECK_FALSE(r.applied);
  CHECK(r.state.student.at("enc.1.bias") == s.student.at("enc.1.bias"));
  CHECK(log::warning_count() > warnings);
  auto st = r.state;
  for (int i = 0; i < 9; ++i) st = train_step(st, frames(), cfg).state;
  CHECK(st.consecutive_nonfinite == 10);
  CHECK_THROWS_AS(train_step(st, frames(), cfg), TrainingDiverged);
}

TEST_CASE("checkpoint round trip and validation") {
  namespace fs = std::filesystem;
  auto cfg = small_train(5);
  auto st = init_state(small_arch(), 4);
  st = train_step(st, frames(), cfg).state;
  Checkpoint ck{st.student, st.teacher, st.adam, st.step, {{"k", 1}}, "abc@1"};
  const fs::path p = fs::temp_directory_path() / "bacon_test_ck" / "c.json";
  save_checkpoint(ck, p);
  const auto back = load_checkpoint(p);
  CHECK(back.student == ck.student);
  CHECK(back.teacher == ck.teacher);
  CHECK(back.adam.m == ck.adam.m);
  CHECK(back.adam.v == ck.adam.v);
  CHECK(back.adam.t == ck.adam.t);
  CHECK(back.step == 1);
  CHECK(back.id == "abc@1");
  std::ofstream(p) << "{\"schema\": \"something-else\"}";
  CHECK_THROWS_AS(load_checkpoint(p), Error);
  CHECK_THROWS_AS(load_checkpoint(p.parent_path() / "missing.json"), Error);
  fs::remove_all(p.parent_path());
}
