#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "bacon/evalkit.hpp"
#include "support.hpp"

using namespace bacon;
using namespace bacon::evalkit;

namespace {

struct Naive {
  double epe = 0, out = 0, d1 = 0;
  std::size_t n = 0;
};

// Row/column double loop, no shared code with the library.
Naive naive(const Map& pred, const Map& gt, const Mask& region) {
  Naive r;
  double se = 0;
  std::size_t bad = 0, bad_d1 = 0;
  for (int y = 0; y < gt.height(); ++y)
    for (int x = 0; x < gt.width(); ++x) {
      if (!region(y, x)) continue;
      const double e = std::fabs(pred(y, x) - gt(y, x));
      se += e;
      if (e > 3.0) ++bad;
      if (e > 3.0 && e > 0.05 * gt(y, x)) ++bad_d1;
      ++r.n;
    }
  r.epe = se / r.n;
  r.out = 100.0 * bad / r.n;
  r.d1 = 100.0 * bad_d1 / r.n;
  return r;
}

}  // namespace

TEST_CASE("metrics match naive double loops on random instances") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Map gt = test::random_map(17, 23, 1, 80, s);
    const Map pred = test::random_map(17, 23, 0, 90, s + 1000);
    const Mask occ = test::random_mask(17, 23, s + 2000);
    const auto rows = region_rows(pred, gt, occ);
    Mask occ_r(17, 23), noc_r(17, 23), all_r(17, 23, 1);
    for (std::size_t i = 0; i < occ.size(); ++i) {
      occ_r[i] = occ[i];
      noc_r[i] = !occ[i];
    }
    const std::array<Mask, 3> regions{occ_r, noc_r, all_r};
    for (int k = 0; k < 3; ++k) {
      const auto o = naive(pred, gt, regions[k]);
      REQUIRE(rows[k].present);
      CHECK(rows[k].n_pixels == o.n);
      CHECK(std::abs(rows[k].epe - o.epe) <= 1e-12);
      CHECK(std::abs(rows[k].outlier_rate - o.out) <= 1e-12);
      CHECK(std::abs(rows[k].d1 - o.d1) <= 1e-12);
      CHECK(std::abs(epe(pred, gt, regions[k]) - o.epe) <= 1e-12);
      CHECK(std::abs(outlier_rate(pred, gt, regions[k], 3) - o.out) <= 1e-12);
      CHECK(std::abs(d1_rate(pred, gt, regions[k]) - o.d1) <= 1e-12);
    }
  }
}

TEST_CASE("D1 needs both the absolute and the relative conjunct") {
  Map gt(1, 4), pred(1, 4);
  const Mask all(1, 4, 1);
  gt[0] = 100, pred[0] = 104;  // 4 px but 4%: outlier, not D1
  gt[1] = 10, pred[1] = 12;    // 2 px, 20%: neither
  gt[2] = 20, pred[2] = 24;    // 4 px, 20%: both
  gt[3] = 60, pred[3] = 63;    // exactly 3 px, 5%: neither (strict)
  CHECK(outlier_rate(pred, gt, all, 3) == 50.0);
  CHECK(d1_rate(pred, gt, all) == 25.0);
  CHECK(epe(pred, gt, all) == 13.0 / 4.0);
}

TEST_CASE("invalid ground truth is excluded and empty regions are absent") {
  Map gt(1, 3, 5.0), pred(1, 3, 5.0);
  gt[1] = std::numeric_limits<double>::infinity();
  gt[2] = 0.0;
  const Mask v = valid_pixels(gt);
  CHECK(v[0] == 1);
  CHECK(v[1] == 0);
  CHECK(v[2] == 0);
  const auto rows = region_rows(pred, gt, Mask(1, 3, 0));
  CHECK_FALSE(rows[0].present);  // no occluded pixels
  CHECK(rows[1].n_pixels == 1);
  CHECK(rows[2].n_pixels == 1);
  const auto split = region_split([](const Map& p, const Map& g, const Mask& m) { return epe(p, g, m); }, pred, gt,
                                  Mask(1, 3, 0));
  CHECK_FALSE(split[0]);
  CHECK(*split[2] == 0.0);
}

TEST_CASE("metrics reject shape mismatches") {
  CHECK_THROWS_AS(epe(Map(2, 2), Map(2, 3), Mask(2, 2, 1)), ShapeMismatch);
}

TEST_CASE("accumulator is the pixel-weighted fold of frames") {
  const Map g1 = test::random_map(4, 5, 1, 30, 1), p1 = test::random_map(4, 5, 1, 30, 2);
  const Map g2 = test::random_map(6, 5, 1, 30, 3), p2 = test::random_map(6, 5, 1, 30, 4);
  const Mask o1 = test::random_mask(4, 5, 5), o2 = test::random_mask(6, 5, 6);
  Accumulator acc;
  acc.add(p1, g1, o1);
  acc.add(p2, g2, o2);
  const auto r1 = region_rows(p1, g1, o1), r2 = region_rows(p2, g2, o2), all = acc.rows();
  for (int k = 0; k < 3; ++k) {
    const double n1 = r1[k].n_pixels, n2 = r2[k].n_pixels;
    CHECK(all[k].n_pixels == r1[k].n_pixels + r2[k].n_pixels);
    CHECK(all[k].epe == doctest::Approx((n1 * r1[k].epe + n2 * r2[k].epe) / (n1 + n2)).epsilon(1e-13));
    CHECK(all[k].outlier_rate ==
          doctest::Approx((n1 * r1[k].outlier_rate + n2 * r2[k].outlier_rate) / (n1 + n2)).epsilon(1e-13));
  }
}

TEST_CASE("oracle predictors on the standard dataset") {
  const auto frames = test::standard_frames(3, 1000003);
  const auto perfect = evaluate(perfect_predictor(), frames, {});
  for (const auto& r : perfect.rows) {
    CHECK(r.epe == 0.0);
    CHECK(r.outlier_rate == 0.0);
  }
  const auto zero = evaluate(zero_predictor(), frames, {});
  for (const auto& r : zero.rows) {
    CHECK(r.outlier_rate == 100.0);
    CHECK(r.d1 == 100.0);
  }
  CHECK(perfect.per_frame.size() == 3);
}

TEST_CASE("report JSON and CSV round trip") {
  namespace fs = std::filesystem;
  const auto frames = test::standard_frames(2, 1000003);
  const fs::path dir = fs::temp_directory_path() / "bacon_test_report";
  fs::remove_all(dir);
  EvalOptions eo;
  eo.config_hash = "cafe";
  eo.checkpoint_id = "cafe@0";
  eo.error_map_dir = dir / "errors";
  const auto rep = evaluate(zero_predictor(), frames, eo);
  write_report(rep, dir);
  CHECK(fs::exists(dir / "report.csv"));
  CHECK(fs::exists(dir / rep.per_frame[0].error_map));
  const auto back = read_report(dir / "report.json");
  CHECK(back.config_hash == "cafe");
  CHECK(back.per_frame.size() == 2);
  for (int k = 0; k < 3; ++k) {
    CHECK(back.rows[k].epe == rep.rows[k].epe);
    CHECK(back.rows[k].n_pixels == rep.rows[k].n_pixels);
  }
  // Two evaluations are identical.
  CHECK(to_json(evaluate(zero_predictor(), frames, eo)) == to_json(rep));
  CHECK(to_csv(rep).starts_with("config_hash,checkpoint_id,frame,region"));

  auto j = to_json(rep);
  j["rows"][0]["n_pixels"] = 1;  // OCC + NOC no longer equals ALL
  CHECK_THROWS_AS(validate_report_json(j), InvalidArgument);
  std::ofstream(dir / "bad.json") << "{not json";
  CHECK_THROWS_WITH_AS(read_report(dir / "bad.json"), doctest::Contains("bad.json"), Error);
  fs::remove_all(dir);
}

TEST_CASE("inference uses the teacher unless EMA was off") {
  stereonet::ArchConfig a;
  a.d_max = 8;
  a.encoder_layers = 2;
  distill::Checkpoint ck;
  ck.student = stereonet::init_params(1, a);
  ck.teacher = stereonet::init_params(2, a);
  CHECK(&inference_params(ck) == &ck.teacher);
  ck.config = {{"ablation", {{"ema", true}}}};
  CHECK(&inference_params(ck) == &ck.teacher);
  ck.config = {{"ablation", {{"ema", false}}}};
  CHECK(&inference_params(ck) == &ck.student);
  ck.student = {};
  CHECK_THROWS_WITH_AS(inference_params(ck), doctest::Contains("student"), InvalidArgument);
}
