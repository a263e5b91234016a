#include <doctest.h>

#include <cmath>
#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>
#include <random>
#include <sstream>

#include "nestfuse/error.hpp"
#include "nestfuse/loss.hpp"
#include "nestfuse/metrics.hpp"
#include "oracles.hpp"
#include "synth.hpp"

using namespace nestfuse;

namespace {

Image blurred(const Image& img, double sigma) {
  Image out = img;
  const cv::Mat src(img.height(), img.width(), CV_32F, const_cast<float*>(img.data().data()));
  cv::Mat dst(out.height(), out.width(), CV_32F, out.data().data());
  cv::GaussianBlur(src, dst, cv::Size(0, 0), sigma, sigma, cv::BORDER_REFLECT_101);
  return out;
}

Image noisy(const Image& img, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sigma);
  Image out = img;
  for (float& v : out.data()) v = float(std::clamp(v + n(rng), 0.0, 1.0));
  return out;
}

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::kInvalidArgument;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("entropy and standard deviation examples") {
    CHECK(entropy(Image(1, 8, 8, 0.3f)) == 0.0);
    CHECK(std_dev(Image(1, 8, 8, 0.3f)) == 0.0);
    Image half(1, 2, 2);
    half.at(0, 0, 0) = half.at(0, 0, 1) = 0.0f;
    half.at(0, 1, 0) = half.at(0, 1, 1) = 1.0f;
    CHECK(entropy(half) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std_dev(half) == doctest::Approx(127.5).epsilon(1e-12));
    Image ramp(1, 16, 16);
    for (int i = 0; i < 256; ++i) ramp.data()[i] = float(i) / 255.0f;
    CHECK(entropy(ramp) == doctest::Approx(8.0).epsilon(1e-12));
  }

  TEST_CASE("histogram metrics match the oracles") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const int h = 1 + int(seed % 8), w = 1 + int(seed * 3 % 8);
      const Image a = nftest::random_map(1, h, w, 100 + seed);
      Image b = nftest::random_map(1, h, w, 200 + seed);
      if (seed % 3 == 0) b = a;
      CHECK(std::abs(entropy(a) - nftest::oracle::entropy(a)) <= 1e-9);
      CHECK(std::abs(std_dev(a) - nftest::oracle::std_dev(a)) <= 1e-9);
      CHECK(std::abs(mutual_information(a, b) - nftest::oracle::mutual_information(a, b)) <= 1e-9);
    }
  }

  TEST_CASE("mutual information properties") {
    const Image a = nftest::scene(32, 32, 1);
    const Image b = nftest::scene(32, 32, 2);
    CHECK(mutual_information(a, a) == doctest::Approx(entropy(a)).epsilon(1e-12));
    CHECK(mutual_information(a, b) == doctest::Approx(mutual_information(b, a)).epsilon(1e-12));
    CHECK(mutual_information(a, b) >= -1e-12);
    CHECK(mutual_information(a, b) <= std::min(entropy(a), entropy(b)) + 1e-12);
    CHECK(fusion_mi(a, a, b) == doctest::Approx(entropy(a) + mutual_information(a, b)).epsilon(1e-12));
  }

  TEST_CASE("degenerate triples") {
    const Image f = nftest::scene(64, 64, 3);
    CHECK(ssim_index(f, f) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::abs(ssim_a(f, f, f) - 1.0) <= 1e-6);
    CHECK(std::abs(fmi(f, f, f, FmiFeature::kDct) - 1.0) <= 1e-6);
    CHECK(std::abs(fmi(f, f, f, FmiFeature::kWavelet) - 1.0) <= 1e-6);
    CHECK(std::abs(vif(f, f, f) - 1.0) <= 1e-6);
    const Image c(1, 64, 64, 0.4f);
    CHECK(std::abs(vif(c, c, c) - 1.0) <= 1e-6);
    CHECK(std::abs(fmi(c, c, c, FmiFeature::kDct) - 1.0) <= 1e-6);
  }

  TEST_CASE("normalised MI examples") {
    const std::vector<double> x = {0, 1, 2, 3, 4, 5, 6, 7};
    CHECK(normalized_mi(x, x) == doctest::Approx(1.0));
    const std::vector<double> y = {0, 0, 0, 0, 1, 1, 1, 1};
    const std::vector<double> z = {0, 1, 0, 1, 0, 1, 0, 1};
    CHECK(normalized_mi(y, z) == doctest::Approx(0.0).scale(1.0));
    CHECK(code_of([&] { normalized_mi(x, std::span<const double>(y).first(3)); }) ==
          ErrorCode::kShapeMismatch);
  }

  TEST_CASE("FMI feature layout") {
    const Image f = nftest::scene(20, 18, 4);
    CHECK(fmi_features(f, FmiFeature::kDct).size() == 2u * 2u * 64u);
    CHECK(fmi_features(f, FmiFeature::kWavelet).size() == 3u * 10u * 9u);
    for (double v : fmi_features(f, FmiFeature::kDct)) CHECK(v >= 0.0);
    // A constant 8x8 block has a single DC coefficient of 8 * value.
    const auto d = fmi_features(Image(1, 8, 8, 0.5f), FmiFeature::kDct);
    CHECK(d[0] == doctest::Approx(4.0));
    for (std::size_t i = 1; i < d.size(); ++i) CHECK(d[i] == doctest::Approx(0.0).scale(1.0));
    CHECK(code_of([&] { fmi_features(Image(1, 7, 9), FmiFeature::kDct); }) == ErrorCode::kSize);
  }

  TEST_CASE("ranges on random triples") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const auto p = nftest::source_pair(32, 32, 300 + seed);
      const Image f = seed % 2 ? nftest::scene(32, 32, 400 + seed) : blurred(p.ir, 1.0);
      const double fd = fmi(f, p.ir, p.vis, FmiFeature::kDct);
      const double fw = fmi(f, p.ir, p.vis, FmiFeature::kWavelet);
      const double v = vif(f, p.ir, p.vis);
      CHECK(fd >= 0.0);
      CHECK(fd <= 1.0);
      CHECK(fw >= 0.0);
      CHECK(fw <= 1.0);
      CHECK(std::isfinite(v));
      CHECK(v >= 0.0);
      const double s = ssim_a(f, p.ir, p.vis);
      CHECK(s >= -1.0);
      CHECK(s <= 1.0);
    }
  }

  TEST_CASE("VIF falls with blur and is near zero for a constant") {
    const Image ref = nftest::scene(96, 96, 5);
    double last = vif_single(ref, ref);
    CHECK(last == doctest::Approx(1.0));
    for (double sigma : {0.6, 1.2, 2.4, 4.8}) {
      const double v = vif_single(ref, blurred(ref, sigma));
      CAPTURE(sigma);
      CHECK(v < last);
      last = v;
    }
    CHECK(vif_single(ref, Image(1, 96, 96, 0.5f)) < 1e-3);
    CHECK(code_of([&] { vif_single(Image(1, 31, 40), Image(1, 31, 40)); }) == ErrorCode::kSize);
  }

  TEST_CASE("FMI drops under noise") {
    const Image a = nftest::scene(64, 64, 6);
    for (FmiFeature k : {FmiFeature::kDct, FmiFeature::kWavelet}) {
      const double clean = fmi(a, a, a, k);
      const double dirty = fmi(noisy(a, 0.1, 7), a, a, k);
      CHECK(dirty < clean);
    }
  }

  TEST_CASE("evaluate, aggregate and CSV") {
    const auto p = nftest::source_pair(48, 48, 8);
    const Image f = blurred(p.vis, 0.8);
    const MetricsReport r = evaluate_pair("x.png", f, p.ir, p.vis);
    CHECK(r.id == "x.png");
    CHECK(r.en == entropy(f));
    CHECK(r.sd == std_dev(f));
    CHECK(r.mi == fusion_mi(f, p.ir, p.vis));
    CHECK(r.ssim_a == ssim_a(f, p.ir, p.vis));
    CHECK(r.vif == vif(f, p.ir, p.vis));

    MetricsReport a, b;
    a.id = "a";
    b.id = "b";
    a.en = 1.0;
    b.en = 2.0;
    a.vif = 0.25;
    b.vif = 0.5;
    const MetricsReport both[] = {a, b};
    const MetricsReport m = aggregate(both);
    CHECK(m.id == "AVERAGE");
    CHECK(m.en == 1.5);
    CHECK(m.vif == 0.375);

    std::ostringstream os;
    write_metrics_csv(os, both);
    CHECK(os.str() ==
          "pair,En,SD,MI,FMI_dct,FMI_w,SSIM_a,VIF\n"
          "a,1.00000,0.00000,0.00000,0.00000,0.00000,0.00000,0.25000\n"
          "b,2.00000,0.00000,0.00000,0.00000,0.00000,0.00000,0.50000\n"
          "AVERAGE,1.50000,0.00000,0.00000,0.00000,0.00000,0.00000,0.37500\n");
    CHECK(format_metric(0.123456) == "0.12346");

    try {
      evaluate_pair("tiny.png", Image(1, 16, 16), Image(1, 16, 16), Image(1, 16, 16));
      FAIL("expected a size error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kSize);
      CHECK(std::string(e.what()).rfind("tiny.png", 0) == 0);
    }
  }
}
