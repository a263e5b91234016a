#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <vector>

#include "nestfuse/error.hpp"
#include "nestfuse/network.hpp"
#include "synth.hpp"

using namespace nestfuse;
using topology::LayerId;

namespace {

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

double probe(const FeatureMap& out, const FeatureMap& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += double(out.data()[i]) * r.data()[i];
  return s;
}

bool shape_is(const FeatureMap& f, int c, int h, int w) {
  return f.channels() == c && f.height() == h && f.width() == w;
}

}  // namespace

TEST_SUITE("network") {
  TEST_CASE("encode produces the four-scale channel plan") {
    const NetworkState s = nftest::random_state(1, false);
    for (int n : {16, 256}) {
      CAPTURE(n);
      const MultiScaleFeatures f = encode(nftest::scene(n, n, 2), s);
      const int ch[4] = {64, 112, 160, 208};
      for (int m = 0; m < 4; ++m) CHECK(shape_is(f.scales[m], ch[m], n >> m, n >> m));
      CHECK_NOTHROW(f.validate());
    }
  }

  TEST_CASE("every block width matches the plan during a forward pass") {
    const NetworkState s = nftest::random_state(3, true);
    ForwardTrace t;
    forward_train(nftest::scene(32, 48, 4), s, OutputMode::kDeepSupervision, t);
    CHECK(shape_is(t.stem, 16, 32, 48));
    CHECK(shape_is(t.x31, 160, 8, 12));
    CHECK(shape_is(t.x21, 112, 16, 24));
    CHECK(shape_is(t.x22, 112, 16, 24));
    CHECK(shape_is(t.x11, 64, 32, 48));
    CHECK(shape_is(t.x12, 64, 32, 48));
    CHECK(shape_is(t.x13, 64, 32, 48));
    for (const FeatureMap* mid : {&t.mid31, &t.mid21, &t.mid22, &t.mid11, &t.mid12, &t.mid13})
      CHECK(mid->channels() == 16);
    for (const FeatureMap& h : t.heads) CHECK(shape_is(h, 1, 32, 48));
    CHECK(s.layer(LayerId::kOutput).in_channels == 64);
    CHECK(s.layer(LayerId::kOutput).out_channels == 1);

    // Concatenation widths in the order DCB11, DCB21, DCB31, DCB12, DCB22, DCB13.
    const int widths[6] = {64 + 112, 112 + 160, 160 + 208, 64 + 64 + 112, 112 + 112 + 160, 64 * 3 + 112};
    const LayerId ids[6] = {LayerId::kDcb11a, LayerId::kDcb21a, LayerId::kDcb31a,
                            LayerId::kDcb12a, LayerId::kDcb22a, LayerId::kDcb13a};
    const int expected[6] = {176, 272, 368, 240, 384, 304};
    for (int i = 0; i < 6; ++i) {
      CHECK(widths[i] == expected[i]);
      CHECK(s.layer(ids[i]).in_channels == expected[i]);
    }
  }

  TEST_CASE("post-activation tensors are non-negative") {
    const NetworkState s = nftest::random_state(5, false);
    ForwardTrace t;
    forward_train(nftest::scene(32, 32, 6), s, OutputMode::kMain, t);
    for (const FeatureMap* f : {&t.stem, &t.x31, &t.x21, &t.x22, &t.x11, &t.x12, &t.x13, &t.output,
                                &t.features.scales[0], &t.features.scales[3]}) {
      CHECK(*std::min_element(f->data().begin(), f->data().end()) >= 0.0f);
    }
  }

  TEST_CASE("zero input with zero biases gives zero features and output") {
    const NetworkState s = init_network(7, false);
    const Image zero(1, 32, 32);
    const MultiScaleFeatures f = encode(zero, s);
    for (const FeatureMap& m : f.scales)
      CHECK(std::all_of(m.data().begin(), m.data().end(), [](float v) { return v == 0.0f; }));
    const Image out = decode(f, s);
    CHECK(std::all_of(out.data().begin(), out.data().end(), [](float v) { return v == 0.0f; }));
  }

  TEST_CASE("decode output lies in [0, 1] and repeats bit-identically") {
    const NetworkState s = nftest::random_state(8, false);
    const Image img = nftest::scene(48, 32, 9);
    const Image a = reconstruct(img, s);
    const Image b = reconstruct(img, s);
    CHECK(a == b);
    CHECK(*std::min_element(a.data().begin(), a.data().end()) >= 0.0f);
    CHECK(*std::max_element(a.data().begin(), a.data().end()) <= 1.0f);
  }

  TEST_CASE("init_network is seeded and validates") {
    const NetworkState a = init_network(11, true);
    const NetworkState b = init_network(11, true);
    const NetworkState c = init_network(12, true);
    CHECK(a == b);
    CHECK_FALSE(a == c);
    CHECK_NOTHROW(a.validate());
    CHECK(a.deep_supervision());
    for (const ConvParams& p : a.layers()) {
      CHECK(std::all_of(p.bias.begin(), p.bias.end(), [](float v) { return v == 0.0f; }));
      double ss = 0.0;
      for (float w : p.weight) ss += double(w) * w;
      const double var = ss / double(p.weight.size());
      CHECK(var == doctest::Approx(2.0 / double(p.fan_in())).epsilon(0.35));
    }
    CHECK_FALSE(init_network(11, false).deep_supervision());
  }

  TEST_CASE("permuting a concatenation changes the output") {
    const NetworkState s = nftest::random_state(13, false);
    const Image img = nftest::scene(32, 32, 14);
    const Image ref = reconstruct(img, s);

    // Swapping the two input blocks of DCB11's first kernel is the same as
    // feeding [up(phi2), phi1] instead of [phi1, up(phi2)] with the original weights.
    NetworkState p = s;
    ConvParams& c = p.layer(LayerId::kDcb11a);
    const ConvParams& o = s.layer(LayerId::kDcb11a);
    const int k2 = 9;
    for (int out = 0; out < c.out_channels; ++out)
      for (int in = 0; in < c.in_channels; ++in) {
        const int src = in < 112 ? in + 64 : in - 112;
        std::copy_n(o.weight.begin() + (std::size_t(out) * o.in_channels + src) * k2, k2,
                    c.weight.begin() + (std::size_t(out) * c.in_channels + in) * k2);
      }
    CHECK(max_abs_diff(reconstruct(img, p), ref) > 1e-4f);
  }

  TEST_CASE("deep-supervision heads") {
    const NetworkState s = nftest::random_state(15, true);
    const Image img = nftest::scene(32, 32, 16);
    const auto outs = decode_deep_supervised(encode(img, s), s);
    for (const Image& o : outs) CHECK(shape_is(o, 1, 32, 32));

    // Heads attach to X11, X12 and X13.
    ForwardTrace t;
    forward_train(img, s, OutputMode::kDeepSupervision, t);
    const FeatureMap* taps[3] = {&t.x11, &t.x12, &t.x13};
    const LayerId heads[3] = {LayerId::kHead1, LayerId::kHead2, LayerId::kHead3};
    for (int q = 0; q < 3; ++q) {
      FeatureMap want;
      const FeatureMap* in[] = {taps[q]};
      conv_forward(s.layer(heads[q]), in, want, Activation::kRelu);
      for (float& v : want.data()) v = std::min(v, 1.0f);
      CHECK(outs[q] == want);
    }

    // Equal head weights on equal inputs give equal outputs.
    NetworkState same = s;
    same.layer(LayerId::kHead2).weight = s.layer(LayerId::kHead1).weight;
    same.layer(LayerId::kHead2).bias = s.layer(LayerId::kHead1).bias;
    FeatureMap o1, o2;
    const FeatureMap* in[] = {&t.x11};
    conv_forward(same.layer(LayerId::kHead1), in, o1, Activation::kRelu);
    conv_forward(same.layer(LayerId::kHead2), in, o2, Activation::kRelu);
    CHECK(o1 == o2);

    const NetworkState plain = nftest::random_state(15, false);
    CHECK(code_of([&] { decode_deep_supervised(encode(img, plain), plain); }) == ErrorCode::kConfiguration);
  }

  TEST_CASE("size and topology errors") {
    const NetworkState s = init_network(17, false);
    CHECK(code_of([&] { encode(Image(1, 24, 32), s); }) == ErrorCode::kSize);
    CHECK(code_of([&] { encode(Image(1, 32, 8), s); }) == ErrorCode::kSize);
    NetworkState bad = s;
    bad.layer(LayerId::kDcb21a).weight.pop_back();
    CHECK(code_of([&] { bad.validate(); }) == ErrorCode::kTopology);
    MultiScaleFeatures f = encode(Image(1, 16, 16), s);
    f.scales[2] = FeatureMap(150, 4, 4);
    CHECK(code_of([&] { decode(f, s); }) == ErrorCode::kTopology);
  }

  TEST_CASE("backward_train matches finite differences") {
    // Float central differences through ~20 ReLU layers straddle kinks, so
    // single entries scatter by a few percent. Each probe takes the closest of
    // several steps and the bound applies to the probed vector as a whole;
    // conv_backward itself is checked tightly in the layers suite.
    for (bool ds : {false, true}) {
      CAPTURE(ds);
      NetworkState s = nftest::random_state(19, ds);
      for (LayerId id : {LayerId::kOutput, LayerId::kHead1, LayerId::kHead2, LayerId::kHead3}) {
        if (ds || id == LayerId::kOutput) s.layer(id).bias[0] = 0.3f;  // keep the outputs alive
      }
      const Image img = nftest::scene(16, 16, 20);
      const OutputMode mode = ds ? OutputMode::kDeepSupervision : OutputMode::kMain;
      std::vector<FeatureMap> r;
      for (int q = 0; q < (ds ? 3 : 1); ++q) r.push_back(nftest::random_map(1, 16, 16, 21 + q, -1, 1));

      auto objective = [&](const NetworkState& st) {
        ForwardTrace t;
        forward_train(img, st, mode, t);
        if (!ds) return probe(t.output, r[0]);
        double v = 0.0;
        for (int q = 0; q < 3; ++q) v += probe(t.heads[q], r[q]);
        return v;
      };
      auto closest_fd = [&](auto&& slot, double analytic) {
        double best = std::numeric_limits<double>::infinity(), fd_best = 0.0;
        for (float h : {4e-3f, 1e-3f, 2.5e-4f}) {
          NetworkState plus = s, minus = s;
          slot(plus) += h;
          slot(minus) -= h;
          const double fd = (objective(plus) - objective(minus)) / (double(slot(plus)) - slot(minus));
          if (std::abs(fd - analytic) < best) {
            best = std::abs(fd - analytic);
            fd_best = fd;
          }
        }
        return fd_best;
      };

      ForwardTrace t;
      forward_train(img, s, mode, t);
      NetworkState g = NetworkState::zeros(ds);
      backward_train(t, s, mode, r, g);

      std::vector<LayerId> probes = {LayerId::kStem,    LayerId::kEcb20b, LayerId::kEcb40a, LayerId::kDcb31b,
                                     LayerId::kDcb22a,  LayerId::kDcb11b, LayerId::kDcb13a};
      if (ds) {
        probes.insert(probes.end(), {LayerId::kHead1, LayerId::kHead2, LayerId::kHead3});
      } else {
        probes.push_back(LayerId::kOutput);
      }
      std::vector<double> an_all, fd_all;
      for (LayerId id : probes) {
        const ConvParams& p = s.layer(id);
        for (int k = 0; k < 3; ++k) {
          const std::size_t i = (std::size_t(k) * 7919u + 13u) % p.weight.size();
          const double an = g.layer(id).weight[i];
          an_all.push_back(an);
          fd_all.push_back(closest_fd([&](NetworkState& st) -> float& { return st.layer(id).weight[i]; }, an));
        }
        for (int c = 0; c < std::min(3, p.out_channels); ++c) {
          const double an = g.layer(id).bias[c];
          an_all.push_back(an);
          fd_all.push_back(closest_fd([&](NetworkState& st) -> float& { return st.layer(id).bias[c]; }, an));
        }
      }
      double num = 0.0, den = 0.0;
      int nonzero = 0;
      for (std::size_t i = 0; i < an_all.size(); ++i) {
        num += (an_all[i] - fd_all[i]) * (an_all[i] - fd_all[i]);
        den += fd_all[i] * fd_all[i];
        nonzero += an_all[i] != 0.0;
      }
      const double rel = std::sqrt(num / den);
      MESSAGE("probed gradient relative error " << rel);
      CHECK(rel <= 0.03);
      CHECK(nonzero > int(an_all.size()) / 2);
    }
  }

  TEST_CASE("forward pass at 256x256 runs in under a second") {
    const NetworkState s = nftest::random_state(23, false);
    const Image img = nftest::scene(256, 256, 24);
    reconstruct(img, s);
    const auto t0 = std::chrono::steady_clock::now();
    const Image out = reconstruct(img, s);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    MESSAGE("256x256 forward: " << secs << " s");
    CHECK(out.all_finite());
    CHECK(secs < 1.0);
  }
}
