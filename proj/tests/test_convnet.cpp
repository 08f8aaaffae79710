#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "armaid/convnet.hpp"
#include "armaid/error.hpp"
#include "doctest.h"

using namespace armaid;

namespace {

Tensor random_tensor(int b, int c, int l, Rng& rng) {
  Tensor t(b, c, l);
  for (double& v : t.data) v = rng.normal();
  return t;
}

std::vector<double> random_vector(std::size_t n, Rng& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

double dot(const Tensor& a, const Tensor& b) {
  return std::inner_product(a.data.begin(), a.data.end(), b.data.begin(), 0.0);
}

// The test losses are O(10), so finite differences carry ~1e-9 rounding noise;
// the floor keeps exactly-zero gradients (conv bias feeding batch norm) honest.
double rel_err(double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-3}); }

// Central finite difference of f with respect to v[i].
double fd(const std::function<double()>& f, double& v, double h = 1e-6) {
  const double saved = v;
  v = saved + h;
  const double fp = f();
  v = saved - h;
  const double fm = f();
  v = saved;
  return (fp - fm) / (2.0 * h);
}

// Direct summation oracle for same-length cross-correlation.
Tensor conv_oracle(const Tensor& x, const std::vector<double>& w, const std::vector<double>& b, int out, int kw) {
  const int pad = (kw - 1) / 2;
  Tensor y(x.batch, out, x.length);
  for (int n = 0; n < x.batch; ++n)
    for (int o = 0; o < out; ++o)
      for (int t = 0; t < x.length; ++t) {
        double s = b[o];
        for (int i = 0; i < x.channels; ++i)
          for (int j = 0; j < kw; ++j) {
            const int src = t + j - pad;
            if (src >= 0 && src < x.length) s += w[(o * x.channels + i) * kw + j] * x.at(n, i, src);
          }
        y.at(n, o, t) = s;
      }
  return y;
}

NetworkConfig small_config(Variant v, int classes = 10, int length = 64) {
  NetworkConfig c;
  c.variant = v;
  c.depth = 8;
  c.filter_width = 7;
  c.features = 8;
  c.num_classes = classes;
  c.input_length = length;
  return c;
}

constexpr Variant kVariants[] = {Variant::Plain, Variant::Original, Variant::ReluBeforeAddition,
                                 Variant::FullPreActivation};

}  // namespace

TEST_CASE("param_count reproduces reference architecture sizes") {
  auto cfg = [](Variant v, int d, int kw, int f) {
    NetworkConfig c;
    c.variant = v;
    c.depth = d;
    c.filter_width = kw;
    c.features = f;
    return c;
  };
  CHECK(param_count(cfg(Variant::ReluBeforeAddition, 8, 7, 8)) == 3502);
  CHECK(param_count(cfg(Variant::ReluBeforeAddition, 24, 15, 68)) == 1541862);
  CHECK(param_count(cfg(Variant::ReluBeforeAddition, 16, 15, 68)) == 985350);
  CHECK(param_count(cfg(Variant::Original, 8, 15, 68)) == 428838);
  CHECK(param_count(cfg(Variant::FullPreActivation, 20, 15, 44)) == 532518);
  CHECK(param_count(cfg(Variant::ReluBeforeAddition, 24, 15, 44)) == 649206);
  CHECK(param_count(cfg(Variant::Original, 12, 15, 56)) == 481518);
  CHECK(param_count(cfg(Variant::FullPreActivation, 20, 15, 68)) == 1263606);
}

TEST_CASE("param_count equals allocated parameters over the whole grid") {
  for (Variant v : kVariants)
    for (int d = 8; d <= 24; d += 4)
      for (int kw : {7, 11, 15})
        for (int f = 8; f <= 68; f += 12) {
          NetworkConfig c;
          c.variant = v;
          c.depth = d;
          c.filter_width = kw;
          c.features = f;
          const Graph g = network_graph(c);
          REQUIRE(static_cast<std::int64_t>(g.param_size) == param_count(c));
          REQUIRE(static_cast<std::int64_t>(NetworkParams(g).values.size()) == param_count(c));
        }
}

TEST_CASE("NetworkConfig validation") {
  NetworkConfig c;
  c.depth = 7;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c.depth = 8;
  c.filter_width = 6;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c.filter_width = 7;
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("conv1d forward") {
  Tensor x(1, 1, 3);
  x.data = {1, 2, 3};
  const std::vector<double> w{1, 0, -1};
  const std::vector<double> b{0};
  const Tensor y = conv1d_forward(x, w, b, 1, 3);
  CHECK(y.data == std::vector<double>{-2, -2, 2});

  Rng rng(1);
  const Tensor z = random_tensor(2, 3, 20, rng);
  std::vector<double> delta(3 * 3 * 5, 0.0);
  for (int c = 0; c < 3; ++c) delta[(c * 3 + c) * 5 + 2] = 1.0;
  CHECK(conv1d_forward(z, delta, std::vector<double>(3, 0.0), 3, 5).data == z.data);

  for (int trial = 0; trial < 10; ++trial) {
    const int in = 1 + trial % 3;
    const int out = 1 + trial % 4;
    const int kw = 2 * (trial % 4) + 1;
    const Tensor xx = random_tensor(2, in, 11, rng);
    const auto ww = random_vector(static_cast<std::size_t>(out) * in * kw, rng);
    const auto bb = random_vector(out, rng);
    const Tensor got = conv1d_forward(xx, ww, bb, out, kw);
    const Tensor want = conv_oracle(xx, ww, bb, out, kw);
    for (std::size_t i = 0; i < got.data.size(); ++i) REQUIRE(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-13));
  }

  CHECK_THROWS_AS(conv1d_forward(x, std::vector<double>(6, 0.0), b, 1, 3), InvalidArgument);
}

TEST_CASE("conv1d backward matches finite differences") {
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    const int in = 2 + trial % 2;
    const int out = 3;
    const int kw = trial % 2 == 0 ? 3 : 5;
    Tensor x = random_tensor(2, in, 9, rng);
    auto w = random_vector(static_cast<std::size_t>(out) * in * kw, rng);
    auto b = random_vector(out, rng);
    const Tensor r = random_tensor(2, out, 9, rng);
    auto loss = [&] { return dot(conv1d_forward(x, w, b, out, kw), r); };
    std::vector<double> dw(w.size(), 0.0);
    std::vector<double> db(b.size(), 0.0);
    const Tensor dx = conv1d_backward(x, w, r, kw, dw, db);
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(rel_err(dw[i], fd(loss, w[i])) < 1e-5);
    for (std::size_t i = 0; i < b.size(); ++i) CHECK(rel_err(db[i], fd(loss, b[i])) < 1e-5);
    for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(rel_err(dx.data[i], fd(loss, x.data[i])) < 1e-5);
  }
}

TEST_CASE("batch_norm") {
  Rng rng(3);
  Tensor x = random_tensor(4, 3, 16, rng);
  for (double& v : x.data) v = 5.0 + 3.0 * v;
  const std::vector<double> ones(3, 1.0);
  const std::vector<double> zeros(3, 0.0);

  SUBCASE("training mode normalises each channel") {
    BatchNormStats st;
    const Tensor y = batch_norm_forward_train(x, ones, zeros, st);
    for (int c = 0; c < 3; ++c) {
      double m = 0.0;
      double v = 0.0;
      for (int b = 0; b < 4; ++b)
        for (int t = 0; t < 16; ++t) m += y.at(b, c, t);
      m /= 64.0;
      for (int b = 0; b < 4; ++b)
        for (int t = 0; t < 16; ++t) v += (y.at(b, c, t) - m) * (y.at(b, c, t) - m);
      v /= 64.0;
      CHECK(std::abs(m) < 1e-6);
      CHECK(std::abs(v - 1.0) < 1e-4);
    }
  }

  SUBCASE("inference with neutral running stats is identity up to eps") {
    const std::vector<double> var1(3, 1.0);
    const Tensor y = batch_norm_forward_infer(x, ones, zeros, zeros, var1);
    for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(y.data[i] == doctest::Approx(x.data[i] / std::sqrt(1.0 + 1e-5)));
  }

  SUBCASE("running statistics move with momentum 0.1") {
    BatchNormStats st;
    batch_norm_forward_train(x, ones, zeros, st);
    std::vector<double> rm(3, 0.0);
    std::vector<double> rv(3, 1.0);
    update_running_stats(st, rm, rv);
    for (int c = 0; c < 3; ++c) {
      CHECK(rm[c] == doctest::Approx(0.1 * st.mean[c]));
      CHECK(rv[c] == doctest::Approx(0.9 + 0.1 * st.unbiased_var[c]));
    }
  }

  SUBCASE("batch of one is rejected in training mode") {
    BatchNormStats st;
    CHECK_THROWS_AS(batch_norm_forward_train(random_tensor(1, 3, 8, rng), ones, zeros, st), InvalidArgument);
  }

  SUBCASE("backward matches finite differences") {
    Tensor xs = random_tensor(3, 2, 7, rng);
    auto gamma = random_vector(2, rng);
    auto beta = random_vector(2, rng);
    const Tensor r = random_tensor(3, 2, 7, rng);
    auto loss = [&] {
      BatchNormStats s;
      return dot(batch_norm_forward_train(xs, gamma, beta, s), r);
    };
    BatchNormStats s;
    batch_norm_forward_train(xs, gamma, beta, s);
    std::vector<double> dg(2, 0.0);
    std::vector<double> dbeta(2, 0.0);
    const Tensor dx = batch_norm_backward(xs, gamma, s, r, dg, dbeta);
    for (int c = 0; c < 2; ++c) {
      CHECK(rel_err(dg[c], fd(loss, gamma[c])) < 1e-5);
      CHECK(rel_err(dbeta[c], fd(loss, beta[c])) < 1e-5);
    }
    for (std::size_t i = 0; i < xs.data.size(); ++i) CHECK(rel_err(dx.data[i], fd(loss, xs.data[i])) < 1e-5);
  }
}

TEST_CASE("relu") {
  Tensor x(1, 1, 3);
  x.data = {-1, 0, 2};
  CHECK(relu_forward(x).data == std::vector<double>{0, 0, 2});
  Tensor ones(1, 1, 3, 1.0);
  CHECK(relu_backward(x, ones).data == std::vector<double>{0, 0, 1});

  Tensor neg(1, 2, 4, -3.0);
  const Tensor zeroed = relu_forward(neg);
  CHECK(std::all_of(zeroed.data.begin(), zeroed.data.end(), [](double v) { return v == 0.0; }));
  const Tensor g = relu_backward(neg, Tensor(1, 2, 4, 1.0));
  CHECK(std::all_of(g.data.begin(), g.data.end(), [](double v) { return v == 0.0; }));

  Rng rng(4);
  Tensor xs = random_tensor(2, 2, 10, rng);
  for (double& v : xs.data)
    if (std::abs(v) < 1e-3) v = 0.5;
  const Tensor r = random_tensor(2, 2, 10, rng);
  auto loss = [&] { return dot(relu_forward(xs), r); };
  const Tensor dx = relu_backward(xs, r);
  for (std::size_t i = 0; i < xs.data.size(); ++i) CHECK(rel_err(dx.data[i], fd(loss, xs.data[i])) < 1e-6);
}

TEST_CASE("residual blocks") {
  Rng rng(5);
  const int f = 4;
  const Tensor x = random_tensor(3, f, 12, rng);

  for (Variant v : {Variant::FullPreActivation, Variant::ReluBeforeAddition}) {
    const Graph g = residual_block_graph(v, f, 5);
    NetworkParams zero(g);  // zero conv weights, neutral batch-norm affine
    ForwardCache cache;
    const Tensor y = graph_forward(g, zero, x, Mode::Train, &cache, false);
    CHECK(y.data == x.data);
  }

  const Graph bad = residual_block_graph(Variant::Original, f, 5);
  NetworkParams p(bad);
  CHECK_THROWS_AS(graph_forward(bad, p, random_tensor(2, f + 1, 12, rng), Mode::Train), InvalidArgument);

  for (Variant v : kVariants) {
    CAPTURE(to_string(v));
    const Graph g = residual_block_graph(v, f, 5);
    NetworkParams params(g);
    init_he(g, params, rng);
    for (const auto& l : g.layers) {
      for (int c = 0; c < l.bn_channels; ++c) {
        params.values[l.gamma + c] = 1.0 + 0.2 * rng.normal();
        params.values[l.beta + c] = 0.2 * rng.normal();
      }
    }
    Tensor xs = random_tensor(3, f, 12, rng);
    const Tensor r = random_tensor(3, f, 12, rng);
    auto loss = [&] { return dot(graph_forward(g, params, xs, Mode::Train, nullptr, false), r); };
    ForwardCache cache;
    graph_forward(g, params, xs, Mode::Train, &cache, false);
    const std::uint64_t base = relu_pattern_hash(g, cache);
    std::vector<double> grads(g.param_size);
    Tensor dx;
    graph_backward(g, params, cache, r, grads, {}, &dx);

    auto kink_free = [&](double& v) {
      const double saved = v;
      bool ok = true;
      for (double h : {1e-6, -1e-6}) {
        v = saved + h;
        ForwardCache c;
        graph_forward(g, params, xs, Mode::Train, &c, false);
        ok = ok && relu_pattern_hash(g, c) == base;
      }
      v = saved;
      return ok;
    };
    double worst = 0.0;
    for (std::size_t i = 0; i < params.values.size(); i += 3) {
      if (!kink_free(params.values[i])) continue;
      worst = std::max(worst, rel_err(grads[i], fd(loss, params.values[i])));
    }
    for (std::size_t i = 0; i < xs.data.size(); i += 5) {
      if (!kink_free(xs.data[i])) continue;
      worst = std::max(worst, rel_err(dx.data[i], fd(loss, xs.data[i])));
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("softmax_cross_entropy") {
  Tensor uniform(3, 10, 1, 0.7);
  const std::vector<int> labels{0, 4, 9};
  const LossResult r = softmax_cross_entropy(uniform, labels);
  CHECK(r.loss == doctest::Approx(std::log(10.0)).epsilon(1e-14));

  Tensor confident(1, 10, 1, 0.0);
  confident.at(0, 3, 0) = 30.0;
  CHECK(softmax_cross_entropy(confident, std::vector<int>{3}).loss < 1e-12);

  Rng rng(6);
  Tensor logits = random_tensor(5, 10, 1, rng);
  const std::vector<int> ys{1, 2, 3, 4, 5};
  const LossResult lr = softmax_cross_entropy(logits, ys);
  for (int b = 0; b < 5; ++b) {
    double s = 0.0;
    for (int c = 0; c < 10; ++c) s += lr.dlogits.at(b, c, 0);
    CHECK(std::abs(s) < 1e-12);
  }
  CHECK_THROWS_AS(softmax_cross_entropy(logits, std::vector<int>{1, 2, 3, 4, 10}), InvalidArgument);
}

TEST_CASE("network forward") {
  Rng rng(7);
  for (Variant v : kVariants) {
    Network net = Network::he_initialized(small_config(v), rng);
    Tensor x = random_tensor(4, 1, 64, rng);
    std::copy(x.row(0, 0), x.row(0, 0) + 64, x.row(2, 0));  // duplicate series 0 into slot 2
    const Tensor logits = net.forward(x, Mode::Train);
    for (int b = 0; b < 4; ++b) {
      const auto p = softmax_row(logits, b);
      CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) < 1e-12);
      for (int c = 0; c < 10; ++c) CHECK(std::isfinite(logits.at(b, c, 0)));
    }
    const Tensor inf = net.infer(x);
    for (int c = 0; c < 10; ++c) CHECK(inf.at(0, c, 0) == inf.at(2, c, 0));

    // Inference does not depend on the rest of the batch.
    Tensor single(1, 1, 64);
    std::copy(x.row(1, 0), x.row(1, 0) + 64, single.row(0, 0));
    const Tensor alone = net.infer(single);
    for (int c = 0; c < 10; ++c) CHECK(alone.at(0, c, 0) == inf.at(1, c, 0));
    CHECK(net.infer(x).data == inf.data);

    CHECK_THROWS_AS(net.infer(random_tensor(2, 1, 63, rng)), InvalidArgument);
    CHECK_THROWS_AS(net.forward(random_tensor(1, 1, 64, rng), Mode::Train), InvalidArgument);
  }

  NetworkConfig c = small_config(Variant::Original);
  NetworkParams wrong(network_graph(small_config(Variant::Original, 3)));
  CHECK_THROWS_AS(Network(c, wrong), InvalidArgument);
}

TEST_CASE("network backward") {
  Rng rng(8);
  Network net = Network::he_initialized(small_config(Variant::ReluBeforeAddition), rng);
  const Tensor x = random_tensor(4, 1, 64, rng);
  ForwardCache cache;
  const Tensor logits = net.forward(x, Mode::Train, &cache);
  std::vector<double> grads(net.params().values.size(), 1.0);
  net.backward(cache, Tensor(4, 10, 1, 0.0), grads);
  CHECK(std::all_of(grads.begin(), grads.end(), [](double g) { return g == 0.0; }));

  ForwardCache infer_cache;
  net.forward(x, Mode::Infer, &infer_cache);
  CHECK_THROWS_AS(net.backward(infer_cache, Tensor(4, 10, 1, 0.0), grads), InvalidArgument);
  CHECK_THROWS_AS(net.backward(cache, Tensor(3, 10, 1, 0.0), grads), InvalidArgument);
}

TEST_CASE("grad_check") {
  for (Variant v : kVariants) {
    CAPTURE(to_string(v));
    for (std::uint64_t seed : {1u, 2u}) {
      Rng rng(seed);
      const GradCheckResult r = grad_check(small_config(v), rng);
      CHECK(r.coordinates_checked >= 200);
      CHECK(r.max_rel_error < 1e-5);
    }
  }
  Rng rng(3);
  GradCheckOptions corrupt;
  corrupt.corrupt_conv_weight_grad = true;
  CHECK(grad_check(small_config(Variant::ReluBeforeAddition), rng, corrupt).max_rel_error > 1e-1);
}
