#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "pgds/common.hpp"
#include "pgds/losses.hpp"
#include "pgds/rng.hpp"
#include "pgds/simplex.hpp"

using namespace pgds;

namespace {

Tensor embed1d(const std::vector<double>& v) {
  Tensor t({v.size(), 1});
  for (std::size_t i = 0; i < v.size(); ++i) t[i] = v[i];
  return t;
}

// Independent formulation: enumerate every (anchor, positive, negative)
// triple and take the per-anchor worst hinge.
double triplet_oracle(const Tensor& emb, const std::vector<int>& labels, double alpha) {
  const int n = static_cast<int>(emb.dim(0));
  const int d = static_cast<int>(emb.dim(1));
  auto dist = [&](int i, int j) {
    double acc = 0.0;
    for (int k = 0; k < d; ++k) {
      const double diff = emb[static_cast<std::size_t>(i) * d + k] -
                          emb[static_cast<std::size_t>(j) * d + k];
      acc += diff * diff;
    }
    return acc;
  };
  double total = 0.0;
  for (int a = 0; a < n; ++a) {
    double worst = -1e300;
    bool any = false;
    for (int p = 0; p < n; ++p) {
      if (p == a || labels[static_cast<std::size_t>(p)] != labels[static_cast<std::size_t>(a)])
        continue;
      for (int g = 0; g < n; ++g) {
        if (labels[static_cast<std::size_t>(g)] == labels[static_cast<std::size_t>(a)]) continue;
        worst = std::max(worst, std::max(0.0, dist(a, p) - dist(a, g) + alpha));
        any = true;
      }
    }
    REQUIRE(any);
    total += worst;
  }
  return total / n;
}

Tensor random_probs(Rng& r, std::size_t n, std::size_t d) {
  Tensor logits({n, d});
  for (std::size_t i = 0; i < logits.size(); ++i) logits[i] = r.uniform(-3.0, 3.0);
  Tensor probs, q;
  softmax_rows(logits, 2.0, probs, q);
  return probs;
}

// Brute-force double-loop pairwise oracle with separate class averaging.
double guide_oracle(const Tensor& pose_probs, const std::vector<const Tensor*>& layers,
                    const std::vector<int>& labels, double margin) {
  const std::size_t n = pose_probs.dim(0), d = pose_probs.dim(1);
  double layer_sum = 0.0;
  for (const Tensor* layer : layers) {
    double pos = 0.0, neg = 0.0;
    int npos = 0, nneg = 0;
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) {
        if (j == k) continue;
        std::vector<double> p(d), q(d);
        for (std::size_t c = 0; c < d; ++c) {
          p[c] = pose_probs[j * d + c];
          q[c] = (*layer)[k * d + c];
        }
        const int y = labels[j] == labels[k] ? 1 : 0;
        const double l = guide_pair_loss(p, q, y, margin);
        if (y) {
          pos += l;
          ++npos;
        } else {
          neg += l;
          ++nneg;
        }
      }
    double cell = 0.0;
    if (npos) cell += pos / npos;
    if (nneg) cell += neg / nneg;
    layer_sum += cell;
  }
  return layer_sum / static_cast<double>(layers.size());
}

}  // namespace

TEST_CASE("triplet hand example: one-dimensional two-identity batch") {
  const Tensor emb = embed1d({0.0, 2.0, 1.0, 3.0});
  const std::vector<int> labels = {0, 0, 1, 1};
  CHECK(triplet_batch_hard(emb, labels, 0.2) == doctest::Approx(3.2).epsilon(1e-12));
}

TEST_CASE("triplet on an all-identical batch equals the margin") {
  Tensor emb({6, 4});
  emb.fill(0.37);
  const std::vector<int> labels = {0, 0, 0, 1, 1, 1};
  CHECK(triplet_batch_hard(emb, labels, 0.2) == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("triplet vanishes for well-separated tight clusters") {
  const Tensor emb = embed1d({0.0, 0.1, 10.0, 10.1});
  const std::vector<int> labels = {0, 0, 1, 1};
  CHECK(triplet_batch_hard(emb, labels, 0.2) == 0.0);
}

TEST_CASE("triplet equals the exhaustive triple-enumeration oracle") {
  Rng r(211);
  for (int trial = 0; trial < 300; ++trial) {
    const int ids = 2 + static_cast<int>(r.uniform_index(3));
    const int per = 2 + static_cast<int>(r.uniform_index(2));
    const int n = ids * per;
    const int d = 1 + static_cast<int>(r.uniform_index(6));
    Tensor emb({static_cast<std::size_t>(n), static_cast<std::size_t>(d)});
    for (std::size_t i = 0; i < emb.size(); ++i) emb[i] = r.uniform(-2.0, 2.0);
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = i / per;
    const double got = triplet_batch_hard(emb, labels, 0.2);
    const double want = triplet_oracle(emb, labels, 0.2);
    CHECK(got == doctest::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("triplet gradient matches central differences") {
  Rng r(223);
  for (int trial = 0; trial < 5; ++trial) {
    const int n = 8, d = 3;
    Tensor emb({n, d});
    for (std::size_t i = 0; i < emb.size(); ++i) emb[i] = r.uniform(-1.0, 1.0);
    const std::vector<int> labels = {0, 0, 0, 0, 1, 1, 1, 1};
    Tensor grad({n, d});
    (void)triplet_batch_hard(emb, labels, 0.2, &grad, 1.0);
    const double h = 1e-7;
    for (std::size_t i = 0; i < emb.size(); ++i) {
      Tensor ep = emb, em = emb;
      ep[i] += h;
      em[i] -= h;
      const double fd =
          (triplet_batch_hard(ep, labels, 0.2) - triplet_batch_hard(em, labels, 0.2)) / (2.0 * h);
      CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-4).scale(1e-3));
    }
  }
}

TEST_CASE("triplet gradient scale factor multiplies through") {
  Rng r(227);
  Tensor emb({4, 2});
  for (std::size_t i = 0; i < emb.size(); ++i) emb[i] = r.uniform(-1.0, 1.0);
  const std::vector<int> labels = {0, 0, 1, 1};
  Tensor g1({4, 2}), g2({4, 2});
  (void)triplet_batch_hard(emb, labels, 0.2, &g1, 1.0);
  (void)triplet_batch_hard(emb, labels, 0.2, &g2, 2.5);
  for (std::size_t i = 0; i < g1.size(); ++i)
    CHECK(g2[i] == doctest::Approx(2.5 * g1[i]).epsilon(1e-12));
}

TEST_CASE("triplet rejects degenerate batches") {
  const Tensor emb = embed1d({0.0, 1.0, 2.0});
  CHECK_THROWS_AS(triplet_batch_hard(emb, {0, 1, 2}, 0.2), DomainError);   // no positives
  CHECK_THROWS_AS(triplet_batch_hard(emb, {0, 0, 0}, 0.2), DomainError);   // no negatives
  CHECK_THROWS_AS(triplet_batch_hard(emb, {0, 0}, 0.2), DomainError);      // label size
  CHECK_THROWS_AS(triplet_batch_hard(emb, {0, 0, 1}, 0.0), DomainError);   // margin
  CHECK_THROWS_AS(triplet_batch_hard(embed1d({1.0}), {0}, 0.2), DomainError);
}

TEST_CASE("l2 row normalization produces unit rows and exact gradients") {
  Rng r(229);
  Tensor x({5, 4});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = r.uniform(-2.0, 2.0);
  Tensor out;
  l2_normalize_rows(x, out);
  for (int i = 0; i < 5; ++i) {
    double sq = 0.0;
    for (int k = 0; k < 4; ++k) {
      const double v = out[static_cast<std::size_t>(i) * 4 + k];
      sq += v * v;
    }
    CHECK(std::sqrt(sq) == doctest::Approx(1.0).epsilon(1e-12));
  }
  // zero rows stay finite
  Tensor z({1, 3});
  Tensor zn;
  l2_normalize_rows(z, zn);
  for (std::size_t i = 0; i < zn.size(); ++i) CHECK(zn[i] == 0.0);

  const Tensor cvec = [&] {
    Tensor c({5, 4});
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = r.uniform(-1.0, 1.0);
    return c;
  }();
  Tensor dx(x.shape());
  l2_normalize_rows_backward(x, cvec, dx);
  auto loss = [&](const Tensor& v) {
    Tensor n;
    l2_normalize_rows(v, n);
    double acc = 0.0;
    for (std::size_t i = 0; i < n.size(); ++i) acc += cvec[i] * n[i];
    return acc;
  };
  const double h = 1e-6;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Tensor xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fd = (loss(xp) - loss(xm)) / (2.0 * h);
    CHECK(dx[i] == doctest::Approx(fd).epsilon(1e-5).scale(1e-3));
  }
}

TEST_CASE("guide pair loss analytic values") {
  const std::vector<double> p = {0.5, 0.5};
  const std::vector<double> q = {0.25, 0.75};
  // y=0 on identical vectors: both KLs are zero, both hinges sit at the margin
  CHECK(guide_pair_loss(p, p, 0, 2.0) == doctest::Approx(4.0).epsilon(1e-13));
  // y=1 on identical vectors: zero
  CHECK(guide_pair_loss(p, p, 1, 2.0) == 0.0);
  // y=1: symmetric KL sum
  const double want = kl_divergence(p, q) + kl_divergence(q, p);
  CHECK(guide_pair_loss(p, q, 1, 2.0) == doctest::Approx(want).epsilon(1e-13));
  // y=0: hinge(m - KL) per direction
  const double want0 = std::max(0.0, 2.0 - kl_divergence(p, q)) +
                       std::max(0.0, 2.0 - kl_divergence(q, p));
  CHECK(guide_pair_loss(p, q, 0, 2.0) == doctest::Approx(want0).epsilon(1e-13));
}

TEST_CASE("guide pair loss drops to zero once negatives are pushed past the margin") {
  // extremely different clamped distributions: KL far above m in both ways
  std::vector<double> a = {1.0 - 3e-8, 1e-8, 1e-8, 1e-8};
  std::vector<double> b = {1e-8, 1e-8, 1e-8, 1.0 - 3e-8};
  CHECK(kl_divergence(a, b) > 2.0);
  CHECK(guide_pair_loss(a, b, 0, 2.0) == 0.0);
  CHECK(guide_pair_loss(a, b, 1, 2.0) > 2.0);
}

TEST_CASE("guide pair loss rejects malformed input") {
  const std::vector<double> p = {0.5, 0.5};
  CHECK_THROWS_AS(guide_pair_loss(p, std::vector<double>{1.0}, 1, 2.0), DomainError);
  CHECK_THROWS_AS(guide_pair_loss(p, p, 2, 2.0), DomainError);
  CHECK_THROWS_AS(guide_pair_loss(p, p, -1, 2.0), DomainError);
  CHECK_THROWS_AS(guide_pair_loss(p, p, 0, 0.0), DomainError);
}

TEST_CASE("guide batch loss equals the brute-force pairwise oracle") {
  Rng r(233);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 4 + r.uniform_index(5);
    const std::size_t d = 3 + r.uniform_index(4);
    const std::size_t n_layers = 1 + r.uniform_index(3);
    const Tensor pose = random_probs(r, n, d);
    std::vector<Tensor> layer_store;
    for (std::size_t l = 0; l < n_layers; ++l) layer_store.push_back(random_probs(r, n, d));
    std::vector<const Tensor*> layers;
    for (auto& t : layer_store) layers.push_back(&t);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % 2 + r.uniform_index(2));
    // ensure at least two identities
    labels[0] = 0;
    labels[1] = 1;
    const GuideBatchResult got = guide_loss_batch(pose, layers, labels, 2.0);
    const double want = guide_oracle(pose, layers, labels, 2.0);
    CHECK(got.total == doctest::Approx(want).epsilon(1e-12));
    CHECK(got.per_layer.size() == n_layers);
    double mean = 0.0;
    for (double v : got.per_layer) mean += v;
    mean /= static_cast<double>(n_layers);
    CHECK(got.total == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("guide batch loss needs two identities and aligned shapes") {
  Rng r(239);
  const Tensor pose = random_probs(r, 4, 3);
  Tensor layer = random_probs(r, 4, 3);
  std::vector<const Tensor*> layers = {&layer};
  CHECK_THROWS_AS(guide_loss_batch(pose, layers, {0, 0, 0, 0}, 2.0), DomainError);
  CHECK_THROWS_AS(guide_loss_batch(pose, layers, {0, 1}, 2.0), DomainError);
  Tensor bad = random_probs(r, 4, 5);
  std::vector<const Tensor*> bad_layers = {&bad};
  CHECK_THROWS_AS(guide_loss_batch(pose, bad_layers, {0, 1, 0, 1}, 2.0), DomainError);
  CHECK_THROWS_AS(guide_loss_batch(pose, {}, {0, 1, 0, 1}, 2.0), DomainError);
  // gradient buffer must be pre-sized to match
  std::vector<Tensor> wrong(2, Tensor({4, 3}));
  CHECK_THROWS_AS(guide_loss_batch(pose, layers, {0, 1, 0, 1}, 2.0, &wrong), DomainError);
}

TEST_CASE("guide batch gradient matches central differences") {
  Rng r(241);
  const std::size_t n = 5, d = 4;
  const Tensor pose = random_probs(r, n, d);
  std::vector<Tensor> layer_store = {random_probs(r, n, d), random_probs(r, n, d)};
  std::vector<const Tensor*> layers = {&layer_store[0], &layer_store[1]};
  const std::vector<int> labels = {0, 1, 0, 1, 1};
  std::vector<Tensor> grads(2, Tensor({n, d}));
  (void)guide_loss_batch(pose, layers, labels, 2.0, &grads, 1.0);
  const double h = 1e-7;
  for (std::size_t l = 0; l < 2; ++l) {
    for (std::size_t i = 0; i < layer_store[l].size(); ++i) {
      const double keep = layer_store[l][i];
      layer_store[l][i] = keep + h;
      const double up = guide_loss_batch(pose, layers, labels, 2.0).total;
      layer_store[l][i] = keep - h;
      const double dn = guide_loss_batch(pose, layers, labels, 2.0).total;
      layer_store[l][i] = keep;
      const double fd = (up - dn) / (2.0 * h);
      CHECK(grads[l][i] == doctest::Approx(fd).epsilon(1e-4).scale(1e-3));
    }
  }
  // scale multiplies the gradient, and the pose side receives none
  std::vector<Tensor> g2(2, Tensor({n, d}));
  (void)guide_loss_batch(pose, layers, labels, 2.0, &g2, 3.0);
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t i = 0; i < g2[l].size(); ++i)
      CHECK(g2[l][i] == doctest::Approx(3.0 * grads[l][i]).epsilon(1e-12));
}

TEST_CASE("combined loss arithmetic") {
  GuideBatchResult guide;
  guide.total = 1.0;
  guide.per_layer = {0.5, 1.5};
  const LossBreakdown lb = combined_loss(0.2, guide, 0.8);
  CHECK(lb.combined == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(lb.triplet == 0.2);
  CHECK(lb.guide == 1.0);
  CHECK(lb.guide_per_layer == std::vector<double>({0.5, 1.5}));

  const LossBreakdown zero = combined_loss(0.7, guide, 0.0);
  CHECK(zero.combined == 0.7);

  GuideBatchResult g2;
  g2.total = 2.5;
  const LossBreakdown unit = combined_loss(0.0, g2, 1.0);
  CHECK(unit.combined == 2.5);

  Rng r(251);
  for (int i = 0; i < 100; ++i) {
    const double t = r.uniform(0.0, 5.0), g = r.uniform(0.0, 5.0), lam = r.uniform();
    GuideBatchResult gb;
    gb.total = g;
    const LossBreakdown b = combined_loss(t, gb, lam);
    CHECK(std::abs(b.combined - (t + lam * g)) <= 1e-9);
  }
}
