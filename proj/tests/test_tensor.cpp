// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "vg4d/selfcheck.hpp"
#include "vg4d/tensor.hpp"

using namespace vg4d;

namespace {

using Nodes = std::vector<TensorNode<double>>;

TensorNode<double> dleaf(Tape<double>& t, const Shape& shape, std::vector<double> v,
                         bool requires_grad = true) {
  return t.leaf(shape, v.data(), requires_grad);
}

}  // namespace

TEST_CASE("matmul identity and hand arithmetic") {
  Tape<double> t;
  auto eye = dleaf(t, {2, 2}, {1, 0, 0, 1});
  auto a = dleaf(t, {2, 2}, {3.5, -1, 2, 0.25});
  auto prod = matmul(eye, a);
  for (int i = 0; i < 4; ++i) CHECK(prod.values()(i) == a.values()(i));

  auto b = dleaf(t, {2, 2}, {1, 2, 3, 4});
  auto ones = dleaf(t, {2, 1}, {1, 1});
  auto c = matmul(b, ones);
  CHECK(c.values()(0) == 3);
  CHECK(c.values()(1) == 7);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape<double> t;
  auto a = dleaf(t, {2, 3}, std::vector<double>(6, 1.0));
  auto b = dleaf(t, {2, 3}, std::vector<double>(6, 1.0));
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2x3]"), DimensionError);
}

TEST_CASE("matmul gradient matches central differences") {
  Rng rng(41);
  std::vector<double> av(12), bv(8);
  for (auto& x : av) x = rng.uniform(-1, 1);
  for (auto& x : bv) x = rng.uniform(-1, 1);
  const double err = selfcheck::fd_max_err(
      {{3, 4}, {4, 2}},
      {Eigen::Map<VecX<double>>(av.data(), 12), Eigen::Map<VecX<double>>(bv.data(), 8)},
      [](Tape<double>&, const Nodes& xs) { return sum(matmul(xs[0], xs[1])); });
  CHECK(err < 1e-6);
}

TEST_CASE("elementwise op values") {
  Tape<double> t;
  auto x = dleaf(t, {1, 2}, {-1, 2});
  auto r = relu(x);
  CHECK(r.values()(0) == 0);
  CHECK(r.values()(1) == 2);

  auto s = scale(x, -0.5);
  CHECK(s.values()(0) == 0.5);
  CHECK(s.values()(1) == -1);

  auto y = dleaf(t, {1, 2}, {3, 4});
  auto a = add(x, y);
  CHECK(a.values()(0) == 2);
  CHECK(a.values()(1) == 6);

  auto e = vg4d::exp(dleaf(t, {1, 1}, {0.0}));
  CHECK(e.values()(0) == 1);
  auto l = vg4d::log(dleaf(t, {1, 1}, {1.0}));
  CHECK(l.values()(0) == 0);

  CHECK(sum(y).scalar() == 7);
}

TEST_CASE("softmax of equal logits is uniform, rows sum to one") {
  Tape<double> t;
  auto x = dleaf(t, {1, 4}, {0.7, 0.7, 0.7, 0.7});
  auto p = softmax(x, 1);
  for (int i = 0; i < 4; ++i) CHECK(p.values()(i) == doctest::Approx(0.25).epsilon(1e-12));

  Rng rng(7);
  std::vector<double> v(12);
  for (auto& q : v) q = rng.uniform(-3, 3);
  auto pr = softmax(dleaf(t, {3, 4}, v), 1);
  for (int r = 0; r < 3; ++r) {
    double s = 0;
    for (int c = 0; c < 4; ++c) {
      CHECK(pr.values()(r * 4 + c) > 0);
      s += pr.values()(r * 4 + c);
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("max_reduce ties pick the first index and route gradient there") {
  Tape<double> t;
  auto x = dleaf(t, {2, 2}, {1, 5, 1, 5});
  auto red = max_reduce(x, 0);
  CHECK(red.values.values()(0) == 1);
  CHECK(red.values.values()(1) == 5);
  CHECK((*red.argmax)[0] == 0);
  CHECK((*red.argmax)[1] == 0);
  t.backward(sum(red.values));
  CHECK(x.gradient()(0) == 1);
  CHECK(x.gradient()(1) == 1);
  CHECK(x.gradient()(2) == 0);
  CHECK(x.gradient()(3) == 0);
}

TEST_CASE("max_reduce gradient on 2x5x3 along axis 1") {
  Rng rng(19);
  VecX<double> x0 = selfcheck::detail::rand_vec_gapped(rng, {2, 5, 3}, 1, 1e-3);
  const double err = selfcheck::fd_max_err({{2, 5, 3}}, {x0}, [](Tape<double>&, const Nodes& xs) {
    return sum(max_reduce(xs[0], 1).values);
  });
  CHECK(err < 1e-6);
}

TEST_CASE("l2_normalize values and degenerate rows") {
  Tape<double> t;
  auto x = dleaf(t, {1, 2}, {3, 4});
  auto n = l2_normalize(x);
  CHECK(n.values()(0) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(n.values()(1) == doctest::Approx(0.8).epsilon(1e-12));

  auto u = dleaf(t, {1, 2}, {0.6, 0.8});
  auto nu = l2_normalize(u);
  CHECK(nu.values()(0) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(nu.values()(1) == doctest::Approx(0.8).epsilon(1e-12));

  auto z = dleaf(t, {1, 2}, {0.0, 0.0});
  CHECK_THROWS_AS(l2_normalize(z), DegenerateInputError);
}

TEST_CASE("l2_normalize preserves direction and normalizes rows") {
  Tape<double> t;
  Rng rng(3);
  std::vector<double> v(4 * 8);
  for (auto& q : v) q = rng.uniform(0.5, 1.5);
  auto x = dleaf(t, {4, 8}, v);
  auto n = l2_normalize(x);
  for (int r = 0; r < 4; ++r) {
    double norm = 0, dot = 0, xnorm = 0;
    for (int c = 0; c < 8; ++c) {
      const double nv = n.values()(r * 8 + c), xv = x.values()(r * 8 + c);
      norm += nv * nv;
      dot += nv * xv;
      xnorm += xv * xv;
    }
    CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(dot / std::sqrt(norm * xnorm) == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("l2_normalize gradient on 4x8") {
  Rng rng(11);
  VecX<double> x0(32);
  for (int i = 0; i < 32; ++i) x0(i) = rng.uniform(0.5, 1.5);
  VecX<double> dir(8);
  Rng drng(99);
  for (int i = 0; i < 8; ++i) dir(i) = drng.uniform(-1, 1);
  const double err = selfcheck::fd_max_err({{4, 8}}, {x0}, [&dir](Tape<double>& t, const Nodes& xs) {
    // project onto a fixed direction so every component matters
    return sum(matmul(l2_normalize(xs[0]), t.leaf({8, 1}, dir, false)));
  });
  CHECK(err < 1e-6);
}

TEST_CASE("add_bias and linear") {
  Tape<double> t;
  auto x = dleaf(t, {2, 2}, {1, 2, 3, 4});
  auto b = dleaf(t, {2}, {10, 20});
  auto y = add_bias(x, b);
  CHECK(y.values()(0) == 11);
  CHECK(y.values()(1) == 22);
  CHECK(y.values()(2) == 13);
  CHECK(y.values()(3) == 24);

  auto w = dleaf(t, {2, 1}, {1, 1});
  auto bb = dleaf(t, {1}, {5.0});
  auto z = linear(x, w, bb);
  CHECK(z.values()(0) == 8);
  CHECK(z.values()(1) == 12);
}

TEST_CASE("reshape keeps data, rejects bad element counts") {
  Tape<double> t;
  auto x = dleaf(t, {2, 6}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11});
  auto y = reshape(x, {3, 4});
  CHECK(y.dim(0) == 3);
  CHECK(y.dim(1) == 4);
  for (int i = 0; i < 12; ++i) CHECK(y.values()(i) == i);
  CHECK_THROWS_AS(reshape(x, {5, 2}), DimensionError);
}

TEST_CASE("concat along both axes, bad input errors") {
  Tape<double> t;
  auto a = dleaf(t, {1, 2}, {1, 2});
  auto b = dleaf(t, {2, 2}, {3, 4, 5, 6});
  auto v = concat(std::vector<TensorNode<double>>{a, b}, 0);
  CHECK(v.dim(0) == 3);
  for (int i = 0; i < 6; ++i) CHECK(v.values()(i) == i + 1);

  auto c = dleaf(t, {2, 1}, {7, 8});
  auto h = concat(std::vector<TensorNode<double>>{b, c}, 1);
  CHECK(h.dim(1) == 3);
  CHECK(h.values()(2) == 7);
  CHECK(h.values()(5) == 8);

  CHECK_THROWS_AS(concat(std::vector<TensorNode<double>>{}, 0), ArgumentError);
  CHECK_THROWS_AS(concat(std::vector<TensorNode<double>>{a, b}, 2), ArgumentError);
  CHECK_THROWS_AS(concat(std::vector<TensorNode<double>>{a, c}, 0), DimensionError);
}

TEST_CASE("gather_rows values and scatter-add backward") {
  Tape<double> t;
  auto x = dleaf(t, {3, 2}, {1, 2, 3, 4, 5, 6});
  auto g = gather_rows(x, {0, 0, 2});
  CHECK(g.values()(0) == 1);
  CHECK(g.values()(2) == 1);
  CHECK(g.values()(4) == 5);
  t.backward(sum(g));
  CHECK(x.gradient()(0) == 2);  // row 0 gathered twice
  CHECK(x.gradient()(2) == 0);
  CHECK(x.gradient()(4) == 1);
  CHECK_THROWS_AS(gather_rows(x, {3}), ArgumentError);
}

TEST_CASE("cross_entropy of uniform logits is ln K") {
  Tape<double> t;
  auto logits = dleaf(t, {2, 5}, std::vector<double>(10, 0.3));
  auto l = cross_entropy(logits, {0, 4});
  CHECK(l.scalar() == doctest::Approx(std::log(5.0)).epsilon(1e-12));
  CHECK_THROWS_AS(cross_entropy(logits, {0, 5}), ArgumentError);
  CHECK_THROWS_AS(cross_entropy(logits, {0}), DimensionError);
}

TEST_CASE("backward is linear: grad of a sum equals sum of grads") {
  Rng rng(23);
  std::vector<double> v(6);
  for (auto& q : v) q = rng.uniform(0.2, 1.0);

  auto grad_of = [&](int which) {
    Tape<double> t;
    auto x = dleaf(t, {2, 3}, v);
    auto f1 = sum(relu(x));
    auto f2 = sum(vg4d::exp(scale(x, 0.3)));
    TensorNode<double> root = which == 0 ? f1 : which == 1 ? f2 : add(f1, f2);
    t.backward(root);
    return VecX<double>(x.gradient());
  };

  const VecX<double> g1 = grad_of(0), g2 = grad_of(1), g12 = grad_of(2);
  for (int i = 0; i < 6; ++i) CHECK(g12(i) == g1(i) + g2(i));
}

TEST_CASE("gradient suite over all ops, few seeds") {
  const auto results = selfcheck::gradcheck_ops(3, 1234);
  CHECK(!results.empty());
  for (const auto& r : results) {
    INFO(r.name, " err=", r.err, " tol=", r.tol);
    CHECK(r.pass);
  }
}
