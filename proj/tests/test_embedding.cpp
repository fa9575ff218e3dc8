#include "koopman/embedding.hpp"
#include "koopman/error.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace koopman;

namespace {

Matrix random_panel(Index n, Index d, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Matrix m(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) m(i, j) = g(rng);
  return m;
}

bool listed(const DelayGraph& g, Index i, Index j) {
  for (const auto& nb : g.neighbors[static_cast<std::size_t>(i)])
    if (nb.index == j) return true;
  return false;
}

}  // namespace

TEST_CASE("delay embedding shapes") {
  const Matrix x = random_panel(5, 2, 1);
  const Matrix e = delay_embed(x, 3);
  CHECK(e.rows() == 3);
  CHECK(e.cols() == 6);
  // row 0 is (x_2, x_1, x_0)
  CHECK(e.row(0).segment(0, 2) == x.row(2));
  CHECK(e.row(0).segment(4, 2) == x.row(0));
  CHECK(delay_embed(x, 1) == x);
  CHECK_THROWS_AS(delay_embed(x, 5), ConfigError);
}

TEST_CASE("delay distances") {
  Matrix s(4, 1);
  s << 0, 1, 2, 3;
  const Matrix d = pairwise_delay_distances(s, 2);
  // embedded points 1 and 2 end at t = 2 and t = 3
  CHECK(d(1, 2) == doctest::Approx(1.0));
  CHECK(d.diagonal().isZero());

  CHECK(pairwise_delay_distances(Matrix::Constant(10, 3, 4.2), 4).isZero());
}

TEST_CASE("running-sum distances match brute force on the embedding") {
  const Matrix x = random_panel(40, 3, 2);
  for (Index q : {1, 2, 7}) {
    const Matrix d = pairwise_delay_distances(x, q);
    const Matrix e = delay_embed(x, q);
    double worst = 0.0;
    for (Index i = 0; i < e.rows(); ++i)
      for (Index j = 0; j < e.rows(); ++j) {
        const double ref = (e.row(i) - e.row(j)).squaredNorm() / static_cast<double>(q);
        worst = std::max(worst, std::abs(d(i, j) - ref));
      }
    CHECK(worst < 1e-12);
    CHECK((d - d.transpose()).isZero());
  }
}

TEST_CASE("delay distances satisfy the triangle inequality") {
  const Matrix d2 = pairwise_delay_distances(random_panel(30, 2, 3), 3);
  const Matrix d = d2.cwiseSqrt();
  for (Index i = 0; i < d.rows(); ++i)
    for (Index j = 0; j < d.rows(); ++j)
      for (Index k = 0; k < d.rows(); ++k) CHECK(d(i, k) <= d(i, j) + d(j, k) + 1e-12);
}

TEST_CASE("collinear points with one neighbor") {
  Matrix x(3, 1);
  x << 0.0, 1.0, 2.5;
  const auto g = build_graph(pairwise_delay_distances(x, 1), {1, 1});
  CHECK(listed(g, 0, 1));
  CHECK(listed(g, 2, 1));
  CHECK(listed(g, 1, 0));
  CHECK(listed(g, 1, 2));
  CHECK_FALSE(listed(g, 0, 2));
}

TEST_CASE("graph invariants") {
  const Matrix x = random_panel(60, 2, 4);
  const Matrix d2 = pairwise_delay_distances(x, 3);
  const auto g = build_graph(d2, {3, 5});
  for (Index i = 0; i < g.size(); ++i) {
    CHECK(g.density(i) > 0.0);
    CHECK(listed(g, i, i));
    for (const auto& nb : g.neighbors[static_cast<std::size_t>(i)]) {
      CHECK(listed(g, nb.index, i));
      CHECK(nb.dist2 >= 0.0);
      if (nb.index == i) CHECK(nb.dist2 == 0.0);
    }
  }
  const auto dense = build_graph(d2, {3, g.size() - 1});
  for (Index i = 0; i < dense.size(); ++i) CHECK(dense.neighbors[static_cast<std::size_t>(i)].size() == std::size_t(dense.size()));
  CHECK_THROWS_AS(build_graph(d2, {3, g.size()}), ConfigError);
}

TEST_CASE("identical points stay connected") {
  Matrix x(6, 1);
  x << 0.0, 5.0, 5.0, 9.0, 9.5, 20.0;
  const auto g = build_graph(pairwise_delay_distances(x, 1), {1, 1});
  CHECK(listed(g, 1, 2));
  CHECK(listed(g, 2, 1));
}

TEST_CASE("kernel values") {
  Matrix x(3, 1);
  x << 0.0, 0.0, 1.0;
  DelayConfig c{1, 2};
  c.mode = BandwidthMode::Fixed;
  auto g = build_graph(pairwise_delay_distances(x, 1), c);
  g.epsilon0 = 1.0;  // d^2 between point 0 and point 2 is 1
  SparseMatrix K = kernel_matrix(g);
  CHECK(K.coeff(0, 1) == 1.0);
  CHECK(K.coeff(0, 2) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  g.epsilon0 = 2.0;
  CHECK(kernel_matrix(g).coeff(0, 2) > K.coeff(0, 2));
  g.epsilon0 = 0.0;
  CHECK_THROWS_AS(kernel_matrix(g), BandwidthError);
}

TEST_CASE("markov normalization examples") {
  SparseMatrix I(2, 2);
  I.setIdentity();
  auto m = markov_normalize(I);
  CHECK(m.q == Vector::Ones(2));
  CHECK(Matrix(m.P).isIdentity());

  Matrix ones = Matrix::Ones(2, 2);
  m = markov_normalize(ones.sparseView());
  CHECK(m.q == Vector::Constant(2, 2.0));
  CHECK((Matrix(m.P).array() - 0.5).abs().maxCoeff() < 1e-15);

  SparseMatrix z(2, 2);
  z.insert(0, 0) = 1.0;
  try {
    markov_normalize(z);
    FAIL("expected IsolatedPointError");
  } catch (const IsolatedPointError& e) {
    CHECK(e.index() == 1);
  }
}

TEST_CASE("sparse markov matrix matches dense evaluation") {
  const Matrix x = random_panel(45, 2, 5);
  const Index q = 4;
  const Matrix e = delay_embed(x, q);
  const Index n = e.rows();
  const auto g = build_graph(pairwise_delay_distances(x, q), {q, 8});
  const auto m = markov_normalize(kernel_matrix(g));

  // Dense reference built only from the embedded vectors and the graph's adjacency.
  Vector mean(n);
  for (Index i = 0; i < n; ++i) {
    std::vector<double> r;
    for (Index j = 0; j < n; ++j)
      if (j != i) r.push_back((e.row(i) - e.row(j)).squaredNorm() / q);
    std::sort(r.begin(), r.end());
    mean(i) = std::accumulate(r.begin(), r.begin() + 8, 0.0) / 8.0;
  }
  Matrix K = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (listed(g, i, j)) {
        const double d2 = (e.row(i) - e.row(j)).squaredNorm() / q;
        K(i, j) = std::exp(-d2 / std::sqrt(mean(i) * mean(j)) / g.epsilon0);
      }
  const Vector qv = K.rowwise().sum();
  Matrix P(n, n);
  for (Index i = 0; i < n; ++i) {
    double D = 0.0;
    for (Index k = 0; k < n; ++k) D += K(i, k) / std::sqrt(qv(k));
    for (Index j = 0; j < n; ++j) P(i, j) = K(i, j) / (D * std::sqrt(qv(j)));
  }
  CHECK((Matrix(m.P) - P).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("markov spectrum") {
  const Matrix x = random_panel(50, 3, 6);
  const auto g = build_graph(pairwise_delay_distances(x, 2), {2, 6});
  const auto m = markov_normalize(kernel_matrix(g));
  const Matrix P(m.P);
  CHECK((P.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  const Matrix S = m.symmetric_conjugate();
  Eigen::SelfAdjointEigenSolver<Matrix> es(S);
  const Vector ev = es.eigenvalues();
  CHECK(std::abs(ev(ev.size() - 1) - 1.0) < 1e-8);
  CHECK(ev.maxCoeff() <= 1.0 + 1e-10);
  CHECK(ev.minCoeff() > -1.0);
  // S is a similarity transform of P
  const Vector t = m.conjugator();
  CHECK((t.asDiagonal() * P * t.cwiseInverse().asDiagonal() - S).cwiseAbs().maxCoeff() < 1e-12);
  // stationary weights: pi^T P = pi^T
  const Vector w = m.stationary_weights();
  CHECK((P.transpose() * w - w).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("bandwidth tuning") {
  // self-distances are part of every kernel row and keep the slope bounded
  std::vector<double> d(50, 0.0);
  for (int i = 0; i < 200; ++i) d.push_back(0.01 * (1 + i % 7));
  const double eps = tune_bandwidth(d);
  CHECK(eps > 1e-3);
  CHECK(eps < 1.0);
  CHECK(tune_bandwidth(std::vector<double>(10, 0.0)) == 1.0);
}
