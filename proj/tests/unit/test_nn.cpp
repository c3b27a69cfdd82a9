#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "bpgrad/diagnostics.hpp"
#include "bpgrad/errors.hpp"
#include "bpgrad/nn.hpp"

using namespace bpgrad;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("bpgrad_test_nn_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Matrix random_batch(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data) v = rng.normal();
  return m;
}

// Central differences over the flattened parameters; independent of backprop.
ParamVector numeric_grad(const Mlp& model, const Matrix& batch, std::span<const std::size_t> labels,
                         double decay, double h) {
  const ParamVector p0 = model.flatten();
  ParamVector g = ParamVector::zeros(p0.size());
  Mlp work = model;
  for (std::size_t k = 0; k < p0.size(); ++k) {
    ParamVector p = p0;
    p[k] = p0[k] + h;
    work.unflatten(p);
    const double up = loss_and_grad(work, batch, labels, decay).loss;
    p[k] = p0[k] - h;
    work.unflatten(p);
    const double down = loss_and_grad(work, batch, labels, decay).loss;
    g[k] = (up - down) / (2.0 * h);
  }
  return g;
}

double max_rel_error(const ParamVector& a, const ParamVector& b) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double denom = std::max({std::abs(a[k]), std::abs(b[k]), 1e-6});
    worst = std::max(worst, std::abs(a[k] - b[k]) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("the two-layer classification network has 10,302 parameters") {
  const Mlp m = make_mlp({100, 100, 2});
  CHECK(m.param_count() == 10302);
  CHECK(m.param_count() == (100 * 100 + 100) + (2 * 100 + 2));
  CHECK(m.flatten().size() == 10302);
  CHECK(m.sizes() == std::vector<std::size_t>{100, 100, 2});
}

TEST_CASE("shape and loss contracts") {
  CHECK_THROWS_AS(Mlp({DenseLayer(3, 4, Activation::relu), DenseLayer(5, 2, Activation::softmax_output)},
                      LossKind::softmax_cross_entropy),
                  ContractError);
  CHECK_THROWS_AS(Mlp({DenseLayer(3, 4, Activation::softmax_output), DenseLayer(4, 2, Activation::identity)},
                      LossKind::mean_squared),
                  ContractError);
  CHECK_THROWS_AS(Mlp({DenseLayer(3, 2, Activation::identity)}, LossKind::softmax_cross_entropy),
                  ContractError);
  const Mlp m = make_mlp({3, 2});
  CHECK_THROWS_AS(forward(m, Matrix(1, 4)), ContractError);
  CHECK_THROWS_AS(init_gaussian({3, 2}, 0.0, 1), InvalidInput);
}

TEST_CASE("init_gaussian: zero biases, determinism, sample mean") {
  const Mlp a = init_gaussian({100, 100, 2}, 0.05, 7);
  const Mlp b = init_gaussian({100, 100, 2}, 0.05, 7);
  CHECK(a == b);
  CHECK_FALSE(a == init_gaussian({100, 100, 2}, 0.05, 8));
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& layer : a.layers()) {
    for (double v : layer.biases) CHECK(v == 0.0);
    for (double w : layer.weights) {
      sum += w;
      ++count;
    }
  }
  CHECK(count >= 10000);
  CHECK(std::abs(sum / static_cast<double>(count)) < 5.0 * 0.05 / 100.0);
}

TEST_CASE("forward: identity layer passes inputs through") {
  DenseLayer l(3, 3, Activation::identity);
  for (std::size_t i = 0; i < 3; ++i) l.weights[i * 3 + i] = 1.0;
  const Mlp m({l}, LossKind::mean_squared);
  Matrix x(2, 3);
  x.data = {1.0, -2.0, 3.5, 0.0, 4.0, -1.0};
  CHECK(forward(m, x).outputs == x);
}

TEST_CASE("forward: relu of negative pre-activations is zero") {
  DenseLayer l(2, 3, Activation::relu);
  std::fill(l.weights.begin(), l.weights.end(), -1.0);
  const Mlp m({l}, LossKind::mean_squared);
  Matrix x(1, 2);
  x.data = {1.0, 2.0};
  const auto out = forward(m, x).outputs;
  for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("softmax rows sum to one") {
  const Mlp m = init_gaussian({5, 7, 4}, 1.0, 3);
  Rng rng(1);
  const auto out = forward(m, random_batch(20, 5, rng)).outputs;
  for (std::size_t r = 0; r < out.rows; ++r) {
    double s = 0.0;
    for (double v : out.row(r)) {
      CHECK(v >= 0.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("cross-entropy of a uniform prediction is ln 2") {
  const Mlp m = make_mlp({3, 2});  // zero weights give uniform softmax
  Matrix x(4, 3);
  x.data.assign(12, 0.5);
  const std::vector<std::size_t> y{0, 1, 1, 0};
  CHECK(loss_and_grad(m, x, y).loss == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("cross-entropy vanishes for a saturated correct prediction") {
  Mlp m = make_mlp({1, 2});
  m.layers()[0].biases = {50.0, -50.0};
  Matrix x(1, 1);
  const std::vector<std::size_t> y{0};
  CHECK(loss_and_grad(m, x, y).loss < 1e-40);
}

TEST_CASE("weight decay adds half the squared norm") {
  const Mlp m = init_gaussian({3, 4, 2}, 0.3, 2);
  Rng rng(4);
  const Matrix x = random_batch(5, 3, rng);
  const std::vector<std::size_t> y{0, 1, 0, 1, 1};
  const double plain = loss_and_grad(m, x, y).loss;
  const double sq = dot(m.flatten(), m.flatten());
  CHECK(loss_and_grad(m, x, y, 0.01).loss == doctest::Approx(plain + 0.005 * sq).epsilon(1e-13));
}

TEST_CASE("backprop matches central differences on a 3-4-2 network") {
  Rng rng(123);
  for (LossKind loss : {LossKind::softmax_cross_entropy, LossKind::mean_squared}) {
    const Mlp m = init_gaussian({3, 4, 2}, 0.8, 17, loss);
    const Matrix x = random_batch(5, 3, rng);
    const std::vector<std::size_t> y{0, 1, 1, 0, 1};
    const auto lg = loss_and_grad(m, x, y, 1e-3);
    CHECK(lg.loss >= 0.0);
    CHECK(max_rel_error(lg.grad, numeric_grad(m, x, y, 1e-3, 1e-5)) < 1e-5);
  }
}

TEST_CASE("backprop matches central differences on random small networks") {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t in = 2 + rng.index(4), hidden = 2 + rng.index(5), out = 2 + rng.index(3);
    const std::size_t n = 1 + rng.index(6);
    const Mlp m = init_gaussian({in, hidden, out}, 0.7, 1000 + trial);
    const Matrix x = random_batch(n, in, rng);
    std::vector<std::size_t> y(n);
    for (auto& v : y) v = rng.index(out);
    const auto lg = loss_and_grad(m, x, y);
    CHECK(max_rel_error(lg.grad, numeric_grad(m, x, y, 0.0, 1e-5)) < 1e-5);
  }
}

TEST_CASE("flatten and unflatten round-trip") {
  Mlp m = make_mlp({4, 3, 2});
  Rng rng(8);
  ParamVector p = ParamVector::zeros(m.param_count());
  for (std::size_t k = 0; k < p.size(); ++k) p[k] = rng.normal();
  m.unflatten(p);
  CHECK(m.flatten() == p);
  // weights of layer 0 come first, row-major
  CHECK(m.layers()[0].weights[1] == p[1]);
  CHECK(m.layers()[0].biases[0] == p[12]);
  CHECK_THROWS_AS(m.unflatten(ParamVector::zeros(3)), ContractError);
}

TEST_CASE("balanced labels and deterministic datasets") {
  const Dataset d = make_gaussian_classification(200, 10, 2, 5);
  CHECK(std::count(d.labels.begin(), d.labels.end(), std::size_t{0}) == 100);
  CHECK(std::count(d.labels.begin(), d.labels.end(), std::size_t{1}) == 100);
  CHECK(dataset_hash(d) == dataset_hash(make_gaussian_classification(200, 10, 2, 5)));
  CHECK(dataset_hash(d) != dataset_hash(make_gaussian_classification(200, 10, 2, 6)));
  const Dataset d3 = make_gaussian_classification(100, 4, 3, 1);
  for (std::size_t c = 0; c < 3; ++c) {
    const auto k = std::count(d3.labels.begin(), d3.labels.end(), c);
    CHECK((k == 33 || k == 34));
  }
  CHECK_THROWS_AS(make_gaussian_classification(10, 2, 1, 0), InvalidInput);
}

TEST_CASE("a linear probe separates means four sigma apart") {
  const Dataset d = make_gaussian_classification(2000, 100, 2, 11, 4.0, 1.0);
  // Nearest class mean: a linear rule w.x > b estimated from the data itself.
  std::vector<double> m0(100, 0.0), m1(100, 0.0);
  std::size_t n0 = 0, n1 = 0;
  for (std::size_t r = 0; r < d.size(); ++r) {
    auto& m = d.labels[r] == 0 ? m0 : m1;
    (d.labels[r] == 0 ? n0 : n1)++;
    for (std::size_t c = 0; c < 100; ++c) m[c] += d.inputs(r, c);
  }
  for (std::size_t c = 0; c < 100; ++c) {
    m0[c] /= static_cast<double>(n0);
    m1[c] /= static_cast<double>(n1);
  }
  std::size_t correct = 0;
  for (std::size_t r = 0; r < d.size(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 100; ++c) {
      s += (d.inputs(r, c) - 0.5 * (m0[c] + m1[c])) * (m1[c] - m0[c]);
    }
    if ((s > 0.0) == (d.labels[r] == 1)) ++correct;
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(d.size()) > 0.9);
}

TEST_CASE("MlpObjective agrees with direct loss evaluation") {
  const Dataset d = make_gaussian_classification(30, 5, 2, 3);
  const Mlp m = init_gaussian({5, 6, 2}, 0.3, 9);
  const MlpObjective obj(make_mlp({5, 6, 2}), d, 0.01);
  std::vector<std::size_t> idx(30);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  ParamVector g;
  const double f = obj.loss_and_grad(m.flatten(), idx, g);
  const auto direct = loss_and_grad(m, d.inputs, d.labels, 0.01);
  CHECK(f == direct.loss);
  CHECK(g == direct.grad);
  CHECK(obj.full_value(m.flatten()) == direct.loss);
  CHECK(accuracy(m, d) >= 0.0);
}

TEST_CASE("checkpoint round-trip") {
  const fs::path dir = scratch_dir("roundtrip");
  for (LossKind loss : {LossKind::softmax_cross_entropy, LossKind::mean_squared}) {
    const Mlp m = init_gaussian({6, 5, 3}, 0.1, 21, loss);
    save_checkpoint(m, dir / "model.txt");
    CHECK(load_checkpoint(dir / "model.txt") == m);
  }
  const std::string text = read_text_file(dir / "model.txt");
  CHECK(text.rfind("bpgrad-mlp 1\nloss mean_squared\nlayers 2\n", 0) == 0);
  fs::remove_all(dir);
}

TEST_CASE("malformed checkpoints are rejected") {
  const fs::path dir = scratch_dir("malformed");
  const Mlp m = init_gaussian({2, 2}, 0.1, 1);
  save_checkpoint(m, dir / "good.txt");
  const std::string good = read_text_file(dir / "good.txt");

  auto expect_invalid = [&](const std::string& text) {
    write_text_file(dir / "bad.txt", text);
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.txt"), InvalidInput);
  };
  expect_invalid("");
  expect_invalid("not-a-model 1\n");
  std::string v2 = good;
  v2.replace(0, 12, "bpgrad-mlp 2");
  expect_invalid(v2);
  expect_invalid(good.substr(0, good.size() - 4));
  expect_invalid(good + "1.0\n");
  std::string bad_value = good;
  bad_value.replace(bad_value.rfind('\n', bad_value.size() - 2) + 1, std::string::npos, "abc\n");
  expect_invalid(bad_value);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.txt"), IoError);
  fs::remove_all(dir);
}
