#include <cmath>
#include <vector>

#include "doctest.h"
#include "etclab/encoder.hpp"
#include "etclab/optimizer.hpp"
#include "etclab/rng.hpp"

using namespace etclab;

namespace {

// Straight transcription of the rectified-Adam update rule, kept separate
// from the library implementation so the two can disagree. Returns the
// parameter trajectory including the starting point.
std::vector<double> oracle_radam(double theta, const std::vector<double>& grads, double lr,
                                 double beta1, double beta2, double wd, double eps) {
  std::vector<double> out{theta};
  double m = 0, v = 0;
  const double rho_inf = 2.0 / (1.0 - beta2) - 1.0;
  for (std::size_t k = 0; k < grads.size(); ++k) {
    const double t = static_cast<double>(k + 1);
    const double g = grads[k];
    m = beta1 * m + (1 - beta1) * g;
    v = beta2 * v + (1 - beta2) * g * g;
    const double m_hat = m / (1 - std::pow(beta1, t));
    const double rho_t = rho_inf - 2 * t * std::pow(beta2, t) / (1 - std::pow(beta2, t));
    theta *= 1 - lr * wd;
    if (rho_t > 4) {
      const double v_hat = std::sqrt(v / (1 - std::pow(beta2, t)));
      const double r_t = std::sqrt(((rho_t - 4) * (rho_t - 2) * rho_inf) /
                                   ((rho_inf - 4) * (rho_inf - 2) * rho_t));
      theta -= lr * r_t * m_hat / (v_hat + eps);
    } else {
      theta -= lr * m_hat;
    }
    out.push_back(theta);
  }
  return out;
}

// Drives the library update on a single scalar parameter.
std::vector<double> lib_radam(double theta, const std::vector<double>& grads,
                              const RAdamConfig& cfg, double lr_now) {
  Tensor<double> p({1}, theta), m({1}), v({1});
  std::vector<double> out{theta};
  for (std::size_t k = 0; k < grads.size(); ++k) {
    Tensor<double> g({1}, grads[k]);
    radam_update_tensor(p, g, m, v, cfg, lr_now, radam_terms(static_cast<long long>(k + 1), cfg.beta1, cfg.beta2),
                        "theta", static_cast<long long>(k + 1));
    out.push_back(p[0]);
  }
  return out;
}

}  // namespace

TEST_CASE("radam matches a published-formula oracle term by term") {
  RAdamConfig cfg;
  cfg.lr = 3e-3;
  cfg.weight_decay = 0.02;
  Rng rng(7);
  std::vector<double> grads;
  for (int i = 0; i < 50; ++i) grads.push_back(rng.normal() * 0.5);

  const auto want = oracle_radam(1.25, grads, cfg.lr, cfg.beta1, cfg.beta2, cfg.weight_decay, cfg.eps);
  const auto got = lib_radam(1.25, grads, cfg, cfg.lr);
  REQUIRE(want.size() == got.size());
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("variance rectification stays off through step 4 at beta2 0.999") {
  for (long long t = 1; t <= 4; ++t) {
    const RAdamTerms w = radam_terms(t, 0.9, 0.999);
    CHECK(w.rho_t <= 4.0);
    CHECK_FALSE(w.rectified);
    CHECK(w.r_t == 1.0);
  }
  CHECK(radam_terms(5, 0.9, 0.999).rectified);

  // While rectification is off the update is pure bias-corrected momentum,
  // so the first step moves exactly lr * g (zero decay).
  RAdamConfig cfg;
  cfg.lr = 0.01;
  cfg.weight_decay = 0.0;
  const auto traj = lib_radam(2.0, {0.3}, cfg, cfg.lr);
  CHECK(traj[1] == doctest::Approx(2.0 - 0.01 * 0.3).epsilon(1e-15));
}

TEST_CASE("zero gradients with zero weight decay leave parameters unchanged") {
  RAdamConfig cfg;
  cfg.weight_decay = 0.0;
  const auto traj = lib_radam(0.731, std::vector<double>(10, 0.0), cfg, cfg.lr);
  for (double x : traj) CHECK(x == 0.731);
}

TEST_CASE("scalar quadratic converges within 500 steps at lr 1e-2") {
  // f(x) = (x - 3)^2 from x = 2.5, minimum at 3. Decay off so the optimum is
  // exact. The rectification term keeps early steps below lr, so the start
  // sits close enough that 500 steps reach the basin with margin (simulated
  // endpoint error 3.3e-4).
  RAdamConfig cfg;
  cfg.lr = 1e-2;
  cfg.weight_decay = 0.0;
  Tensor<double> p({1}, 2.5), m({1}), v({1});
  for (long long t = 1; t <= 500; ++t) {
    Tensor<double> g({1}, 2.0 * (p[0] - 3.0));
    radam_update_tensor(p, g, m, v, cfg, cfg.lr, radam_terms(t, cfg.beta1, cfg.beta2), "x", t);
  }
  CHECK(std::abs(p[0] - 3.0) < 1e-2);
}

TEST_CASE("cosine schedule hits its pinned anchor points") {
  CHECK(cosine_lr(0, 1000, 2e-4) == doctest::Approx(2e-4).epsilon(1e-15));
  CHECK(cosine_lr(500, 1000, 2e-4) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(cosine_lr(1000, 1000, 2e-4) == 0.0);
  CHECK(cosine_lr(1500, 1000, 2e-4) == 0.0);
  CHECK(cosine_lr(250, 1000, 1.0) == doctest::Approx((1.0 + std::cos(3.14159265358979323846 / 4)) / 2).epsilon(1e-12));
  CHECK_THROWS_AS(cosine_lr(0, 0, 1e-4), DataError);
  CHECK_THROWS_AS(cosine_lr(-1, 10, 1e-4), DataError);
}

TEST_CASE("global norm clipping") {
  SUBCASE("over-norm gradients are scaled down to the cap") {
    std::vector<Tensor<double>> grads;
    grads.emplace_back(std::vector<int>{2}, std::vector<double>{3.0, 0.0});
    grads.emplace_back(std::vector<int>{1}, std::vector<double>{4.0});
    const double norm = clip_global_norm(grads, 1.0);
    CHECK(norm == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(grads[0][0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(grads[1][0] == doctest::Approx(0.8).epsilon(1e-12));
  }
  SUBCASE("under-norm gradients pass through untouched") {
    std::vector<Tensor<double>> grads;
    grads.emplace_back(std::vector<int>{2}, std::vector<double>{0.3, 0.4});
    CHECK(clip_global_norm(grads, 1.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(grads[0][0] == 0.3);
    CHECK(grads[0][1] == 0.4);
  }
  SUBCASE("non-positive cap disables clipping") {
    std::vector<Tensor<double>> grads;
    grads.emplace_back(std::vector<int>{1}, std::vector<double>{10.0});
    CHECK(clip_global_norm(grads, 0.0) == doctest::Approx(10.0));
    CHECK(grads[0][0] == 10.0);
  }
}

TEST_CASE("non-finite gradients abort with a divergence error") {
  RAdamConfig cfg;
  Tensor<double> p({1}, 1.0), m({1}), v({1});
  Tensor<double> g({1}, std::nan(""));
  CHECK_THROWS_WITH_AS(
      radam_update_tensor(p, g, m, v, cfg, cfg.lr, radam_terms(1, cfg.beta1, cfg.beta2), "w1", 1),
      "divergence: non-finite gradient in w1 at step 1", DivergenceError);
  g[0] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(
      radam_update_tensor(p, g, m, v, cfg, cfg.lr, radam_terms(1, cfg.beta1, cfg.beta2), "w1", 1),
      DivergenceError);
}

TEST_CASE("full-model step walks parameters in canonical order") {
  EncoderConfig cfg;
  cfg.layers = 1;
  cfg.hidden = 8;
  cfg.ffn = 16;
  cfg.heads = 2;
  cfg.max_len = 8;
  cfg.vocab_size = 8;
  cfg.dropout = 0.0;
  HeadSpec heads;
  heads.mlm = true;
  auto params = init_params<double>(cfg, heads, 11);
  OptState<double> state = init_opt_state(params);

  std::vector<Tensor<double>> grads;
  for_each_param(params, [&grads](const std::string&, const Tensor<double>& t) {
    grads.emplace_back(t.shape, 0.01);
  });

  const std::string before = params_hash(params);
  RAdamConfig opt;
  radam_step(params, grads, state, opt, opt.lr);
  CHECK(state.step == 1);
  CHECK(params_hash(params) != before);

  SUBCASE("shape mismatch is a programming error") {
    grads[0] = Tensor<double>({1}, 0.0);
    CHECK_THROWS_AS(radam_step(params, grads, state, opt, opt.lr), std::logic_error);
  }
}
