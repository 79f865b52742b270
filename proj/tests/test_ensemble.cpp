#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "test_support.hpp"

using namespace qmeas;
using qt::max_abs_diff;
using Catch::Matchers::WithinAbs;

namespace {

DensityMatrix qubit_diag(double d0) {
  CMatrix rho = CMatrix::Zero(2, 2);
  rho(0, 0) = d0;
  rho(1, 1) = 1.0 - d0;
  return rho;
}

}  // namespace

TEST_CASE("weight rules on reference inputs", "[ensemble]") {
  const ProjectorSet z2 = zbasis_projectors(2);
  const ProjectorSet z4 = zbasis_projectors(4);

  RVector w = compute_weights(WeightStrategy::instantaneous_born(), qubit_diag(0.6), z2);
  CHECK_THAT(w(0), WithinAbs(0.6, 1e-14));
  CHECK_THAT(w(1), WithinAbs(0.4, 1e-14));

  w = compute_weights(WeightStrategy::uniform(), maximally_mixed(4), z4);
  for (int i = 0; i < 4; ++i) CHECK_THAT(w(i), WithinAbs(0.25, 1e-14));

  // Zero-noise limit of the noisy rule is the instantaneous rule.
  const std::vector<double> noise{0.3, -1.2};
  WeightContext ctx;
  ctx.noise = noise;
  ctx.noise_scale = 0.0;
  w = compute_weights(WeightStrategy::noisy_instantaneous_born(0.0), qubit_diag(0.6), z2, ctx);
  CHECK_THAT(w(0), WithinAbs(0.6, 1e-14));

  w = compute_weights(WeightStrategy::fixed_outcome(1), qubit_diag(0.6), z2);
  CHECK_THAT(w(0), WithinAbs(0.0, 1e-14));
  CHECK_THAT(w(1), WithinAbs(1.0, 1e-14));

  WeightContext frozen_ctx;
  frozen_ctx.frozen = born_probabilities(qubit_diag(0.3), z2);
  w = compute_weights(WeightStrategy::frozen_born(), qubit_diag(0.9), z2, frozen_ctx);
  CHECK_THAT(w(0), WithinAbs(0.3, 1e-14));
  CHECK_THROWS_AS(compute_weights(WeightStrategy::frozen_born(), qubit_diag(0.9), z2), StateError);
}

TEST_CASE("noisy weights clamp and renormalize; all-zero draws fail loudly", "[ensemble]") {
  const ProjectorSet z2 = zbasis_projectors(2);
  const std::vector<double> down{-100.0, -100.0};
  WeightContext ctx;
  ctx.noise = down;
  ctx.noise_scale = 1.0;
  CHECK_THROWS_AS(
      compute_weights(WeightStrategy::noisy_instantaneous_born(1.0), qubit_diag(0.5), z2, ctx),
      StateError);

  const std::vector<double> skew{3.0, -3.0};
  ctx.noise = skew;
  const RVector w =
      compute_weights(WeightStrategy::noisy_instantaneous_born(0.5), qubit_diag(0.5), z2, ctx);
  CHECK(w(0) >= 0.0);
  CHECK(w(1) >= 0.0);
  CHECK_THAT(w.sum(), WithinAbs(1.0, 1e-12));
}

TEST_CASE("weighted flow vanishes for equal weights and reduces to the single-projector flow",
          "[ensemble]") {
  qt::Rand rand(31);
  const int d = 4;
  const DensityMatrix rho = rand.density(d);
  const ProjectorSet set = rand.rank1_set(d);

  CHECK(ensemble_rhs(rho, set, RVector::Constant(d, 1.0 / d)).norm() < 1e-12);

  RVector unit = RVector::Zero(d);
  unit(2) = 1.0;
  CHECK(max_abs_diff(ensemble_rhs(rho, set, unit), collapse_rhs(rho, set[2])) < 1e-12);

  // Measurement eigenstates are fixed points for every weight choice.
  for (int trial = 0; trial < 5; ++trial) {
    RVector w(d);
    for (int i = 0; i < d; ++i) w(i) = rand.stream.uniform01();
    w /= w.sum();
    const DensityMatrix eigen = set[1].mat;  // rank-1 projector as a state
    CHECK(ensemble_rhs(eigen, set, w).norm() < 1e-12);
  }
}

TEST_CASE("weighted flow is traceless, hermitian and preserves purity", "[ensemble]") {
  qt::Rand rand(32);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 2 + trial % 4;
    const ProjectorSet set = rand.rank1_set(d);
    RVector w(d);
    for (int i = 0; i < d; ++i) w(i) = rand.stream.uniform01();
    w /= w.sum();
    const CMatrix rhs = ensemble_rhs(rand.density(d), set, w);
    CHECK(std::abs(rhs.trace()) < 1e-12);
    CHECK(hermiticity_defect(rhs) < 1e-12);

    // d(rho^2 - rho)/ds vanishes on pure states.
    const DensityMatrix pure = pure_density(rand.pure_state(d));
    const CMatrix prhs = ensemble_rhs(pure, set, w);
    CHECK(max_abs_diff(pure * prhs + prhs * pure, prhs) < 1e-11);
  }
}

TEST_CASE("diagonal replicator flow", "[ensemble]") {
  RVector d(2), w(2);
  d << 0.6, 0.4;
  w << 1.0, 0.0;
  const RVector rhs = diagonal_rhs(d, w);
  CHECK_THAT(rhs(0), WithinAbs(0.48, 1e-14));
  CHECK_THAT(rhs(1), WithinAbs(-0.48, 1e-14));

  // Vanishing entries never move; components sum to zero; weights above the
  // weighted mean grow.
  qt::Rand rand(33);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + trial % 5;
    RVector dv(n), wv(n);
    for (int i = 0; i < n; ++i) {
      dv(i) = rand.stream.uniform01();
      wv(i) = rand.stream.uniform01();
    }
    dv(trial % n) = 0.0;
    dv /= dv.sum();
    wv /= wv.sum();
    const RVector out = diagonal_rhs(dv, wv);
    CHECK_THAT(out.sum(), WithinAbs(0.0, 1e-12));
    CHECK_THAT(out(trial % n), WithinAbs(0.0, 1e-14));
    const double wbar = wv.dot(dv);
    for (int i = 0; i < n; ++i)
      if (dv(i) > 1e-12 && std::abs(wv(i) - wbar) > 1e-12)
        CHECK(out(i) * (wv(i) - wbar) > 0.0);
  }

  CHECK_THAT(two_outcome_diagonal_rhs(0.6, 1.0, 0.0), WithinAbs(0.48, 1e-14));
}

TEST_CASE("degenerate equal-weight supports are stationary until perturbed", "[ensemble]") {
  // Weights 1/n on the occupied branches, zero elsewhere: stationary.
  RVector d(3), w(3);
  d << 0.5, 0.5, 0.0;
  w << 0.5, 0.5, 0.0;
  CHECK(diagonal_rhs(d, w).norm() < 1e-14);

  // An asymmetric lift of the degeneracy moves mass toward the favored
  // branch with the sign fixed by the replicator form.
  RVector w2(3);
  w2 << 0.55, 0.45, 0.0;
  const RVector out = diagonal_rhs(d, w2);
  CHECK(out(0) > 0.0);
  CHECK(out(1) < 0.0);
}

TEST_CASE("off-diagonal blocks follow the diagonal flow exactly", "[ensemble]") {
  qt::Rand rand(34);
  const int d = 4;
  const DensityMatrix rho0 = rand.density(d);
  const ProjectorSet set = rand.rank1_set(d);
  const RVector d0 = diagonals(rho0, set);

  // Identity case.
  CHECK(max_abs_diff(offdiagonal_closed_form(rho0, set, d0, d0), rho0) < 1e-12);

  // Vanishing initial diagonal under a live block errors out.
  RVector bad = d0;
  bad(0) = 0.0;
  CHECK_THROWS_AS(offdiagonal_closed_form(rho0, set, d0, bad), StateError);
}

TEST_CASE("qubit closed form keeps pure states pure and phases frozen", "[ensemble]") {
  qt::Rand rand(35);
  const ProjectorSet z2 = zbasis_projectors(2);
  const PureState psi = rand.pure_state(2);
  const DensityMatrix rho0 = pure_density(psi);
  const RVector d0 = diagonals(rho0, z2);

  for (double d_now : {0.2, 0.5, 0.9}) {
    RVector dn(2);
    dn << d_now, 1.0 - d_now;
    const DensityMatrix rec = offdiagonal_closed_form(rho0, z2, dn, d0);
    CHECK_THAT(purity(rec), WithinAbs(1.0, 1e-10));
    CHECK_THAT(std::arg(rec(0, 1)), WithinAbs(std::arg(rho0(0, 1)), 1e-10));
  }
}

TEST_CASE("instantaneous-born flow is deterministic and violates outcome sampling",
          "[ensemble]") {
  const ProjectorSet z2 = zbasis_projectors(2);
  const PureState psi = std::sqrt(0.6) * basis_state(2, 0) + std::sqrt(0.4) * basis_state(2, 1);
  IntegratorParams params{.step = 1e-3, .duration = 14.0};
  const auto record = integrate_ensemble(pure_density(psi), z2,
                                         WeightStrategy::instantaneous_born(), std::nullopt, 1.0,
                                         params, 7);
  // The dominant branch always wins; there is no 0.6/0.4 split.
  CHECK(record.back().diagonals(0) > 1.0 - 1e-6);
  CHECK(record.sampled_outcome == -1);
}

TEST_CASE("exactly balanced instantaneous weights are a (degenerate) fixed point", "[ensemble]") {
  const ProjectorSet z2 = zbasis_projectors(2);
  const DensityMatrix plus = pure_density(plus_state(2));
  IntegratorParams params{.step = 1e-3, .duration = 3.0};
  const auto record =
      integrate_ensemble(plus, z2, WeightStrategy::instantaneous_born(), std::nullopt, 1.0, params, 7);
  CHECK(max_abs_diff(record.back().rho, plus) < 1e-9);
}

TEST_CASE("frozen-born trajectories sample a branch and converge to it", "[ensemble]") {
  const ProjectorSet z2 = zbasis_projectors(2);
  const PureState psi = std::sqrt(0.6) * basis_state(2, 0) + std::sqrt(0.4) * basis_state(2, 1);
  IntegratorParams params{.step = 1e-3, .duration = 12.0};
  int seen[2] = {0, 0};
  for (std::uint64_t seed = 0; seed < 24; ++seed) {
    const auto record = integrate_ensemble(pure_density(psi), z2, WeightStrategy::frozen_born(),
                                           std::nullopt, 1.0, params, derive_stream_seed(99, seed));
    REQUIRE(record.sampled_outcome >= 0);
    ++seen[record.sampled_outcome];
    CHECK(record.back().diagonals(record.sampled_outcome) > 1.0 - 1e-6);
    // The frozen branch is recorded as a unit-mass weight vector.
    CHECK_THAT(record.back().weights(record.sampled_outcome), WithinAbs(1.0, 1e-14));
  }
  CHECK(seen[0] > 0);
  CHECK(seen[1] > 0);
}

TEST_CASE("support never grows along weighted flows", "[ensemble]") {
  qt::Rand rand(36);
  const ProjectorSet z4 = zbasis_projectors(4);
  // State supported on {0,1} only.
  CMatrix rho0 = CMatrix::Zero(4, 4);
  const PureState sub = rand.pure_state(2);
  rho0.topLeftCorner(2, 2) = pure_density(sub);
  IntegratorParams params{.step = 1e-3, .duration = 5.0};
  const auto record = integrate_ensemble(rho0, z4, WeightStrategy::instantaneous_born(),
                                         std::nullopt, 1.0, params, 7);
  for (const auto& sample : record.samples) {
    CHECK(sample.diagonals(2) < 1e-10);
    CHECK(sample.diagonals(3) < 1e-10);
  }
}

TEST_CASE("deterministic weighted flows keep pure states pure", "[ensemble]") {
  qt::Rand rand(37);
  const int d = 3;
  const DensityMatrix rho0 = pure_density(rand.pure_state(d));
  const ProjectorSet set = rand.rank1_set(d);
  IntegratorParams params{.step = 1e-3, .duration = 5.0};
  for (const auto& strategy :
       {WeightStrategy::instantaneous_born(), WeightStrategy::fixed_outcome(1)}) {
    const auto record = integrate_ensemble(rho0, set, strategy, std::nullopt, 1.0, params, 7);
    for (const auto& sample : record.samples) CHECK_THAT(sample.purity, WithinAbs(1.0, 1e-8));
  }
}

TEST_CASE("block scaling identity holds along integrated flows", "[ensemble]") {
  // 2 d/ds ln |(P_j rho P_k)_ab| = d/ds ln d_j + d/ds ln d_k, checked with
  // central differences on a finely sampled trajectory.
  qt::Rand rand(38);
  const int d = 4;
  const DensityMatrix rho0 = rand.mixed_density(d);
  const ProjectorSet set = rand.rank1_set(d);
  IntegratorParams params{.step = 1e-4, .duration = 0.3, .renormalize_every = 1};
  const auto record = integrate_ensemble(rho0, set, WeightStrategy::instantaneous_born(),
                                         std::nullopt, 1.0, params, 7);
  const double h = params.step;
  int checked = 0;
  for (std::size_t i = 1; i + 1 < record.size(); i += 50) {
    const auto& prev = record.samples[i - 1];
    const auto& mid = record.samples[i];
    const auto& next = record.samples[i + 1];
    for (int j = 0; j < set.size(); ++j)
      for (int k = 0; k < set.size(); ++k) {
        if (j == k) continue;
        const CMatrix bp = set[j].mat * prev.rho * set[k].mat;
        const CMatrix bm = set[j].mat * mid.rho * set[k].mat;
        const CMatrix bn = set[j].mat * next.rho * set[k].mat;
        for (int a = 0; a < d; ++a)
          for (int b = 0; b < d; ++b) {
            if (std::abs(bm(a, b)) < 1e-6) continue;
            const double lhs =
                2.0 * (std::log(std::abs(bn(a, b))) - std::log(std::abs(bp(a, b)))) / (2.0 * h);
            const double rhs =
                (std::log(next.diagonals(j)) - std::log(prev.diagonals(j))) / (2.0 * h) +
                (std::log(next.diagonals(k)) - std::log(prev.diagonals(k))) / (2.0 * h);
            CHECK_THAT(lhs, WithinAbs(rhs, 1e-5));
            ++checked;
          }
      }
  }
  CHECK(checked > 50);
}

TEST_CASE("integrated flow matches the closed-form reconstruction", "[ensemble]") {
  qt::Rand rand(39);
  const int d = 3;
  const DensityMatrix rho0 = rand.mixed_density(d);
  const ProjectorSet set = rand.rank1_set(d);
  IntegratorParams params{.step = 1e-3, .duration = 2.0};
  const auto record = integrate_ensemble(rho0, set, WeightStrategy::instantaneous_born(),
                                         std::nullopt, 1.0, params, 7);
  const RVector d0 = record.front().diagonals;
  for (const auto& sample : record.samples) {
    const DensityMatrix rebuilt = offdiagonal_closed_form(rho0, set, sample.diagonals, d0);
    CHECK((sample.rho - rebuilt).norm() < 1e-6);
  }
}

TEST_CASE("noisy weighted flow stays physical", "[ensemble]") {
  const ProjectorSet z2 = zbasis_projectors(2);
  IntegratorParams params{.step = 1e-3, .duration = 2.0,
                          .method = StepMethod::EulerMaruyama};
  const auto record = integrate_ensemble(pure_density(plus_state(2)), z2,
                                         WeightStrategy::noisy_instantaneous_born(0.3),
                                         std::nullopt, 1.0, params, 2024);
  for (const auto& sample : record.samples) {
    CHECK_THAT(sample.rho.trace().real(), WithinAbs(1.0, 1e-9));
    CHECK(hermiticity_defect(sample.rho) < 1e-9);
    CHECK(sample.weights.minCoeff() >= 0.0);
    CHECK_THAT(sample.weights.sum(), WithinAbs(1.0, 1e-12));
  }
  // Method/strategy pairing is enforced both ways.
  IntegratorParams rk{.step = 1e-3, .duration = 1.0};
  CHECK_THROWS_AS(integrate_ensemble(pure_density(plus_state(2)), z2,
                                     WeightStrategy::noisy_instantaneous_born(0.3), std::nullopt,
                                     1.0, rk, 1),
                  StateError);
  IntegratorParams em{.step = 1e-3, .duration = 1.0, .method = StepMethod::EulerMaruyama};
  CHECK_THROWS_AS(integrate_ensemble(pure_density(plus_state(2)), z2,
                                     WeightStrategy::instantaneous_born(), std::nullopt, 1.0, em,
                                     1),
                  StateError);
}

TEST_CASE("ensembles reproduce exactly for a fixed master seed", "[ensemble]") {
  const ProjectorSet z2 = zbasis_projectors(2);
  const PureState psi = std::sqrt(0.6) * basis_state(2, 0) + std::sqrt(0.4) * basis_state(2, 1);
  IntegratorParams params{.step = 1e-2, .duration = 1.0};
  const auto a = run_ensemble(64, pure_density(psi), z2, WeightStrategy::frozen_born(),
                              std::nullopt, 1.0, params, 31337);
  const auto b = run_ensemble(64, pure_density(psi), z2, WeightStrategy::frozen_born(),
                              std::nullopt, 1.0, params, 31337);
  CHECK(a.outcome_counts == b.outcome_counts);
  CHECK(a.trajectory_seeds == b.trajectory_seeds);
  REQUIRE(a.mean_states.size() == b.mean_states.size());
  for (std::size_t i = 0; i < a.mean_states.size(); ++i)
    CHECK((a.mean_states[i] - b.mean_states[i]).norm() == 0.0);

  // Thread count must not change the aggregate bit for bit.
  EnsembleOptions threaded;
  threaded.threads = 4;
  const auto c = run_ensemble(64, pure_density(psi), z2, WeightStrategy::frozen_born(),
                              std::nullopt, 1.0, params, 31337, threaded);
  CHECK(a.outcome_counts == c.outcome_counts);
  for (std::size_t i = 0; i < a.mean_states.size(); ++i)
    CHECK((a.mean_states[i] - c.mean_states[i]).norm() == 0.0);
}

TEST_CASE("fixed-outcome ensembles land on one branch with certainty", "[ensemble]") {
  const ProjectorSet z2 = zbasis_projectors(2);
  IntegratorParams params{.step = 1e-2, .duration = 2.0};
  const auto stats = run_ensemble(40, pure_density(plus_state(2)), z2,
                                  WeightStrategy::fixed_outcome(0), std::nullopt, 1.0, params, 5);
  CHECK_THAT(stats.frequencies(0), WithinAbs(1.0, 1e-14));
  CHECK(stats.deterministic_outcomes);
}

TEST_CASE("frozen-born ensembles track the initial born statistics", "[ensemble]") {
  const ProjectorSet z2 = zbasis_projectors(2);
  const PureState psi = std::sqrt(0.6) * basis_state(2, 0) + std::sqrt(0.4) * basis_state(2, 1);
  IntegratorParams params{.step = 1e-2, .duration = 1.0};
  const auto stats = run_ensemble(2000, pure_density(psi), z2, WeightStrategy::frozen_born(),
                                  std::nullopt, 1.0, params, 424242);
  CHECK_FALSE(stats.deterministic_outcomes);
  CHECK_THAT(stats.born_initial(0), WithinAbs(0.6, 1e-12));
  // Three-sigma binomial band around p = 0.6 at N = 2000.
  CHECK(std::abs(stats.frequencies(0) - 0.6) < 3.0 * std::sqrt(0.6 * 0.4 / 2000.0));
  CHECK(std::abs(stats.z_scores(0)) < 3.0);
}
