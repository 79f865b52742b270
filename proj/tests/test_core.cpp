#include <catch2/catch_amalgamated.hpp>

#include "test_support.hpp"

using namespace qmeas;
using qt::max_abs_diff;
using Catch::Matchers::WithinAbs;

TEST_CASE("validate_density accepts physical states and rejects violations", "[core]") {
  CHECK(validate_density(maximally_mixed(2)).pass);

  const auto pure = validate_density(pure_density(basis_state(2, 0)));
  CHECK(pure.pass);
  CHECK_THAT(pure.purity, WithinAbs(1.0, 1e-14));

  CMatrix bad(2, 2);
  bad << 1.2, 0.0, 0.0, -0.2;
  const auto rep = validate_density(bad);
  CHECK_FALSE(rep.pass);
  CHECK_THAT(rep.min_eigenvalue, WithinAbs(-0.2, 1e-12));

  CMatrix rect(2, 3);
  CHECK_THROWS_AS(validate_density(rect), DimensionError);
}

TEST_CASE("born probabilities on reference states", "[core]") {
  const ProjectorSet z = zbasis_projectors(2);

  RVector p = born_probabilities(maximally_mixed(2), z);
  CHECK_THAT(p(0), WithinAbs(0.5, 1e-14));
  CHECK_THAT(p(1), WithinAbs(0.5, 1e-14));

  p = born_probabilities(pure_density(basis_state(2, 0)), z);
  CHECK_THAT(p(0), WithinAbs(1.0, 1e-14));
  CHECK_THAT(p(1), WithinAbs(0.0, 1e-14));

  CMatrix diag = CMatrix::Zero(2, 2);
  diag(0, 0) = 0.6;
  diag(1, 1) = 0.4;
  p = born_probabilities(diag, z);
  CHECK_THAT(p(0), WithinAbs(0.6, 1e-14));
  CHECK_THAT(p(1), WithinAbs(0.4, 1e-14));

  CHECK_THROWS_AS(born_probabilities(maximally_mixed(3), z), DimensionError);
}

TEST_CASE("born probabilities sum to one and stay in range on random inputs", "[core]") {
  qt::Rand rand(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 2 + trial % 7;
    const DensityMatrix rho = rand.density(d);
    const ProjectorSet set = rand.rank1_set(d);
    double sum = 0.0;
    for (int i = 0; i < set.size(); ++i) {
      const double v = (set[i].mat * rho).trace().real();
      CHECK(v >= -1e-10);
      CHECK(v <= 1.0 + 1e-10);
      sum += v;
    }
    CHECK_THAT(sum, WithinAbs(1.0, 1e-10));
  }
}

TEST_CASE("projective collapse on pure and degenerate projectors", "[core]") {
  const Projector p0 = basis_projector(2, 0);
  const DensityMatrix plus = pure_density(plus_state(2));
  CHECK(max_abs_diff(projective_collapse(plus, p0), pure_density(basis_state(2, 0))) < 1e-14);

  // Rank-2 projector keeps coherence inside its range.
  const ProjectorSet parity = jzjz_projectors();
  const DensityMatrix mixed4 = maximally_mixed(4);
  const DensityMatrix collapsed = projective_collapse(mixed4, parity[0]);
  CHECK(max_abs_diff(collapsed, 0.5 * parity[0].mat) < 1e-14);
  const DensityMatrix bell = pure_density(bell_state());
  CHECK(max_abs_diff(projective_collapse(bell, parity[0]), bell) < 1e-14);

  CHECK_THROWS_AS(projective_collapse(pure_density(basis_state(2, 1)), p0), StateError);
}

TEST_CASE("projective collapse is idempotent", "[core]") {
  qt::Rand rand(12);
  for (int trial = 0; trial < 30; ++trial) {
    const int d = 2 + trial % 5;
    const DensityMatrix rho = rand.density(d);
    const Projector p = rand.rank1_projector(d);
    const DensityMatrix once = projective_collapse(rho, p);
    CHECK(max_abs_diff(projective_collapse(once, p), once) < 1e-12);
  }
}

TEST_CASE("partial trace on product, entangled and maximally mixed states", "[core]") {
  qt::Rand rand(13);
  const DensityMatrix a = rand.density(2);
  const DensityMatrix b = rand.density(3);
  CHECK(max_abs_diff(partial_trace(kron(a, b), 2, 3, Subsystem::A), a) < 1e-12);
  CHECK(max_abs_diff(partial_trace(kron(a, b), 2, 3, Subsystem::B), b) < 1e-12);

  CHECK(max_abs_diff(partial_trace(pure_density(bell_state()), 2, 2, Subsystem::A),
                     maximally_mixed(2)) < 1e-14);

  CHECK(max_abs_diff(partial_trace(maximally_mixed(6), 2, 3, Subsystem::B), maximally_mixed(3)) <
        1e-14);

  CHECK_THROWS_AS(partial_trace(maximally_mixed(6), 4, 2, Subsystem::A), DimensionError);
}

TEST_CASE("partial trace is linear and trace preserving", "[core]") {
  qt::Rand rand(14);
  const DensityMatrix x = rand.density(6);
  const DensityMatrix y = rand.density(6);
  const DensityMatrix lin = 0.3 * x + 0.7 * y;
  CHECK(max_abs_diff(partial_trace(lin, 2, 3, Subsystem::A),
                     0.3 * partial_trace(x, 2, 3, Subsystem::A) +
                         0.7 * partial_trace(y, 2, 3, Subsystem::A)) < 1e-12);
  CHECK_THAT(partial_trace(x, 3, 2, Subsystem::B).trace().real(), WithinAbs(1.0, 1e-12));
}

TEST_CASE("kraus channels preserve the state structure", "[core]") {
  const DensityMatrix plus = pure_density(plus_state(2));

  KrausSet identity{{CMatrix::Identity(2, 2)}};
  CHECK(max_abs_diff(kraus_apply(plus, identity), plus) < 1e-14);

  KrausSet dephase{{basis_projector(2, 0).mat, basis_projector(2, 1).mat}};
  CHECK(max_abs_diff(kraus_apply(plus, dephase), maximally_mixed(2)) < 1e-14);

  const double p = 0.25;
  KrausSet flip{{std::sqrt(1.0 - p) * CMatrix::Identity(2, 2), std::sqrt(p) * pauli_z()}};
  const DensityMatrix out = kraus_apply(plus, flip);
  CHECK_THAT(out(0, 1).real(), WithinAbs(0.5 * (1.0 - 2.0 * p), 1e-14));
  CHECK_THAT(out(0, 0).real(), WithinAbs(0.5, 1e-14));

  KrausSet incomplete{{0.5 * CMatrix::Identity(2, 2)}};
  CHECK_THROWS_AS(kraus_apply(plus, incomplete), StateError);
}

TEST_CASE("projector-set kraus channel reproduces the born weights", "[core]") {
  qt::Rand rand(15);
  const int d = 4;
  const DensityMatrix rho = rand.density(d);
  const ProjectorSet set = rand.rank1_set(d);
  KrausSet channel;
  for (const auto& p : set.items) channel.operators.push_back(p.mat);
  const DensityMatrix dephased = kraus_apply(rho, channel);
  const RVector born = born_probabilities(rho, set);
  for (int i = 0; i < set.size(); ++i) {
    CHECK_THAT((set[i].mat * dephased).trace().real(), WithinAbs(born(i), 1e-12));
    // Rank-1 projections of the dephased state are the born weights exactly.
    CHECK(max_abs_diff(set[i].mat * dephased * set[i].mat, born(i) * set[i].mat) < 1e-12);
  }
  CHECK_THAT(dephased.trace().real(), WithinAbs(1.0, 1e-12));
  CHECK(hermiticity_defect(dephased) < 1e-13);
  CHECK(min_eigenvalue(dephased) > -1e-12);
}

TEST_CASE("projector sets from random eigenbases satisfy the set invariants", "[core]") {
  qt::Rand rand(16);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 2 + trial % 6;
    const ProjectorSet set = projectors_from_eigenbasis(rand.hermitian(d));
    validate_projector_set(set, Tolerances{});  // throws on violation
    int total_rank = 0;
    for (const auto& p : set.items) total_rank += p.rank();
    CHECK(total_rank == d);
  }
}

TEST_CASE("projector constructors reject malformed inputs", "[core]") {
  CMatrix not_idem(2, 2);
  not_idem << 0.5, 0.0, 0.0, 0.5;
  CHECK_THROWS_AS(make_projector(not_idem), StateError);

  CMatrix not_herm(2, 2);
  not_herm << 1.0, 1.0, 0.0, 0.0;
  CHECK_THROWS_AS(make_projector(not_herm), StateError);

  CHECK_THROWS_AS(make_projector_set({basis_projector(2, 0)}), StateError);
  CHECK_THROWS_AS(make_projector_set({basis_projector(2, 0), basis_projector(2, 0)}), StateError);
}

TEST_CASE("standard projector sets", "[core]") {
  validate_projector_set(zbasis_projectors(5));
  const ProjectorSet parity = jzjz_projectors();
  validate_projector_set(parity);
  CHECK(parity[0].rank() == 2);
  CHECK(parity[1].rank() == 2);
  const ProjectorSet qec = logical_error_projectors(3);
  validate_projector_set(qec);
  CHECK(qec.dim() == 8);
  CHECK(qec[0].rank() == 2);
  CHECK(qec[1].rank() == 6);
}
