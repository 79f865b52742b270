// Shared helpers for the test suites: seeded random states/operators and
// matrix comparison shortcuts.
#pragma once

#include "qmeas/qmeas.hpp"

#include <vector>

namespace qt {

using namespace qmeas;

inline double max_abs_diff(const CMatrix& a, const CMatrix& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

struct Rand {
  RngStream stream;

  explicit Rand(std::uint64_t seed) : stream(seed) {}

  Complex cgauss() { return {stream.normal(), stream.normal()}; }

  CMatrix gaussian(int d) {
    CMatrix g(d, d);
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) g(r, c) = cgauss();
    return g;
  }

  PureState pure_state(int d) {
    PureState v(d);
    for (int i = 0; i < d; ++i) v(i) = cgauss();
    return v / v.norm();
  }

  DensityMatrix density(int d) {
    const CMatrix g = gaussian(d);
    CMatrix rho = g * g.adjoint();
    return rho / rho.trace().real();
  }

  CMatrix hermitian(int d) {
    const CMatrix g = gaussian(d);
    return 0.5 * (g + g.adjoint());
  }

  CMatrix unitary(int d) {
    Eigen::HouseholderQR<CMatrix> qr(gaussian(d));
    return qr.householderQ();
  }

  Projector rank1_projector(int d) {
    const PureState v = pure_state(d);
    return make_projector(v * v.adjoint(), "r");
  }

  ProjectorSet rank1_set(int d) {
    std::vector<int> sizes(static_cast<std::size_t>(d), 1);
    return projectors_from_columns(unitary(d), sizes);
  }

  ProjectorSet set_with_sizes(int d, const std::vector<int>& sizes) {
    return projectors_from_columns(unitary(d), sizes);
  }

  // Random mixed state with zero coherence between range(P) and its
  // complement; the sector where the collapse flow contracts at rate 2g.
  DensityMatrix block_diagonal_state(const Projector& p, double weight_in_range) {
    const int d = p.dim();
    const CMatrix comp = CMatrix::Identity(d, d) - p.mat;
    CMatrix inside = p.mat * density(d) * p.mat;
    CMatrix outside = comp * density(d) * comp;
    inside /= inside.trace().real();
    outside /= outside.trace().real();
    return weight_in_range * inside + (1.0 - weight_in_range) * outside;
  }

  // Mixed state guaranteed to be strictly inside the state space.
  DensityMatrix mixed_density(int d, double floor = 0.1) {
    return (1.0 - floor) * density(d) + floor * maximally_mixed(d);
  }
};

}  // namespace qt
