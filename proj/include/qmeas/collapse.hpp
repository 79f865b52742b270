// Single-trajectory collapse dynamics. The flow
//
//   d(rho)/ds = i[rho, H] + g (rho P + P rho - 2 rho Tr(P rho))
//
// drives rho toward the measurement fixed point P rho P / Tr(P rho) while
// preserving trace, Hermiticity and purity; the s in [0,1] geodesic map is
// the closed-form counterpart used as a cross-check oracle.
#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "core.hpp"
#include "integrate.hpp"

namespace qmeas {

inline void require_geodesic_time(double s) {
  if (!(s >= 0.0 && s <= 1.0))
    throw StateError("geodesic time must lie in [0,1], got " + std::to_string(s));
}

// Q(s) psi / |Q(s) psi| with Q(s) = (1-s) I + s P. At s=1 this is the
// projective collapse of the pure state.
inline PureState geodesic_map_pure(const PureState& psi, const Projector& p, double s,
                                   double tol_prob = 1e-12) {
  require_geodesic_time(s);
  if (psi.size() != p.dim()) throw DimensionError("geodesic_map_pure: dimension mismatch");
  const PureState mapped = (1.0 - s) * psi + s * (p.mat * psi);
  const double norm = mapped.norm();
  if (norm * norm <= tol_prob)
    throw StateError("geodesic_map_pure: state annihilated at s=" + std::to_string(s));
  return mapped / norm;
}

inline double geodesic_denominator(const DensityMatrix& rho, const Projector& p, double s) {
  const double prob = (p.mat * rho).trace().real();
  return (1.0 - s) * (1.0 - s) + (2.0 * s - s * s) * prob;
}

// Density-matrix form of the geodesic map; trace is maintained exactly by
// the normalizing denominator.
inline DensityMatrix geodesic_map_density(const DensityMatrix& rho, const Projector& p, double s,
                                          double tol_prob = 1e-12) {
  require_geodesic_time(s);
  require_same_dim(rho, p.mat, "geodesic_map_density");
  const double denom = geodesic_denominator(rho, p, s);
  if (denom <= tol_prob)
    throw StateError("geodesic_map_density: vanishing denominator at s=" + std::to_string(s));
  const CMatrix pr = p.mat * rho;
  const CMatrix numer = (1.0 - s) * (1.0 - s) * rho + s * (1.0 - s) * (rho * p.mat + pr) +
                        s * s * (pr * p.mat);
  return numer / denom;
}

// rho P + P rho - 2 rho Tr(P rho): traceless, Hermitian, nonlinear in rho.
inline CMatrix collapse_rhs(const DensityMatrix& rho, const Projector& p) {
  require_same_dim(rho, p.mat, "collapse_rhs");
  const double prob = (p.mat * rho).trace().real();
  return rho * p.mat + p.mat * rho - 2.0 * prob * rho;
}

// d|psi>/ds = (P - <psi|P|psi>) |psi>; the component along P grows at the
// expense of the orthogonal ones, with <psi|dpsi/ds> = 0.
inline CVector pure_state_rhs(const PureState& psi, const Projector& p) {
  if (psi.size() != p.dim()) throw DimensionError("pure_state_rhs: dimension mismatch");
  const double expect = (psi.adjoint() * p.mat * psi).value().real();
  return p.mat * psi - expect * psi;
}

// von Neumann term i[rho, H].
inline CMatrix unitary_rhs(const DensityMatrix& rho, const Hamiltonian& h) {
  require_same_dim(rho, h, "unitary_rhs");
  return Complex(0.0, 1.0) * (rho * h - h * rho);
}

// Frobenius distance to the fixed point P rho P / Tr(P rho).
inline double fixed_point_residual(const DensityMatrix& rho, const Projector& p,
                                   double tol_prob = 1e-12) {
  return (rho - projective_collapse(rho, p, tol_prob)).norm();
}

// Deterministic collapse trajectory. The fixed-point reference for the
// distance diagnostic is computed once from rho0 (the fixed point reached
// from the initial state); diagonals record (Tr(P rho), 1 - Tr(P rho)).
inline TrajectoryRecord integrate_trajectory(const DensityMatrix& rho0, const Projector& p,
                                             const std::optional<Hamiltonian>& h, double g,
                                             const IntegratorParams& params) {
  require_same_dim(rho0, p.mat, "integrate_trajectory");
  if (h) require_same_dim(rho0, *h, "integrate_trajectory");
  if (!(g >= 0.0)) throw StateError("integrate_trajectory: measurement rate must be >= 0");

  const DensityMatrix fixed_point = projective_collapse(rho0, p);
  TrajectoryRecord record;
  record.dim = static_cast<int>(rho0.rows());
  record.diagonal_count = 2;
  record.samples.reserve(static_cast<std::size_t>(params.sample_count()));

  auto rhs = [&](const CMatrix& r) {
    CMatrix out = g * collapse_rhs(r, p);
    if (h) out += unitary_rhs(r, *h);
    return out;
  };
  CMatrix rho = rho0;
  drive_fixed_step(
      rho, params, [&](CMatrix& r, double, double ds) { rk4_step(r, ds, rhs); },
      [&](long, double s, const CMatrix& r) {
        TrajectorySample sample;
        sample.s = s;
        sample.rho = r;
        sample.purity = purity(r);
        sample.fixed_point_distance = (r - fixed_point).norm();
        const double d0 = (p.mat * r).trace().real();
        sample.diagonals = RVector(2);
        sample.diagonals << d0, 1.0 - d0;
        record.samples.push_back(std::move(sample));
      });
  return record;
}

struct ExponentFitOptions {
  // Fit window [s_min, s_max]; NaN means "second half of the record" and
  // "end of the record" respectively.
  double s_min = std::numeric_limits<double>::quiet_NaN();
  double s_max = std::numeric_limits<double>::quiet_NaN();
  double floor = 1e-12;  // samples with ||rho - rho*|| below this are excluded
  int min_points = 10;
};

// Least-squares slope of ln||rho - rho*|| against s over the asymptotic
// tail; -2g for the collapse flow. Refuses to fit when the tail is below
// the numerical floor (already-collapsed input).
inline double convergence_exponent(const TrajectoryRecord& record, const Projector& p,
                                   const ExponentFitOptions& options = {}) {
  if (record.samples.size() < 2) throw StateError("convergence_exponent: empty record");
  const DensityMatrix fixed_point = projective_collapse(record.front().rho, p);
  const double s_end = record.back().s;
  const double lo = std::isnan(options.s_min) ? 0.5 * s_end : options.s_min;
  const double hi = std::isnan(options.s_max) ? s_end : options.s_max;
  std::vector<double> xs, ys;
  for (const auto& sample : record.samples) {
    if (sample.s < lo || sample.s > hi) continue;
    const double r = (sample.rho - fixed_point).norm();
    if (r < options.floor) continue;
    xs.push_back(sample.s);
    ys.push_back(std::log(r));
  }
  if (static_cast<int>(xs.size()) < options.min_points)
    throw StateError("convergence_exponent: only " + std::to_string(xs.size()) +
                     " samples in the asymptotic tail, fit refused");
  return least_squares_slope(xs, ys);
}

}  // namespace qmeas
