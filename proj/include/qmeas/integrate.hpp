// Fixed-step integration machinery shared by the collapse, ensemble and
// Lindblad flows: classical 4th-order stepping for deterministic runs,
// Euler-Maruyama for noisy weights, periodic re-symmetrization with drift
// checks, and the sampled trajectory record.
#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "core.hpp"

namespace qmeas {

enum class StepMethod { RungeKutta4, EulerMaruyama };

struct IntegratorParams {
  double step = 1e-3;
  double duration = 10.0;
  int renormalize_every = 10;  // steps between re-symmetrization + sampling
  StepMethod method = StepMethod::RungeKutta4;
  double breach_tol = 1e-6;  // drift beyond this aborts the run

  long step_count() const { return std::llround(duration / step); }

  void validate() const {
    if (!(step > 0.0)) throw StateError("integrator: step must be positive");
    if (!(duration > 0.0)) throw StateError("integrator: duration must be positive");
    if (step > duration) throw StateError("integrator: step exceeds duration");
    if (renormalize_every < 1) throw StateError("integrator: renormalize_every must be >= 1");
    if (step_count() < 1) throw StateError("integrator: zero steps");
    if (!(breach_tol > 0.0)) throw StateError("integrator: breach tolerance must be positive");
  }

  // Number of samples the driver will emit (s = 0, every renormalize_every
  // steps, and the final step).
  long sample_count() const {
    const long n = step_count();
    long c = 1 + n / renormalize_every;
    if (n % renormalize_every != 0) ++c;
    return c;
  }
};

struct TrajectorySample {
  double s = 0.0;
  DensityMatrix rho;
  double purity = 0.0;
  double fixed_point_distance = std::numeric_limits<double>::quiet_NaN();
  RVector diagonals;  // d_j = Tr(P_j rho)
  RVector weights;    // trajectory weights in effect (empty if n/a)
  double feedback_shift = std::numeric_limits<double>::quiet_NaN();
  double fidelity = std::numeric_limits<double>::quiet_NaN();
};

struct TrajectoryRecord {
  std::vector<TrajectorySample> samples;
  int dim = 0;
  int diagonal_count = 0;
  bool has_weights = false;
  bool has_feedback = false;
  bool has_fidelity = false;
  int sampled_outcome = -1;  // branch drawn at s=0 (FrozenBorn), -1 otherwise

  const TrajectorySample& front() const { return samples.front(); }
  const TrajectorySample& back() const { return samples.back(); }
  std::size_t size() const { return samples.size(); }
};

// rho <- rho + ds/6 (k1 + 2 k2 + 2 k3 + k4) for an autonomous rhs(rho).
template <typename Rhs>
inline void rk4_step(CMatrix& rho, double ds, Rhs&& rhs) {
  const CMatrix k1 = rhs(rho);
  const CMatrix k2 = rhs(CMatrix(rho + 0.5 * ds * k1));
  const CMatrix k3 = rhs(CMatrix(rho + 0.5 * ds * k2));
  const CMatrix k4 = rhs(CMatrix(rho + ds * k3));
  rho += (ds / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// Drift is asserted small *before* renormalizing so the cleanup cannot mask
// an integrator bug; then rho is re-symmetrized and rescaled to unit trace.
// Blowups keep trace and Hermiticity bit-exact under the collapse flows, so
// Tr(rho^2) <= (Tr rho)^2 (an equality bound for positive states) is checked
// as well.
inline void renormalize_state(CMatrix& rho, double breach_tol, double s) {
  const double herm = hermiticity_defect(rho);
  const double tr = trace_defect(rho);
  if (herm > breach_tol || tr > breach_tol)
    throw InvariantBreach("integration drift at s=" + std::to_string(s) +
                          ": hermiticity defect " + std::to_string(herm) + ", trace defect " +
                          std::to_string(tr));
  const double trace = rho.trace().real();
  if (rho.squaredNorm() > 1.1 * trace * trace + breach_tol)
    throw InvariantBreach("state norm blowup at s=" + std::to_string(s) + ": Tr(rho^2) = " +
                          std::to_string(rho.squaredNorm()));
  rho = 0.5 * (rho + rho.adjoint().eval());
  rho /= trace;
}

// Fixed-step driver. advance(rho, s, ds) performs one step in place;
// on_sample(step_index, s, rho) runs at s=0 and after every renormalization
// boundary (every renormalize_every steps plus the final step).
template <typename StepFn, typename SampleFn>
inline void drive_fixed_step(CMatrix& rho, const IntegratorParams& params, StepFn&& advance,
                             SampleFn&& on_sample) {
  params.validate();
  const long n = params.step_count();
  on_sample(0L, 0.0, rho);
  for (long k = 0; k < n; ++k) {
    advance(rho, double(k) * params.step, params.step);
    const long done = k + 1;
    if (done % params.renormalize_every == 0 || done == n) {
      const double s = double(done) * params.step;
      renormalize_state(rho, params.breach_tol, s);
      on_sample(done, s, rho);
    }
  }
}

// Least-squares slope of y against x.
inline double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw StateError("least_squares_slope: need at least two points");
  const double n = double(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0) throw StateError("least_squares_slope: degenerate abscissae");
  return (n * sxy - sx * sy) / denom;
}

}  // namespace qmeas
