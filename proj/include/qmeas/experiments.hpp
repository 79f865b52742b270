// Reference experiments: a single qubit Rabi-oscillating under weak
// z-measurement with a measurement-dependent feedback shift of the Rabi
// frequency, the two-qubit Bell state under weak J_z (x) J_z measurement
// with a joint feedback shift, and the measurement-only error-correction
// demo on a logical/error subspace split.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "collapse.hpp"
#include "core.hpp"
#include "ensemble.hpp"
#include "integrate.hpp"
#include "rng.hpp"

namespace qmeas {

inline CMatrix matrix_sqrt_psd(const CMatrix& m) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (m + m.adjoint()));
  RVector vals = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().adjoint();
}

// Uhlmann fidelity (Tr sqrt(sqrt(a) b sqrt(a)))^2, clamped to [0,1].
inline double uhlmann_fidelity(const DensityMatrix& a, const DensityMatrix& b) {
  require_same_dim(a, b, "uhlmann_fidelity");
  const CMatrix sa = matrix_sqrt_psd(a);
  const CMatrix inner = sa * b * sa;
  Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (inner + inner.adjoint()),
                                            Eigen::EigenvaluesOnly);
  double tr = 0.0;
  for (int i = 0; i < es.eigenvalues().size(); ++i)
    tr += std::sqrt(std::max(0.0, es.eigenvalues()(i)));
  return std::clamp(tr * tr, 0.0, 1.0);
}

struct FeedbackParams {
  double gain = 0.0;            // proportional gain F; shift = -F * phase_err / ds
  double clamp_fraction = 0.5;  // |shift| <= clamp_fraction * omega
};

struct RabiFeedbackConfig {
  double omega = 1.0;    // Rabi frequency, rate per unit s
  double g = 0.1;        // measurement rate
  double epsilon = 0.0;  // weight-noise amplitude
  FeedbackParams feedback;
  IntegratorParams integrator{.step = 1e-3, .duration = 30.0};
  std::uint64_t seed = 0;
  std::optional<DensityMatrix> initial;  // default |0><0|

  void validate() const {
    if (!(omega > 0.0)) throw StateError("rabi config: omega must be positive");
    if (!(g >= 0.0)) throw StateError("rabi config: g must be >= 0");
    if (!(epsilon >= 0.0)) throw StateError("rabi config: epsilon must be >= 0");
    if (!(feedback.gain >= 0.0)) throw StateError("rabi config: feedback gain must be >= 0");
    if (!(feedback.clamp_fraction > 0.0 && feedback.clamp_fraction <= 1.0))
      throw StateError("rabi config: clamp fraction must lie in (0,1]");
  }
};

struct BellFeedbackConfig {
  double omega = 1.0;
  double g = 0.1;
  double epsilon = 0.0;
  FeedbackParams feedback;
  // Joint actuator: one shift applied to both qubits, measurement of the
  // J_z (x) J_z parity pair. Individual actuator: simultaneous measurement
  // of the commuting single-qubit z operators (rank-1 refinement) with
  // per-qubit shifts derived from the reduced states; this is the
  // configuration that does not cancel the perturbation.
  bool individual_shifts = false;
  IntegratorParams integrator{.step = 1e-3, .duration = 30.0};
  std::uint64_t seed = 0;
  std::optional<DensityMatrix> initial;  // default Bell (|00>+|11>)/sqrt(2)
};

struct QecConfig {
  int qubits = 3;  // repetition layout; dimension 2^qubits
  std::optional<ProjectorSet> split;  // default logical/error split of the register
  double logical_weight = 0.7;        // d_L(0) of the built initial state
  WeightStrategy strategy = WeightStrategy::instantaneous_born();
  double g = 1.0;
  IntegratorParams integrator{.step = 1e-3, .duration = 10.0};
  std::uint64_t seed = 0;
  std::optional<DensityMatrix> initial;  // overrides the built state
};

struct ExperimentRecord {
  TrajectoryRecord trajectory;
  double mean_fidelity = std::numeric_limits<double>::quiet_NaN();
  double final_fidelity = std::numeric_limits<double>::quiet_NaN();
  bool degenerate_stationary = false;  // d_L(0) = 1/2 exactly
};

namespace detail {

// Signed phase difference between two planar signals c = x - i*y extracted
// from the monitored and reference states; zero when either signal is too
// small to define a phase.
inline double planar_phase_error(Complex measured, Complex reference) {
  if (std::abs(measured) < 1e-9 || std::abs(reference) < 1e-9) return 0.0;
  return std::arg(measured * std::conj(reference));
}

struct MonitoredRabiSetup {
  DensityMatrix rho0;
  ProjectorSet set;
  Hamiltonian h_reference;
  std::function<CMatrix(const std::vector<double>&)> build_hamiltonian;
  std::function<std::vector<double>(const CMatrix&, const CMatrix&)> phase_errors;
  int actuators = 1;
  double omega = 1.0;
  double g = 0.0;
  double epsilon = 0.0;
  FeedbackParams feedback;
  IntegratorParams params;
  std::uint64_t seed = 0;
};

// Shared engine: integrates the monitored state next to the unperturbed
// reference on the same grid, applying the feedback shift computed at each
// step start (zero-order hold over the step). The deterministic drift uses
// the 4th-order stepper; weight noise enters as a per-step Euler-Maruyama
// kick g*ds*(rhs(w_noisy) - rhs(w_clean)) evaluated at the step start, which
// keeps the monitored state physical (plain first-order drift stepping
// inflates the purity by O(ds) per unit time and washes out the fidelity
// signal). With epsilon = 0, or g = 0 where the weights cannot act, the kick
// vanishes identically. params.method is ignored here.
inline ExperimentRecord run_monitored_rabi(MonitoredRabiSetup setup) {
  const bool stochastic = setup.epsilon > 0.0 && setup.g > 0.0;
  setup.params.method = StepMethod::RungeKutta4;
  setup.params.validate();

  ExperimentRecord result;
  TrajectoryRecord& record = result.trajectory;
  record.dim = static_cast<int>(setup.rho0.rows());
  record.diagonal_count = setup.set.size();
  record.has_weights = true;
  record.has_feedback = true;
  record.has_fidelity = true;
  record.samples.reserve(static_cast<std::size_t>(setup.params.sample_count()));

  RngStream stream(setup.seed);
  const WeightStrategy strategy = stochastic
                                      ? WeightStrategy::noisy_instantaneous_born(setup.epsilon)
                                      : WeightStrategy::instantaneous_born();
  WeightContext ctx;
  ctx.frozen = born_probabilities(setup.rho0, setup.set);

  CMatrix rho = setup.rho0;
  CMatrix ref = setup.rho0;
  std::vector<double> noise(static_cast<std::size_t>(setup.set.size()));
  std::vector<double> shifts(static_cast<std::size_t>(setup.actuators), 0.0);
  RVector last_weights = compute_weights(strategy, rho, setup.set, ctx);

  auto sample = [&](double s) {
    TrajectorySample out;
    out.s = s;
    out.rho = rho;
    out.purity = purity(rho);
    out.diagonals = diagonals(rho, setup.set);
    out.weights = last_weights;
    out.feedback_shift = shifts[0];
    out.fidelity = uhlmann_fidelity(rho, ref);
    record.samples.push_back(std::move(out));
  };

  const long n = setup.params.step_count();
  const double ds = setup.params.step;
  const double clamp_abs = setup.feedback.clamp_fraction * setup.omega;
  sample(0.0);
  for (long k = 0; k < n; ++k) {
    if (setup.feedback.gain > 0.0) {
      const auto errors = setup.phase_errors(rho, ref);
      for (int a = 0; a < setup.actuators; ++a)
        shifts[static_cast<std::size_t>(a)] = std::clamp(
            -setup.feedback.gain * errors[static_cast<std::size_t>(a)] / ds, -clamp_abs, clamp_abs);
    }
    const CMatrix h = setup.build_hamiltonian(shifts);
    const WeightStrategy drift_strategy = WeightStrategy::instantaneous_born();
    auto drift = [&](const CMatrix& r) {
      return CMatrix(unitary_rhs(r, h) +
                     setup.g * ensemble_rhs(r, setup.set, compute_weights(drift_strategy, r,
                                                                          setup.set, ctx)));
    };
    if (stochastic) {
      stream.fill_normal(noise);
      WeightContext step_ctx = ctx;
      step_ctx.noise = noise;
      step_ctx.noise_scale = std::sqrt(ds);
      const CMatrix at_start = rho;
      const RVector clean = compute_weights(drift_strategy, at_start, setup.set, ctx);
      last_weights = compute_weights(strategy, at_start, setup.set, step_ctx);
      rk4_step(rho, ds, drift);
      rho += ds * setup.g * (ensemble_rhs(at_start, setup.set, last_weights) -
                             ensemble_rhs(at_start, setup.set, clean));
    } else {
      rk4_step(rho, ds, drift);
      last_weights = compute_weights(drift_strategy, rho, setup.set, ctx);
    }
    rk4_step(ref, ds, [&](const CMatrix& r) { return unitary_rhs(r, setup.h_reference); });

    const long done = k + 1;
    if (done % setup.params.renormalize_every == 0 || done == n) {
      const double s = double(done) * ds;
      renormalize_state(rho, setup.params.breach_tol, s);
      renormalize_state(ref, setup.params.breach_tol, s);
      sample(s);
    }
  }

  double acc = 0.0;
  for (const auto& s : record.samples) acc += s.fidelity;
  result.mean_fidelity = acc / double(record.samples.size());
  result.final_fidelity = record.back().fidelity;
  return result;
}

}  // namespace detail

// Single qubit: H(s) = (Omega + shift(s))/2 sigma_x against the z-basis
// measurement; the phase signal lives in the y-z Rabi plane.
inline ExperimentRecord rabi_feedback_run(const RabiFeedbackConfig& cfg) {
  cfg.validate();
  detail::MonitoredRabiSetup setup;
  setup.rho0 = cfg.initial ? *cfg.initial : pure_density(basis_state(2, 0));
  if (setup.rho0.rows() != 2) throw DimensionError("rabi_feedback_run: expected a qubit state");
  setup.set = zbasis_projectors(2);
  setup.h_reference = 0.5 * cfg.omega * pauli_x();
  setup.build_hamiltonian = [omega = cfg.omega](const std::vector<double>& shifts) {
    return CMatrix(0.5 * (omega + shifts[0]) * pauli_x());
  };
  const CMatrix sz = pauli_z();
  const CMatrix sy = pauli_y();
  setup.phase_errors = [sz, sy](const CMatrix& rho, const CMatrix& ref) {
    const Complex cm(real_expectation(rho, sz), -real_expectation(rho, sy));
    const Complex cr(real_expectation(ref, sz), -real_expectation(ref, sy));
    return std::vector<double>{detail::planar_phase_error(cm, cr)};
  };
  setup.actuators = 1;
  setup.omega = cfg.omega;
  setup.g = cfg.g;
  setup.epsilon = cfg.epsilon;
  setup.feedback = cfg.feedback;
  setup.params = cfg.integrator;
  setup.seed = cfg.seed;
  return detail::run_monitored_rabi(std::move(setup));
}

// Bell pair under joint Rabi drive. Joint actuator: parity measurement
// {P+, P-} and one collective shift steered by the <sigma_z sigma_z>
// oscillation. Individual actuator: z (x) z product measurement with
// per-qubit shifts from the reduced states (runs, but the reduced Bell
// state carries no phase signal; kept as the documented failure mode).
inline ExperimentRecord bell_jzjz_run(const BellFeedbackConfig& cfg) {
  if (!(cfg.omega > 0.0)) throw StateError("bell config: omega must be positive");
  if (!(cfg.g >= 0.0) || !(cfg.epsilon >= 0.0))
    throw StateError("bell config: rates must be >= 0");
  detail::MonitoredRabiSetup setup;
  setup.rho0 = cfg.initial ? *cfg.initial : pure_density(bell_state());
  if (setup.rho0.rows() != 4) throw DimensionError("bell_jzjz_run: expected a two-qubit state");
  const CMatrix eye2 = CMatrix::Identity(2, 2);
  const CMatrix sx1 = kron(pauli_x(), eye2);
  const CMatrix sx2 = kron(eye2, pauli_x());
  setup.h_reference = 0.5 * cfg.omega * (sx1 + sx2);
  if (cfg.individual_shifts) {
    setup.set = zbasis_projectors(4);
    setup.actuators = 2;
    setup.build_hamiltonian = [omega = cfg.omega, sx1, sx2](const std::vector<double>& shifts) {
      return CMatrix(0.5 * (omega + shifts[0]) * sx1 + 0.5 * (omega + shifts[1]) * sx2);
    };
    const CMatrix sz = pauli_z();
    const CMatrix sy = pauli_y();
    setup.phase_errors = [sz, sy](const CMatrix& rho, const CMatrix& ref) {
      std::vector<double> errors(2, 0.0);
      for (int q = 0; q < 2; ++q) {
        const Subsystem keep = q == 0 ? Subsystem::A : Subsystem::B;
        const CMatrix r_m = partial_trace(rho, 2, 2, keep);
        const CMatrix r_r = partial_trace(ref, 2, 2, keep);
        const Complex cm(real_expectation(r_m, sz), -real_expectation(r_m, sy));
        const Complex cr(real_expectation(r_r, sz), -real_expectation(r_r, sy));
        errors[static_cast<std::size_t>(q)] = detail::planar_phase_error(cm, cr);
      }
      return errors;
    };
  } else {
    setup.set = jzjz_projectors();
    setup.actuators = 1;
    setup.build_hamiltonian = [omega = cfg.omega, sx1, sx2](const std::vector<double>& shifts) {
      return CMatrix(0.5 * (omega + shifts[0]) * (sx1 + sx2));
    };
    const CMatrix zz = kron(pauli_z(), pauli_z());
    const CMatrix quad = 0.5 * (kron(pauli_y(), pauli_z()) + kron(pauli_z(), pauli_y()));
    setup.phase_errors = [zz, quad](const CMatrix& rho, const CMatrix& ref) {
      const Complex cm(real_expectation(rho, zz), -real_expectation(rho, quad));
      const Complex cr(real_expectation(ref, zz), -real_expectation(ref, quad));
      return std::vector<double>{detail::planar_phase_error(cm, cr)};
    };
  }
  setup.omega = cfg.omega;
  setup.g = cfg.g;
  setup.epsilon = cfg.epsilon;
  setup.feedback = cfg.feedback;
  setup.params = cfg.integrator;
  setup.seed = cfg.seed;
  return detail::run_monitored_rabi(std::move(setup));
}

// Default initial state of the error-correction demo: logical component
// (|0..0>+|1..1>)/sqrt(2) with weight d_L(0), orthogonal error component
// carrying the rest.
inline DensityMatrix qec_initial_state(int qubits, double logical_weight) {
  if (qubits < 2) throw DimensionError("qec_initial_state: need at least 2 qubits");
  if (!(logical_weight >= 0.0 && logical_weight <= 1.0))
    throw StateError("qec_initial_state: logical weight must lie in [0,1]");
  const int dim = 1 << qubits;
  PureState logical = (basis_state(dim, 0) + basis_state(dim, dim - 1)) / std::sqrt(2.0);
  PureState error = (basis_state(dim, 1) + basis_state(dim, dim - 2)) / std::sqrt(2.0);
  PureState psi = std::sqrt(logical_weight) * logical + std::sqrt(1.0 - logical_weight) * error;
  return pure_density(psi);
}

// Measurement-only error correction: repeated weak measurement of the
// logical/error split drives d_L to 1 iff d_L(0) > 1/2, with the intra-block
// coherences preserved up to the radial rescaling. No feedback is applied.
inline ExperimentRecord qec_demo_run(const QecConfig& cfg) {
  const ProjectorSet split = cfg.split ? *cfg.split : logical_error_projectors(cfg.qubits);
  if (split.size() != 2) throw StateError("qec_demo_run: expected a two-projector split");
  DensityMatrix rho0 = cfg.initial ? *cfg.initial : qec_initial_state(cfg.qubits, cfg.logical_weight);
  if (rho0.rows() != split.dim()) throw DimensionError("qec_demo_run: dimension mismatch");

  IntegratorParams params = cfg.integrator;
  params.method = cfg.strategy.kind == WeightStrategy::Kind::NoisyInstantaneousBorn
                      ? StepMethod::EulerMaruyama
                      : StepMethod::RungeKutta4;

  ExperimentRecord result;
  const double d_l0 = (split[0].mat * rho0).trace().real();
  result.degenerate_stationary = std::abs(d_l0 - 0.5) < 1e-12;
  result.trajectory = integrate_ensemble(rho0, split, cfg.strategy, std::nullopt, cfg.g, params,
                                         cfg.seed);

  // Fidelity against the normalized logical component of the initial state.
  if (d_l0 > 1e-12) {
    const DensityMatrix target = projective_collapse(rho0, split[0]);
    for (auto& s : result.trajectory.samples) s.fidelity = uhlmann_fidelity(s.rho, target);
    result.trajectory.has_fidelity = true;
    result.mean_fidelity = 0.0;
    for (const auto& s : result.trajectory.samples) result.mean_fidelity += s.fidelity;
    result.mean_fidelity /= double(result.trajectory.samples.size());
    result.final_fidelity = result.trajectory.back().fidelity;
  }
  return result;
}

}  // namespace qmeas
