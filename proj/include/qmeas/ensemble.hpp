// Trajectory-weighted ensemble evolution
//
//   d(rho)/ds = sum_i w_i (rho P_i + P_i rho - 2 rho Tr(P_i rho))
//
// with pluggable weight rules (uniform, frozen Born, instantaneous Born,
// noisy instantaneous Born, fixed outcome), the diagonal replicator flow,
// the off-diagonal closed form it implies, and a seeded Monte-Carlo runner.
#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "core.hpp"
#include "integrate.hpp"
#include "rng.hpp"

namespace qmeas {

inline void validate_weights(const RVector& w, double tol = 1e-12) {
  for (int i = 0; i < w.size(); ++i)
    if (w(i) < -tol) throw StateError("weight vector: negative weight " + std::to_string(w(i)));
  if (std::abs(w.sum() - 1.0) > tol)
    throw StateError("weight vector: sums to " + std::to_string(w.sum()));
}

struct WeightStrategy {
  enum class Kind { Uniform, FrozenBorn, InstantaneousBorn, NoisyInstantaneousBorn, FixedOutcome };

  Kind kind = Kind::InstantaneousBorn;
  double epsilon = 0.0;  // noise amplitude, units s^{-1/2}
  int outcome = 0;       // FixedOutcome branch index

  // Strategies that consume random draws (branch sampling or weight noise).
  bool stochastic() const {
    return kind == Kind::FrozenBorn || (kind == Kind::NoisyInstantaneousBorn && epsilon > 0.0);
  }

  static WeightStrategy uniform() { return {Kind::Uniform}; }
  static WeightStrategy frozen_born() { return {Kind::FrozenBorn}; }
  static WeightStrategy instantaneous_born() { return {Kind::InstantaneousBorn}; }
  static WeightStrategy noisy_instantaneous_born(double eps) {
    if (eps < 0.0) throw StateError("weight noise amplitude must be >= 0");
    return {Kind::NoisyInstantaneousBorn, eps};
  }
  static WeightStrategy fixed_outcome(int index) {
    return {Kind::FixedOutcome, 0.0, index};
  }
};

struct WeightContext {
  RVector frozen;                     // Born probabilities of rho(0), for FrozenBorn
  std::span<const double> noise{};    // standard normal draws, one per projector
  double noise_scale = 0.0;           // sqrt(ds); per-step kick is eps*sqrt(ds)*xi
};

namespace detail {

// Born readout for integrator stage states: stage matrices may graze the
// boundary of the state space by O(ds^2), so small negative values are
// clamped instead of rejected and the vector is renormalized.
inline RVector stage_born(const DensityMatrix& rho, const ProjectorSet& set) {
  if (rho.rows() != set.dim()) throw DimensionError("stage_born: dimension mismatch");
  RVector p(set.size());
  for (int i = 0; i < set.size(); ++i) {
    const double v = (set[i].mat * rho).trace().real();
    if (v < -1e-6 || v > 1.0 + 1e-6)
      throw StateError("weight evaluation: probability " + std::to_string(v) + " out of range");
    p(i) = std::clamp(v, 0.0, 1.0);
  }
  const double sum = p.sum();
  if (sum <= 0.0) throw StateError("weight evaluation: probabilities sum to zero");
  return p / sum;
}

}  // namespace detail

// Weight rule evaluation. The noisy rule perturbs the instantaneous Born
// vector by eps*noise_scale*xi_i, clamps to [0,1] and renormalizes; a
// pathological draw that clamps everything to zero is an error rather than
// invented dynamics.
inline RVector compute_weights(const WeightStrategy& strategy, const DensityMatrix& rho,
                               const ProjectorSet& set, const WeightContext& ctx = {}) {
  const int n = set.size();
  switch (strategy.kind) {
    case WeightStrategy::Kind::Uniform:
      return RVector::Constant(n, 1.0 / double(n));
    case WeightStrategy::Kind::FrozenBorn:
      if (ctx.frozen.size() != n)
        throw StateError("compute_weights: FrozenBorn requires the stored initial Born vector");
      return ctx.frozen;
    case WeightStrategy::Kind::InstantaneousBorn:
      return detail::stage_born(rho, set);
    case WeightStrategy::Kind::NoisyInstantaneousBorn: {
      RVector w = detail::stage_born(rho, set);
      if (!ctx.noise.empty()) {
        if (static_cast<int>(ctx.noise.size()) != n)
          throw DimensionError("compute_weights: need one noise draw per projector");
        for (int i = 0; i < n; ++i)
          w(i) = std::clamp(w(i) + strategy.epsilon * ctx.noise_scale * ctx.noise[i], 0.0, 1.0);
      }
      const double sum = w.sum();
      if (sum <= 0.0)
        throw StateError("compute_weights: all weights clamped to zero");
      return w / sum;
    }
    case WeightStrategy::Kind::FixedOutcome: {
      if (strategy.outcome < 0 || strategy.outcome >= n)
        throw DimensionError("compute_weights: fixed outcome index out of range");
      RVector w = RVector::Zero(n);
      w(strategy.outcome) = 1.0;
      return w;
    }
  }
  throw StateError("compute_weights: unknown strategy");
}

// sum_i w_i (rho P_i + P_i rho - 2 rho Tr(P_i rho)); evaluated through the
// weighted projector W = sum_i w_i P_i, which gives the identical
// {rho, W} - 2 Tr(W rho) rho.
inline CMatrix ensemble_rhs(const DensityMatrix& rho, const ProjectorSet& set, const RVector& w) {
  if (w.size() != set.size()) throw DimensionError("ensemble_rhs: weight count mismatch");
  if (rho.rows() != set.dim()) throw DimensionError("ensemble_rhs: dimension mismatch");
  CMatrix weighted = CMatrix::Zero(rho.rows(), rho.cols());
  for (int i = 0; i < set.size(); ++i) weighted += w(i) * set[i].mat;
  const double wbar = (weighted * rho).trace().real();
  return rho * weighted + weighted * rho - 2.0 * wbar * rho;
}

// Diagonal projections d_j = Tr(P_j rho).
inline RVector diagonals(const DensityMatrix& rho, const ProjectorSet& set) {
  if (rho.rows() != set.dim()) throw DimensionError("diagonals: dimension mismatch");
  RVector d(set.size());
  for (int i = 0; i < set.size(); ++i) d(i) = (set[i].mat * rho).trace().real();
  return d;
}

// Replicator-like flow of the diagonal projections:
// d(d_j)/ds = 2 d_j (w_j - wbar) with wbar = sum_i w_i d_i. Weights above
// the weighted mean grow, below it decay, and zeros stay zero.
inline RVector diagonal_rhs(const RVector& d, const RVector& w) {
  if (d.size() != w.size()) throw DimensionError("diagonal_rhs: size mismatch");
  const double wbar = w.dot(d);
  return (2.0 * d.array() * (w.array() - wbar)).matrix();
}

// Two-outcome specialization d' = 2 d (1-d) (w0 - w1); the qubit fast path
// for {|0><0|, |1><1|} measurements and two-block subspace splits.
inline double two_outcome_diagonal_rhs(double d, double w0, double w1) {
  return 2.0 * d * (1.0 - d) * (w0 - w1);
}

// Reconstructs rho(s) from rho(0) and the diagonal flow:
//   P_j rho(s) P_k = P_j rho(0) P_k sqrt(d_j(s) d_k(s) / (d_j(0) d_k(0))).
// Blocks that vanish at s=0 stay absent (support invariance); a nonzero
// block over a vanishing initial diagonal is an error.
inline DensityMatrix offdiagonal_closed_form(const DensityMatrix& rho0, const ProjectorSet& set,
                                             const RVector& d_now, const RVector& d_init,
                                             double tol_prob = 1e-12) {
  if (rho0.rows() != set.dim()) throw DimensionError("offdiagonal_closed_form: dimension mismatch");
  if (d_now.size() != set.size() || d_init.size() != set.size())
    throw DimensionError("offdiagonal_closed_form: diagonal count mismatch");
  CMatrix out = CMatrix::Zero(rho0.rows(), rho0.cols());
  for (int j = 0; j < set.size(); ++j)
    for (int k = 0; k < set.size(); ++k) {
      const CMatrix block = set[j].mat * rho0 * set[k].mat;
      if (block.cwiseAbs().maxCoeff() < 1e-13) continue;
      const double denom = d_init(j) * d_init(k);
      if (denom <= tol_prob)
        throw StateError("offdiagonal_closed_form: block (" + std::to_string(j) + "," +
                         std::to_string(k) + ") sits on a vanishing initial diagonal");
      out += block * std::sqrt(std::max(0.0, d_now(j) * d_now(k)) / denom);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Integration

namespace detail {

inline void check_method(const WeightStrategy& strategy, const IntegratorParams& params) {
  const bool noisy = strategy.kind == WeightStrategy::Kind::NoisyInstantaneousBorn;
  if (noisy && params.method != StepMethod::EulerMaruyama)
    throw StateError("noisy weights integrate with the Euler-Maruyama method");
  if (!noisy && params.method != StepMethod::RungeKutta4)
    throw StateError("deterministic weight strategies integrate with the 4th-order stepper");
}

}  // namespace detail

// One weighted trajectory. FrozenBorn samples its branch once at s=0 from
// the Born probabilities of rho0 (recorded in sampled_outcome) and then
// runs as FixedOutcome; NoisyInstantaneousBorn draws fresh weight noise
// every Euler-Maruyama step. The recorded weights of a sample are the ones
// applied over the preceding step (the noise-free rule at s=0).
inline TrajectoryRecord integrate_ensemble(const DensityMatrix& rho0, const ProjectorSet& set,
                                           const WeightStrategy& strategy,
                                           const std::optional<Hamiltonian>& h, double g,
                                           const IntegratorParams& params, std::uint64_t seed) {
  if (rho0.rows() != set.dim()) throw DimensionError("integrate_ensemble: dimension mismatch");
  if (h) require_same_dim(rho0, *h, "integrate_ensemble");
  if (!(g >= 0.0)) throw StateError("integrate_ensemble: measurement rate must be >= 0");
  detail::check_method(strategy, params);

  WeightContext ctx;
  ctx.frozen = born_probabilities(rho0, set);

  RngStream stream(seed);
  WeightStrategy effective = strategy;
  TrajectoryRecord record;
  record.dim = static_cast<int>(rho0.rows());
  record.diagonal_count = set.size();
  record.has_weights = true;
  if (strategy.kind == WeightStrategy::Kind::FrozenBorn) {
    std::vector<double> probs(ctx.frozen.data(), ctx.frozen.data() + ctx.frozen.size());
    record.sampled_outcome = stream.discrete(probs);
    effective = WeightStrategy::fixed_outcome(record.sampled_outcome);
  }
  record.samples.reserve(static_cast<std::size_t>(params.sample_count()));

  RVector last_weights = compute_weights(effective, rho0, set, ctx);
  std::vector<double> noise(static_cast<std::size_t>(set.size()));

  auto sample = [&](long, double s, const CMatrix& r) {
    TrajectorySample out;
    out.s = s;
    out.rho = r;
    out.purity = purity(r);
    out.diagonals = diagonals(r, set);
    out.weights = last_weights;
    record.samples.push_back(std::move(out));
  };

  CMatrix rho = rho0;
  if (params.method == StepMethod::EulerMaruyama) {
    auto advance = [&](CMatrix& r, double, double ds) {
      stream.fill_normal(noise);
      WeightContext step_ctx = ctx;
      step_ctx.noise = noise;
      step_ctx.noise_scale = std::sqrt(ds);
      last_weights = compute_weights(effective, r, set, step_ctx);
      CMatrix drift = g * ensemble_rhs(r, set, last_weights);
      if (h) drift += unitary_rhs(r, *h);
      r += ds * drift;
    };
    drive_fixed_step(rho, params, advance, sample);
  } else {
    auto rhs = [&](const CMatrix& r) {
      last_weights = compute_weights(effective, r, set, ctx);
      CMatrix out = g * ensemble_rhs(r, set, last_weights);
      if (h) out += unitary_rhs(r, *h);
      return out;
    };
    drive_fixed_step(
        rho, params, [&](CMatrix& r, double, double ds) { rk4_step(r, ds, rhs); }, sample);
  }
  return record;
}

struct EnsembleOptions {
  int threads = 1;
  // Trajectories are reduced in fixed chunks so the aggregate is bit-exact
  // for any thread count.
  int chunk_size = 32;
  bool record_mean = true;
};

struct EnsembleStatistics {
  long trajectories = 0;
  std::vector<long> outcome_counts;
  RVector frequencies;
  RVector born_initial;   // Born probabilities of rho(0), the Eq.-(3) reference
  RVector z_scores;       // binomial z-scores of the frequencies vs born_initial
  bool deterministic_outcomes = false;
  std::vector<double> mean_times;
  std::vector<CMatrix> mean_states;  // pointwise mean trajectory on the shared grid
  std::vector<std::uint64_t> trajectory_seeds;
};

// Sample grid of the fixed-step driver, shared by every trajectory.
inline std::vector<double> sample_times(const IntegratorParams& params) {
  params.validate();
  std::vector<double> times{0.0};
  const long n = params.step_count();
  for (long done = 1; done <= n; ++done)
    if (done % params.renormalize_every == 0 || done == n)
      times.push_back(double(done) * params.step);
  return times;
}

// N independent trajectories with per-trajectory streams derived from the
// master seed. The outcome of a trajectory is its sampled branch
// (FrozenBorn) or the dominant final diagonal otherwise.
inline EnsembleStatistics run_ensemble(long n, const DensityMatrix& rho0, const ProjectorSet& set,
                                       const WeightStrategy& strategy,
                                       const std::optional<Hamiltonian>& h, double g,
                                       const IntegratorParams& params, std::uint64_t master_seed,
                                       const EnsembleOptions& options = {}) {
  if (n < 1) throw StateError("run_ensemble: need at least one trajectory");
  const auto times = sample_times(params);
  const long n_samples = static_cast<long>(times.size());
  const long chunk = std::max(1, options.chunk_size);
  const long n_chunks = (n + chunk - 1) / chunk;

  std::vector<std::vector<CMatrix>> chunk_sums(static_cast<std::size_t>(n_chunks));
  std::vector<int> outcomes(static_cast<std::size_t>(n), -1);
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(n), 0);

  std::atomic<long> next_chunk{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&]() {
    try {
      for (long c; (c = next_chunk.fetch_add(1)) < n_chunks;) {
        const long begin = c * chunk;
        const long end = std::min(n, begin + chunk);
        auto& sums = chunk_sums[static_cast<std::size_t>(c)];
        if (options.record_mean)
          sums.assign(static_cast<std::size_t>(n_samples),
                      CMatrix::Zero(rho0.rows(), rho0.cols()));
        for (long i = begin; i < end; ++i) {
          const std::uint64_t seed = derive_stream_seed(master_seed, static_cast<std::uint64_t>(i));
          seeds[static_cast<std::size_t>(i)] = seed;
          TrajectoryRecord record = integrate_ensemble(rho0, set, strategy, h, g, params, seed);
          if (static_cast<long>(record.size()) != n_samples)
            throw InvariantBreach("run_ensemble: trajectory sample grid mismatch");
          if (record.sampled_outcome >= 0) {
            outcomes[static_cast<std::size_t>(i)] = record.sampled_outcome;
          } else {
            int arg = 0;
            record.back().diagonals.maxCoeff(&arg);
            outcomes[static_cast<std::size_t>(i)] = arg;
          }
          if (options.record_mean)
            for (long j = 0; j < n_samples; ++j)
              sums[static_cast<std::size_t>(j)] += record.samples[static_cast<std::size_t>(j)].rho;
        }
      }
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  };

  const int thread_count = std::clamp<long>(options.threads, 1, n_chunks);
  if (thread_count <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(thread_count));
    for (int t = 0; t < thread_count; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  EnsembleStatistics stats;
  stats.trajectories = n;
  stats.born_initial = born_probabilities(rho0, set);
  stats.deterministic_outcomes = !strategy.stochastic();
  stats.outcome_counts.assign(static_cast<std::size_t>(set.size()), 0);
  for (int o : outcomes) ++stats.outcome_counts[static_cast<std::size_t>(o)];
  stats.frequencies = RVector(set.size());
  stats.z_scores = RVector(set.size());
  for (int i = 0; i < set.size(); ++i) {
    const double freq = double(stats.outcome_counts[static_cast<std::size_t>(i)]) / double(n);
    stats.frequencies(i) = freq;
    const double p = stats.born_initial(i);
    const double sd = std::sqrt(p * (1.0 - p) / double(n));
    stats.z_scores(i) = sd > 0.0 ? (freq - p) / sd : std::numeric_limits<double>::quiet_NaN();
  }
  stats.trajectory_seeds = std::move(seeds);
  if (options.record_mean) {
    stats.mean_times = times;
    stats.mean_states.assign(static_cast<std::size_t>(n_samples),
                             CMatrix::Zero(rho0.rows(), rho0.cols()));
    for (long c = 0; c < n_chunks; ++c)
      for (long j = 0; j < n_samples; ++j)
        stats.mean_states[static_cast<std::size_t>(j)] +=
            chunk_sums[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)];
    for (auto& m : stats.mean_states) m /= double(n);
  }
  return stats;
}

}  // namespace qmeas
