// Lindblad master-equation baseline
//
//   d(rho)/dt = i[rho, H] + sum_mu L[L_mu] rho,
//   L[L] rho  = L rho L^dag - 1/2 {L^dag L, rho}
//
// and the numerical checks tying the collapse flow to the dissipator
// algebra: d(rho)/ds = -2 L[rho] P for pure states, the exchange identity
// L[rho]P + L[P]rho = L[rho - P]P = O((rho - P)^2), and the expansion of
// the collapse equation around its fixed point.
#pragma once

#include <optional>
#include <vector>

#include "collapse.hpp"
#include "core.hpp"
#include "integrate.hpp"

namespace qmeas {

// Rates are folded into the operators (L_mu carries sqrt(gamma)); an empty
// set means purely unitary evolution.
using LindbladSet = std::vector<CMatrix>;

// L rho L^dag - 1/2 rho L^dag L - 1/2 L^dag L rho; traceless and
// Hermiticity-preserving for any L.
inline CMatrix dissipator(const CMatrix& l, const DensityMatrix& rho) {
  require_same_dim(l, rho, "dissipator");
  const CMatrix ll = l.adjoint() * l;
  return l * rho * l.adjoint() - 0.5 * (rho * ll + ll * rho);
}

inline CMatrix master_rhs(const DensityMatrix& rho, const std::optional<Hamiltonian>& h,
                          const LindbladSet& ls) {
  require_square(rho, "master_rhs");
  CMatrix out = CMatrix::Zero(rho.rows(), rho.cols());
  if (h) out += unitary_rhs(rho, *h);
  for (const auto& l : ls) out += dissipator(l, rho);
  return out;
}

// Master-equation trajectory on the shared fixed-step driver. When a
// projector set is supplied its diagonals are recorded for side-by-side
// comparison with the collapse flows.
inline TrajectoryRecord integrate_master(const DensityMatrix& rho0,
                                         const std::optional<Hamiltonian>& h, const LindbladSet& ls,
                                         const IntegratorParams& params,
                                         const ProjectorSet* diagnostics = nullptr) {
  require_square(rho0, "integrate_master");
  if (h) require_same_dim(rho0, *h, "integrate_master");
  for (const auto& l : ls) require_same_dim(rho0, l, "integrate_master");
  if (params.method != StepMethod::RungeKutta4)
    throw StateError("integrate_master: deterministic flow, use the 4th-order stepper");

  TrajectoryRecord record;
  record.dim = static_cast<int>(rho0.rows());
  record.diagonal_count = diagnostics ? diagnostics->size() : 0;
  record.samples.reserve(static_cast<std::size_t>(params.sample_count()));

  auto rhs = [&](const CMatrix& r) { return master_rhs(r, h, ls); };
  CMatrix rho = rho0;
  drive_fixed_step(
      rho, params, [&](CMatrix& r, double, double ds) { rk4_step(r, ds, rhs); },
      [&](long, double s, const CMatrix& r) {
        TrajectorySample sample;
        sample.s = s;
        sample.rho = r;
        sample.purity = purity(r);
        if (diagnostics) sample.diagonals = diagonals(r, *diagnostics);
        record.samples.push_back(std::move(sample));
      });
  return record;
}

struct CollapseIdentityReport {
  // ||collapse_rhs(rho,P) + 2 L[rho]P||, defined for pure rho only.
  std::optional<double> pure_identity_residual;
  bool pure_check_skipped = false;
  // ||L[rho]P + L[P]rho|| paired with ||rho - P||^2; their ratio stays
  // bounded as rho -> P.
  double exchange_residual = 0.0;
  double rho_tilde_norm_sq = 0.0;
  // Residual of the fixed-point expansion
  //   collapse_rhs = 2 L[P] t - 2 P t P - 2 (I-P) t (I-P) - 2 t Tr(t P),
  // t = rho - P; exact for rank-1 P, absent otherwise.
  std::optional<double> expansion_residual;
};

inline CollapseIdentityReport check_collapse_identities(const DensityMatrix& rho,
                                                        const Projector& p) {
  require_same_dim(rho, p.mat, "check_collapse_identities");
  CollapseIdentityReport report;

  const CMatrix rhs = collapse_rhs(rho, p);
  if (std::abs(purity(rho) - 1.0) <= 1e-8) {
    report.pure_identity_residual = (rhs + 2.0 * dissipator(rho, p.mat)).norm();
  } else {
    report.pure_check_skipped = true;
  }

  const CMatrix tilde = rho - p.mat;
  report.exchange_residual = (dissipator(rho, p.mat) + dissipator(p.mat, rho)).norm();
  report.rho_tilde_norm_sq = tilde.squaredNorm();

  if (p.rank() == 1) {
    const CMatrix eye = CMatrix::Identity(rho.rows(), rho.cols());
    const CMatrix comp = eye - p.mat;
    const CMatrix expansion = 2.0 * dissipator(p.mat, tilde) - 2.0 * p.mat * tilde * p.mat -
                              2.0 * comp * tilde * comp -
                              2.0 * (p.mat * tilde).trace().real() * tilde;
    report.expansion_residual = (rhs - expansion).norm();
  }
  return report;
}

}  // namespace qmeas
