// Dense complex-matrix quantum state algebra: density matrices, projector
// sets, Born probabilities, projective collapse, partial trace and Kraus
// channels, plus the validators used across the integrators.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <unsupported/Eigen/KroneckerProduct>

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qmeas {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RVector = Eigen::VectorXd;

// Density matrices, pure states and Hamiltonians are plain Eigen values;
// the validators below enforce the physical invariants at the API
// boundaries where they matter.
using DensityMatrix = CMatrix;
using PureState = CVector;
using Hamiltonian = CMatrix;

struct Tolerances {
  double herm = 1e-10;   // Hermiticity defect, max |A - A^dag|
  double idem = 1e-10;   // idempotence, completeness, orthogonality
  double trace = 1e-9;   // unit-trace defect
  double psd = 1e-9;     // admissible negative eigenvalue
  double norm = 1e-12;   // pure-state normalization defect
  double prob = 1e-12;   // smallest probability treated as nonzero
};

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct StateError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
// Thrown when an integration run drifts past its drift budget.
struct InvariantBreach : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require_square(const CMatrix& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() < 1)
    throw DimensionError(std::string(what) + ": expected a square matrix, got " +
                         std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
}

inline void require_same_dim(const CMatrix& a, const CMatrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError(std::string(what) + ": dimension mismatch " +
                         std::to_string(a.rows()) + " vs " + std::to_string(b.rows()));
}

inline double hermiticity_defect(const CMatrix& m) {
  return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

inline double trace_defect(const CMatrix& m) { return std::abs(m.trace() - Complex(1.0)); }

inline double purity(const CMatrix& rho) { return (rho * rho).trace().real(); }

inline double real_expectation(const CMatrix& rho, const CMatrix& op) {
  return (op * rho).trace().real();
}

inline double min_eigenvalue(const CMatrix& m) {
  CMatrix sym = 0.5 * (m + m.adjoint());
  Eigen::SelfAdjointEigenSolver<CMatrix> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

struct ValidationReport {
  double hermiticity_defect = 0.0;
  double trace_defect = 0.0;
  double min_eigenvalue = 0.0;
  double purity = 0.0;
  bool pass = false;
};

// Hermiticity, unit trace and positivity check; the PSD test runs on the
// symmetrized matrix so tiny anti-Hermitian integration noise does not
// poison the eigensolver.
inline ValidationReport validate_density(const CMatrix& rho, const Tolerances& tol = {}) {
  require_square(rho, "validate_density");
  ValidationReport rep;
  rep.hermiticity_defect = hermiticity_defect(rho);
  rep.trace_defect = trace_defect(rho);
  rep.min_eigenvalue = min_eigenvalue(rho);
  rep.purity = purity(rho);
  rep.pass = rep.hermiticity_defect <= tol.herm && rep.trace_defect <= tol.trace &&
             rep.min_eigenvalue >= -tol.psd;
  return rep;
}

inline void require_unit_norm(const PureState& psi, const Tolerances& tol = {}) {
  if (psi.size() < 1) throw DimensionError("pure state: empty vector");
  if (std::abs(psi.norm() - 1.0) > tol.norm)
    throw StateError("pure state: norm defect " + std::to_string(std::abs(psi.norm() - 1.0)));
}

// ---------------------------------------------------------------------------
// Projectors

struct Projector {
  CMatrix mat;
  std::string label;

  int dim() const { return static_cast<int>(mat.rows()); }
  // Idempotents have {0,1} spectrum, so the rank is the trace.
  int rank() const { return static_cast<int>(std::llround(mat.trace().real())); }
};

inline double idempotence_defect(const CMatrix& p) {
  return (p * p - p).cwiseAbs().maxCoeff();
}

// Validating constructor. Rank from round(Tr P) is cross-checked against the
// eigenvalue count above 0.5.
inline Projector make_projector(CMatrix m, std::string label = {}, const Tolerances& tol = {}) {
  require_square(m, "make_projector");
  if (hermiticity_defect(m) > tol.herm)
    throw StateError("projector '" + label + "': not Hermitian");
  if (idempotence_defect(m) > tol.idem)
    throw StateError("projector '" + label + "': not idempotent");
  const int traced_rank = static_cast<int>(std::llround(m.trace().real()));
  Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (m + m.adjoint()), Eigen::EigenvaluesOnly);
  const int eig_rank = static_cast<int>((es.eigenvalues().array() > 0.5).count());
  if (traced_rank != eig_rank || traced_rank < 1)
    throw StateError("projector '" + label + "': rank " + std::to_string(traced_rank) +
                     " inconsistent with spectrum rank " + std::to_string(eig_rank));
  return Projector{std::move(m), std::move(label)};
}

inline Projector basis_projector(int dim, int index, std::string label = {}) {
  if (index < 0 || index >= dim) throw DimensionError("basis_projector: index out of range");
  CMatrix p = CMatrix::Zero(dim, dim);
  p(index, index) = 1.0;
  return Projector{std::move(p), label.empty() ? std::to_string(index) : std::move(label)};
}

inline Projector subspace_projector(const std::vector<PureState>& basis, std::string label,
                                    const Tolerances& tol = {}) {
  if (basis.empty()) throw DimensionError("subspace_projector: empty basis");
  CMatrix p = CMatrix::Zero(basis.front().size(), basis.front().size());
  for (const auto& v : basis) {
    if (v.size() != p.rows()) throw DimensionError("subspace_projector: mixed dimensions");
    p += v * v.adjoint();
  }
  return make_projector(std::move(p), std::move(label), tol);
}

// Complete orthogonal decomposition of the measured observable.
struct ProjectorSet {
  std::vector<Projector> items;

  int size() const { return static_cast<int>(items.size()); }
  int dim() const { return items.empty() ? 0 : items.front().dim(); }
  const Projector& operator[](int i) const { return items.at(static_cast<std::size_t>(i)); }
};

inline void validate_projector_set(const ProjectorSet& set, const Tolerances& tol = {}) {
  if (set.size() < 2) throw StateError("projector set: need at least 2 projectors");
  const int d = set.dim();
  CMatrix sum = CMatrix::Zero(d, d);
  for (const auto& p : set.items) {
    if (p.dim() != d) throw DimensionError("projector set: mixed dimensions");
    sum += p.mat;
  }
  const double comp = (sum - CMatrix::Identity(d, d)).cwiseAbs().maxCoeff();
  if (comp > tol.idem)
    throw StateError("projector set: completeness defect " + std::to_string(comp));
  for (int i = 0; i < set.size(); ++i)
    for (int j = i + 1; j < set.size(); ++j) {
      const double ortho = (set[i].mat * set[j].mat).cwiseAbs().maxCoeff();
      if (ortho > tol.idem)
        throw StateError("projector set: projectors " + std::to_string(i) + "," +
                         std::to_string(j) + " not orthogonal (defect " + std::to_string(ortho) + ")");
    }
}

inline ProjectorSet make_projector_set(std::vector<Projector> items, const Tolerances& tol = {}) {
  ProjectorSet set{std::move(items)};
  validate_projector_set(set, tol);
  return set;
}

inline ProjectorSet zbasis_projectors(int dim) {
  std::vector<Projector> items;
  items.reserve(static_cast<std::size_t>(dim));
  for (int i = 0; i < dim; ++i) items.push_back(basis_projector(dim, i));
  return make_projector_set(std::move(items));
}

// Groups the eigenvectors of a Hermitian matrix into projectors, one per
// eigenvalue cluster (gap > degeneracy_tol starts a new cluster).
inline ProjectorSet projectors_from_eigenbasis(const CMatrix& hermitian,
                                               double degeneracy_tol = 1e-8,
                                               const Tolerances& tol = {}) {
  require_square(hermitian, "projectors_from_eigenbasis");
  if (hermiticity_defect(hermitian) > tol.herm)
    throw StateError("projectors_from_eigenbasis: matrix not Hermitian");
  Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (hermitian + hermitian.adjoint()));
  const auto& vals = es.eigenvalues();
  const auto& vecs = es.eigenvectors();
  std::vector<Projector> items;
  int begin = 0;
  for (int i = 1; i <= vals.size(); ++i) {
    if (i == vals.size() || vals(i) - vals(i - 1) > degeneracy_tol) {
      CMatrix block = vecs.middleCols(begin, i - begin);
      items.push_back(make_projector(block * block.adjoint(),
                                     std::to_string(items.size()), tol));
      begin = i;
    }
  }
  return make_projector_set(std::move(items), tol);
}

// Partition the columns of a unitary into consecutive groups; every group
// spans one projector. Used to build mixed-rank measurement sets.
inline ProjectorSet projectors_from_columns(const CMatrix& unitary, const std::vector<int>& sizes,
                                            const Tolerances& tol = {}) {
  require_square(unitary, "projectors_from_columns");
  int total = 0;
  for (int s : sizes) total += s;
  if (total != unitary.cols())
    throw DimensionError("projectors_from_columns: group sizes do not cover the dimension");
  std::vector<Projector> items;
  int begin = 0;
  for (std::size_t g = 0; g < sizes.size(); ++g) {
    CMatrix block = unitary.middleCols(begin, sizes[g]);
    items.push_back(make_projector(block * block.adjoint(), std::to_string(g), tol));
    begin += sizes[g];
  }
  return make_projector_set(std::move(items), tol);
}

// ---------------------------------------------------------------------------
// States and standard operators

inline PureState basis_state(int dim, int index) {
  if (index < 0 || index >= dim) throw DimensionError("basis_state: index out of range");
  PureState psi = PureState::Zero(dim);
  psi(index) = 1.0;
  return psi;
}

inline PureState plus_state(int dim = 2) {
  PureState psi = PureState::Constant(dim, Complex(1.0 / std::sqrt(double(dim))));
  return psi;
}

inline PureState bell_state() {
  PureState psi = PureState::Zero(4);
  psi(0) = psi(3) = Complex(1.0 / std::sqrt(2.0));
  return psi;
}

inline DensityMatrix pure_density(const PureState& psi) { return psi * psi.adjoint(); }

inline DensityMatrix maximally_mixed(int dim) {
  return CMatrix::Identity(dim, dim) / double(dim);
}

inline CMatrix pauli_x() {
  CMatrix m(2, 2);
  m << 0, 1, 1, 0;
  return m;
}
inline CMatrix pauli_y() {
  CMatrix m(2, 2);
  m << Complex(0, 0), Complex(0, -1), Complex(0, 1), Complex(0, 0);
  return m;
}
inline CMatrix pauli_z() {
  CMatrix m(2, 2);
  m << 1, 0, 0, -1;
  return m;
}

inline CMatrix kron(const CMatrix& a, const CMatrix& b) {
  return Eigen::kroneckerProduct(a, b);
}

// J_z (x) J_z eigenspaces of a qubit pair: even parity {|00>,|11>} and odd
// parity {|01>,|10>}, each rank 2.
inline ProjectorSet jzjz_projectors() {
  std::vector<PureState> even{basis_state(4, 0), basis_state(4, 3)};
  std::vector<PureState> odd{basis_state(4, 1), basis_state(4, 2)};
  return make_projector_set({subspace_projector(even, "+"), subspace_projector(odd, "-")});
}

// Logical/error split of an n-qubit register with the repetition-code span
// {|0...0>, |1...1>} as the logical subspace.
inline ProjectorSet logical_error_projectors(int n_qubits = 3) {
  if (n_qubits < 2) throw DimensionError("logical_error_projectors: need at least 2 qubits");
  const int dim = 1 << n_qubits;
  Projector logical = subspace_projector({basis_state(dim, 0), basis_state(dim, dim - 1)}, "L");
  Projector error{CMatrix::Identity(dim, dim) - logical.mat, "E"};
  return make_projector_set({std::move(logical), std::move(error)});
}

// ---------------------------------------------------------------------------
// Operations

// Born rule probabilities (Tr(P_i rho))_i, clamped to [0,1] after the
// tolerance check.
inline RVector born_probabilities(const DensityMatrix& rho, const ProjectorSet& set,
                                  const Tolerances& tol = {}) {
  require_square(rho, "born_probabilities");
  if (rho.rows() != set.dim()) throw DimensionError("born_probabilities: dimension mismatch");
  RVector p(set.size());
  for (int i = 0; i < set.size(); ++i) {
    const double v = (set[i].mat * rho).trace().real();
    if (v < -10.0 * tol.psd || v > 1.0 + 10.0 * tol.psd)
      throw StateError("born_probabilities: probability " + std::to_string(v) + " out of range");
    p(i) = std::clamp(v, 0.0, 1.0);
  }
  if (std::abs(p.sum() - 1.0) > tol.trace)
    throw StateError("born_probabilities: probabilities sum to " + std::to_string(p.sum()));
  return p;
}

// P rho P / Tr(P rho). Errors out instead of dividing by a vanishing
// probability.
inline DensityMatrix projective_collapse(const DensityMatrix& rho, const Projector& p,
                                         double tol_prob = 1e-12) {
  require_same_dim(rho, p.mat, "projective_collapse");
  const double prob = (p.mat * rho).trace().real();
  if (prob <= tol_prob)
    throw StateError("projective_collapse: outcome probability " + std::to_string(prob) +
                     " below threshold");
  return (p.mat * rho * p.mat) / prob;
}

enum class Subsystem { A, B };

// Partial trace of a bipartite state; subsystem A is the slow (most
// significant) tensor index: composite index n = a*dim_b + b.
inline DensityMatrix partial_trace(const DensityMatrix& rho, int dim_a, int dim_b,
                                   Subsystem keep) {
  require_square(rho, "partial_trace");
  if (static_cast<long>(dim_a) * dim_b != rho.rows() || dim_a < 1 || dim_b < 1)
    throw DimensionError("partial_trace: dimension " + std::to_string(rho.rows()) +
                         " does not factor as " + std::to_string(dim_a) + "x" + std::to_string(dim_b));
  if (keep == Subsystem::A) {
    CMatrix out = CMatrix::Zero(dim_a, dim_a);
    for (int a = 0; a < dim_a; ++a)
      for (int a2 = 0; a2 < dim_a; ++a2)
        for (int b = 0; b < dim_b; ++b) out(a, a2) += rho(a * dim_b + b, a2 * dim_b + b);
    return out;
  }
  CMatrix out = CMatrix::Zero(dim_b, dim_b);
  for (int b = 0; b < dim_b; ++b)
    for (int b2 = 0; b2 < dim_b; ++b2)
      for (int a = 0; a < dim_a; ++a) out(b, b2) += rho(a * dim_b + b, a * dim_b + b2);
  return out;
}

struct KrausSet {
  std::vector<CMatrix> operators;
};

inline double kraus_completeness_defect(const KrausSet& k) {
  if (k.operators.empty()) throw DimensionError("kraus set: empty");
  const auto d = k.operators.front().rows();
  CMatrix sum = CMatrix::Zero(d, d);
  for (const auto& m : k.operators) sum += m.adjoint() * m;
  return (sum - CMatrix::Identity(d, d)).cwiseAbs().maxCoeff();
}

// rho -> sum_mu M_mu rho M_mu^dag for a complete Kraus set.
inline DensityMatrix kraus_apply(const DensityMatrix& rho, const KrausSet& k,
                                 const Tolerances& tol = {}) {
  require_square(rho, "kraus_apply");
  const double defect = kraus_completeness_defect(k);
  if (defect > tol.idem)
    throw StateError("kraus_apply: incomplete Kraus set (defect " + std::to_string(defect) + ")");
  CMatrix out = CMatrix::Zero(rho.rows(), rho.cols());
  for (const auto& m : k.operators) {
    require_same_dim(rho, m, "kraus_apply");
    out += m * rho * m.adjoint();
  }
  return out;
}

}  // namespace qmeas
