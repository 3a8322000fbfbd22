#pragma once
//
// Truncated Fock-space simulation of the coupled system + discretized
// reservoir, and the perturbative machinery that goes with it:
//
//   * FockBasis / FockSpace  — occupation-number basis with a global quantum
//     cutoff over the discretized one-particle modes, the full Hamiltonian
//       H_lambda = K (x) 1 + 1 (x) dGamma(x) + lambda (a*(V) + a(V)),
//     and exact (dense eigendecomposition) or Lanczos propagation.
//
//   * Interaction-picture propagator
//       T_lambda(t, t0) = e^{i t H0} e^{-i (t - t0) H_lambda} e^{-i t0 H0},
//     its vacuum compression ("reduced dynamics") at van Hove times
//       G_lambda(t, t0) = I* T_lambda(t / lambda^2, t0 / lambda^2) I,
//     and a single-excitation (Friedrichs) shortcut for the same object.
//
//   * Dyson/Wick expansion of G_lambda: explicit pair-partition sums with
//     simplex quadrature, per-order norms, and per-order a-priori bounds
//     driven by the decomposition's correlation envelope h.
//
//   * Multi-time correlation chains
//       I* T(t, t_l) S_l T(t_l, t_{l-1}) ... S_1 T(t_1, t0) I
//     together with their semigroup limit built from Upsilon.
//
//   * A resummation identity check: the full interaction propagator is
//     reconstructed from normal-ordered field vertices sandwiched between
//     vacuum-compressed propagators, and compared against direct propagation
//     on low-particle matrix elements.
//
#include <wcl/combinatorics.hpp>
#include <wcl/numerics.hpp>
#include <wcl/system_model.hpp>

#include <Eigen/SparseCore>

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace wcl::fock {

using sys::CouplingDecomposition;
using sys::DiscretizedReservoir;
using sys::SmallSystem;

// ---------------------------------------------------------------------------
// Occupation-number basis with a *total* quantum cutoff.
// ---------------------------------------------------------------------------

// All occupation vectors n = (n_1, ..., n_M) with sum n_i <= n_max, ordered by
// total quantum number and lexicographically within each sector.  The basis
// size is sum_{k<=n_max} C(M + k - 1, k).
struct FockBasis {
  int modes = 0;
  int n_max = 0;
  std::vector<std::vector<std::uint8_t>> occ;  // occ[f][mode]
  std::vector<int> sector_begin;               // first index of each total-N sector

  int dim() const { return static_cast<int>(occ.size()); }
  int total_quanta(int f) const;
  // Index of an occupation vector, or -1 if it is outside the truncation.
  int index_of(const std::vector<std::uint8_t>& n) const;

 private:
  std::unordered_map<std::string, int> lookup_;
  friend FockBasis make_fock_basis(int modes, int n_max);
};

FockBasis make_fock_basis(int modes, int n_max);

// a*(f) on a field-only vector: (a*(f) psi) gains one quantum in mode i with
// amplitude f_i sqrt(n_i + 1).  States pushed past the cutoff are dropped.
Vec apply_creation(const FockBasis& basis, const Vec& f, const Vec& psi);
// a(f) = (a*(f))^*: removes one quantum with amplitude conj(f_i) sqrt(n_i).
Vec apply_annihilation(const FockBasis& basis, const Vec& f, const Vec& psi);
// Field-only free evolution e^{-i t dGamma(x)} given the mode frequencies.
Vec apply_field_phase(const FockBasis& basis, const RVec& mode_freqs, double t,
                      const Vec& psi);

// ---------------------------------------------------------------------------
// Coupled space:  composite index = fock_index * sys_dim + sys_index.
// ---------------------------------------------------------------------------

struct FockSpace {
  SmallSystem system;
  DiscretizedReservoir reservoir;
  FockBasis basis;

  int sys_dim = 0;
  int field_dim = 0;
  int total_dim = 0;

  RVec mode_freqs;     // one-particle frequencies x_i per orbital
  RVec field_energy;   // dGamma(x) eigenvalue per Fock state
  Eigen::SparseMatrix<cplx> interaction;  // a*(V) + a(V), WITHOUT lambda

  int composite(int f, int s) const { return f * sys_dim + s; }
};

// Builds the coupled space.  Emits a warning to stderr when n_max = 0 is
// combined with the intent to couple (the interaction then vanishes
// identically on the retained space).
FockSpace make_fock_space(const SmallSystem& system,
                          const DiscretizedReservoir& reservoir, int n_max);

// Dense H_lambda = K + dGamma(x) + lambda * interaction.
Mat hamiltonian_dense(const FockSpace& space, double lambda);

// e^{i t H0} psi with H0 = K (x) 1 + 1 (x) dGamma(x).
Vec apply_free_phase(const FockSpace& space, double t, const Vec& psi);

// c (x) |vacuum>.
Vec embed_vacuum(const FockSpace& space, const Vec& c);
// I* psi: the vacuum-sector block, a system vector.
Vec project_vacuum(const FockSpace& space, const Vec& psi);
// c (x) a*(f) |vacuum> for a one-particle vector f.
Vec embed_one_particle(const FockSpace& space, const Vec& c, const Vec& f);

// ---------------------------------------------------------------------------
// Propagation.
// ---------------------------------------------------------------------------

struct PropagatorOptions {
  // Dense eigendecomposition is used at or below this dimension; Lanczos
  // above it.
  int dense_threshold = 2000;
  int krylov_dim = 30;
  // Upper bound on (spectral scale) * (substep) for the Lanczos path.
  double step_scale = 0.1;
  // Tolerance for the propagation unitarity check.
  double unitarity_tol = 1e-9;
};

class FockPropagator {
 public:
  FockPropagator(const FockSpace& space, double lambda,
                 PropagatorOptions opts = {});

  // e^{-i t H_lambda} psi.  Checks norm preservation to opts.unitarity_tol
  // (dense path: exact up to roundoff; Lanczos path: renormalized per
  // substep after the check).
  Vec evolve(double t, const Vec& psi) const;

  // Interaction picture: e^{i b H0} e^{-i (b - a) H_lambda} e^{-i a H0} psi.
  Vec interaction_picture(double b, double a, const Vec& psi) const;

  // Vacuum-block of e^{-i tau H_lambda}: the sys_dim x sys_dim matrix
  // I* e^{-i tau H_lambda} I.
  Mat vacuum_block(double tau) const;

  bool dense() const { return dense_; }
  double lambda() const { return lambda_; }

 private:
  const FockSpace* space_;
  double lambda_ = 0.0;
  PropagatorOptions opts_;
  bool dense_ = true;
  HermitianPropagator eig_;              // dense path
  Mat vacuum_rows_;                      // I* * eigvecs  (sys_dim x total_dim)
  Eigen::SparseMatrix<cplx> h_sparse_;   // Lanczos path
  double spectral_scale_ = 1.0;
  Vec lanczos_step(double dt, const Vec& psi) const;
};

// G_lambda(t, t0) = I* T_lambda(t / lambda^2, t0 / lambda^2) I: the reduced
// propagator at van Hove times, as a sys_dim x sys_dim matrix.  Refuses
// horizons beyond the grid's recurrence guard (the error message suggests a
// denser grid or the single-excitation path).
Mat reduced_dynamics(const FockSpace& space, const FockPropagator& prop,
                     double lambda, double t, double t0);

// Same compression at *unrescaled* times: I* T_lambda(b, a) I.
Mat reduced_propagator_raw(const FockSpace& space, const FockPropagator& prop,
                           double b, double a);

// ---------------------------------------------------------------------------
// Single-excitation (Friedrichs) sector.
// ---------------------------------------------------------------------------

// The restriction of H_lambda to (system) + (system x one-particle), enough
// for the reduced dynamics whenever only vacuum-sector compressions are
// needed and the coupling acts through single emissions/absorptions at first
// order.  Dimension sys_dim * (1 + one_particle_dim).
struct FriedrichsSector {
  SmallSystem system;
  DiscretizedReservoir reservoir;
  int sys_dim = 0;
  int dim = 0;
  Mat h0;           // block-diagonal free part
  Mat coupling;     // the lambda-independent off-diagonal part
  HermitianPropagator eig;  // of h0 + lambda * coupling, built per lambda
};

FriedrichsSector make_friedrichs_sector(const SmallSystem& system,
                                        const DiscretizedReservoir& reservoir,
                                        double lambda);

// G_lambda(t, t0) computed in the single-excitation sector:
//   e^{i t K / lambda^2} I* e^{-i (t - t0) H / lambda^2} I e^{-i t0 K / lambda^2}.
Mat friedrichs_reduced(const FriedrichsSector& sector, double lambda, double t,
                       double t0);

// ---------------------------------------------------------------------------
// Dyson / Wick expansion of the reduced dynamics.
// ---------------------------------------------------------------------------

struct DysonOptions {
  int max_order = 2;          // highest pair order n (2n vertices)
  int points_per_axis = 12;   // simplex quadrature density
};

struct DysonSum {
  std::vector<Mat> orders;        // orders[n], n = 0 .. max_order (C_0 = I)
  std::vector<double> norms;      // operator norm of each order
  std::vector<double> bounds;     // a-priori bound norm(D)^{2n} t^n l1(h)^n / (2^n n!)
  std::vector<double> sharp_bounds;  // (2n-1)!! t^n l1(h)^n norm(D)^{2n} / n!
  Mat partial_sum;                // sum of orders
};

// Evaluates the pair-partition expansion of G_lambda(t, t0) from the coupling
// decomposition: order n sums over all pairings of 2n time slots, each pairing
// contributing a simplex integral of reservoir correlations times a chain of
// interaction-picture eigenoperators.  Bounds use the decomposition's
// correlation envelope h over its tabulated horizon.
DysonSum dyson_wick_sum(const SmallSystem& system,
                        const DiscretizedReservoir& reservoir,
                        const CouplingDecomposition& decomp, double lambda,
                        double t, double t0, DysonOptions opts = {});

// Tail bound sum_{n > max_order} bounds[n] for the same parameters, summed to
// numerical convergence.
double dyson_tail_bound(const CouplingDecomposition& decomp, double d_norm,
                        double t, double t0, int max_order);

// ---------------------------------------------------------------------------
// Multi-time correlation chains.
// ---------------------------------------------------------------------------

// I* T(t_end/l^2, t_l/l^2) S_l ... S_1 T(t_1/l^2, t0/l^2) I for insertion
// times t0 <= t_1 <= ... <= t_l <= t_end (van Hove units).
Mat correlation_chain(const FockSpace& space, const FockPropagator& prop,
                      double lambda, const std::vector<Mat>& inserts,
                      const std::vector<double>& times, double t_end,
                      double t0);

// The semigroup limit of the same chain:
//   e^{-i (t_end - t_l) Upsilon} S_l ... S_1 e^{-i (t_1 - t0) Upsilon}.
Mat correlation_chain_limit(const Mat& upsilon, const std::vector<Mat>& inserts,
                            const std::vector<double>& times, double t_end,
                            double t0);

// ---------------------------------------------------------------------------
// Resummation of the interaction propagator around the vacuum compression.
// ---------------------------------------------------------------------------

struct ResummationOptions {
  int max_m = 2;             // highest number of explicit field vertices
  int points_per_axis = 10;  // simplex quadrature density per vertex count
};

struct ResummationElement {
  std::string label;
  cplx direct = 0.0;       // <out | T_lambda(t, t0) | in>
  cplx resummed = 0.0;     // the vertex series through max_m
  double abs_error = 0.0;  // |direct - resummed|
};

struct ResummationResult {
  std::vector<ResummationElement> elements;
  double max_error = 0.0;
  double tail_bound = 0.0;  // computable bound on the dropped vertex orders
};

// Reconstructs T_lambda(t, t0) from normal-ordered field vertices: a sum over
// vertex counts m, sign patterns, and decomposition channels of simplex
// integrals whose integrand sandwiches freely-evolved creation/annihilation
// vertices between vacuum-compressed propagators, the creators standing to
// the left of the annihilators.  The reconstruction is compared with direct
// propagation on a family of low-particle matrix elements.
ResummationResult resummation_check(const FockSpace& space,
                                    const FockPropagator& prop,
                                    const CouplingDecomposition& decomp,
                                    double lambda, double t, double t0,
                                    ResummationOptions opts = {});

}  // namespace wcl::fock
