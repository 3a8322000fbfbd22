// wcl/davies.hpp — secular generator, jump operators, and the induced
// completely positive semigroup.
//
// For a small system K coupled linearly to a field with form factor v, the
// long-time effective generator is assembled per ordered level pair (k, k')
// with transition frequency w = e_k - e_{k'}:
//
//   Upsilon = sum_{k,k'} P_k [ -i pi f_w(w) - PV Int f_w(x)/(x - w) dx ] P_k,
//   f_w(x)  = v(x)^* (P_{k'} (x) 1_mult) v(x),
//
// where the on-shell part exists only when w lies inside a channel.  The jump
// block at frequency w collects all level pairs a distance w apart:
//
//   nu_w = sqrt(2 pi) sum_{k - k' = w} (P_{k'} (x) 1_mult) v(w) P_k,
//
// so nu_w lowers by w, and the anti-Hermitian part of Upsilon satisfies
// Upsilon - Upsilon^* = -i nu^* nu exactly in the continuum.  Everything here
// is dense linear algebra at small-system scale.
#pragma once

#include "wcl/system_model.hpp"

#include <string>
#include <vector>

namespace wcl::davies {

using wcl::cplx;
using wcl::Mat;
using wcl::Vec;
using sys::DiscretizedReservoir;
using sys::ReservoirModel;
using sys::SmallSystem;

// Quadrature controls for the principal-value integrals.
struct UpsilonParams {
  int gauss_points = 240;     // per integration piece
  double match_tol = 1e-9;    // frequency matching (relative to spectral diameter)
};

// On-shell and principal-value pieces of Int f(x)/(x - w) dx over all
// channels, with f(x) = v(x)^* (P_level (x) 1) v(x).
struct PlemeljPieces {
  Mat on_shell;   // pi * f(w) when w lies inside a channel, else zero
  Mat principal;  // PV Int f(x) / (x - w) dx
};

PlemeljPieces plemelj_pieces(const SmallSystem& sys, const ReservoirModel& res, int level,
                             double omega, const UpsilonParams& params = {});

// Continuum generator via the decomposition above.
Mat compute_upsilon(const SmallSystem& sys, const ReservoirModel& res,
                    const UpsilonParams& params = {});

// Grid surrogate: the half-line time integral with an exp(-eta t) cutoff
// becomes a resolvent sum over discrete modes.  `upsilon_resolvent` picks
// eta = eta_factor * grid spacing and removes the leading O(eta) error by
// Richardson extrapolation (2 T_{eta/2} - T_eta).
Mat upsilon_from_grid(const SmallSystem& sys, const DiscretizedReservoir& disc, double eta);

struct ResolventParams {
  double eta_factor = 10.0;
  bool richardson = true;
};

Mat upsilon_resolvent(const SmallSystem& sys, const DiscretizedReservoir& disc,
                      const ResolventParams& params = {});

// Jump block at one transition frequency.
struct NuBlock {
  double omega = 0.0;
  int channel = -1;            // owning channel in the reservoir model
  int mult = 1;
  Mat stacked;                 // (dim*mult) x dim
  std::vector<Mat> fibers;     // mult matrices, each dim x dim
};

struct DaviesData {
  SmallSystem system;
  sys::BohrFrequencySet bohr;
  Mat upsilon;                  // full generator (dim x dim)
  Mat upsilon_herm;             // Hermitian part (level-shift piece)
  Mat nu_star_nu;               // sum over jumps of nu^* nu
  std::vector<NuBlock> blocks;  // one per frequency with an owning channel
  std::vector<Mat> jump_ops;    // all fibers flattened, block-major
  std::vector<double> jump_omegas;
  double dissipativity_residual = 0.0;  // |(-i U + i U^*) + nu^* nu| in 2-norm

  int dim() const { return system.dim; }
  int num_jumps() const { return static_cast<int>(jump_ops.size()); }
};

std::vector<NuBlock> compute_nu(const SmallSystem& sys, const ReservoirModel& res);

DaviesData make_davies_data(const SmallSystem& sys, const ReservoirModel& res,
                            const UpsilonParams& params = {});

// Generator of the induced semigroup on matrices, in column-stacked form
// (dim^2 x dim^2).  The observable-side map is
//   L(S) = -i (Upsilon S - S Upsilon^*) + sum_a nu_a^* S nu_a,
// and the state-side map is its adjoint under the trace pairing.
struct LindbladGenerator {
  int dim = 0;
  Mat heisenberg;   // observable side
  Mat schrodinger;  // state side (adjoint matrix)
};

// Throws when the dissipativity residual exceeds residual_tol: the two pieces
// would not assemble into a completely positive semigroup.
LindbladGenerator build_lindblad(const DaviesData& data, double residual_tol = 1e-8);

// exp(t G) for a superoperator matrix G.
Mat evolve_semigroup(const Mat& generator, double t);

// Column-stacked superoperator of S -> i [A, S] for Hermitian A; the
// generator of the block decoupling the semigroup commutes with.
Mat commutator_superop(const Mat& a);

// Column-stacked superoperator matrix -> block matrix whose positivity is
// complete positivity of the map.
Mat choi_matrix(const Mat& super);
double choi_min_eigenvalue(const Mat& super);

// Trace-one Hermitian kernel of the state-side generator.
Mat stationary_state(const LindbladGenerator& gen);

// Finite-time, finite-grid interaction integral
//   Q_{lambda,s} = Int_0^{s/lambda^2} V^* exp(-i u (K + H_R)) V du
// evaluated mode-by-mode in closed form, and its lambda -> 0 limit on the
// continuum (resonances sit at x = -e_m for each system level e_m).
Mat q_integral(const SmallSystem& sys, const DiscretizedReservoir& disc, double lambda, double s);
Mat q_limit(const SmallSystem& sys, const ReservoirModel& res, const UpsilonParams& params = {});

}  // namespace wcl::davies
