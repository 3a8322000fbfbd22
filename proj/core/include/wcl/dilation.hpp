#pragma once
//
// Time-bin dilation of the Lindblad semigroup and the scaling-limit
// comparisons between the microscopic grid dynamics and the limiting
// quantum Langevin propagator.
//
//   * BinSystem — the per-bin collision unitary
//       M = exp(-i (dt ReUps (x) 1 + sqrt(dt) sum_a (nu_a (x) b*_a + nu_a* (x) b_a)))
//     on system (x) (bin modes, bosonic cutoff).  Its vacuum block
//     E = <0|M|0> satisfies E = 1 - i dt Ups + O(dt^2); the row compressions
//     A_mu = <0|M|mu> are Kraus operators of the exactly unital channel
//     Phi(S) = sum_mu A_mu S A_mu*, one collision step of the Heisenberg
//     semigroup generated by L(S) = -i(Ups S - S Ups*) + nu* S nu.
//
//   * Repeated-collision approximants: E^n against e^{-i t Ups}, Phi^n
//     against e^{t L}, with first-order-in-dt defects.
//
//   * SectorEngine — the same collision dynamics on a time-bin lattice with
//     explicit field content up to two quanta, used for matrix elements of
//     the limiting propagator between one-particle wave packets in the
//     time-kernel representation: a packet with frequency profile g enters
//     as the kernel (2 pi)^{-1/2} integral g(x) e^{i s x} dx sampled on the
//     lattice, and the collision product runs over the bins inside the
//     absolute window [t0, t].  Conservation of
//       Z_ren = K (x) 1 + sum_q omega_q n_q
//     holds bin by bin.  Quanta spectating away from the active bin keep a
//     bin-local cutoff; the dropped amplitudes are O(t dt).
//
//   * Multiplication-limit quadratures: the compressed annihilator, the free
//     one- and two-particle dynamics, and the second-quantized multiplication
//     compression, each against its lambda -> 0 limit.
//
#include <wcl/davies.hpp>
#include <wcl/fock.hpp>
#include <wcl/numerics.hpp>
#include <wcl/system_model.hpp>

#include <functional>
#include <utility>
#include <vector>

namespace wcl::dil {

using Profile1D = std::function<cplx(double)>;

// ---------------------------------------------------------------------------
// Collision unitary on a single bin.
// ---------------------------------------------------------------------------

struct BinSystem {
  int d = 0;             // system dimension
  int hd = 0;            // number of noise fibers
  double dt = 0.0;
  int cutoff = 1;        // bosonic cutoff of the bin space
  fock::FockBasis bin_basis;
  Mat upsilon;           // d x d, the dissipative drift
  std::vector<Mat> fibers;  // nu_a, each d x d

  Mat M;                 // collision unitary, (d * loc) x (d * loc)
  Mat E;                 // <0|M|0>
  std::vector<Mat> kraus;   // A_mu = <0|M|mu>, mu over the bin basis
  double unitarity_defect = 0.0;

  int loc() const { return bin_basis.dim(); }
};

// Builds the collision unitary from the drift and the jump fibers.
BinSystem make_bin_system(const Mat& upsilon, const std::vector<Mat>& fibers,
                          double dt, int cutoff = 1);

// Convenience wrapper taking the assembled generator data.
BinSystem make_bin_system(const davies::DaviesData& data, double dt,
                          int cutoff = 1);

// E^n: the repeated vacuum compression I* U I after n collisions.
Mat collision_contraction(const BinSystem& bin, int steps);

// The one-step Heisenberg channel as a d^2 x d^2 superoperator on
// column-stacked matrices: Phi = sum_mu conj(A_mu) (x) A_mu.
Mat collision_channel(const BinSystem& bin);

// Phi^n.
Mat collision_channel_power(const BinSystem& bin, int steps);

// Unitality defect ||Phi(1) - 1||; zero up to roundoff at every dt and
// cutoff because M is unitary on the truncated bin space.
double channel_unitality_defect(const BinSystem& bin);

// One-sided difference quotients of the vacuum-sector propagator at 0:
// (E^k - 1) / (k dt) for the forward direction and its adjoint mirror for
// the backward one.  They converge to -i Ups and -i Ups* respectively; the
// asymmetry witnesses that the group has different left and right
// derivatives.
std::pair<Mat, Mat> contraction_derivatives(const BinSystem& bin, int steps);

// ---------------------------------------------------------------------------
// Time-bin lattice and the few-quanta collision engine.
// ---------------------------------------------------------------------------

struct TimeBinLattice {
  double t0 = 0.0, t1 = 0.0;  // collision window
  double dt = 0.0;
  int pad_bins = 0;           // kernel padding on each side
  int collision_bins = 0;
  int total_bins = 0;
  double s_left = 0.0;        // left edge of bin 0

  double center(int b) const { return s_left + (b + 0.5) * dt; }
  bool is_collision(int b) const {
    return b >= pad_bins && b < pad_bins + collision_bins;
  }
};

TimeBinLattice make_lattice(double t0, double t1, double dt, double pad);

struct SectorEngine {
  BinSystem bin;               // built at cutoff 2
  TimeBinLattice lattice;
  std::vector<double> fiber_freq;  // omega per noise fiber

  // Built by make_sector_engine: bin-basis indices of the one- and
  // two-quantum local states, and the restriction of M to bin occupancy <= 1
  // used for updates in the presence of a spectator quantum.
  std::vector<int> loc_single;     // per fiber
  std::vector<int> loc_pair;       // flattened [a * hd + b], a <= b
  Mat m_restricted;                // d (1 + hd) square

  int orbitals() const { return lattice.total_bins * bin.hd; }
  int fiber_of(int q) const { return q % bin.hd; }
  int bin_of(int q) const { return q / bin.hd; }
  // Column of the unordered pair (q, q'), order-insensitive.
  int pair_index(int q1, int q2) const;
  int pair_count() const;
};

SectorEngine make_sector_engine(const davies::DaviesData& data,
                                const TimeBinLattice& lattice);

// State with at most two quanta on the lattice: c0 the vacuum-sector system
// vector, c1 one column per orbital, c2 one column per unordered orbital
// pair in the normalized symmetric basis.  c1/c2 stay empty until a quantum
// sector is populated.
struct SectorState {
  Vec c0;
  Mat c1;
  Mat c2;
  double squared_norm() const;
};

SectorState make_vacuum_state(const SectorEngine& eng, const Vec& c);
// c (x) a*(fiber wave packet) vacuum, kernel[b] the amplitude on bin b.
SectorState make_one_particle_state(const SectorEngine& eng, const Vec& c,
                                    int fiber, const Vec& kernel);

// Applies the time-ordered collision product over the window bins.
void sweep(const SectorEngine& eng, SectorState& state);

// <c (x) vacuum, state> and <c (x) a*(packet) vacuum, state>.
cplx vacuum_overlap(const SectorEngine& eng, const Vec& c, const SectorState& state);
cplx one_particle_overlap(const SectorEngine& eng, const Vec& c, int fiber,
                          const Vec& kernel, const SectorState& state);

// Expectation of Z_ren = K (x) 1 + sum_q omega_q n_q in the state.
double zren_expectation(const SectorEngine& eng, const Mat& K,
                        const SectorState& state);

// Second-quantized multiplication by per-fiber scalars: every quantum in
// fiber a picks up the factor g[a].  Throws unless |g[a]| < 1 for all a.
void theta_apply(const SectorEngine& eng, const std::vector<cplx>& g,
                 SectorState& state);

// The time-kernel of a frequency profile: (2 pi)^{-1/2} integral over
// [-radius, radius] of g(x) e^{i s x} dx, sampled at the bin centers and
// scaled by sqrt(dt).
Vec hat_kernel(const SectorEngine& eng, const Profile1D& g, double radius);

// ---------------------------------------------------------------------------
// Scaling isometries on the discretized reservoir.
// ---------------------------------------------------------------------------

// The grid image of the scaling isometry applied to a profile g: the
// one-particle vector with sqrt(w_i) lambda^{-1} g((x_i - omega) / lambda^2)
// on the fiber components of the channel's modes, zero elsewhere.
Vec grid_embedding(const sys::DiscretizedReservoir& disc, int channel,
                   int fiber, double omega, double lambda, const Profile1D& g);

// ---------------------------------------------------------------------------
// Multiplication-limit quadratures.
// ---------------------------------------------------------------------------

// Compressed annihilator against its multiplication limit, both integrated
// against the test profile g supported in [-radius, radius]:
//   first  = integral over the rescaled channel window of
//            conj(g(x)) e^{i t x} (term profile)(omega + lambda^2 x) dx
//   second = integral of conj(g(x)) e^{i t x} dx * (term profile)(omega).
std::pair<cplx, cplx> annihilator_pair(const sys::SmallSystem& system,
                                       const sys::ReservoirModel& res,
                                       const sys::CouplingTerm& term, int fiber,
                                       double lambda, double t, const Profile1D& g,
                                       double radius);

// One-particle element of the free dynamics between profiles g' and g:
// integral of conj(g'(x)) e^{-i t x} g(x) over the rescaled channel window
// (lambda > 0) or over the whole support (the limit).
cplx free_one_particle_element(double ch_lo, double ch_hi, double omega,
                               double lambda, double t, const Profile1D& gp,
                               const Profile1D& g, double radius);
cplx free_one_particle_limit(double t, const Profile1D& gp, const Profile1D& g,
                             double radius);

// Two-particle element of the free dynamics for quanta in distinct channels
// or the same one: the permanent of the pairwise one-particle elements.
cplx free_two_particle_element(double ch_lo1, double ch_hi1, double omega1,
                               double ch_lo2, double ch_hi2, double omega2,
                               double lambda, double t, const Profile1D& gp1,
                               const Profile1D& gp2, const Profile1D& g1,
                               const Profile1D& g2, double radius);

// One-particle compression of the second-quantized multiplication by the
// bounded function G against its limit G(omega) <g2, g1>.  Throws when
// sup |G| >= 1 on the channel.
std::pair<cplx, cplx> theta_compression_pair(double ch_lo, double ch_hi,
                                             double omega, double lambda,
                                             const Profile1D& G,
                                             const Profile1D& g2,
                                             const Profile1D& g1, double radius);

}  // namespace wcl::dil
