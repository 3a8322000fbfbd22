// wcl/system_model.hpp — small-system spectral data, transition-frequency
// bookkeeping, reservoir channel models, grid discretization, and the
// rank-one coupling decomposition with its integrable correlation envelope.
#pragma once

#include "wcl/numerics.hpp"

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace wcl::sys {

// ------- small system -------

// Hermitian system Hamiltonian with clustered spectrum: near-degenerate
// eigenvalues (relative gap below cluster_tol * spectral diameter) are
// merged into one level with a common eigenprojection.
struct SmallSystem {
  int dim = 0;
  Mat K;                                    // original basis
  double cluster_tol = 1e-9;
  double spectral_diameter = 0.0;

  RVec raw_evals;                           // ascending, one per state
  Mat eigvecs;                              // columns match raw_evals
  std::vector<double> levels;               // distinct (clustered), ascending
  std::vector<std::vector<int>> level_states;  // raw eigenstate indices per level
  std::vector<Mat> projectors;              // per level, original basis

  int num_levels() const { return static_cast<int>(levels.size()); }
  // exp(+i t K) from the raw (unclustered) eigendecomposition.
  Mat exp_itK(double t) const;
};

SmallSystem spectral_decompose(const Mat& K, double cluster_tol = 1e-9);

// ------- transition frequencies -------

// All level differences k - k', clustered with the same relative tolerance;
// contains 0 and is symmetric under sign flip.
struct BohrFrequencySet {
  std::vector<double> omegas;               // ascending
  // (upper level index k, lower level index k') with k - k' = omega.
  std::vector<std::vector<std::pair<int, int>>> level_pairs;
  double match_tol = 0.0;                   // absolute tolerance for lookups

  int index_of(double omega) const;         // -1 when no match within tol
};

BohrFrequencySet bohr_frequencies(const SmallSystem& sys);

// ------- reservoir model -------

enum class ProfileKind { Flat, Lorentzian, Gaussian, Table };

// Scalar frequency profile of one channel's form factor.
struct Profile {
  ProfileKind kind = ProfileKind::Flat;
  double amplitude = 1.0;
  double center = 0.0;
  double width = 1.0;                       // Lorentzian half-width / Gaussian sigma
  std::vector<double> xs;                   // Table: ascending sample points
  std::vector<cplx> values;                 // Table: sampled values (linear interp)

  cplx operator()(double x) const;
};

// One reservoir channel: an open frequency interval (a, b) carrying either a
// transition frequency omega in its interior or a far-off-resonance tail.
struct Channel {
  bool is_tail = false;
  double omega = 0.0;                       // meaningful when !is_tail
  double a = 0.0, b = 0.0;
  int mult = 1;                             // fiber multiplicity
  Profile profile;
  Mat coupling;                             // (dim*mult) x dim constant factor

  bool contains(double x) const { return x > a && x < b; }
};

// Coupling data V as a matrix-valued function on disjoint intervals:
// v(x) = profile(x) * coupling on the channel owning x.
struct ReservoirModel {
  int dim = 0;                              // system dimension
  std::vector<Channel> channels;            // ascending by left endpoint

  int channel_of(double x) const;           // -1 when uncovered
  // (dim*mult) x dim value on the owning channel; throws when uncovered.
  Mat v_at(double x) const;
  int channel_of_omega(double omega, double tol) const;  // non-tail label match
};

// Structural checks: disjoint intervals, omega inside its interval, coupling
// shapes, and every non-tail channel label present in the transition set.
void validate_reservoir(const SmallSystem& sys, const ReservoirModel& res);

// ------- discretization -------

enum class GridRule { Midpoint, Gauss };

struct DiscretizedReservoir {
  GridRule rule = GridRule::Midpoint;
  int n_per_channel = 0;
  int dim = 0;                              // system dimension

  struct Mode {
    double x = 0.0;
    double w = 0.0;
    int channel = -1;
    int op_offset = 0;                      // first one-particle component
  };
  std::vector<Mode> modes;                  // channel-major, ascending x
  std::vector<int> channel_mode_begin;      // per channel, index into modes
  int one_particle_dim = 0;                 // sum over modes of channel mult
  double max_spacing = 0.0;                 // max adjacent node gap in a channel

  // sqrt(w_i) * v(x_i), shape (dim*mult) x dim.
  std::vector<Mat> blocks;

  int mult_of(int mode) const;
  double recurrence_time() const { return kTwoPi / max_spacing; }
  // Throws when |horizon| exceeds half the recurrence time.
  void check_horizon(double horizon, const std::string& who) const;
};

DiscretizedReservoir discretize_reservoir(const SmallSystem& sys, const ReservoirModel& res,
                                          GridRule rule, int n_per_channel);

// ------- coupling decomposition -------

// V = sum_j D_j (x) |phi_j>, with D_j = |u_m><u_p| rank-one in the eigenbasis
// and phi_j a frequency-window slice of the (m, p) form-factor entry. Smooth
// C^2 windows sit inside their channel; the leftover far-field window
// collects everything outside the plateaus.
struct CouplingTerm {
  Mat D;                                    // d x d, rank one, unit norm
  int state_m = 0, state_p = 0;             // raw eigenstate indices
  int omega_index = -1;                     // into BohrFrequencySet; -1 = far field
  double omega = 0.0;                       // window center (when omega_index >= 0)
  int channel = -1;                         // owning channel (-1 = spans several)
  double window_r_in = 0.0;                 // plateau radius (omega windows)
  double window_r_out = 0.0;                // support radius (omega windows)
  Vec phi;                                  // one-particle grid vector (weight-folded)
};

struct DecompositionParams {
  // Window outer radius per transition frequency; <= 0 means automatic
  // (0.9 * distance to the nearest interval endpoint).
  double window_radius = -1.0;
  double plateau_fraction = 0.5;            // inner radius = fraction * outer
  double drop_tol = 1e-14;                  // prune terms with ||phi|| below
  int h_samples = 2048;
  double h_horizon = -1.0;                  // <= 0: half the recurrence time
};

struct CouplingDecomposition {
  std::vector<CouplingTerm> terms;
  RVec h_times;                             // ascending, starts at 0
  RVec h_values;                            // h(t) = sum_{j j'} |<phi_j'|e^{-itH_R}|phi_j>|
  double reassembly_error = 0.0;            // sup-norm defect against the grid blocks
  double d_norm_max = 1.0;

  double h_l1(double T) const;              // trapezoid integral of h over [0, min(T, horizon)]
  double h_window_integral(double T) const { return h_l1(T); }
  double h_tail(double T) const;            // integral over [T, 2T] (clamped)
};

CouplingDecomposition decompose_coupling(const SmallSystem& sys, const ReservoirModel& res,
                                         const DiscretizedReservoir& disc,
                                         const DecompositionParams& params = {});

// Pointwise evaluation of term j's window slice at frequency y, fiber alpha:
// window(y) * profile(y) * coupling entry in the eigenbasis. Defined for
// single-channel terms (omega windows); throws for the far-field window.
cplx coupling_term_value(const SmallSystem& sys, const ReservoirModel& res,
                         const CouplingTerm& term, double y, int alpha);

}  // namespace wcl::sys
