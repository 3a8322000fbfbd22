// wcl/combinatorics.hpp — pairing enumeration for vacuum-expectation
// expansions and quadrature rules on ordered-time simplices.
#pragma once

#include "wcl/numerics.hpp"

#include <cstdint>
#include <vector>

namespace wcl::comb {

// ------- complete pairings -------

// A pairing of 2n time slots (0-based slots 0..2n-1). Stored as the flat
// array sigma of length 2n: sigma[2p] is the slot of the p-th pair that
// carries the creation vertex (the earlier one), sigma[2p+1] the slot that
// carries the paired annihilation vertex. Canonical form:
//   sigma[2p] < sigma[2p+1]   (creation before annihilation within a pair)
//   sigma[0] < sigma[2] < ... (pairs sorted by creation slot)
struct Pairing {
  int n = 0;                 // number of pairs
  std::vector<int> sigma;    // flat array, length 2n

  // partner[slot] = the slot paired with `slot`.
  std::vector<int> partners() const;
  // is_creation[slot] = true when `slot` is the earlier member of its pair.
  std::vector<std::uint8_t> creation_mask() const;
};

// All complete pairings of 2n slots in lexicographic order of the flat
// sigma array. Count is (2n-1)!! = 1, 3, 15, 105, 945 for n = 1..5.
std::vector<Pairing> enumerate_pairings(int n);

// The time-consecutive pairing pairs (0,1), (2,3), ...; it is the identity
// sigma and the only pairing surviving the weak-coupling limit.
bool is_time_consecutive(const Pairing& p);

std::uint64_t double_factorial_odd(int n);  // (2n-1)!!

// ------- partial pairings -------

// A partial pairing of n slots: some slots are paired (creation earlier,
// pairs sorted by creation slot, exactly as in Pairing), the rest are left
// free. On paired slots the vertex signs are forced: the earlier member of
// each pair must be a creation vertex (+1), the later one an annihilation
// vertex (-1). Free slots carry either sign.
struct PartialPairing {
  int n = 0;                  // number of slots
  int pairs = 0;              // number of contracted pairs
  std::vector<int> sigma;     // flat array, length 2*pairs
  std::vector<int> unpaired;  // ascending list of free slots

  std::vector<int> partners() const;             // -1 for free slots
  // Forced sign per slot: +1 creation, -1 annihilation, 0 free.
  std::vector<int> forced_signs() const;
};

// All partial pairings of n slots (including the empty one) in
// lexicographic order of (pairs, sigma). Count is the involution number
// I(n): 1, 1, 2, 4, 10, 26 for n = 0..5.
std::vector<PartialPairing> enumerate_partial_pairings(int n);

std::uint64_t involution_number(int n);

// ------- simplex quadrature -------

// Quadrature rule on the ordered simplex a < t_1 < ... < t_n < b, built by
// pushing a tensor-product Gauss-Legendre rule through the ordered-
// coordinates (Duffy) transform t_k = a + (b-a) * u_k * u_{k+1} * ... * u_n.
// Weights include the polynomial Jacobian, so the rule integrates smooth
// integrands at Gauss accuracy and sums to (b-a)^n / n! exactly.
struct SimplexRule {
  int dim = 0;
  double a = 0.0, b = 0.0;
  Eigen::MatrixXd nodes;   // one row per node, columns ascending in time
  Eigen::VectorXd weights;
};

SimplexRule simplex_quadrature(int dim, double a, double b, int points_per_axis);

}  // namespace wcl::comb
