// wcl/combinatorics.cpp — pairing enumeration and simplex quadrature.
#include "wcl/combinatorics.hpp"

#include <algorithm>
#include <stdexcept>

namespace wcl::comb {

// ------- complete pairings -------

std::vector<int> Pairing::partners() const {
  std::vector<int> part(2 * n, -1);
  for (int p = 0; p < n; ++p) {
    part[sigma[2 * p]] = sigma[2 * p + 1];
    part[sigma[2 * p + 1]] = sigma[2 * p];
  }
  return part;
}

std::vector<std::uint8_t> Pairing::creation_mask() const {
  std::vector<std::uint8_t> mask(2 * n, 0);
  for (int p = 0; p < n; ++p) mask[sigma[2 * p]] = 1;
  return mask;
}

namespace {

void enumerate_pairings_rec(std::vector<std::uint8_t>& used, std::vector<int>& sigma,
                            int nslots, std::vector<Pairing>& out) {
  int first = -1;
  for (int s = 0; s < nslots; ++s)
    if (!used[s]) { first = s; break; }
  if (first < 0) {
    Pairing p;
    p.n = nslots / 2;
    p.sigma = sigma;
    out.push_back(std::move(p));
    return;
  }
  used[first] = 1;
  for (int s = first + 1; s < nslots; ++s) {
    if (used[s]) continue;
    used[s] = 1;
    sigma.push_back(first);
    sigma.push_back(s);
    enumerate_pairings_rec(used, sigma, nslots, out);
    sigma.pop_back();
    sigma.pop_back();
    used[s] = 0;
  }
  used[first] = 0;
}

}  // namespace

std::vector<Pairing> enumerate_pairings(int n) {
  if (n < 1 || n > 8)
    throw std::invalid_argument("enumerate_pairings: n must be in [1, 8], got " +
                                std::to_string(n));
  std::vector<Pairing> out;
  out.reserve(static_cast<std::size_t>(double_factorial_odd(n)));
  std::vector<std::uint8_t> used(2 * n, 0);
  std::vector<int> sigma;
  sigma.reserve(2 * n);
  enumerate_pairings_rec(used, sigma, 2 * n, out);
  return out;
}

bool is_time_consecutive(const Pairing& p) {
  for (int i = 0; i < 2 * p.n; ++i)
    if (p.sigma[i] != i) return false;
  return true;
}

std::uint64_t double_factorial_odd(int n) {
  std::uint64_t r = 1;
  for (int k = 1; k <= n; ++k) r *= static_cast<std::uint64_t>(2 * k - 1);
  return r;
}

// ------- partial pairings -------

std::vector<int> PartialPairing::partners() const {
  std::vector<int> part(n, -1);
  for (int p = 0; p < pairs; ++p) {
    part[sigma[2 * p]] = sigma[2 * p + 1];
    part[sigma[2 * p + 1]] = sigma[2 * p];
  }
  return part;
}

std::vector<int> PartialPairing::forced_signs() const {
  std::vector<int> signs(n, 0);
  for (int p = 0; p < pairs; ++p) {
    signs[sigma[2 * p]] = +1;
    signs[sigma[2 * p + 1]] = -1;
  }
  return signs;
}

namespace {

void enumerate_partial_rec(std::vector<std::uint8_t>& used, std::vector<int>& sigma,
                           std::vector<int>& unpaired, int slot, int nslots,
                           std::vector<PartialPairing>& out) {
  if (slot == nslots) {
    PartialPairing p;
    p.n = nslots;
    p.pairs = static_cast<int>(sigma.size()) / 2;
    p.sigma = sigma;
    p.unpaired = unpaired;
    out.push_back(std::move(p));
    return;
  }
  if (used[slot]) {
    enumerate_partial_rec(used, sigma, unpaired, slot + 1, nslots, out);
    return;
  }
  // Leave the slot free.
  unpaired.push_back(slot);
  enumerate_partial_rec(used, sigma, unpaired, slot + 1, nslots, out);
  unpaired.pop_back();
  // Pair it with each later free slot.
  for (int s = slot + 1; s < nslots; ++s) {
    if (used[s]) continue;
    used[s] = 1;
    sigma.push_back(slot);
    sigma.push_back(s);
    enumerate_partial_rec(used, sigma, unpaired, slot + 1, nslots, out);
    sigma.pop_back();
    sigma.pop_back();
    used[s] = 0;
  }
}

}  // namespace

std::vector<PartialPairing> enumerate_partial_pairings(int n) {
  if (n < 0 || n > 12)
    throw std::invalid_argument("enumerate_partial_pairings: n must be in [0, 12], got " +
                                std::to_string(n));
  std::vector<PartialPairing> out;
  out.reserve(static_cast<std::size_t>(involution_number(n)));
  std::vector<std::uint8_t> used(n, 0);
  std::vector<int> sigma, unpaired;
  enumerate_partial_rec(used, sigma, unpaired, 0, n, out);
  std::stable_sort(out.begin(), out.end(), [](const PartialPairing& x, const PartialPairing& y) {
    if (x.pairs != y.pairs) return x.pairs < y.pairs;
    return x.sigma < y.sigma;
  });
  return out;
}

std::uint64_t involution_number(int n) {
  if (n < 0) throw std::invalid_argument("involution_number: n must be >= 0");
  std::uint64_t a = 1, b = 1;  // I(0), I(1)
  if (n == 0) return 1;
  for (int k = 2; k <= n; ++k) {
    const std::uint64_t c = b + static_cast<std::uint64_t>(k - 1) * a;
    a = b;
    b = c;
  }
  return b;
}

// ------- simplex quadrature -------

SimplexRule simplex_quadrature(int dim, double a, double b, int points_per_axis) {
  if (dim < 1 || dim > 10)
    throw std::invalid_argument("simplex_quadrature: dim must be in [1, 10], got " +
                                std::to_string(dim));
  if (points_per_axis < 1)
    throw std::invalid_argument("simplex_quadrature: points_per_axis must be >= 1");
  if (!(b > a)) throw std::invalid_argument("simplex_quadrature: need b > a");

  const Quad1D g = gauss_legendre(points_per_axis, 0.0, 1.0);
  const int p = points_per_axis;
  std::size_t count = 1;
  for (int k = 0; k < dim; ++k) count *= static_cast<std::size_t>(p);

  SimplexRule rule;
  rule.dim = dim;
  rule.a = a;
  rule.b = b;
  rule.nodes.resize(static_cast<Eigen::Index>(count), dim);
  rule.weights.resize(static_cast<Eigen::Index>(count));

  const double len = b - a;
  std::vector<int> idx(dim, 0);
  for (std::size_t flat = 0; flat < count; ++flat) {
    // Duffy transform: t_k = a + len * u_k * u_{k+1} * ... * u_{dim-1};
    // Jacobian = prod_k u_k^{k} over k = 1..dim-1 (0-based exponent = index).
    double w = 1.0;
    double suffix = 1.0;
    for (int k = dim - 1; k >= 0; --k) {
      const double u = g.nodes[idx[k]];
      suffix *= u;
      rule.nodes(static_cast<Eigen::Index>(flat), k) = a + len * suffix;
      w *= g.weights[idx[k]];
    }
    double jac = 1.0;
    for (int k = 1; k < dim; ++k) {
      double uk = g.nodes[idx[k]];
      double pw = 1.0;
      for (int e = 0; e < k; ++e) pw *= uk;
      jac *= pw;
    }
    rule.weights[static_cast<Eigen::Index>(flat)] = w * jac * std::pow(len, dim);
    for (int k = 0; k < dim; ++k) {
      if (++idx[k] < p) break;
      idx[k] = 0;
    }
  }
  return rule;
}

}  // namespace wcl::comb
