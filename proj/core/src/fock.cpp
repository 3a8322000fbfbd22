#include "wcl/fock.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace wcl::fock {
namespace {

std::string occ_key(const std::vector<std::uint8_t>& n) {
  return std::string(reinterpret_cast<const char*>(n.data()), n.size());
}

// Number of occupation vectors of M modes with total exactly k:
// C(M + k - 1, k), with an overflow-safe bail-out.
double sector_count(int modes, int k) {
  double c = 1.0;
  for (int i = 1; i <= k; ++i) c *= static_cast<double>(modes - 1 + i) / i;
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// FockBasis
// ---------------------------------------------------------------------------

int FockBasis::total_quanta(int f) const {
  int s = 0;
  for (std::uint8_t v : occ[f]) s += v;
  return s;
}

int FockBasis::index_of(const std::vector<std::uint8_t>& n) const {
  auto it = lookup_.find(occ_key(n));
  return it == lookup_.end() ? -1 : it->second;
}

FockBasis make_fock_basis(int modes, int n_max) {
  if (modes < 1) throw std::invalid_argument("make_fock_basis: need at least one mode");
  if (n_max < 0 || n_max > 200)
    throw std::invalid_argument("make_fock_basis: n_max out of range [0, 200]");

  double total = 0.0;
  for (int k = 0; k <= n_max; ++k) total += sector_count(modes, k);
  if (total > 3.0e6) {
    std::ostringstream os;
    os << "make_fock_basis: " << modes << " modes with total cutoff " << n_max
       << " give about " << total << " states; refusing above 3e6";
    throw std::invalid_argument(os.str());
  }

  FockBasis basis;
  basis.modes = modes;
  basis.n_max = n_max;

  std::vector<std::uint8_t> cur(static_cast<std::size_t>(modes), 0);
  // Emit the exact-k sector in lexicographic order of the occupation vector.
  auto gen = [&](auto&& self, int mode, int rem) -> void {
    if (mode == modes - 1) {
      cur[mode] = static_cast<std::uint8_t>(rem);
      basis.lookup_.emplace(occ_key(cur), basis.dim());
      basis.occ.push_back(cur);
      return;
    }
    for (int n = 0; n <= rem; ++n) {
      cur[mode] = static_cast<std::uint8_t>(n);
      self(self, mode + 1, rem - n);
    }
    cur[mode] = 0;
  };
  for (int k = 0; k <= n_max; ++k) {
    basis.sector_begin.push_back(basis.dim());
    gen(gen, 0, k);
  }
  return basis;
}

Vec apply_creation(const FockBasis& basis, const Vec& f, const Vec& psi) {
  if (f.size() != basis.modes || psi.size() != basis.dim())
    throw std::invalid_argument("apply_creation: size mismatch");
  Vec out = Vec::Zero(basis.dim());
  std::vector<std::uint8_t> n;
  for (int s = 0; s < basis.dim(); ++s) {
    if (psi[s] == cplx(0.0, 0.0)) continue;
    n = basis.occ[s];
    for (int i = 0; i < basis.modes; ++i) {
      if (f[i] == cplx(0.0, 0.0)) continue;
      n[i] += 1;
      const int tgt = basis.index_of(n);
      n[i] -= 1;
      if (tgt < 0) continue;  // pushed past the truncation
      out[tgt] += f[i] * std::sqrt(static_cast<double>(n[i]) + 1.0) * psi[s];
    }
  }
  return out;
}

Vec apply_annihilation(const FockBasis& basis, const Vec& f, const Vec& psi) {
  if (f.size() != basis.modes || psi.size() != basis.dim())
    throw std::invalid_argument("apply_annihilation: size mismatch");
  Vec out = Vec::Zero(basis.dim());
  std::vector<std::uint8_t> n;
  for (int s = 0; s < basis.dim(); ++s) {
    if (psi[s] == cplx(0.0, 0.0)) continue;
    n = basis.occ[s];
    for (int i = 0; i < basis.modes; ++i) {
      if (n[i] == 0 || f[i] == cplx(0.0, 0.0)) continue;
      n[i] -= 1;
      const int tgt = basis.index_of(n);
      n[i] += 1;
      if (tgt < 0) continue;
      out[tgt] += std::conj(f[i]) * std::sqrt(static_cast<double>(n[i])) * psi[s];
    }
  }
  return out;
}

Vec apply_field_phase(const FockBasis& basis, const RVec& mode_freqs, double t,
                      const Vec& psi) {
  if (mode_freqs.size() != basis.modes || psi.size() != basis.dim())
    throw std::invalid_argument("apply_field_phase: size mismatch");
  Vec out(basis.dim());
  for (int s = 0; s < basis.dim(); ++s) {
    double e = 0.0;
    for (int i = 0; i < basis.modes; ++i)
      e += static_cast<double>(basis.occ[s][i]) * mode_freqs[i];
    out[s] = std::exp(cplx(0.0, -t * e)) * psi[s];
  }
  return out;
}

// ---------------------------------------------------------------------------
// FockSpace
// ---------------------------------------------------------------------------

FockSpace make_fock_space(const SmallSystem& system,
                          const DiscretizedReservoir& reservoir, int n_max) {
  if (reservoir.dim != system.dim)
    throw std::invalid_argument("make_fock_space: system/reservoir dimension mismatch");
  FockSpace sp;
  sp.system = system;
  sp.reservoir = reservoir;
  sp.basis = make_fock_basis(reservoir.one_particle_dim, n_max);
  sp.sys_dim = system.dim;
  sp.field_dim = sp.basis.dim();
  sp.total_dim = sp.sys_dim * sp.field_dim;

  sp.mode_freqs = RVec::Zero(reservoir.one_particle_dim);
  for (std::size_t i = 0; i < reservoir.modes.size(); ++i) {
    const auto& m = reservoir.modes[i];
    const int mult = reservoir.mult_of(static_cast<int>(i));
    for (int a = 0; a < mult; ++a) sp.mode_freqs[m.op_offset + a] = m.x;
  }
  sp.field_energy = RVec::Zero(sp.field_dim);
  for (int f = 0; f < sp.field_dim; ++f) {
    double e = 0.0;
    for (int o = 0; o < sp.basis.modes; ++o)
      e += static_cast<double>(sp.basis.occ[f][o]) * sp.mode_freqs[o];
    sp.field_energy[f] = e;
  }

  if (n_max == 0)
    std::cerr << "warning: make_fock_space with n_max = 0 retains no field "
                 "quanta; any coupling acts trivially on this space\n";

  const int d = sp.sys_dim;
  std::vector<Eigen::Triplet<cplx>> trips;
  std::vector<std::uint8_t> n;
  for (int f = 0; f < sp.field_dim; ++f) {
    if (sp.basis.total_quanta(f) >= n_max) continue;
    n = sp.basis.occ[f];
    for (std::size_t i = 0; i < reservoir.modes.size(); ++i) {
      const auto& mode = reservoir.modes[i];
      const int mult = reservoir.mult_of(static_cast<int>(i));
      for (int a = 0; a < mult; ++a) {
        const int o = mode.op_offset + a;
        n[o] += 1;
        const int fu = sp.basis.index_of(n);
        n[o] -= 1;
        if (fu < 0) continue;
        const double amp = std::sqrt(static_cast<double>(n[o]) + 1.0);
        const Mat& blk = reservoir.blocks[i];
        for (int sr = 0; sr < d; ++sr)
          for (int sc = 0; sc < d; ++sc) {
            const cplx v = amp * blk(sr * mult + a, sc);
            if (v == cplx(0.0, 0.0)) continue;
            trips.emplace_back(fu * d + sr, f * d + sc, v);
            trips.emplace_back(f * d + sc, fu * d + sr, std::conj(v));
          }
      }
    }
  }
  sp.interaction.resize(sp.total_dim, sp.total_dim);
  sp.interaction.setFromTriplets(trips.begin(), trips.end());
  return sp;
}

Mat hamiltonian_dense(const FockSpace& space, double lambda) {
  const int d = space.sys_dim;
  Mat H = Mat::Zero(space.total_dim, space.total_dim);
  for (int f = 0; f < space.field_dim; ++f)
    H.block(f * d, f * d, d, d) =
        space.system.K + space.field_energy[f] * Mat::Identity(d, d);
  H += lambda * Mat(space.interaction);
  return H;
}

Vec apply_free_phase(const FockSpace& space, double t, const Vec& psi) {
  if (psi.size() != space.total_dim)
    throw std::invalid_argument("apply_free_phase: size mismatch");
  const int d = space.sys_dim;
  const Mat u = space.system.exp_itK(t);
  Vec out(space.total_dim);
  for (int f = 0; f < space.field_dim; ++f)
    out.segment(f * d, d) = std::exp(cplx(0.0, t * space.field_energy[f])) *
                            (u * psi.segment(f * d, d));
  return out;
}

Vec embed_vacuum(const FockSpace& space, const Vec& c) {
  if (c.size() != space.sys_dim)
    throw std::invalid_argument("embed_vacuum: system vector has wrong size");
  Vec out = Vec::Zero(space.total_dim);
  out.segment(0, space.sys_dim) = c;  // the vacuum occupation vector is state 0
  return out;
}

Vec project_vacuum(const FockSpace& space, const Vec& psi) {
  if (psi.size() != space.total_dim)
    throw std::invalid_argument("project_vacuum: size mismatch");
  return psi.segment(0, space.sys_dim);
}

Vec embed_one_particle(const FockSpace& space, const Vec& c, const Vec& f) {
  if (space.basis.n_max < 1)
    throw std::invalid_argument("embed_one_particle: basis retains no quanta");
  if (c.size() != space.sys_dim || f.size() != space.basis.modes)
    throw std::invalid_argument("embed_one_particle: size mismatch");
  Vec field = Vec::Zero(space.field_dim);
  field[0] = 1.0;
  field = apply_creation(space.basis, f, field);
  Vec out = Vec::Zero(space.total_dim);
  for (int fi = 0; fi < space.field_dim; ++fi) {
    if (field[fi] == cplx(0.0, 0.0)) continue;
    out.segment(fi * space.sys_dim, space.sys_dim) = field[fi] * c;
  }
  return out;
}

// ---------------------------------------------------------------------------
// FockPropagator
// ---------------------------------------------------------------------------

FockPropagator::FockPropagator(const FockSpace& space, double lambda,
                               PropagatorOptions opts)
    : space_(&space), lambda_(lambda), opts_(opts) {
  dense_ = space.total_dim <= opts_.dense_threshold;
  if (dense_) {
    eig_ = HermitianPropagator(hamiltonian_dense(space, lambda));
    vacuum_rows_ = eig_.evecs.topRows(space.sys_dim);
  } else {
    const int d = space.sys_dim;
    std::vector<Eigen::Triplet<cplx>> trips;
    for (int f = 0; f < space.field_dim; ++f)
      for (int sr = 0; sr < d; ++sr)
        for (int sc = 0; sc < d; ++sc) {
          cplx v = space.system.K(sr, sc);
          if (sr == sc) v += space.field_energy[f];
          if (v != cplx(0.0, 0.0)) trips.emplace_back(f * d + sr, f * d + sc, v);
        }
    h_sparse_ = lambda * space.interaction;
    Eigen::SparseMatrix<cplx> diag(space.total_dim, space.total_dim);
    diag.setFromTriplets(trips.begin(), trips.end());
    h_sparse_ += diag;
    h_sparse_.makeCompressed();
    // Gershgorin bound on the spectral radius, the substep scale.
    double scale = 0.0;
    for (int k = 0; k < h_sparse_.outerSize(); ++k) {
      double row = 0.0;
      for (Eigen::SparseMatrix<cplx>::InnerIterator it(h_sparse_, k); it; ++it)
        row += std::abs(it.value());
      scale = std::max(scale, row);
    }
    spectral_scale_ = std::max(scale, 1e-12);
  }
}

Vec FockPropagator::lanczos_step(double dt, const Vec& psi) const {
  const double nrm = psi.norm();
  if (nrm == 0.0) return psi;
  const int m = std::min<int>(opts_.krylov_dim, static_cast<int>(psi.size()));
  Mat V(psi.size(), m);
  RVec alpha = RVec::Zero(m), beta = RVec::Zero(m);
  V.col(0) = psi / nrm;
  int used = m;
  for (int k = 0; k < m; ++k) {
    Vec w = h_sparse_ * V.col(k);
    if (k > 0) w -= beta[k - 1] * V.col(k - 1);
    alpha[k] = std::real(V.col(k).dot(w));
    w -= alpha[k] * V.col(k);
    // One full re-orthogonalization pass keeps the basis clean.
    w -= V.leftCols(k + 1) * (V.leftCols(k + 1).adjoint() * w);
    const double b = w.norm();
    if (k + 1 < m) {
      if (b < 1e-12 * spectral_scale_) {
        used = k + 1;
        break;
      }
      beta[k] = b;
      V.col(k + 1) = w / b;
    }
  }
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(used, used);
  for (int k = 0; k < used; ++k) {
    T(k, k) = alpha[k];
    if (k + 1 < used) T(k, k + 1) = T(k + 1, k) = beta[k];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
  Vec e1 = Vec::Zero(used);
  e1[0] = 1.0;
  Vec y = es.eigenvectors().cast<cplx>() *
          ((-cplx(0.0, 1.0) * dt * es.eigenvalues().cast<cplx>().array())
               .exp()
               .matrix()
               .asDiagonal() *
           (es.eigenvectors().cast<cplx>().adjoint() * e1));
  return nrm * (V.leftCols(used) * y);
}

Vec FockPropagator::evolve(double t, const Vec& psi) const {
  if (psi.size() != space_->total_dim)
    throw std::invalid_argument("FockPropagator::evolve: size mismatch");
  if (dense_) return eig_.apply(t, psi);
  const double nrm0 = psi.norm();
  const int nsub = std::max<int>(
      1, static_cast<int>(std::ceil(std::abs(t) * spectral_scale_ / opts_.step_scale /
                                    opts_.krylov_dim)));
  const double dt = t / nsub;
  Vec cur = psi;
  for (int s = 0; s < nsub; ++s) {
    cur = lanczos_step(dt, cur);
    const double nrm = cur.norm();
    if (std::abs(nrm - nrm0) > opts_.unitarity_tol * std::max(nrm0, 1.0)) {
      std::ostringstream os;
      os << "FockPropagator::evolve: norm drifted by " << std::abs(nrm - nrm0)
         << " in one substep; decrease step_scale or increase krylov_dim";
      throw std::runtime_error(os.str());
    }
    if (nrm > 0.0) cur *= nrm0 / nrm;
  }
  return cur;
}

Vec FockPropagator::interaction_picture(double b, double a, const Vec& psi) const {
  Vec cur = apply_free_phase(*space_, -a, psi);
  cur = evolve(b - a, cur);
  return apply_free_phase(*space_, b, cur);
}

Mat FockPropagator::vacuum_block(double tau) const {
  const int d = space_->sys_dim;
  if (dense_) {
    Vec ph(eig_.evals.size());
    for (int k = 0; k < eig_.evals.size(); ++k)
      ph[k] = std::exp(cplx(0.0, -tau * eig_.evals[k]));
    return vacuum_rows_ * ph.asDiagonal() * vacuum_rows_.adjoint();
  }
  Mat out(d, d);
  for (int s = 0; s < d; ++s) {
    Vec e = Vec::Zero(space_->total_dim);
    e[s] = 1.0;
    out.col(s) = evolve(tau, e).segment(0, d);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reduced dynamics
// ---------------------------------------------------------------------------

Mat reduced_dynamics(const FockSpace& space, const FockPropagator& prop,
                     double lambda, double t, double t0) {
  if (lambda == 0.0) throw std::invalid_argument("reduced_dynamics: lambda must be nonzero");
  const double scale = 1.0 / (lambda * lambda);
  space.reservoir.check_horizon(std::abs(t - t0) * scale, "reduced_dynamics");
  return reduced_propagator_raw(space, prop, t * scale, t0 * scale);
}

Mat reduced_propagator_raw(const FockSpace& space, const FockPropagator& prop,
                           double b, double a) {
  // e^{-i a H0} I = I e^{-i a K} and I* e^{i b H0} = e^{i b K} I*, so the
  // compression needs only the vacuum block of e^{-i (b - a) H}.
  return space.system.exp_itK(b) * prop.vacuum_block(b - a) *
         space.system.exp_itK(-a);
}

// ---------------------------------------------------------------------------
// Friedrichs sector
// ---------------------------------------------------------------------------

FriedrichsSector make_friedrichs_sector(const SmallSystem& system,
                                        const DiscretizedReservoir& reservoir,
                                        double lambda) {
  if (reservoir.dim != system.dim)
    throw std::invalid_argument("make_friedrichs_sector: dimension mismatch");
  FriedrichsSector fs;
  fs.system = system;
  fs.reservoir = reservoir;
  const int d = system.dim;
  const int P = reservoir.one_particle_dim;
  fs.sys_dim = d;
  fs.dim = d * (1 + P);

  fs.h0 = Mat::Zero(fs.dim, fs.dim);
  fs.h0.block(0, 0, d, d) = system.K;
  for (std::size_t i = 0; i < reservoir.modes.size(); ++i) {
    const auto& m = reservoir.modes[i];
    const int mult = reservoir.mult_of(static_cast<int>(i));
    for (int a = 0; a < mult; ++a) {
      const int o = m.op_offset + a;
      fs.h0.block(d * (1 + o), d * (1 + o), d, d) =
          system.K + m.x * Mat::Identity(d, d);
    }
  }

  fs.coupling = Mat::Zero(fs.dim, fs.dim);
  for (std::size_t i = 0; i < reservoir.modes.size(); ++i) {
    const auto& m = reservoir.modes[i];
    const int mult = reservoir.mult_of(static_cast<int>(i));
    const Mat& blk = reservoir.blocks[i];
    for (int a = 0; a < mult; ++a) {
      const int o = m.op_offset + a;
      Mat B(d, d);
      for (int sr = 0; sr < d; ++sr)
        for (int sc = 0; sc < d; ++sc) B(sr, sc) = blk(sr * mult + a, sc);
      fs.coupling.block(d * (1 + o), 0, d, d) = B;
      fs.coupling.block(0, d * (1 + o), d, d) = B.adjoint();
    }
  }

  fs.eig = HermitianPropagator(fs.h0 + lambda * fs.coupling);
  return fs;
}

Mat friedrichs_reduced(const FriedrichsSector& sector, double lambda, double t,
                       double t0) {
  if (lambda == 0.0) throw std::invalid_argument("friedrichs_reduced: lambda must be nonzero");
  const double scale = 1.0 / (lambda * lambda);
  sector.reservoir.check_horizon(std::abs(t - t0) * scale, "friedrichs_reduced");
  const int d = sector.sys_dim;
  Vec ph(sector.eig.evals.size());
  for (int k = 0; k < sector.eig.evals.size(); ++k)
    ph[k] = std::exp(cplx(0.0, -(t - t0) * scale * sector.eig.evals[k]));
  const Mat top = sector.eig.evecs.topRows(d);
  const Mat block = top * ph.asDiagonal() * top.adjoint();
  return sector.system.exp_itK(t * scale) * block * sector.system.exp_itK(-t0 * scale);
}

// ---------------------------------------------------------------------------
// Dyson / Wick expansion
// ---------------------------------------------------------------------------

namespace {

// One candidate vertex operator in the system eigenbasis: rank-one |row><col|
// with interaction-picture phase frequency `freq`, tagged by the originating
// decomposition term.
struct SlotOp {
  int row = 0, col = 0;
  double freq = 0.0;
  int term = 0;
};

std::vector<double> state_energies(const SmallSystem& sys) {
  std::vector<double> e(sys.dim, 0.0);
  for (int L = 0; L < sys.num_levels(); ++L)
    for (int s : sys.level_states[L]) e[static_cast<std::size_t>(s)] = sys.levels[L];
  return e;
}

}  // namespace

DysonSum dyson_wick_sum(const SmallSystem& system,
                        const DiscretizedReservoir& reservoir,
                        const CouplingDecomposition& decomp, double lambda,
                        double t, double t0, DysonOptions opts) {
  if (lambda == 0.0) throw std::invalid_argument("dyson_wick_sum: lambda must be nonzero");
  if (opts.max_order < 0 || opts.max_order > 5)
    throw std::invalid_argument("dyson_wick_sum: max_order out of range [0, 5]");
  const double lam2 = 1.0 / (lambda * lambda);
  reservoir.check_horizon(std::abs(t - t0) * lam2, "dyson_wick_sum");

  const int d = system.dim;
  const int J = static_cast<int>(decomp.terms.size());
  if (J == 0) throw std::invalid_argument("dyson_wick_sum: empty decomposition");
  const int P = reservoir.one_particle_dim;

  // Orbital frequencies and the profile matrix (columns phi_j).
  RVec freqs = RVec::Zero(P);
  for (std::size_t i = 0; i < reservoir.modes.size(); ++i) {
    const int mult = reservoir.mult_of(static_cast<int>(i));
    for (int a = 0; a < mult; ++a)
      freqs[reservoir.modes[i].op_offset + a] = reservoir.modes[i].x;
  }
  Mat Phi(P, J);
  for (int j = 0; j < J; ++j) Phi.col(j) = decomp.terms[j].phi;

  // Phase-resolution guard: the integrand oscillates at interaction-time
  // frequencies up to the spectral diameter plus the largest grid frequency.
  double max_x = 0.0;
  for (const auto& m : reservoir.modes) max_x = std::max(max_x, std::abs(m.x));
  const double osc = lam2 * std::abs(t - t0) * (system.spectral_diameter + max_x);
  const int needed = static_cast<int>(std::ceil(osc / 3.0)) + 3;
  if (opts.points_per_axis < needed) {
    std::ostringstream os;
    os << "dyson_wick_sum: integrand accumulates about " << osc
       << " radians of phase; points_per_axis " << opts.points_per_axis
       << " is below the required " << needed;
    throw std::invalid_argument(os.str());
  }

  const auto energies = state_energies(system);
  // Candidate list per vertex sign: creation vertices carry D_j, annihilation
  // vertices carry D_j^*; both in the eigenbasis of K.
  std::vector<SlotOp> plus(J), minus(J);
  for (int j = 0; j < J; ++j) {
    const auto& tm = decomp.terms[j];
    const double w = energies[static_cast<std::size_t>(tm.state_m)] -
                     energies[static_cast<std::size_t>(tm.state_p)];
    plus[j] = SlotOp{tm.state_m, tm.state_p, w, j};
    minus[j] = SlotOp{tm.state_p, tm.state_m, -w, j};
  }

  DysonSum sum;
  sum.orders.resize(opts.max_order + 1);
  sum.norms.assign(opts.max_order + 1, 0.0);
  sum.bounds.assign(opts.max_order + 1, 0.0);
  sum.sharp_bounds.assign(opts.max_order + 1, 0.0);
  sum.orders[0] = Mat::Identity(d, d);
  sum.norms[0] = 1.0;
  sum.bounds[0] = 1.0;
  sum.sharp_bounds[0] = 1.0;

  const double h1 = decomp.h_l1(decomp.h_times[decomp.h_times.size() - 1]);
  const double dn = decomp.d_norm_max;
  const double span = std::abs(t - t0);
  for (int n = 1; n <= opts.max_order; ++n) {
    double fact = 1.0;
    for (int k = 2; k <= n; ++k) fact *= k;
    const double base = std::pow(dn * dn * span * h1, n) / fact;
    sum.bounds[n] = base / std::pow(2.0, n);
    sum.sharp_bounds[n] =
        base * static_cast<double>(comb::double_factorial_odd(n));
  }

  for (int n = 1; n <= opts.max_order; ++n) {
    const int slots = 2 * n;
    const auto pairings = comb::enumerate_pairings(n);
    const auto rule = comb::simplex_quadrature(slots, t0, t, opts.points_per_axis);

    Mat C = Mat::Zero(d, d);  // accumulated in the eigenbasis
    std::vector<Mat> corr(static_cast<std::size_t>(slots * slots));
    std::vector<std::vector<cplx>> phase_p(slots), phase_m(slots);
    std::vector<int> choice(static_cast<std::size_t>(slots), 0);

    for (int node = 0; node < rule.nodes.rows(); ++node) {
      const double weight = rule.weights[node];

      // Reservoir correlations for every ordered slot pair (a earlier, b later):
      // <phi_{j_b} | e^{-i lam^-2 (u_b - u_a) H_R} | phi_{j_a}>, a J x J table.
      for (int a = 0; a < slots; ++a)
        for (int b = a + 1; b < slots; ++b) {
          const double tau = lam2 * (rule.nodes(node, b) - rule.nodes(node, a));
          Vec ph(P);
          for (int o = 0; o < P; ++o) ph[o] = std::exp(cplx(0.0, -tau * freqs[o]));
          corr[static_cast<std::size_t>(a * slots + b)] =
              Phi.adjoint() * (ph.asDiagonal() * Phi);
        }

      // Interaction-picture phases per slot and candidate.
      for (int s = 0; s < slots; ++s) {
        const double u = lam2 * rule.nodes(node, s);
        phase_p[s].resize(J);
        phase_m[s].resize(J);
        for (int j = 0; j < J; ++j) {
          phase_p[s][j] = std::exp(cplx(0.0, u * plus[j].freq));
          phase_m[s][j] = std::exp(cplx(0.0, u * minus[j].freq));
        }
      }

      for (const auto& pr : pairings) {
        const auto mask = pr.creation_mask();
        const auto partner = pr.partners();
        // Depth-first over slot channels; the rank-one chain collapses to a
        // running row index, slot 0 fixing the column.
        auto dfs = [&](auto&& self, int slot, int run_row, int col0, cplx amp) -> void {
          if (slot == slots) {
            cplx v = amp;
            for (int s = 0; s < slots; ++s) {
              if (!mask[s]) continue;  // s creates, partner[s] annihilates later
              const Mat& cm = corr[static_cast<std::size_t>(s * slots + partner[s])];
              v *= cm(choice[static_cast<std::size_t>(partner[s])],
                      choice[static_cast<std::size_t>(s)]);
            }
            C(run_row, col0) += weight * v;
            return;
          }
          const auto& cands = mask[slot] ? plus : minus;
          const auto& phases = mask[slot] ? phase_p : phase_m;
          for (int j = 0; j < J; ++j) {
            const auto& op = cands[j];
            if (slot > 0 && op.col != run_row) continue;
            choice[static_cast<std::size_t>(slot)] = j;
            self(self, slot + 1, op.row, slot == 0 ? op.col : col0,
                 amp * phases[slot][j]);
          }
        };
        dfs(dfs, 0, -1, -1, cplx(1.0, 0.0));
      }
    }

    const double sign = (n % 2 == 0) ? 1.0 : -1.0;
    C *= sign * std::pow(lam2, n);
    sum.orders[n] = system.eigvecs * C * system.eigvecs.adjoint();
    sum.norms[n] = op_norm(sum.orders[n]);
  }

  sum.partial_sum = Mat::Zero(d, d);
  for (const auto& m : sum.orders) sum.partial_sum += m;
  return sum;
}

double dyson_tail_bound(const CouplingDecomposition& decomp, double d_norm,
                        double t, double t0, int max_order) {
  const double h1 = decomp.h_l1(decomp.h_times[decomp.h_times.size() - 1]);
  const double x = d_norm * d_norm * std::abs(t - t0) * h1 / 2.0;
  double fact = 1.0;
  for (int k = 2; k <= max_order; ++k) fact *= k;
  double term = std::pow(x, max_order) / fact;
  double tail = 0.0;
  for (int n = max_order + 1; n < max_order + 400; ++n) {
    term *= x / n;
    tail += term;
    if (term < 1e-18 * std::max(tail, 1e-300)) break;
  }
  return tail;
}

// ---------------------------------------------------------------------------
// Correlation chains
// ---------------------------------------------------------------------------

Mat correlation_chain(const FockSpace& space, const FockPropagator& prop,
                      double lambda, const std::vector<Mat>& inserts,
                      const std::vector<double>& times, double t_end,
                      double t0) {
  if (inserts.size() != times.size())
    throw std::invalid_argument("correlation_chain: one insertion time per operator");
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (times[k] < t0 || times[k] > t_end)
      throw std::invalid_argument("correlation_chain: insertion time outside [t0, t_end]");
    if (k > 0 && times[k] < times[k - 1])
      throw std::invalid_argument("correlation_chain: insertion times must ascend");
  }
  if (lambda == 0.0) throw std::invalid_argument("correlation_chain: lambda must be nonzero");
  const double lam2 = 1.0 / (lambda * lambda);
  space.reservoir.check_horizon((t_end - t0) * lam2, "correlation_chain");

  const int d = space.sys_dim;
  Mat out(d, d);
  for (int s = 0; s < d; ++s) {
    Vec c = Vec::Zero(d);
    c[s] = 1.0;
    Vec psi = embed_vacuum(space, c);
    double prev = t0;
    for (std::size_t k = 0; k < times.size(); ++k) {
      psi = prop.interaction_picture(times[k] * lam2, prev * lam2, psi);
      // Apply S_k (x) 1 blockwise.
      Vec next = Vec::Zero(space.total_dim);
      for (int f = 0; f < space.field_dim; ++f)
        next.segment(f * d, d) = inserts[k] * psi.segment(f * d, d);
      psi = next;
      prev = times[k];
    }
    psi = prop.interaction_picture(t_end * lam2, prev * lam2, psi);
    out.col(s) = project_vacuum(space, psi);
  }
  return out;
}

Mat correlation_chain_limit(const Mat& upsilon, const std::vector<Mat>& inserts,
                            const std::vector<double>& times, double t_end,
                            double t0) {
  if (inserts.size() != times.size())
    throw std::invalid_argument("correlation_chain_limit: one insertion time per operator");
  const int d = static_cast<int>(upsilon.rows());
  Mat out = Mat::Identity(d, d);
  double prev = t0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    out = inserts[k] * expm(cplx(0.0, -1.0) * (times[k] - prev) * upsilon) * out;
    prev = times[k];
  }
  return expm(cplx(0.0, -1.0) * (t_end - prev) * upsilon) * out;
}

// ---------------------------------------------------------------------------
// Resummation check
// ---------------------------------------------------------------------------

namespace {

struct ElementState {
  std::string label;
  Vec sys;    // system factor
  Vec field;  // field factor in the field-only basis
};

}  // namespace

ResummationResult resummation_check(const FockSpace& space,
                                    const FockPropagator& prop,
                                    const CouplingDecomposition& decomp,
                                    double lambda, double t, double t0,
                                    ResummationOptions opts) {
  if (opts.max_m < 0 || opts.max_m > 4)
    throw std::invalid_argument("resummation_check: max_m out of range [0, 4]");
  const int d = space.sys_dim;
  const int J = static_cast<int>(decomp.terms.size());
  if (J == 0) throw std::invalid_argument("resummation_check: empty decomposition");
  const int P = space.basis.modes;

  RVec freqs = space.mode_freqs;
  const auto energies = state_energies(space.system);

  // Vertex data: D_j^+ = D_j with a*(phi_j), D_j^- = D_j^* with a(phi_j);
  // interaction-picture phases from the eigenlevel gap.
  std::vector<Mat> dplus(J), dminus(J);
  std::vector<double> wfreq(J);
  for (int j = 0; j < J; ++j) {
    dplus[j] = decomp.terms[j].D;
    dminus[j] = decomp.terms[j].D.adjoint();
    wfreq[j] = energies[static_cast<std::size_t>(decomp.terms[j].state_m)] -
               energies[static_cast<std::size_t>(decomp.terms[j].state_p)];
  }

  // Probe states: two system vectors, vacuum and single-particle field factors.
  Vec ca = Vec::Zero(d);
  ca[0] = 1.0;
  Vec cb(d);
  for (int k = 0; k < d; ++k) cb[k] = std::exp(cplx(0.0, 0.7 * k));
  cb /= cb.norm();
  Vec vac = Vec::Zero(space.field_dim);
  vac[0] = 1.0;
  Vec g1 = decomp.terms[0].phi;
  g1 /= g1.norm();
  Vec g2 = decomp.terms[J - 1].phi;
  if (J > 1) g2 += decomp.terms[1].phi;
  g2 /= g2.norm();
  const Vec one1 = apply_creation(space.basis, g1, vac);
  const Vec one2 = apply_creation(space.basis, g2, vac);

  std::vector<ElementState> ins = {{"a,vac", ca, vac},
                                   {"b,vac", cb, vac},
                                   {"a,g1", ca, one1},
                                   {"b,g2", cb, one2}};
  std::vector<ElementState> outs = {{"a,vac", ca, vac},
                                    {"a,g1", ca, one1},
                                    {"b,g2", cb, one2}};

  auto full_state = [&](const ElementState& e) {
    Vec out = Vec::Zero(space.total_dim);
    for (int f = 0; f < space.field_dim; ++f)
      if (e.field[f] != cplx(0.0, 0.0)) out.segment(f * d, d) = e.field[f] * e.sys;
    return out;
  };

  ResummationResult res;
  for (const auto& in : ins)
    for (const auto& out : outs) {
      ResummationElement el;
      el.label = in.label + " -> " + out.label;
      res.elements.push_back(el);
    }

  // Direct side.
  {
    std::size_t idx = 0;
    for (const auto& in : ins) {
      const Vec evolved = prop.interaction_picture(t, t0, full_state(in));
      for (const auto& out : outs)
        res.elements[idx++].direct = full_state(out).dot(evolved);
    }
  }

  // Re-summed side, m = 0: the compressed propagator times the field overlap.
  const Mat g0 = reduced_propagator_raw(space, prop, t, t0);
  {
    std::size_t idx = 0;
    for (const auto& in : ins)
      for (const auto& out : outs) {
        res.elements[idx].resummed =
            out.sys.dot(g0 * in.sys) * out.field.dot(in.field);
        ++idx;
      }
  }

  // m >= 1: vertices at ordered times, the system part one compression of the
  // full alternating product, the field part a normal-ordered sandwich.
  for (int m = 1; m <= opts.max_m; ++m) {
    const auto rule = comb::simplex_quadrature(m, t0, t, opts.points_per_axis);
    const cplx pref = std::pow(cplx(0.0, -lambda), m);

    for (int node = 0; node < rule.nodes.rows(); ++node) {
      const double weight = rule.weights[node];
      std::vector<double> u(static_cast<std::size_t>(m));
      for (int k = 0; k < m; ++k) u[static_cast<std::size_t>(k)] = rule.nodes(node, k);

      // Evolved profiles e^{i u_k H_R} phi_j for every vertex slot.
      std::vector<std::vector<Vec>> evolved(static_cast<std::size_t>(m),
                                            std::vector<Vec>(static_cast<std::size_t>(J)));
      for (int k = 0; k < m; ++k)
        for (int j = 0; j < J; ++j) {
          Vec ph(P);
          for (int o = 0; o < P; ++o)
            ph[o] = std::exp(cplx(0.0, u[static_cast<std::size_t>(k)] * freqs[o])) *
                    decomp.terms[j].phi[o];
          evolved[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)] = ph;
        }

      // Walk the vertex tree: propagate each input's embedded vacuum through
      // T(u_1, t0), branch over (j, eps) at each vertex, propagate between
      // vertices, and compress at the end.  The field factors accumulate as
      // annihilations applied to the in (eps = -) or out (eps = +) state.
      struct Branch {
        std::vector<Vec> sys_states;   // one per input, on the full space
        std::vector<Vec> in_fields;    // one per input element
        std::vector<Vec> out_fields;   // one per output element
        cplx amp;
      };

      Branch root;
      root.amp = 1.0;
      for (const auto& in : ins) {
        root.sys_states.push_back(
            prop.interaction_picture(u[0], t0, embed_vacuum(space, in.sys)));
        root.in_fields.push_back(in.field);
      }
      for (const auto& out : outs) root.out_fields.push_back(out.field);

      auto recurse = [&](auto&& self, const Branch& br, int k) -> void {
        for (int j = 0; j < J; ++j) {
          const Vec& phi_u = evolved[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
          for (int eps = 0; eps < 2; ++eps) {
            Branch nb;
            const double sgn = eps == 0 ? 1.0 : -1.0;  // eps=0: creation
            const cplx phase = std::exp(
                cplx(0.0, sgn * wfreq[static_cast<std::size_t>(j)] * u[static_cast<std::size_t>(k)]));
            const Mat& dop = eps == 0 ? dplus[static_cast<std::size_t>(j)]
                                      : dminus[static_cast<std::size_t>(j)];
            nb.amp = br.amp * phase;

            nb.in_fields = br.in_fields;
            nb.out_fields = br.out_fields;
            bool alive = false;
            if (eps == 0) {
              for (auto& of : nb.out_fields) {
                of = apply_annihilation(space.basis, phi_u, of);
                alive = alive || of.squaredNorm() > 0.0;
              }
            } else {
              for (auto& inf : nb.in_fields) {
                inf = apply_annihilation(space.basis, phi_u, inf);
                alive = alive || inf.squaredNorm() > 0.0;
              }
            }
            if (!alive) continue;

            nb.sys_states.reserve(br.sys_states.size());
            const double next_u = k + 1 < m ? u[static_cast<std::size_t>(k + 1)] : t;
            for (const auto& ps : br.sys_states) {
              Vec v = Vec::Zero(space.total_dim);
              for (int f = 0; f < space.field_dim; ++f)
                v.segment(f * d, d) = dop * ps.segment(f * d, d);
              nb.sys_states.push_back(prop.interaction_picture(next_u, u[static_cast<std::size_t>(k)], v));
            }

            if (k + 1 < m) {
              self(self, nb, k + 1);
            } else {
              std::size_t idx = 0;
              for (std::size_t ii = 0; ii < ins.size(); ++ii) {
                const Vec red = project_vacuum(space, nb.sys_states[ii]);
                for (std::size_t oo = 0; oo < outs.size(); ++oo) {
                  const cplx fieldpart = nb.out_fields[oo].dot(nb.in_fields[ii]);
                  if (fieldpart != cplx(0.0, 0.0))
                    res.elements[idx].resummed +=
                        pref * weight * nb.amp * outs[oo].sys.dot(red) * fieldpart;
                  ++idx;
                }
              }
            }
          }
        }
      };
      recurse(recurse, root, 0);
    }
  }

  for (auto& el : res.elements) {
    el.abs_error = std::abs(el.direct - el.resummed);
    res.max_error = std::max(res.max_error, el.abs_error);
  }

  // Tail bound for the dropped orders: per vertex a factor
  // 2 * lambda * sum_j ||phi_j|| (both signs, any channel), the compressed
  // system chain a contraction, and the particle number growing by at most
  // one per vertex from single-particle probes.
  double sphi = 0.0;
  for (const auto& tm : decomp.terms) sphi += tm.phi.norm() * op_norm(tm.D);
  const double span = std::abs(t - t0);
  double fact = 1.0;
  for (int k = 2; k <= opts.max_m; ++k) fact *= k;
  double tail = 0.0;
  double numfac = 1.0;
  for (int k = 1; k <= opts.max_m + 1; ++k) numfac *= std::sqrt(1.0 + k);
  double term = std::pow(2.0 * lambda * span * sphi, opts.max_m + 1) /
                (fact * (opts.max_m + 1)) * numfac;
  for (int m = opts.max_m + 1; m < opts.max_m + 200; ++m) {
    tail += term;
    term *= 2.0 * lambda * span * sphi / (m + 1) * std::sqrt(2.0 + m);
    if (term < 1e-18 * std::max(tail, 1e-300)) break;
  }
  res.tail_bound = tail;
  return res;
}

}  // namespace wcl::fock
