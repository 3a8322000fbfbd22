#include <wcl/dilation.hpp>

#include <unsupported/Eigen/KroneckerProduct>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace wcl::dil {

namespace {

cplx integrate(const Profile1D& f, double a, double b, int n) {
  if (!(b - a > 0.0)) return cplx(0.0, 0.0);
  Quad1D q = gauss_legendre(n, a, b);
  cplx acc(0.0, 0.0);
  for (int i = 0; i < q.nodes.size(); ++i) acc += q.weights[i] * f(q.nodes[i]);
  return acc;
}

// Node count for an integrand oscillating through `radians` over the panel.
int osc_nodes(double radians) {
  double n = 96.0 + 0.75 * std::abs(radians);
  if (n > 4000.0) n = 4000.0;
  return static_cast<int>(n);
}

}  // namespace

// ---------------------------------------------------------------------------
// Collision unitary.
// ---------------------------------------------------------------------------

BinSystem make_bin_system(const Mat& upsilon, const std::vector<Mat>& fibers,
                          double dt, int cutoff) {
  BinSystem bin;
  bin.d = static_cast<int>(upsilon.rows());
  if (bin.d < 1 || upsilon.cols() != upsilon.rows())
    throw std::invalid_argument("make_bin_system: drift must be square");
  if (fibers.empty())
    throw std::invalid_argument("make_bin_system: need at least one fiber");
  for (const Mat& f : fibers)
    if (f.rows() != bin.d || f.cols() != bin.d)
      throw std::invalid_argument("make_bin_system: fiber shape mismatch");
  if (!(dt > 0.0)) throw std::invalid_argument("make_bin_system: dt must be positive");
  if (cutoff < 1 || cutoff > 6)
    throw std::invalid_argument("make_bin_system: cutoff out of range");

  bin.hd = static_cast<int>(fibers.size());
  bin.dt = dt;
  bin.cutoff = cutoff;
  bin.upsilon = upsilon;
  bin.fibers = fibers;
  bin.bin_basis = fock::make_fock_basis(bin.hd, cutoff);

  const int d = bin.d;
  const int loc = bin.loc();
  const double rt = std::sqrt(dt);
  const Mat re_ups = 0.5 * (upsilon + upsilon.adjoint());

  Mat g = Mat::Zero(d * loc, d * loc);
  for (int mu = 0; mu < loc; ++mu) g.block(mu * d, mu * d, d, d) = dt * re_ups;
  for (int mu = 0; mu < loc; ++mu) {
    if (bin.bin_basis.total_quanta(mu) >= cutoff) continue;
    for (int a = 0; a < bin.hd; ++a) {
      std::vector<std::uint8_t> occ = bin.bin_basis.occ[mu];
      const double amp = rt * std::sqrt(static_cast<double>(occ[a]) + 1.0);
      occ[a] = static_cast<std::uint8_t>(occ[a] + 1);
      const int up = bin.bin_basis.index_of(occ);
      if (up < 0) continue;
      g.block(up * d, mu * d, d, d) += amp * fibers[a];
      g.block(mu * d, up * d, d, d) += amp * fibers[a].adjoint();
    }
  }

  bin.M = expm(cplx(0.0, -1.0) * g);
  bin.unitarity_defect =
      op_norm(bin.M * bin.M.adjoint() - Mat::Identity(d * loc, d * loc));
  bin.E = bin.M.block(0, 0, d, d);
  bin.kraus.reserve(loc);
  for (int mu = 0; mu < loc; ++mu) bin.kraus.push_back(bin.M.block(0, mu * d, d, d));
  return bin;
}

BinSystem make_bin_system(const davies::DaviesData& data, double dt, int cutoff) {
  return make_bin_system(data.upsilon, data.jump_ops, dt, cutoff);
}

Mat collision_contraction(const BinSystem& bin, int steps) {
  if (steps < 0) throw std::invalid_argument("collision_contraction: steps < 0");
  Mat acc = Mat::Identity(bin.d, bin.d);
  for (int k = 0; k < steps; ++k) acc = bin.E * acc;
  return acc;
}

Mat collision_channel(const BinSystem& bin) {
  const int d2 = bin.d * bin.d;
  Mat phi = Mat::Zero(d2, d2);
  for (const Mat& a : bin.kraus)
    phi += Eigen::kroneckerProduct(a.conjugate(), a).eval();
  return phi;
}

Mat collision_channel_power(const BinSystem& bin, int steps) {
  if (steps < 0) throw std::invalid_argument("collision_channel_power: steps < 0");
  const Mat phi = collision_channel(bin);
  Mat acc = Mat::Identity(phi.rows(), phi.cols());
  for (int k = 0; k < steps; ++k) acc = phi * acc;
  return acc;
}

double channel_unitality_defect(const BinSystem& bin) {
  Mat s = Mat::Zero(bin.d, bin.d);
  for (const Mat& a : bin.kraus) s += a * a.adjoint();
  return op_norm(s - Mat::Identity(bin.d, bin.d));
}

std::pair<Mat, Mat> contraction_derivatives(const BinSystem& bin, int steps) {
  if (steps < 1) throw std::invalid_argument("contraction_derivatives: steps < 1");
  const Mat forward = collision_contraction(bin, steps);
  const Mat eye = Mat::Identity(bin.d, bin.d);
  const double span = steps * bin.dt;
  const Mat right = (forward - eye) / span;
  const Mat left = (eye - forward.adjoint()) / span;
  return {right, left};
}

// ---------------------------------------------------------------------------
// Lattice and engine.
// ---------------------------------------------------------------------------

TimeBinLattice make_lattice(double t0, double t1, double dt, double pad) {
  if (!(dt > 0.0)) throw std::invalid_argument("make_lattice: dt must be positive");
  if (t1 < t0) throw std::invalid_argument("make_lattice: window reversed");
  if (pad < 0.0) throw std::invalid_argument("make_lattice: negative padding");
  TimeBinLattice lat;
  lat.t0 = t0;
  lat.t1 = t1;
  lat.dt = dt;
  const double ratio = (t1 - t0) / dt;
  lat.collision_bins = static_cast<int>(std::lround(ratio));
  if (std::abs(ratio - lat.collision_bins) > 1e-9 * std::max(1.0, std::abs(ratio)))
    throw std::invalid_argument("make_lattice: window must be a whole number of bins");
  lat.pad_bins = static_cast<int>(std::ceil(pad / dt - 1e-12));
  lat.total_bins = lat.collision_bins + 2 * lat.pad_bins;
  if (lat.total_bins < 1)
    throw std::invalid_argument("make_lattice: empty lattice");
  if (lat.total_bins > 2'000'000)
    throw std::invalid_argument("make_lattice: lattice too large");
  lat.s_left = t0 - lat.pad_bins * dt;
  return lat;
}

int SectorEngine::pair_index(int q1, int q2) const {
  if (q1 > q2) std::swap(q1, q2);
  const int big = orbitals();
  return q1 * big - q1 * (q1 - 1) / 2 + (q2 - q1);
}

int SectorEngine::pair_count() const {
  const int big = orbitals();
  return big * (big + 1) / 2;
}

SectorEngine make_sector_engine(const davies::DaviesData& data,
                                const TimeBinLattice& lattice) {
  SectorEngine eng;
  eng.bin = make_bin_system(data, lattice.dt, 2);
  eng.lattice = lattice;
  eng.fiber_freq = data.jump_omegas;
  const int hd = eng.bin.hd;
  const int d = eng.bin.d;

  eng.loc_single.assign(hd, -1);
  eng.loc_pair.assign(hd * hd, -1);
  std::vector<std::uint8_t> occ(hd, 0);
  for (int a = 0; a < hd; ++a) {
    std::fill(occ.begin(), occ.end(), 0);
    occ[a] = 1;
    eng.loc_single[a] = eng.bin.bin_basis.index_of(occ);
    for (int b = a; b < hd; ++b) {
      std::fill(occ.begin(), occ.end(), 0);
      occ[a] = static_cast<std::uint8_t>(occ[a] + 1);
      occ[b] = static_cast<std::uint8_t>(occ[b] + 1);
      eng.loc_pair[a * hd + b] = eng.bin.bin_basis.index_of(occ);
    }
  }
  for (int a = 0; a < hd; ++a)
    if (eng.loc_single[a] < 0)
      throw std::logic_error("make_sector_engine: missing one-quantum state");

  // Restriction of M to bin occupancy <= 1: slot 0 the empty bin, slot 1 + a
  // one quantum in fiber a.
  std::vector<int> sel(1 + hd);
  sel[0] = 0;
  for (int a = 0; a < hd; ++a) sel[1 + a] = eng.loc_single[a];
  eng.m_restricted = Mat::Zero(d * (1 + hd), d * (1 + hd));
  for (int i = 0; i < 1 + hd; ++i)
    for (int j = 0; j < 1 + hd; ++j)
      eng.m_restricted.block(i * d, j * d, d, d) =
          eng.bin.M.block(sel[i] * d, sel[j] * d, d, d);
  return eng;
}

double SectorState::squared_norm() const {
  double s = c0.squaredNorm();
  if (c1.size() > 0) s += c1.squaredNorm();
  if (c2.size() > 0) s += c2.squaredNorm();
  return s;
}

SectorState make_vacuum_state(const SectorEngine& eng, const Vec& c) {
  if (c.size() != eng.bin.d)
    throw std::invalid_argument("make_vacuum_state: system vector size");
  SectorState st;
  st.c0 = c;
  return st;
}

SectorState make_one_particle_state(const SectorEngine& eng, const Vec& c,
                                    int fiber, const Vec& kernel) {
  if (c.size() != eng.bin.d)
    throw std::invalid_argument("make_one_particle_state: system vector size");
  if (fiber < 0 || fiber >= eng.bin.hd)
    throw std::invalid_argument("make_one_particle_state: fiber out of range");
  if (kernel.size() != eng.lattice.total_bins)
    throw std::invalid_argument("make_one_particle_state: kernel size");
  SectorState st;
  st.c0 = Vec::Zero(eng.bin.d);
  st.c1 = Mat::Zero(eng.bin.d, eng.orbitals());
  for (int b = 0; b < eng.lattice.total_bins; ++b)
    st.c1.col(b * eng.bin.hd + fiber) = kernel[b] * c;
  return st;
}

void sweep(const SectorEngine& eng, SectorState& state) {
  const int d = eng.bin.d;
  const int hd = eng.bin.hd;
  const int q_all = eng.orbitals();
  const int loc = eng.bin.loc();
  if (state.c0.size() != d) throw std::invalid_argument("sweep: state mismatch");
  if (state.c1.size() == 0) state.c1 = Mat::Zero(d, q_all);
  if (state.c2.size() == 0) state.c2 = Mat::Zero(d, eng.pair_count());

  Vec vloc(d * loc);
  Vec vone(d * (1 + hd));
  std::vector<std::pair<int, Vec>> scratch;
  scratch.reserve(static_cast<std::size_t>(q_all) * hd + hd * hd);

  const int first = eng.lattice.pad_bins;
  const int last = first + eng.lattice.collision_bins;
  for (int k = first; k < last; ++k) {
    scratch.clear();
    const int base = k * hd;

    // Elsewhere-vacuum block: full collision unitary on the local state.
    vloc.setZero();
    vloc.segment(0, d) = state.c0;
    for (int a = 0; a < hd; ++a)
      vloc.segment(eng.loc_single[a] * d, d) = state.c1.col(base + a);
    for (int a = 0; a < hd; ++a)
      for (int b = a; b < hd; ++b)
        vloc.segment(eng.loc_pair[a * hd + b] * d, d) =
            state.c2.col(eng.pair_index(base + a, base + b));
    vloc = (eng.bin.M * vloc).eval();
    state.c0 = vloc.segment(0, d);
    for (int a = 0; a < hd; ++a)
      state.c1.col(base + a) = vloc.segment(eng.loc_single[a] * d, d);
    for (int a = 0; a < hd; ++a)
      for (int b = a; b < hd; ++b)
        scratch.emplace_back(eng.pair_index(base + a, base + b),
                             vloc.segment(eng.loc_pair[a * hd + b] * d, d));

    // One spectator elsewhere: restricted unitary against the spectator column.
    for (int q = 0; q < q_all; ++q) {
      if (q >= base && q < base + hd) continue;
      vone.segment(0, d) = state.c1.col(q);
      double mass = state.c1.col(q).squaredNorm();
      for (int a = 0; a < hd; ++a) {
        const auto col = state.c2.col(eng.pair_index(q, base + a));
        vone.segment((1 + a) * d, d) = col;
        mass += col.squaredNorm();
      }
      if (mass == 0.0) continue;
      vone = (eng.m_restricted * vone).eval();
      state.c1.col(q) = vone.segment(0, d);
      for (int a = 0; a < hd; ++a)
        scratch.emplace_back(eng.pair_index(q, base + a),
                             vone.segment((1 + a) * d, d));
    }

    // Both quanta elsewhere: plain vacuum compression, then restore the
    // columns the two blocks above rebuilt.
    state.c2 = (eng.bin.E * state.c2).eval();
    for (const auto& upd : scratch) state.c2.col(upd.first) = upd.second;
  }
}

cplx vacuum_overlap(const SectorEngine& eng, const Vec& c, const SectorState& state) {
  if (c.size() != eng.bin.d) throw std::invalid_argument("vacuum_overlap: size");
  return c.dot(state.c0);
}

cplx one_particle_overlap(const SectorEngine& eng, const Vec& c, int fiber,
                          const Vec& kernel, const SectorState& state) {
  if (c.size() != eng.bin.d)
    throw std::invalid_argument("one_particle_overlap: system vector size");
  if (fiber < 0 || fiber >= eng.bin.hd)
    throw std::invalid_argument("one_particle_overlap: fiber out of range");
  if (kernel.size() != eng.lattice.total_bins)
    throw std::invalid_argument("one_particle_overlap: kernel size");
  if (state.c1.size() == 0) return cplx(0.0, 0.0);
  cplx acc(0.0, 0.0);
  for (int b = 0; b < eng.lattice.total_bins; ++b)
    acc += std::conj(kernel[b]) * c.dot(state.c1.col(b * eng.bin.hd + fiber));
  return acc;
}

double zren_expectation(const SectorEngine& eng, const Mat& K,
                        const SectorState& state) {
  if (K.rows() != eng.bin.d || K.cols() != eng.bin.d)
    throw std::invalid_argument("zren_expectation: K shape");
  cplx acc = state.c0.dot(K * state.c0);
  if (state.c1.size() > 0) {
    for (int q = 0; q < eng.orbitals(); ++q) {
      const auto col = state.c1.col(q);
      acc += col.dot(K * col);
      acc += eng.fiber_freq[eng.fiber_of(q)] * col.squaredNorm();
    }
  }
  if (state.c2.size() > 0) {
    for (int q1 = 0; q1 < eng.orbitals(); ++q1)
      for (int q2 = q1; q2 < eng.orbitals(); ++q2) {
        const auto col = state.c2.col(eng.pair_index(q1, q2));
        if (col.squaredNorm() == 0.0) continue;
        acc += col.dot(K * col);
        acc += (eng.fiber_freq[eng.fiber_of(q1)] + eng.fiber_freq[eng.fiber_of(q2)]) *
               col.squaredNorm();
      }
  }
  return acc.real();
}

void theta_apply(const SectorEngine& eng, const std::vector<cplx>& g,
                 SectorState& state) {
  if (static_cast<int>(g.size()) != eng.bin.hd)
    throw std::invalid_argument("theta_apply: one factor per fiber required");
  for (const cplx& z : g)
    if (!(std::abs(z) < 1.0))
      throw std::invalid_argument("theta_apply: factors must have modulus < 1");
  if (state.c1.size() > 0)
    for (int q = 0; q < eng.orbitals(); ++q)
      state.c1.col(q) *= g[eng.fiber_of(q)];
  if (state.c2.size() > 0)
    for (int q1 = 0; q1 < eng.orbitals(); ++q1)
      for (int q2 = q1; q2 < eng.orbitals(); ++q2)
        state.c2.col(eng.pair_index(q1, q2)) *=
            g[eng.fiber_of(q1)] * g[eng.fiber_of(q2)];
}

Vec hat_kernel(const SectorEngine& eng, const Profile1D& g, double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("hat_kernel: radius");
  const int nb = eng.lattice.total_bins;
  Vec out(nb);
  const double scale = std::sqrt(eng.lattice.dt / kTwoPi);
  for (int b = 0; b < nb; ++b) {
    const double s = eng.lattice.center(b);
    auto f = [&](double x) { return g(x) * std::exp(cplx(0.0, s * x)); };
    out[b] = scale * integrate(f, -radius, radius, osc_nodes(2.0 * radius * std::abs(s)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scaling isometries.
// ---------------------------------------------------------------------------

Vec grid_embedding(const sys::DiscretizedReservoir& disc, int channel, int fiber,
                   double omega, double lambda, const Profile1D& g) {
  if (!(lambda > 0.0)) throw std::invalid_argument("grid_embedding: lambda");
  if (channel < 0) throw std::invalid_argument("grid_embedding: channel");
  Vec out = Vec::Zero(disc.one_particle_dim);
  bool seen = false;
  for (int m = 0; m < static_cast<int>(disc.modes.size()); ++m) {
    const auto& mode = disc.modes[m];
    if (mode.channel != channel) continue;
    if (fiber < 0 || fiber >= disc.mult_of(m))
      throw std::invalid_argument("grid_embedding: fiber out of range");
    seen = true;
    out[mode.op_offset + fiber] =
        std::sqrt(mode.w) / lambda * g((mode.x - omega) / (lambda * lambda));
  }
  if (!seen) throw std::invalid_argument("grid_embedding: channel has no modes");
  return out;
}

// ---------------------------------------------------------------------------
// Multiplication-limit quadratures.
// ---------------------------------------------------------------------------

std::pair<cplx, cplx> annihilator_pair(const sys::SmallSystem& system,
                                       const sys::ReservoirModel& res,
                                       const sys::CouplingTerm& term, int fiber,
                                       double lambda, double t, const Profile1D& g,
                                       double radius) {
  if (!(lambda > 0.0)) throw std::invalid_argument("annihilator_pair: lambda");
  if (term.channel < 0 || term.channel >= static_cast<int>(res.channels.size()))
    throw std::invalid_argument("annihilator_pair: term channel");
  const auto& ch = res.channels[term.channel];
  const double omega = term.omega;
  const double inv = 1.0 / (lambda * lambda);
  const double lo = std::max((ch.a - omega) * inv, -radius);
  const double hi = std::min((ch.b - omega) * inv, radius);

  auto compressed_f = [&](double x) {
    return std::conj(g(x)) * std::exp(cplx(0.0, t * x)) *
           sys::coupling_term_value(system, res, term, omega + lambda * lambda * x,
                                    fiber);
  };
  const cplx compressed =
      integrate(compressed_f, lo, hi, osc_nodes(std::abs(t) * (hi - lo)));

  auto plain_f = [&](double x) {
    return std::conj(g(x)) * std::exp(cplx(0.0, t * x));
  };
  const cplx limit =
      integrate(plain_f, -radius, radius, osc_nodes(2.0 * std::abs(t) * radius)) *
      sys::coupling_term_value(system, res, term, omega, fiber);
  return {compressed, limit};
}

cplx free_one_particle_element(double ch_lo, double ch_hi, double omega,
                               double lambda, double t, const Profile1D& gp,
                               const Profile1D& g, double radius) {
  if (!(lambda > 0.0))
    throw std::invalid_argument("free_one_particle_element: lambda");
  const double inv = 1.0 / (lambda * lambda);
  const double lo = std::max((ch_lo - omega) * inv, -radius);
  const double hi = std::min((ch_hi - omega) * inv, radius);
  auto f = [&](double x) {
    return std::conj(gp(x)) * std::exp(cplx(0.0, -t * x)) * g(x);
  };
  return integrate(f, lo, hi, osc_nodes(std::abs(t) * (hi - lo)));
}

cplx free_one_particle_limit(double t, const Profile1D& gp, const Profile1D& g,
                             double radius) {
  auto f = [&](double x) {
    return std::conj(gp(x)) * std::exp(cplx(0.0, -t * x)) * g(x);
  };
  return integrate(f, -radius, radius, osc_nodes(2.0 * std::abs(t) * radius));
}

cplx free_two_particle_element(double ch_lo1, double ch_hi1, double omega1,
                               double ch_lo2, double ch_hi2, double omega2,
                               double lambda, double t, const Profile1D& gp1,
                               const Profile1D& gp2, const Profile1D& g1,
                               const Profile1D& g2, double radius) {
  const cplx a11 =
      free_one_particle_element(ch_lo1, ch_hi1, omega1, lambda, t, gp1, g1, radius);
  const cplx a22 =
      free_one_particle_element(ch_lo2, ch_hi2, omega2, lambda, t, gp2, g2, radius);
  const bool same = std::abs(omega1 - omega2) < 1e-12 &&
                    std::abs(ch_lo1 - ch_lo2) < 1e-12 &&
                    std::abs(ch_hi1 - ch_hi2) < 1e-12;
  if (!same) return a11 * a22;
  const cplx a12 =
      free_one_particle_element(ch_lo1, ch_hi1, omega1, lambda, t, gp1, g2, radius);
  const cplx a21 =
      free_one_particle_element(ch_lo2, ch_hi2, omega2, lambda, t, gp2, g1, radius);
  return a11 * a22 + a12 * a21;
}

std::pair<cplx, cplx> theta_compression_pair(double ch_lo, double ch_hi,
                                             double omega, double lambda,
                                             const Profile1D& G, const Profile1D& g2,
                                             const Profile1D& g1, double radius) {
  if (!(lambda > 0.0)) throw std::invalid_argument("theta_compression_pair: lambda");
  const int samples = 2001;
  for (int i = 0; i < samples; ++i) {
    const double y = ch_lo + (ch_hi - ch_lo) * i / (samples - 1);
    if (!(std::abs(G(y)) < 1.0))
      throw std::invalid_argument(
          "theta_compression_pair: multiplication symbol must stay below one");
  }
  const double inv = 1.0 / (lambda * lambda);
  const double lo = std::max((ch_lo - omega) * inv, -radius);
  const double hi = std::min((ch_hi - omega) * inv, radius);
  auto f = [&](double x) {
    return std::conj(g2(x)) * G(omega + lambda * lambda * x) * g1(x);
  };
  const cplx compressed = integrate(f, lo, hi, 400);
  auto ov = [&](double x) { return std::conj(g2(x)) * g1(x); };
  const cplx limit = G(omega) * integrate(ov, -radius, radius, 400);
  return {compressed, limit};
}

}  // namespace wcl::dil
