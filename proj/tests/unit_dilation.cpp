#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <wcl/dilation.hpp>
#include <wcl/model_file.hpp>

#include <cmath>
#include <stdexcept>
#include <vector>

using namespace wcl;
using namespace wcl::dil;

#ifndef MODELS_DIR
#define MODELS_DIR "models"
#endif

namespace {

sys::ModelFile flat_model() {
  return sys::load_model(std::string(MODELS_DIR) + "/two_level_flat.model");
}

sys::ModelFile tilted_model() {
  return sys::load_model(std::string(MODELS_DIR) + "/two_level_tilted.model");
}

davies::DaviesData flat_data() {
  const auto mf = flat_model();
  return davies::make_davies_data(mf.system, mf.reservoir);
}

cplx pseudo_random(std::uint64_t& s) {
  auto next = [&s] {
    s ^= s << 13;
    s ^= s >> 7;
    s ^= s << 17;
    return static_cast<double>(s % 10000) / 10000.0 - 0.5;
  };
  const double re = next();
  return cplx(re, next());
}

}  // namespace

TEST_CASE("collision unitary: unitarity, kraus blocks, exact unitality") {
  const auto data = flat_data();
  const auto bin = make_bin_system(data, 0.01, 1);
  CHECK(bin.d == 2);
  CHECK(bin.hd == 2);
  CHECK(bin.loc() == 3);  // vacuum + one quantum per fiber at cutoff 1
  CHECK(bin.unitarity_defect < 1e-12);
  CHECK(op_norm(bin.M.adjoint() * bin.M - Mat::Identity(bin.M.rows(), bin.M.cols())) <
        1e-12);
  REQUIRE(static_cast<int>(bin.kraus.size()) == bin.loc());
  CHECK(op_norm(bin.kraus[0] - bin.E) < 1e-15);

  // Heisenberg channel is exactly unital: sum_mu A_mu A_mu* = 1.
  Mat phi_one = Mat::Zero(2, 2);
  for (const auto& a : bin.kraus) phi_one += a * a.adjoint();
  CHECK(op_norm(phi_one - Mat::Identity(2, 2)) < 1e-13);
  CHECK(channel_unitality_defect(bin) < 1e-13);

  const Mat phi = collision_channel(bin);
  Vec vec_id = Vec::Zero(4);
  vec_id[0] = 1.0;
  vec_id[3] = 1.0;
  CHECK((phi * vec_id - vec_id).norm() < 1e-13);
  CHECK(op_norm(collision_channel_power(bin, 3) - phi * phi * phi) < 1e-13);
}

TEST_CASE("vacuum block is first-order accurate in the step") {
  const auto data = flat_data();
  auto defect = [&](double dt) {
    const auto bin = make_bin_system(data, dt, 1);
    return op_norm(bin.E - (Mat::Identity(2, 2) - cplx(0.0, dt) * data.upsilon));
  };
  const double d1 = defect(0.01);
  const double d2 = defect(0.005);
  CHECK(d1 > 1e-8);  // visibly quadratic, not roundoff
  CHECK(d1 / d2 > 3.3);
  CHECK(d1 / d2 < 4.7);
}

TEST_CASE("hermitian drift with silent fibers reproduces the exponential exactly") {
  const auto data = flat_data();
  const Mat h = data.upsilon_herm;  // hermitian level-shift part
  REQUIRE(herm_defect(h) < 1e-13);
  const std::vector<Mat> silent{Mat::Zero(2, 2)};
  const double dt = 0.01;
  const int n = 200;
  const auto bin = make_bin_system(h, silent, dt, 1);
  const Mat got = collision_contraction(bin, n);
  const Mat expect = expm(cplx(0.0, -1.0) * (n * dt) * h);
  CHECK(op_norm(got - expect) < 1e-12);
}

TEST_CASE("contraction power and one-sided derivatives") {
  const auto data = flat_data();
  const auto bin = make_bin_system(data, 1e-3, 1);
  Mat e3 = bin.E * bin.E * bin.E;
  CHECK(op_norm(collision_contraction(bin, 3) - e3) < 1e-14);
  CHECK(op_norm(collision_contraction(bin, 0) - Mat::Identity(2, 2)) < 1e-15);

  const auto [fwd, bwd] = contraction_derivatives(bin, 1);
  CHECK(op_norm(fwd - cplx(0.0, -1.0) * data.upsilon) < 1e-3);
  CHECK(op_norm(bwd - cplx(0.0, -1.0) * data.upsilon.adjoint()) < 1e-3);
  // the two derivatives differ by the dissipative part: the vacuum-sector
  // group is not self-adjoint
  const double asym = op_norm(fwd - bwd);
  CHECK(asym == doctest::Approx(op_norm(data.upsilon - data.upsilon.adjoint()))
                    .epsilon(0.02));
  CHECK(asym > 0.1);
}

TEST_CASE("time-bin lattice bookkeeping") {
  const auto lat = make_lattice(0.0, 1.0, 0.25, 0.5);
  CHECK(lat.collision_bins == 4);
  CHECK(lat.pad_bins == 2);
  CHECK(lat.total_bins == 8);
  CHECK(lat.s_left == doctest::Approx(-0.5));
  CHECK(lat.center(0) == doctest::Approx(-0.375));
  CHECK(lat.center(2) == doctest::Approx(0.125));
  CHECK(!lat.is_collision(1));
  CHECK(lat.is_collision(2));
  CHECK(lat.is_collision(5));
  CHECK(!lat.is_collision(6));

  CHECK_THROWS_AS(make_lattice(0.0, 1.0, 0.3, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(make_lattice(0.0, 1.0, 0.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(make_lattice(1.0, 0.0, 0.1, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(make_lattice(0.0, 1.0, 0.5, -0.1), std::invalid_argument);
}

TEST_CASE("sector engine indexing and state constructors") {
  const auto data = flat_data();
  const auto eng = make_sector_engine(data, make_lattice(0.0, 0.1, 0.05, 0.04));
  const int q_all = eng.orbitals();
  CHECK(eng.lattice.total_bins == 4);
  CHECK(q_all == 8);
  CHECK(eng.bin.cutoff == 2);
  CHECK(eng.bin.loc() == 6);  // vacuum, 2 singles, 3 pairs

  // pair_index is a bijection onto [0, pair_count)
  std::vector<int> seen(eng.pair_count(), 0);
  for (int q1 = 0; q1 < q_all; ++q1)
    for (int q2 = q1; q2 < q_all; ++q2) {
      const int p = eng.pair_index(q1, q2);
      CHECK(p >= 0);
      CHECK(p < eng.pair_count());
      seen[p] += 1;
      CHECK(eng.pair_index(q2, q1) == p);
    }
  for (int p = 0; p < eng.pair_count(); ++p) CHECK(seen[p] == 1);
  CHECK(eng.fiber_of(5) == 1);
  CHECK(eng.bin_of(5) == 2);

  Vec c(2);
  c << cplx(0.6, 0.0), cplx(0.0, 0.8);
  Vec kernel(eng.lattice.total_bins);
  kernel << cplx(0.1, 0.0), cplx(0.0, 0.5), cplx(-0.2, 0.1), cplx(0.3, 0.0);
  const auto st = make_one_particle_state(eng, c, 1, kernel);
  CHECK(st.c0.norm() < 1e-15);
  for (int b = 0; b < 4; ++b) {
    CHECK((st.c1.col(b * 2 + 1) - kernel[b] * c).norm() < 1e-15);
    CHECK(st.c1.col(b * 2 + 0).norm() < 1e-15);
  }
  const double k2 = kernel.squaredNorm();
  CHECK(st.squared_norm() == doctest::Approx(k2));
  CHECK(std::abs(one_particle_overlap(eng, c, 1, kernel, st) - cplx(k2, 0.0)) <
        1e-13);
  CHECK(std::abs(one_particle_overlap(eng, c, 0, kernel, st)) < 1e-15);
  CHECK(std::abs(vacuum_overlap(eng, c, st)) < 1e-15);

  const auto vac = make_vacuum_state(eng, c);
  CHECK(std::abs(vacuum_overlap(eng, c, vac) - cplx(1.0, 0.0)) < 1e-15);
}

TEST_CASE("second-quantized multiplication acts fiberwise and multiplicatively") {
  const auto data = flat_data();
  const auto eng = make_sector_engine(data, make_lattice(0.0, 0.1, 0.05, 0.0));
  const int q_all = eng.orbitals();

  std::uint64_t seed = 99;
  SectorState st;
  st.c0 = Vec::Zero(2);
  st.c1 = Mat::Zero(2, q_all);
  st.c2 = Mat::Zero(2, eng.pair_count());
  st.c0 << pseudo_random(seed), pseudo_random(seed);
  for (int q = 0; q < q_all; ++q)
    st.c1.col(q) << pseudo_random(seed), pseudo_random(seed);
  for (int p = 0; p < eng.pair_count(); ++p)
    st.c2.col(p) << pseudo_random(seed), pseudo_random(seed);

  const std::vector<cplx> g{cplx(0.5, 0.2), cplx(0.0, -0.7)};
  SectorState ga = st;
  theta_apply(eng, g, ga);
  CHECK((ga.c0 - st.c0).norm() < 1e-15);  // vacuum sector untouched
  for (int q = 0; q < q_all; ++q)
    CHECK((ga.c1.col(q) - g[eng.fiber_of(q)] * st.c1.col(q)).norm() < 1e-15);
  const int p01 = eng.pair_index(0, 3);  // fibers 0 and 1
  CHECK((ga.c2.col(p01) - g[0] * g[1] * st.c2.col(p01)).norm() < 1e-15);
  const int p11 = eng.pair_index(1, 1);
  CHECK((ga.c2.col(p11) - g[1] * g[1] * st.c2.col(p11)).norm() < 1e-15);

  // multiplicative in the symbol: applying g then h equals applying g h
  const std::vector<cplx> h{cplx(-0.3, 0.4), cplx(0.6, 0.0)};
  SectorState lhs = ga;
  theta_apply(eng, h, lhs);
  SectorState rhs = st;
  theta_apply(eng, {g[0] * h[0], g[1] * h[1]}, rhs);
  CHECK((lhs.c1 - rhs.c1).norm() < 1e-14);
  CHECK((lhs.c2 - rhs.c2).norm() < 1e-14);

  SectorState bad = st;
  CHECK_THROWS_AS(theta_apply(eng, {cplx(1.0, 0.0), cplx(0.5, 0.0)}, bad),
                  std::invalid_argument);
  CHECK_THROWS_AS(theta_apply(eng, {g[0]}, bad), std::invalid_argument);
}

TEST_CASE("renormalized energy: hand value and exact conservation") {
  const auto data = flat_data();
  const auto eng = make_sector_engine(data, make_lattice(0.0, 0.1, 0.05, 0.05));
  const Mat K = data.system.K;
  const int q_all = eng.orbitals();

  SectorState st;
  st.c0 = Vec::Zero(2);
  st.c1 = Mat::Zero(2, q_all);
  st.c2 = Mat::Zero(2, eng.pair_count());
  st.c0 << cplx(0.3, 0.0), cplx(0.0, 0.4);
  st.c1.col(5) << cplx(0.1, 0.0), cplx(0.2, 0.0);
  st.c2.col(eng.pair_index(2, 5)) << cplx(0.0, 0.05), cplx(0.0, 0.0);

  auto part = [&](const Vec& v, double energy) {
    return (v.dot(K * v)).real() + energy * v.squaredNorm();
  };
  const double expect =
      part(st.c0, 0.0) + part(st.c1.col(5), eng.fiber_freq[eng.fiber_of(5)]) +
      part(st.c2.col(eng.pair_index(2, 5)),
           eng.fiber_freq[eng.fiber_of(2)] + eng.fiber_freq[eng.fiber_of(5)]);
  CHECK(zren_expectation(eng, K, st) == doctest::Approx(expect).epsilon(1e-12));

  // The collision product commutes with K (x) 1 + sum_q omega_q n_q, so it
  // preserves joint eigenspaces: on a K-eigenvector dressed with quanta of
  // definite fiber, the normalized expectation is pinned to the eigenvalue.
  Vec e1 = Vec::Zero(2);
  e1[1] = 1.0;  // K e1 = e1
  auto normalized_z = [&](SectorState s) {
    sweep(eng, s);
    return zren_expectation(eng, K, s) / s.squared_norm();
  };

  SectorState vac = make_vacuum_state(eng, e1);
  CHECK(std::abs(normalized_z(vac) - 1.0) < 1e-12);

  Vec kernel(eng.lattice.total_bins);
  kernel << cplx(0.4, 0.1), cplx(0.2, -0.3), cplx(0.0, 0.5), cplx(0.6, 0.0);
  for (int fiber = 0; fiber < eng.bin.hd; ++fiber) {
    SectorState one = make_one_particle_state(eng, e1, fiber, kernel);
    CHECK(std::abs(normalized_z(one) - (1.0 + eng.fiber_freq[fiber])) < 1e-12);
  }

  SectorState two;
  two.c0 = Vec::Zero(2);
  two.c1 = Mat::Zero(2, q_all);
  two.c2 = Mat::Zero(2, eng.pair_count());
  // quanta in fibers 0 and 1 spread over different bins, system in e1
  two.c2.col(eng.pair_index(0, 5)) = cplx(0.6, 0.0) * e1;
  two.c2.col(eng.pair_index(4, 3)) = cplx(0.0, 0.8) * e1;
  const double z2 = 1.0 + eng.fiber_freq[0] + eng.fiber_freq[1];
  CHECK(std::abs(normalized_z(two) - z2) < 1e-12);
}

TEST_CASE("engine sweep equals the dense truncated collision product") {
  const auto data = flat_data();
  const auto lat = make_lattice(0.0, 0.1, 0.05, 0.04);
  const auto eng = make_sector_engine(data, lat);
  const int d = eng.bin.d;
  const int hd = eng.bin.hd;
  const int q_all = eng.orbitals();
  REQUIRE(q_all == 8);

  // Global basis: all lattice orbitals with total occupation <= 2.
  const auto glob = fock::make_fock_basis(q_all, 2);
  REQUIRE(glob.dim() == 45);
  const int gdim = glob.dim() * d;

  auto to_dense = [&](const SectorState& st) {
    Vec v = Vec::Zero(gdim);
    std::vector<std::uint8_t> occ(q_all, 0);
    v.segment(0, d) = st.c0;  // index 0 is the empty lattice
    if (st.c1.size() > 0)
      for (int q = 0; q < q_all; ++q) {
        std::fill(occ.begin(), occ.end(), 0);
        occ[q] = 1;
        v.segment(glob.index_of(occ) * d, d) = st.c1.col(q);
      }
    if (st.c2.size() > 0)
      for (int q1 = 0; q1 < q_all; ++q1)
        for (int q2 = q1; q2 < q_all; ++q2) {
          std::fill(occ.begin(), occ.end(), 0);
          occ[q1] = static_cast<std::uint8_t>(occ[q1] + 1);
          occ[q2] = static_cast<std::uint8_t>(occ[q2] + 1);
          v.segment(glob.index_of(occ) * d, d) =
              st.c2.col(eng.pair_index(q1, q2));
        }
    return v;
  };

  // Dense matrix of the bin-k collision restricted to the truncated space:
  // entries of M between the bin-local contents whenever the occupation away
  // from the bin agrees.
  auto dense_step = [&](int k) {
    Mat m = Mat::Zero(gdim, gdim);
    std::vector<std::uint8_t> nb_row(hd, 0), nb_col(hd, 0);
    for (int fr = 0; fr < glob.dim(); ++fr)
      for (int fc = 0; fc < glob.dim(); ++fc) {
        bool same_elsewhere = true;
        for (int q = 0; q < q_all && same_elsewhere; ++q)
          if (eng.bin_of(q) != k && glob.occ[fr][q] != glob.occ[fc][q])
            same_elsewhere = false;
        if (!same_elsewhere) continue;
        for (int a = 0; a < hd; ++a) {
          nb_row[a] = glob.occ[fr][k * hd + a];
          nb_col[a] = glob.occ[fc][k * hd + a];
        }
        const int lr = eng.bin.bin_basis.index_of(nb_row);
        const int lc = eng.bin.bin_basis.index_of(nb_col);
        REQUIRE(lr >= 0);
        REQUIRE(lc >= 0);
        m.block(fr * d, fc * d, d, d) =
            eng.bin.M.block(lr * d, lc * d, d, d);
      }
    return m;
  };

  std::uint64_t seed = 271828;
  SectorState st;
  st.c0 = Vec::Zero(d);
  st.c1 = Mat::Zero(d, q_all);
  st.c2 = Mat::Zero(d, eng.pair_count());
  st.c0 << pseudo_random(seed), pseudo_random(seed);
  for (int q = 0; q < q_all; ++q)
    st.c1.col(q) << pseudo_random(seed), pseudo_random(seed);
  for (int p = 0; p < eng.pair_count(); ++p)
    st.c2.col(p) << pseudo_random(seed), pseudo_random(seed);
  const double scale = 1.0 / std::sqrt(st.squared_norm());
  st.c0 *= scale;
  st.c1 *= scale;
  st.c2 *= scale;

  Vec v = to_dense(st);
  CHECK(std::abs(v.squaredNorm() - 1.0) < 1e-13);
  for (int k = lat.pad_bins; k < lat.pad_bins + lat.collision_bins; ++k)
    v = (dense_step(k) * v).eval();

  SectorState swept = st;
  sweep(eng, swept);
  const Vec w = to_dense(swept);
  CHECK((w - v).norm() < 1e-12);
  CHECK(std::abs(swept.squared_norm() - v.squaredNorm()) < 1e-12);

  // overlap accessors agree with the dense coefficients
  Vec c(2);
  c << cplx(0.8, 0.0), cplx(0.0, -0.6);
  CHECK(std::abs(vacuum_overlap(eng, c, swept) - c.dot(v.segment(0, d))) <
        1e-12);
}

TEST_CASE("time kernel of a frequency profile matches direct quadrature") {
  const auto data = flat_data();
  const auto eng = make_sector_engine(data, make_lattice(0.0, 0.2, 0.05, 0.1));
  const double radius = 5.0;
  auto g = [](double x) {
    return std::exp(-0.5 * x * x) * cplx(0.3, 0.1 * x);
  };
  const Vec kernel = hat_kernel(eng, g, radius);
  REQUIRE(kernel.size() == eng.lattice.total_bins);
  const auto q = gauss_legendre(800, -radius, radius);
  for (int b = 0; b < eng.lattice.total_bins; ++b) {
    const double s = eng.lattice.center(b);
    cplx acc(0.0, 0.0);
    for (int i = 0; i < 800; ++i)
      acc += q.weights[i] * g(q.nodes[i]) * std::exp(cplx(0.0, s * q.nodes[i]));
    acc *= std::sqrt(eng.lattice.dt / kTwoPi);
    CHECK(std::abs(kernel[b] - acc) < 1e-10);
  }
}

TEST_CASE("grid image of the scaling isometry: values and norm") {
  const auto mf = flat_model();
  const auto disc = mf.discretize(64);
  const double lambda = 0.7, omega = 0.0;
  const int channel = 1;  // the (-0.5, 0.5) window around omega = 0
  auto g = [](double y) { return cplx(std::exp(-y * y) * bump_window(y, 0.0, 0.6, 0.95), 0.0); };
  const Vec emb = grid_embedding(disc, channel, 0, omega, lambda, g);
  REQUIRE(emb.size() == disc.one_particle_dim);

  double norm2 = 0.0;
  for (int m = 0; m < static_cast<int>(disc.modes.size()); ++m) {
    const auto& mode = disc.modes[m];
    const cplx want = mode.channel == channel
                          ? std::sqrt(mode.w) / lambda *
                                g((mode.x - omega) / (lambda * lambda))
                          : cplx(0.0, 0.0);
    CHECK(std::abs(emb[mode.op_offset] - want) < 1e-14);
    norm2 += std::norm(emb[mode.op_offset]);
  }
  // Riemann sum of the rescaled profile: the squared norm approaches the
  // squared L2 norm of g
  const auto q = gauss_legendre(400, -0.95, 0.95);
  double l2 = 0.0;
  for (int i = 0; i < 400; ++i) l2 += q.weights[i] * std::norm(g(q.nodes[i]));
  CHECK(std::abs(norm2 - l2) / l2 < 1e-2);

  CHECK_THROWS_AS(grid_embedding(disc, 7, 0, omega, lambda, g),
                  std::invalid_argument);
  CHECK_THROWS_AS(grid_embedding(disc, channel, 3, omega, lambda, g),
                  std::invalid_argument);
}

TEST_CASE("compressed annihilator approaches its multiplication limit") {
  const auto mf = tilted_model();
  const auto disc = mf.discretize();
  const auto decomp = sys::decompose_coupling(mf.system, mf.reservoir, disc);
  REQUIRE(!decomp.terms.empty());
  const auto& term = decomp.terms.front();
  auto g = [](double x) {
    return cplx(std::exp(-x * x) * bump_window(x, 0.0, 2.0, 3.0), 0.0);
  };
  for (double t : {0.0, 1.0}) {
    double prev = -1.0;
    for (double lambda : {0.6, 0.3, 0.15}) {
      const auto [first, second] =
          annihilator_pair(mf.system, mf.reservoir, term, 0, lambda, t, g, 3.0);
      const double gap = std::abs(first - second);
      if (prev >= 0.0) CHECK(gap < prev);
      prev = gap;
      CHECK(std::abs(second) > 1e-4);  // the limit itself is nontrivial
    }
    CHECK(prev < 0.05);  // smallest lambda is already close
  }
}

TEST_CASE("free one-particle element: window clipping vanishes with lambda") {
  auto gp = [](double x) { return cplx(std::exp(-x * x / 2.0), 0.0); };
  auto g = [](double x) { return cplx(std::exp(-(x - 0.2) * (x - 0.2)), 0.0); };
  const double radius = 3.0, t = 0.8;
  const cplx limit = free_one_particle_limit(t, gp, g, radius);
  CHECK(std::abs(limit) > 0.1);

  double prev = -1.0;
  for (double lambda : {0.8, 0.5}) {
    const cplx el =
        free_one_particle_element(-0.5, 0.5, 0.0, lambda, t, gp, g, radius);
    const double gap = std::abs(el - limit);
    if (prev >= 0.0) CHECK(gap < prev);
    prev = gap;
    CHECK(gap > 1e-6);  // clipping is active at these couplings
  }
  // once the rescaled window covers the support the element is the limit
  const cplx el =
      free_one_particle_element(-0.5, 0.5, 0.0, 0.3, t, gp, g, radius);
  CHECK(std::abs(el - limit) < 1e-8);
}

TEST_CASE("free two-particle element is the permanent of one-particle ones") {
  auto g1 = [](double x) { return cplx(std::exp(-x * x), 0.0); };
  auto g2 = [](double x) { return cplx(std::exp(-(x - 0.3) * (x - 0.3)), 0.0); };
  auto gp1 = [](double x) { return cplx(std::exp(-0.5 * x * x), 0.0); };
  auto gp2 = [](double x) { return cplx(std::exp(-0.8 * x * x), 0.0); };
  const double radius = 3.0, t = 0.6, lambda = 0.5;

  // distinct channels: only the diagonal pairings survive
  const cplx both = free_two_particle_element(-1.5, -0.5, -1.0, 0.5, 1.5, 1.0,
                                              lambda, t, gp1, gp2, g1, g2, radius);
  const cplx e11 =
      free_one_particle_element(-1.5, -0.5, -1.0, lambda, t, gp1, g1, radius);
  const cplx e22 =
      free_one_particle_element(0.5, 1.5, 1.0, lambda, t, gp2, g2, radius);
  CHECK(std::abs(both - e11 * e22) < 1e-10);

  // same channel: the exchange pairing contributes too
  const cplx same = free_two_particle_element(0.5, 1.5, 1.0, 0.5, 1.5, 1.0,
                                              lambda, t, gp1, gp2, g1, g2, radius);
  const cplx f11 =
      free_one_particle_element(0.5, 1.5, 1.0, lambda, t, gp1, g1, radius);
  const cplx f12 =
      free_one_particle_element(0.5, 1.5, 1.0, lambda, t, gp1, g2, radius);
  const cplx f21 =
      free_one_particle_element(0.5, 1.5, 1.0, lambda, t, gp2, g1, radius);
  const cplx f22 =
      free_one_particle_element(0.5, 1.5, 1.0, lambda, t, gp2, g2, radius);
  CHECK(std::abs(same - (f11 * f22 + f12 * f21)) < 1e-10);
}

TEST_CASE("multiplication compression approaches evaluation at the channel center") {
  auto symbol = [](double y) {
    return cplx(0.7 * std::exp(-(y - 1.0) * (y - 1.0) / 0.5), 0.0);
  };
  auto g1 = [](double x) { return cplx(std::exp(-x * x) * bump_window(x, 0.0, 1.2, 1.9), 0.0); };
  auto g2 = [](double x) {
    return cplx(std::exp(-(x - 0.4) * (x - 0.4)) * bump_window(x, 0.4, 1.2, 1.9), 0.0);
  };
  double prev = -1.0;
  for (double lambda : {0.5, 0.25}) {
    const auto [compressed, limit] =
        theta_compression_pair(0.5, 1.5, 1.0, lambda, symbol, g2, g1, 2.0);
    const double gap = std::abs(compressed - limit);
    CHECK(std::abs(limit) > 1e-3);
    if (prev >= 0.0) CHECK(gap < prev);
    prev = gap;
  }

  auto loud = [](double) { return cplx(1.2, 0.0); };
  CHECK_THROWS_AS(theta_compression_pair(0.5, 1.5, 1.0, 0.5, loud, g2, g1, 2.0),
                  std::invalid_argument);
}

TEST_CASE("first collision order reproduces the noise-kernel quadrature") {
  const auto data = flat_data();
  const double t = 0.5, dt = 0.005;
  const auto lat = make_lattice(0.0, t, dt, 0.0);
  const auto eng = make_sector_engine(data, lat);

  Vec c_in(2), c_out(2);
  c_in << cplx(1.0, 0.0), cplx(0.0, 0.0);
  c_out << cplx(0.0, 0.0), cplx(1.0, 0.0);

  auto g_out = [](double x) {
    return cplx(std::exp(-0.5 * x * x) * bump_window(x, 0.0, 3.0, 4.0), 0.0);
  };
  const Vec kernel = hat_kernel(eng, g_out, 4.0);

  SectorState st = make_vacuum_state(eng, c_in);
  sweep(eng, st);

  for (int fiber = 0; fiber < eng.bin.hd; ++fiber) {
    const cplx got = one_particle_overlap(eng, c_out, fiber, kernel, st);
    // quadrature of the first-order noise emission against the out kernel,
    // using the same kernel samples so only the collision error remains
    cplx oracle(0.0, 0.0);
    const Mat& nu = data.jump_ops[fiber];
    for (int b = 0; b < lat.total_bins; ++b) {
      if (!lat.is_collision(b)) continue;
      const double s = lat.center(b);
      const Vec mid = expm(cplx(0.0, -1.0) * (t - s) * data.upsilon) * nu *
                      expm(cplx(0.0, -1.0) * s * data.upsilon) * c_in;
      oracle += std::conj(kernel[b] / std::sqrt(dt)) * c_out.dot(mid);
    }
    oracle *= cplx(0.0, -1.0) * dt;
    CHECK(std::abs(got - oracle) < 0.01);
    if (std::abs(oracle) > 0.02) CHECK(std::abs(got - oracle) < 0.2 * std::abs(oracle));
  }

  // the vacuum element of the same sweep is the contraction semigroup
  const cplx vac = vacuum_overlap(eng, c_out, st);
  const cplx sem = c_out.dot(expm(cplx(0.0, -1.0) * t * data.upsilon) * c_in);
  CHECK(std::abs(vac - sem) < 0.01);
}
