#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <wcl/model_file.hpp>
#include <wcl/system_model.hpp>

#include <cmath>
#include <sstream>

using namespace wcl;
using namespace wcl::sys;

#ifndef MODELS_DIR
#define MODELS_DIR "models"
#endif

namespace {

Mat two_level_K() {
  Mat k = Mat::Zero(2, 2);
  k(1, 1) = 1.0;
  return k;
}

}  // namespace

TEST_CASE("spectral decomposition of a diagonal K") {
  const auto s = spectral_decompose(two_level_K());
  REQUIRE(s.dim == 2);
  REQUIRE(s.num_levels() == 2);
  CHECK(s.levels[0] == doctest::Approx(0.0));
  CHECK(s.levels[1] == doctest::Approx(1.0));
  CHECK(s.spectral_diameter == doctest::Approx(1.0));
  Mat p0 = Mat::Zero(2, 2);
  p0(0, 0) = 1.0;
  CHECK(op_norm(s.projectors[0] - p0) < 1e-14);
  CHECK(op_norm(s.projectors[0] + s.projectors[1] - Mat::Identity(2, 2)) < 1e-14);
  // exp(+i t K)
  const Mat u = s.exp_itK(0.4);
  CHECK(std::abs(u(0, 0) - cplx(1.0, 0.0)) < 1e-14);
  CHECK(std::abs(u(1, 1) - std::exp(cplx(0.0, 0.4))) < 1e-14);
}

TEST_CASE("near-degenerate eigenvalues cluster into one level") {
  Mat k = Mat::Zero(3, 3);
  k(1, 1) = 1e-13;
  k(2, 2) = 1.0;
  const auto s = spectral_decompose(k, 1e-9);
  CHECK(s.num_levels() == 2);
  CHECK(s.projectors[0].trace().real() == doctest::Approx(2.0));
}

TEST_CASE("non-hermitian K is rejected") {
  Mat k = Mat::Zero(2, 2);
  k(0, 1) = 1.0;
  CHECK_THROWS(spectral_decompose(k));
}

TEST_CASE("transition frequencies of a two-level system") {
  const auto s = spectral_decompose(two_level_K());
  const auto f = bohr_frequencies(s);
  REQUIRE(f.omegas.size() == 3);
  CHECK(f.omegas[0] == doctest::Approx(-1.0));
  CHECK(f.omegas[1] == doctest::Approx(0.0));
  CHECK(f.omegas[2] == doctest::Approx(1.0));
  CHECK(f.index_of(1.0) == 2);
  CHECK(f.index_of(0.37) == -1);
  // omega = k - k': +1 pairs upper level 1 with lower level 0
  REQUIRE(f.level_pairs[2].size() == 1);
  CHECK(f.level_pairs[2][0].first == 1);
  CHECK(f.level_pairs[2][0].second == 0);
  // zero frequency pairs each level with itself
  CHECK(f.level_pairs[1].size() == 2);
}

TEST_CASE("profile evaluation") {
  Profile flat;
  flat.kind = ProfileKind::Flat;
  flat.amplitude = 0.2;
  CHECK(flat(3.7) == cplx(0.2, 0.0));

  Profile g;
  g.kind = ProfileKind::Gaussian;
  g.amplitude = 2.0;
  g.center = 1.0;
  g.width = 0.5;
  CHECK(std::abs(g(1.0) - cplx(2.0, 0.0)) < 1e-15);
  CHECK(std::abs(g(1.5) - cplx(2.0 * std::exp(-0.5), 0.0)) < 1e-14);

  Profile l;
  l.kind = ProfileKind::Lorentzian;
  l.amplitude = 1.0;
  l.center = 0.0;
  l.width = 0.3;
  CHECK(std::abs(l(0.0) - cplx(1.0, 0.0)) < 1e-15);
  CHECK(std::abs(l(0.3) - cplx(0.5, 0.0)) < 1e-15);

  Profile t;
  t.kind = ProfileKind::Table;
  t.xs = {0.0, 1.0};
  t.values = {cplx(0.0, 0.0), cplx(2.0, 0.0)};
  CHECK(std::abs(t(0.25) - cplx(0.5, 0.0)) < 1e-15);
  CHECK(std::abs(t(-5.0) - cplx(0.0, 0.0)) < 1e-15);  // clamped
}

TEST_CASE("reservoir validation catches structural mistakes") {
  const auto s = spectral_decompose(two_level_K());
  Mat sx = Mat::Zero(2, 2);
  sx(0, 1) = 1.0;
  sx(1, 0) = 1.0;

  auto make_channel = [&](double omega, double a, double b) {
    Channel ch;
    ch.omega = omega;
    ch.a = a;
    ch.b = b;
    ch.profile.kind = ProfileKind::Flat;
    ch.profile.amplitude = 0.2;
    ch.coupling = sx;
    return ch;
  };

  ReservoirModel ok;
  ok.dim = 2;
  ok.channels = {make_channel(-1.0, -1.5, -0.5), make_channel(1.0, 0.5, 1.5)};
  CHECK_NOTHROW(validate_reservoir(s, ok));

  ReservoirModel overlap = ok;
  overlap.channels[1].a = -0.7;  // overlaps the first interval
  CHECK_THROWS(validate_reservoir(s, overlap));

  ReservoirModel outside = ok;
  outside.channels[1].omega = 5.0;  // label outside its interval
  CHECK_THROWS(validate_reservoir(s, outside));

  ReservoirModel not_bohr = ok;
  not_bohr.channels[1].omega = 1.2;
  not_bohr.channels[1].a = 1.1;
  not_bohr.channels[1].b = 1.4;  // 1.2 is not a transition frequency
  CHECK_THROWS(validate_reservoir(s, not_bohr));

  ReservoirModel bad_shape = ok;
  bad_shape.channels[0].coupling = Mat::Zero(3, 2);
  CHECK_THROWS(validate_reservoir(s, bad_shape));
}

TEST_CASE("midpoint discretization: weights, ordering, recurrence guard") {
  const auto mf = load_model(std::string(MODELS_DIR) + "/two_level_flat.model");
  const auto disc = mf.discretize(16);
  CHECK(disc.n_per_channel == 16);
  REQUIRE(disc.modes.size() == 3u * 16u);
  double total_w = 0.0;
  for (const auto& m : disc.modes) total_w += m.w;
  CHECK(total_w == doctest::Approx(3.0).epsilon(1e-12));  // three unit intervals

  // channel-major and ascending within each channel
  for (std::size_t i = 1; i < disc.modes.size(); ++i) {
    if (disc.modes[i].channel == disc.modes[i - 1].channel)
      CHECK(disc.modes[i].x > disc.modes[i - 1].x);
    else
      CHECK(disc.modes[i].channel == disc.modes[i - 1].channel + 1);
  }
  CHECK(disc.one_particle_dim == 48);
  CHECK(disc.max_spacing == doctest::Approx(1.0 / 16.0).epsilon(1e-12));
  CHECK(disc.recurrence_time() == doctest::Approx(kTwoPi * 16.0).epsilon(1e-12));
  CHECK_NOTHROW(disc.check_horizon(0.4 * disc.recurrence_time(), "test"));
  CHECK_THROWS(disc.check_horizon(0.6 * disc.recurrence_time(), "test"));
}

TEST_CASE("coupling decomposition reassembles the sampled coupling") {
  const auto mf = load_model(std::string(MODELS_DIR) + "/two_level_flat.model");
  const auto disc = mf.discretize(32);
  const auto dec = decompose_coupling(mf.system, mf.reservoir, disc);
  CHECK(!dec.terms.empty());
  CHECK(dec.reassembly_error < 1e-10);
  CHECK(dec.d_norm_max > 0.0);
  REQUIRE(dec.h_times.size() == dec.h_values.size());
  CHECK(dec.h_times[0] == doctest::Approx(0.0));
  for (const auto& term : dec.terms) {
    CHECK(term.D.rows() == 2);
    CHECK(std::abs(op_norm(term.D) - 1.0) < 1e-12);
    CHECK(term.phi.size() == disc.one_particle_dim);
  }
  // envelope: positive, integrable on the tabulated horizon
  CHECK(dec.h_values[0] > 0.0);
  const double full = dec.h_l1(dec.h_times[dec.h_times.size() - 1]);
  CHECK(full > 0.0);
  CHECK(dec.h_l1(1.0) < full);
  CHECK(dec.h_l1(0.0) == doctest::Approx(0.0));
}

TEST_CASE("model file parsing: reference model") {
  const auto mf = load_model(std::string(MODELS_DIR) + "/two_level_flat.model");
  CHECK(mf.system.dim == 2);
  REQUIRE(mf.reservoir.channels.size() == 3);
  CHECK(mf.reservoir.channels[0].omega == doctest::Approx(-1.0));
  CHECK(mf.reservoir.channels[1].omega == doctest::Approx(0.0));
  CHECK(mf.reservoir.channels[2].omega == doctest::Approx(1.0));
  CHECK(mf.reservoir.channels[0].a == doctest::Approx(-1.5));
  CHECK(mf.modes_per_channel == 48);
  CHECK(std::abs(mf.reservoir.channels[2].profile(1.0) - cplx(0.2, 0.0)) < 1e-15);
  CHECK(std::abs(mf.reservoir.v_at(1.0)(0, 1) - cplx(0.2, 0.0)) < 1e-15);
}

TEST_CASE("model file parsing: errors and header variants") {
  const std::string base =
      "[system]\ndim = 2\nK = 0 0 0 0 0 0 1 0\n"
      "[channel.1]\ninterval = 0.5 1.5\nprofile = flat 0.2\n"
      "coupling = 0 0 1 0 1 0 0 0\n";
  {
    std::istringstream in(base);
    CHECK_NOTHROW(parse_model(in, "inline"));
  }
  {
    // spaced channel header variant
    std::string spaced = base;
    spaced.replace(spaced.find("[channel.1]"), 11, "[channel 1]");
    std::istringstream in(spaced);
    const auto mf = parse_model(in, "inline");
    CHECK(mf.reservoir.channels[0].omega == doctest::Approx(1.0));
  }
  {
    std::istringstream in(std::string("[system]\ndim = 2\nK = 0 0 0 0 0 0 1 0\n"));
    CHECK_THROWS(parse_model(in, "inline"));  // no channels
  }
  {
    std::string dup = base + "\n[channel.1]\ninterval = 2 3\nprofile = flat 0.1\n"
                             "coupling = 0 0 1 0 1 0 0 0\n";
    // second channel labeled 1 but with interval not containing 1
    std::istringstream in(dup);
    CHECK_THROWS(parse_model(in, "inline"));
  }
  {
    std::string bad = base;
    bad.replace(bad.find("flat 0.2"), 8, "mystery 0.2");
    std::istringstream in(bad);
    CHECK_THROWS(parse_model(in, "inline"));
  }
  {
    std::string unknown = base + "[frobnicator]\nx = 1\n";
    std::istringstream in(unknown);
    CHECK_THROWS(parse_model(in, "inline"));
  }
  {
    std::string dupfield = base + "profile = flat 0.3\n";
    std::istringstream in(dupfield);
    CHECK_THROWS(parse_model(in, "inline"));
  }
}
