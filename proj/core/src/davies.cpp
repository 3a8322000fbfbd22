// wcl/davies.cpp — secular generator and semigroup assembly.
#include "wcl/davies.hpp"

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/KroneckerProduct>

#include <cmath>
#include <stdexcept>

namespace wcl::davies {

namespace {

// P (x) 1_mult under the stacking row = m*mult + alpha.
Mat expand_projector(const Mat& P, int mult) {
  const int d = static_cast<int>(P.rows());
  Mat out = Mat::Zero(d * mult, d * mult);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      for (int a = 0; a < mult; ++a) out(i * mult + a, j * mult + a) = P(i, j);
  return out;
}

double freq_scale(const SmallSystem& sys) { return std::max(sys.spectral_diameter, 1.0); }

}  // namespace

PlemeljPieces plemelj_pieces(const SmallSystem& sys, const ReservoirModel& res, int level,
                             double omega, const UpsilonParams& params) {
  if (level < 0 || level >= sys.num_levels())
    throw std::invalid_argument("plemelj_pieces: level index out of range");
  const int d = sys.dim;
  const double edge_tol = 1e-10 * freq_scale(sys);

  PlemeljPieces out;
  out.on_shell = Mat::Zero(d, d);
  out.principal = Mat::Zero(d, d);

  for (const auto& ch : res.channels) {
    const Mat Pf = expand_projector(sys.projectors[static_cast<std::size_t>(level)], ch.mult);
    auto f = [&](double x) -> Mat {
      const Mat v = ch.profile(x) * ch.coupling;
      return v.adjoint() * Pf * v;
    };
    const bool inside = ch.contains(omega);
    const double dist = std::min(std::abs(omega - ch.a), std::abs(omega - ch.b));
    if (dist < edge_tol)
      throw std::invalid_argument("plemelj_pieces: frequency " + format_double(omega) +
                                  " sits on a channel endpoint; the weight there would diverge");
    if (!inside) {
      const Quad1D q = gauss_legendre(params.gauss_points, ch.a, ch.b);
      for (int i = 0; i < q.nodes.size(); ++i)
        out.principal += (q.weights[i] / (q.nodes[i] - omega)) * f(q.nodes[i]);
      continue;
    }
    out.on_shell += kPi * f(omega);
    // Symmetric fold around omega removes the singularity: the integrand
    // (f(omega+u) - f(omega-u))/u extends smoothly to u = 0.
    const double r = std::min(omega - ch.a, ch.b - omega);
    const Quad1D qf = gauss_legendre(params.gauss_points, 0.0, r);
    for (int i = 0; i < qf.nodes.size(); ++i) {
      const double u = qf.nodes[i];
      out.principal += (qf.weights[i] / u) * (f(omega + u) - f(omega - u));
    }
    // Leftover piece on the longer side.  When omega sits at the channel
    // midpoint the leftover width is pure rounding noise; skip it rather
    // than hand a degenerate interval to the quadrature.
    const double sliver = 1e-12 * (ch.b - ch.a);
    if (ch.b - (omega + r) > sliver) {
      const Quad1D qr = gauss_legendre(params.gauss_points, omega + r, ch.b);
      for (int i = 0; i < qr.nodes.size(); ++i)
        out.principal += (qr.weights[i] / (qr.nodes[i] - omega)) * f(qr.nodes[i]);
    } else if ((omega - r) - ch.a > sliver) {
      const Quad1D ql = gauss_legendre(params.gauss_points, ch.a, omega - r);
      for (int i = 0; i < ql.nodes.size(); ++i)
        out.principal += (ql.weights[i] / (ql.nodes[i] - omega)) * f(ql.nodes[i]);
    }
  }
  return out;
}

Mat compute_upsilon(const SmallSystem& sys, const ReservoirModel& res,
                    const UpsilonParams& params) {
  sys::validate_reservoir(sys, res);
  const int d = sys.dim;
  Mat U = Mat::Zero(d, d);
  const int L = sys.num_levels();
  for (int k = 0; k < L; ++k) {
    for (int kp = 0; kp < L; ++kp) {
      const double omega = sys.levels[static_cast<std::size_t>(k)] -
                           sys.levels[static_cast<std::size_t>(kp)];
      const PlemeljPieces p = plemelj_pieces(sys, res, kp, omega, params);
      const Mat& Pk = sys.projectors[static_cast<std::size_t>(k)];
      U += Pk * (cplx(0.0, -1.0) * p.on_shell - p.principal) * Pk;
    }
  }
  return U;
}

Mat upsilon_from_grid(const SmallSystem& sys, const DiscretizedReservoir& disc, double eta) {
  if (!(eta > 0.0)) throw std::invalid_argument("upsilon_from_grid: eta must be > 0");
  const int d = sys.dim;
  const int L = sys.num_levels();
  const int M = static_cast<int>(disc.modes.size());

  // G[i][kp] = B_i^* (P_kp (x) 1) B_i, one d x d matrix per mode and level.
  std::vector<std::vector<Mat>> G(static_cast<std::size_t>(M));
  for (int i = 0; i < M; ++i) {
    const Mat& B = disc.blocks[static_cast<std::size_t>(i)];
    const int mult = static_cast<int>(B.rows()) / d;
    G[static_cast<std::size_t>(i)].reserve(static_cast<std::size_t>(L));
    for (int kp = 0; kp < L; ++kp) {
      const Mat Pf = expand_projector(sys.projectors[static_cast<std::size_t>(kp)], mult);
      G[static_cast<std::size_t>(i)].push_back(B.adjoint() * Pf * B);
    }
  }

  Mat U = Mat::Zero(d, d);
  for (int k = 0; k < L; ++k) {
    for (int kp = 0; kp < L; ++kp) {
      const double omega = sys.levels[static_cast<std::size_t>(k)] -
                           sys.levels[static_cast<std::size_t>(kp)];
      Mat inner = Mat::Zero(d, d);
      for (int i = 0; i < M; ++i) {
        const double x = disc.modes[static_cast<std::size_t>(i)].x;
        const cplx c = cplx(0.0, -1.0) / cplx(eta, x - omega);
        inner += c * G[static_cast<std::size_t>(i)][static_cast<std::size_t>(kp)];
      }
      const Mat& Pk = sys.projectors[static_cast<std::size_t>(k)];
      U += Pk * inner * Pk;
    }
  }
  return U;
}

Mat upsilon_resolvent(const SmallSystem& sys, const DiscretizedReservoir& disc,
                      const ResolventParams& params) {
  if (!(params.eta_factor >= 4.0))
    throw std::invalid_argument(
        "upsilon_resolvent: eta_factor must be >= 4 so the halved width still "
        "spans several grid spacings");
  const double eta = params.eta_factor * disc.max_spacing;
  const Mat coarse = upsilon_from_grid(sys, disc, eta);
  if (!params.richardson) return coarse;
  const Mat fine = upsilon_from_grid(sys, disc, 0.5 * eta);
  return 2.0 * fine - coarse;
}

std::vector<NuBlock> compute_nu(const SmallSystem& sys, const ReservoirModel& res) {
  sys::validate_reservoir(sys, res);
  const sys::BohrFrequencySet bohr = sys::bohr_frequencies(sys);
  const int d = sys.dim;

  std::vector<NuBlock> blocks;
  double max_norm = 0.0;
  for (std::size_t oi = 0; oi < bohr.omegas.size(); ++oi) {
    const double omega = bohr.omegas[oi];
    const int c = res.channel_of_omega(omega, bohr.match_tol);
    if (c < 0) continue;
    const sys::Channel& ch = res.channels[static_cast<std::size_t>(c)];
    const Mat v = ch.profile(omega) * ch.coupling;
    Mat stacked = Mat::Zero(d * ch.mult, d);
    for (const auto& [k, kp] : bohr.level_pairs[oi]) {
      const Mat Pkp_f = expand_projector(sys.projectors[static_cast<std::size_t>(kp)], ch.mult);
      stacked += Pkp_f * v * sys.projectors[static_cast<std::size_t>(k)];
    }
    stacked *= std::sqrt(kTwoPi);
    max_norm = std::max(max_norm, stacked.norm());

    NuBlock b;
    b.omega = omega;
    b.channel = c;
    b.mult = ch.mult;
    b.stacked = std::move(stacked);
    for (int a = 0; a < ch.mult; ++a) {
      Mat fiber(d, d);
      for (int m = 0; m < d; ++m) fiber.row(m) = b.stacked.row(m * ch.mult + a);
      b.fibers.push_back(std::move(fiber));
    }
    blocks.push_back(std::move(b));
  }
  // Prune blocks the level structure annihilated (e.g. a purely off-diagonal
  // coupling through a frequency-zero channel).
  std::vector<NuBlock> kept;
  for (auto& b : blocks)
    if (b.stacked.norm() > 1e-14 * std::max(1.0, max_norm)) kept.push_back(std::move(b));
  return kept;
}

DaviesData make_davies_data(const SmallSystem& sys, const ReservoirModel& res,
                            const UpsilonParams& params) {
  DaviesData data;
  data.system = sys;
  data.bohr = sys::bohr_frequencies(sys);
  data.upsilon = compute_upsilon(sys, res, params);
  data.blocks = compute_nu(sys, res);

  const int d = sys.dim;
  data.nu_star_nu = Mat::Zero(d, d);
  for (const auto& b : data.blocks) {
    data.nu_star_nu += b.stacked.adjoint() * b.stacked;
    for (const auto& f : b.fibers) {
      data.jump_ops.push_back(f);
      data.jump_omegas.push_back(b.omega);
    }
  }
  data.upsilon_herm = 0.5 * (data.upsilon + data.upsilon.adjoint());
  const Mat lhs = cplx(0.0, -1.0) * data.upsilon + cplx(0.0, 1.0) * data.upsilon.adjoint();
  data.dissipativity_residual = op_norm(lhs + data.nu_star_nu);
  return data;
}

LindbladGenerator build_lindblad(const DaviesData& data, double residual_tol) {
  if (data.dissipativity_residual > residual_tol)
    throw std::invalid_argument(
        "build_lindblad: dissipativity residual " + format_double(data.dissipativity_residual) +
        " exceeds " + format_double(residual_tol) +
        "; the generator and jump operators do not assemble into a completely "
        "positive semigroup");
  const int d = data.dim();
  const Mat I = Mat::Identity(d, d);
  Mat H = cplx(0.0, -1.0) * (Eigen::kroneckerProduct(I, data.upsilon).eval() -
                             Eigen::kroneckerProduct(data.upsilon.conjugate(), I).eval());
  for (const auto& nu : data.jump_ops)
    H += Eigen::kroneckerProduct(nu.transpose(), nu.adjoint()).eval();

  LindbladGenerator gen;
  gen.dim = d;
  gen.heisenberg = std::move(H);
  gen.schrodinger = gen.heisenberg.adjoint();
  return gen;
}

Mat evolve_semigroup(const Mat& generator, double t) { return expm(t * generator); }

Mat commutator_superop(const Mat& a) {
  const int d = static_cast<int>(a.rows());
  const Mat eye = Mat::Identity(d, d);
  return cplx(0.0, 1.0) * (Eigen::kroneckerProduct(eye, a).eval() -
                           Eigen::kroneckerProduct(a.transpose(), eye).eval());
}

Mat choi_matrix(const Mat& super) {
  const int d2 = static_cast<int>(super.rows());
  const int d = static_cast<int>(std::lround(std::sqrt(static_cast<double>(d2))));
  if (d * d != d2 || super.cols() != super.rows())
    throw std::invalid_argument("choi_matrix: superoperator must be d^2 x d^2");
  Mat C(d2, d2);
  for (int i = 0; i < d; ++i)
    for (int a = 0; a < d; ++a)
      for (int j = 0; j < d; ++j)
        for (int b = 0; b < d; ++b) C(i * d + a, j * d + b) = super(b * d + a, j * d + i);
  return C;
}

double choi_min_eigenvalue(const Mat& super) {
  const Mat C = choi_matrix(super);
  const Mat H = 0.5 * (C + C.adjoint());
  Eigen::SelfAdjointEigenSolver<Mat> es(H);
  return es.eigenvalues().minCoeff();
}

Mat stationary_state(const LindbladGenerator& gen) {
  Eigen::ComplexEigenSolver<Mat> es(gen.schrodinger);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("stationary_state: eigensolver failed");
  int best = 0;
  double best_mag = std::abs(es.eigenvalues()[0]);
  for (int i = 1; i < es.eigenvalues().size(); ++i) {
    const double mag = std::abs(es.eigenvalues()[i]);
    if (mag < best_mag) {
      best_mag = mag;
      best = i;
    }
  }
  const int d = gen.dim;
  Mat rho(d, d);
  for (int c = 0; c < d; ++c) rho.col(c) = es.eigenvectors().col(best).segment(c * d, d);
  rho = 0.5 * (rho + rho.adjoint()).eval();
  const double tr = rho.trace().real();
  if (std::abs(tr) < 1e-12)
    throw std::runtime_error("stationary_state: kernel vector has vanishing trace");
  return rho / tr;
}

Mat q_integral(const SmallSystem& sys, const DiscretizedReservoir& disc, double lambda,
               double s) {
  if (!(lambda > 0.0)) throw std::invalid_argument("q_integral: lambda must be > 0");
  const double T = s / (lambda * lambda);
  disc.check_horizon(T, "q_integral");
  const int d = sys.dim;
  const int L = sys.num_levels();

  auto F = [](double T_, double E) -> cplx {
    if (std::abs(T_ * E) < 1e-8) {
      const double u = T_ * E;
      return T_ * cplx(1.0 - u * u / 6.0, -0.5 * u);
    }
    return (1.0 - std::exp(cplx(0.0, -T_ * E))) / cplx(0.0, E);
  };

  Mat Q = Mat::Zero(d, d);
  for (std::size_t i = 0; i < disc.modes.size(); ++i) {
    const Mat& B = disc.blocks[i];
    const int mult = static_cast<int>(B.rows()) / d;
    const double x = disc.modes[i].x;
    for (int m = 0; m < L; ++m) {
      const Mat Pf = expand_projector(sys.projectors[static_cast<std::size_t>(m)], mult);
      Q += F(T, sys.levels[static_cast<std::size_t>(m)] + x) * (B.adjoint() * Pf * B);
    }
  }
  return Q;
}

Mat q_limit(const SmallSystem& sys, const ReservoirModel& res, const UpsilonParams& params) {
  const int d = sys.dim;
  Mat Q = Mat::Zero(d, d);
  for (int m = 0; m < sys.num_levels(); ++m) {
    const PlemeljPieces p =
        plemelj_pieces(sys, res, m, -sys.levels[static_cast<std::size_t>(m)], params);
    Q += p.on_shell - cplx(0.0, 1.0) * p.principal;
  }
  return Q;
}

}  // namespace wcl::davies
