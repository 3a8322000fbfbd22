// wcl/system_model.cpp — spectral clustering, channels, grids, decomposition.
#include "wcl/system_model.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace wcl::sys {

// ------- small system -------

Mat SmallSystem::exp_itK(double t) const {
  Vec phases(dim);
  for (int i = 0; i < dim; ++i) phases[i] = std::exp(cplx(0.0, t * raw_evals[i]));
  return eigvecs * phases.asDiagonal() * eigvecs.adjoint();
}

SmallSystem spectral_decompose(const Mat& K, double cluster_tol) {
  if (K.rows() != K.cols() || K.rows() == 0)
    throw std::invalid_argument("spectral_decompose: K must be square and nonempty");
  if (!(cluster_tol >= 0.0))
    throw std::invalid_argument("spectral_decompose: cluster_tol must be >= 0");
  const double defect = herm_defect(K);
  const double knorm = std::max(1.0, op_norm(K));
  if (defect > 1e-12 * knorm)
    throw std::invalid_argument("spectral_decompose: K is not Hermitian, defect " +
                                format_double(defect) + " exceeds 1e-12 * " +
                                format_double(knorm));

  SmallSystem s;
  s.dim = static_cast<int>(K.rows());
  s.K = K;
  s.cluster_tol = cluster_tol;

  Eigen::SelfAdjointEigenSolver<Mat> es(K);
  s.raw_evals = es.eigenvalues();
  s.eigvecs = es.eigenvectors();
  s.spectral_diameter = s.raw_evals[s.dim - 1] - s.raw_evals[0];
  const double scale = std::max(s.spectral_diameter, 1.0);

  for (int i = 0; i < s.dim; ++i) {
    if (!s.levels.empty() && cluster_close(s.raw_evals[i], s.levels.back(), cluster_tol, scale)) {
      s.level_states.back().push_back(i);
      continue;
    }
    s.levels.push_back(s.raw_evals[i]);
    s.level_states.push_back({i});
  }
  // Representative level value: mean of the cluster.
  for (std::size_t l = 0; l < s.levels.size(); ++l) {
    double acc = 0.0;
    for (int i : s.level_states[l]) acc += s.raw_evals[i];
    s.levels[l] = acc / static_cast<double>(s.level_states[l].size());
  }
  for (const auto& members : s.level_states) {
    Mat P = Mat::Zero(s.dim, s.dim);
    for (int i : members) P += s.eigvecs.col(i) * s.eigvecs.col(i).adjoint();
    s.projectors.push_back(std::move(P));
  }
  return s;
}

// ------- transition frequencies -------

int BohrFrequencySet::index_of(double omega) const {
  int best = -1;
  double best_gap = match_tol;
  for (std::size_t i = 0; i < omegas.size(); ++i) {
    const double gap = std::abs(omegas[i] - omega);
    if (gap <= best_gap) {
      best_gap = gap;
      best = static_cast<int>(i);
    }
  }
  return best;
}

BohrFrequencySet bohr_frequencies(const SmallSystem& sys) {
  const double scale = std::max(sys.spectral_diameter, 1.0);
  const double tol = sys.cluster_tol * scale;

  struct Entry {
    double omega;
    int k, kp;
  };
  std::vector<Entry> raw;
  const int L = sys.num_levels();
  for (int k = 0; k < L; ++k)
    for (int kp = 0; kp < L; ++kp)
      raw.push_back({sys.levels[k] - sys.levels[kp], k, kp});
  std::sort(raw.begin(), raw.end(), [](const Entry& a, const Entry& b) { return a.omega < b.omega; });

  BohrFrequencySet f;
  f.match_tol = std::max(tol, 1e-12 * scale);
  for (const Entry& e : raw) {
    if (!f.omegas.empty() && std::abs(e.omega - f.omegas.back()) <= tol) {
      f.level_pairs.back().push_back({e.k, e.kp});
      continue;
    }
    f.omegas.push_back(e.omega);
    f.level_pairs.push_back({{e.k, e.kp}});
  }
  // Snap each cluster to the mean and exact-symmetrize around zero.
  for (std::size_t i = 0; i < f.omegas.size(); ++i) {
    double acc = 0.0;
    for (const auto& [k, kp] : f.level_pairs[i]) acc += sys.levels[k] - sys.levels[kp];
    f.omegas[i] = acc / static_cast<double>(f.level_pairs[i].size());
  }
  return f;
}

// ------- reservoir model -------

cplx Profile::operator()(double x) const {
  switch (kind) {
    case ProfileKind::Flat:
      return cplx(amplitude, 0.0);
    case ProfileKind::Lorentzian: {
      const double u = x - center;
      return cplx(amplitude * width * width / (u * u + width * width), 0.0);
    }
    case ProfileKind::Gaussian: {
      const double u = (x - center) / width;
      return cplx(amplitude * std::exp(-0.5 * u * u), 0.0);
    }
    case ProfileKind::Table: {
      if (xs.empty()) throw std::invalid_argument("Profile: empty table");
      if (x <= xs.front()) return values.front();
      if (x >= xs.back()) return values.back();
      const auto it = std::upper_bound(xs.begin(), xs.end(), x);
      const std::size_t hi = static_cast<std::size_t>(it - xs.begin());
      const std::size_t lo = hi - 1;
      const double f = (x - xs[lo]) / (xs[hi] - xs[lo]);
      return values[lo] * (1.0 - f) + values[hi] * f;
    }
  }
  throw std::logic_error("Profile: unknown kind");
}

int ReservoirModel::channel_of(double x) const {
  for (std::size_t c = 0; c < channels.size(); ++c)
    if (channels[c].contains(x)) return static_cast<int>(c);
  return -1;
}

Mat ReservoirModel::v_at(double x) const {
  const int c = channel_of(x);
  if (c < 0)
    throw std::invalid_argument("ReservoirModel::v_at: x = " + format_double(x) +
                                " is not inside any channel interval");
  const Channel& ch = channels[static_cast<std::size_t>(c)];
  return ch.profile(x) * ch.coupling;
}

int ReservoirModel::channel_of_omega(double omega, double tol) const {
  for (std::size_t c = 0; c < channels.size(); ++c)
    if (!channels[c].is_tail && std::abs(channels[c].omega - omega) <= tol)
      return static_cast<int>(c);
  return -1;
}

void validate_reservoir(const SmallSystem& sys, const ReservoirModel& res) {
  if (res.dim != sys.dim)
    throw std::invalid_argument("validate_reservoir: reservoir dim " + std::to_string(res.dim) +
                                " does not match system dim " + std::to_string(sys.dim));
  if (res.channels.empty())
    throw std::invalid_argument("validate_reservoir: no channels defined");

  std::vector<std::pair<double, double>> ivals;
  for (std::size_t c = 0; c < res.channels.size(); ++c) {
    const Channel& ch = res.channels[c];
    const std::string tag = "channel " + std::to_string(c);
    if (!(ch.b > ch.a))
      throw std::invalid_argument("validate_reservoir: " + tag + " has empty interval (" +
                                  format_double(ch.a) + ", " + format_double(ch.b) + ")");
    if (ch.mult < 1)
      throw std::invalid_argument("validate_reservoir: " + tag + " has multiplicity " +
                                  std::to_string(ch.mult));
    if (ch.coupling.rows() != static_cast<Eigen::Index>(sys.dim) * ch.mult ||
        ch.coupling.cols() != sys.dim)
      throw std::invalid_argument(
          "validate_reservoir: " + tag + " coupling shape " + std::to_string(ch.coupling.rows()) +
          "x" + std::to_string(ch.coupling.cols()) + " does not match (dim*mult)x dim = " +
          std::to_string(sys.dim * ch.mult) + "x" + std::to_string(sys.dim));
    if (!ch.is_tail && !(ch.omega > ch.a && ch.omega < ch.b))
      throw std::invalid_argument("validate_reservoir: " + tag + " label " +
                                  format_double(ch.omega) + " lies outside its interval (" +
                                  format_double(ch.a) + ", " + format_double(ch.b) + ")");
    ivals.push_back({ch.a, ch.b});
  }
  std::sort(ivals.begin(), ivals.end());
  for (std::size_t i = 1; i < ivals.size(); ++i)
    if (ivals[i].first < ivals[i - 1].second)
      throw std::invalid_argument("validate_reservoir: channel intervals (" +
                                  format_double(ivals[i - 1].first) + ", " +
                                  format_double(ivals[i - 1].second) + ") and (" +
                                  format_double(ivals[i].first) + ", " +
                                  format_double(ivals[i].second) + ") overlap");

  const BohrFrequencySet f = bohr_frequencies(sys);
  for (std::size_t c = 0; c < res.channels.size(); ++c) {
    const Channel& ch = res.channels[c];
    if (ch.is_tail) continue;
    if (f.index_of(ch.omega) < 0)
      throw std::invalid_argument("validate_reservoir: channel " + std::to_string(c) +
                                  " label " + format_double(ch.omega) +
                                  " is not a transition frequency of K");
  }
}

// ------- discretization -------

int DiscretizedReservoir::mult_of(int mode) const {
  return static_cast<int>(blocks[static_cast<std::size_t>(mode)].rows()) / dim;
}

void DiscretizedReservoir::check_horizon(double horizon, const std::string& who) const {
  const double guard = 0.5 * recurrence_time();
  if (std::abs(horizon) > guard) {
    const double needed = std::ceil(static_cast<double>(n_per_channel) *
                                    std::abs(horizon) / guard);
    throw std::invalid_argument(
        who + ": propagation horizon " + format_double(std::abs(horizon)) +
        " exceeds half the grid recurrence time " + format_double(guard) +
        "; raise modes_per_channel to about " + format_double(needed));
  }
}

DiscretizedReservoir discretize_reservoir(const SmallSystem& sys, const ReservoirModel& res,
                                          GridRule rule, int n_per_channel) {
  validate_reservoir(sys, res);
  if (n_per_channel < 1)
    throw std::invalid_argument("discretize_reservoir: modes_per_channel must be >= 1, got " +
                                std::to_string(n_per_channel));

  DiscretizedReservoir d;
  d.rule = rule;
  d.n_per_channel = n_per_channel;
  d.dim = sys.dim;

  int op_offset = 0;
  double max_gap = 0.0;
  for (std::size_t c = 0; c < res.channels.size(); ++c) {
    const Channel& ch = res.channels[c];
    const Quad1D q = (rule == GridRule::Midpoint)
                         ? midpoint_rule(n_per_channel, ch.a, ch.b)
                         : gauss_legendre(n_per_channel, ch.a, ch.b);
    d.channel_mode_begin.push_back(static_cast<int>(d.modes.size()));
    for (int i = 0; i < n_per_channel; ++i) {
      DiscretizedReservoir::Mode m;
      m.x = q.nodes[i];
      m.w = q.weights[i];
      m.channel = static_cast<int>(c);
      m.op_offset = op_offset;
      op_offset += ch.mult;
      d.modes.push_back(m);
      if (i > 0) max_gap = std::max(max_gap, q.nodes[i] - q.nodes[i - 1]);
      if (n_per_channel == 1) max_gap = std::max(max_gap, ch.b - ch.a);
    }
  }
  d.one_particle_dim = op_offset;
  d.max_spacing = max_gap;

  d.blocks.reserve(d.modes.size());
  for (const auto& m : d.modes) {
    const Channel& ch = res.channels[static_cast<std::size_t>(m.channel)];
    d.blocks.push_back(std::sqrt(m.w) * (ch.profile(m.x) * ch.coupling));
  }
  return d;
}

// ------- coupling decomposition -------

namespace {

struct WindowSpec {
  double center = 0.0;
  double r_in = 0.0;
  double r_out = 0.0;
  int channel = -1;
};

double window_value(const WindowSpec& w, double x) {
  return bump_window(x, w.center, w.r_in, w.r_out);
}

}  // namespace

double CouplingDecomposition::h_l1(double T) const {
  if (h_times.size() < 2 || T <= 0.0) return 0.0;
  double acc = 0.0;
  for (Eigen::Index i = 1; i < h_times.size(); ++i) {
    const double t0 = h_times[i - 1], t1 = h_times[i];
    if (t0 >= T) break;
    const double hi = std::min(t1, T);
    const double f1 = (t1 > t0) ? (h_values[i - 1] +
                                   (h_values[i] - h_values[i - 1]) * (hi - t0) / (t1 - t0))
                                : h_values[i];
    acc += 0.5 * (h_values[i - 1] + f1) * (hi - t0);
  }
  return acc;
}

double CouplingDecomposition::h_tail(double T) const { return h_l1(2.0 * T) - h_l1(T); }

CouplingDecomposition decompose_coupling(const SmallSystem& sys, const ReservoirModel& res,
                                         const DiscretizedReservoir& disc,
                                         const DecompositionParams& params) {
  validate_reservoir(sys, res);
  const BohrFrequencySet bohr = bohr_frequencies(sys);
  const int d = sys.dim;
  const int M = static_cast<int>(disc.modes.size());

  // Eigenbasis-transformed grid blocks: Bt_i = (U^dag (x) 1_mult) B_i U.
  std::vector<Mat> tblocks(static_cast<std::size_t>(M));
  for (int i = 0; i < M; ++i) {
    const Mat& B = disc.blocks[static_cast<std::size_t>(i)];
    const int mult = static_cast<int>(B.rows()) / d;
    Mat Bt(B.rows(), B.cols());
    for (int alpha = 0; alpha < mult; ++alpha) {
      // Rows of fiber alpha: m*mult + alpha over m.
      Mat fiber(d, d);
      for (int m = 0; m < d; ++m) fiber.row(m) = B.row(m * mult + alpha);
      fiber = sys.eigvecs.adjoint() * fiber * sys.eigvecs;
      for (int m = 0; m < d; ++m) Bt.row(m * mult + alpha) = fiber.row(m);
    }
    tblocks[static_cast<std::size_t>(i)] = std::move(Bt);
  }

  // Window geometry: one smooth bump per transition frequency that owns a
  // channel; supports must stay inside the channel and away from each other.
  std::vector<WindowSpec> windows;  // indexed like bohr.omegas (-1 channel = absent)
  windows.resize(bohr.omegas.size());
  for (std::size_t oi = 0; oi < bohr.omegas.size(); ++oi) {
    const double omega = bohr.omegas[oi];
    const int c = res.channel_of(omega);
    WindowSpec w;
    w.channel = -1;
    if (c >= 0 && !res.channels[static_cast<std::size_t>(c)].is_tail &&
        res.channel_of_omega(omega, bohr.match_tol) == c) {
      const Channel& ch = res.channels[static_cast<std::size_t>(c)];
      const double edge = std::min(omega - ch.a, ch.b - omega);
      double r_out = params.window_radius > 0.0 ? params.window_radius : 0.9 * edge;
      if (r_out >= edge)
        throw std::invalid_argument(
            "decompose_coupling: window radius " + format_double(r_out) +
            " around " + format_double(omega) +
            " reaches the channel endpoint (distance " + format_double(edge) + ")");
      w.center = omega;
      w.r_out = r_out;
      w.r_in = params.plateau_fraction * r_out;
      w.channel = c;
    }
    windows[oi] = w;
  }
  for (std::size_t i = 0; i < windows.size(); ++i)
    for (std::size_t j = i + 1; j < windows.size(); ++j) {
      if (windows[i].channel < 0 || windows[j].channel < 0) continue;
      if (windows[i].channel != windows[j].channel) continue;
      const double gap = std::abs(windows[i].center - windows[j].center);
      if (gap < windows[i].r_out + windows[j].r_out)
        throw std::invalid_argument(
            "decompose_coupling: windows around " + format_double(windows[i].center) + " and " +
            format_double(windows[j].center) + " overlap (supports " +
            format_double(windows[i].r_out) + " + " + format_double(windows[j].r_out) +
            " exceed gap " + format_double(gap) + ")");
    }

  CouplingDecomposition dec;

  // Window weights per mode: chi_omega(x_i) and the far-field leftover.
  std::vector<std::vector<double>> chi(windows.size(), std::vector<double>(M, 0.0));
  std::vector<double> chi_far(static_cast<std::size_t>(M), 1.0);
  for (std::size_t oi = 0; oi < windows.size(); ++oi) {
    if (windows[oi].channel < 0) continue;
    for (int i = 0; i < M; ++i) {
      const double val = window_value(windows[oi], disc.modes[static_cast<std::size_t>(i)].x);
      chi[oi][static_cast<std::size_t>(i)] = val;
      chi_far[static_cast<std::size_t>(i)] -= val;
    }
  }

  // Terms: (m, p) eigenstate pair x (omega windows + far field).
  for (int m = 0; m < d; ++m) {
    for (int p = 0; p < d; ++p) {
      auto make_phi = [&](const std::function<double(int)>& weight) {
        Vec phi = Vec::Zero(disc.one_particle_dim);
        for (int i = 0; i < M; ++i) {
          const int mult = disc.mult_of(i);
          const int off = disc.modes[static_cast<std::size_t>(i)].op_offset;
          for (int alpha = 0; alpha < mult; ++alpha)
            phi[off + alpha] = weight(i) * tblocks[static_cast<std::size_t>(i)](m * mult + alpha, p);
        }
        return phi;
      };
      for (std::size_t oi = 0; oi < windows.size(); ++oi) {
        if (windows[oi].channel < 0) continue;
        Vec phi = make_phi([&](int i) { return chi[oi][static_cast<std::size_t>(i)]; });
        if (phi.norm() <= params.drop_tol) continue;
        CouplingTerm t;
        t.D = sys.eigvecs.col(m) * sys.eigvecs.col(p).adjoint();
        t.state_m = m;
        t.state_p = p;
        t.omega_index = static_cast<int>(oi);
        t.omega = windows[oi].center;
        t.channel = windows[oi].channel;
        t.window_r_in = windows[oi].r_in;
        t.window_r_out = windows[oi].r_out;
        t.phi = std::move(phi);
        dec.terms.push_back(std::move(t));
      }
      Vec phi = make_phi([&](int i) { return chi_far[static_cast<std::size_t>(i)]; });
      if (phi.norm() > params.drop_tol) {
        CouplingTerm t;
        t.D = sys.eigvecs.col(m) * sys.eigvecs.col(p).adjoint();
        t.state_m = m;
        t.state_p = p;
        t.omega_index = -1;
        t.channel = -1;
        t.phi = std::move(phi);
        dec.terms.push_back(std::move(t));
      }
    }
  }

  // Reassembly defect: sum_j D_j phi_j[(i, alpha)] must reproduce the
  // eigenbasis grid blocks entrywise.
  double err = 0.0;
  for (int i = 0; i < M; ++i) {
    const int mult = disc.mult_of(i);
    const int off = disc.modes[static_cast<std::size_t>(i)].op_offset;
    Mat acc = Mat::Zero(d * mult, d);
    for (const auto& t : dec.terms)
      for (int alpha = 0; alpha < mult; ++alpha)
        acc(t.state_m * mult + alpha, t.state_p) += t.phi[off + alpha];
    err = std::max(err, (acc - tblocks[static_cast<std::size_t>(i)]).cwiseAbs().maxCoeff());
  }
  dec.reassembly_error = err;
  dec.d_norm_max = 1.0;

  // Correlation envelope h on [0, horizon].
  double horizon = params.h_horizon > 0.0 ? params.h_horizon : 0.5 * disc.recurrence_time();
  const int S = std::max(params.h_samples, 2);
  dec.h_times.resize(S);
  dec.h_values.resize(S);
  const std::size_t J = dec.terms.size();
  // Spectral overlap densities rho_{j' j}[i] = sum_alpha conj(phi_j') phi_j.
  std::vector<std::vector<cplx>> rho(J * J);
  std::vector<bool> nonzero(J * J, false);
  for (std::size_t jp = 0; jp < J; ++jp)
    for (std::size_t j = 0; j < J; ++j) {
      std::vector<cplx> r(static_cast<std::size_t>(M), cplx(0.0, 0.0));
      double mass = 0.0;
      for (int i = 0; i < M; ++i) {
        const int mult = disc.mult_of(i);
        const int off = disc.modes[static_cast<std::size_t>(i)].op_offset;
        cplx acc(0.0, 0.0);
        for (int alpha = 0; alpha < mult; ++alpha)
          acc += std::conj(dec.terms[jp].phi[off + alpha]) * dec.terms[j].phi[off + alpha];
        r[static_cast<std::size_t>(i)] = acc;
        mass += std::abs(acc);
      }
      if (mass > 0.0) {
        rho[jp * J + j] = std::move(r);
        nonzero[jp * J + j] = true;
      }
    }
  for (int s = 0; s < S; ++s) {
    const double t = horizon * static_cast<double>(s) / static_cast<double>(S - 1);
    double acc = 0.0;
    for (std::size_t q = 0; q < J * J; ++q) {
      if (!nonzero[q]) continue;
      cplx val(0.0, 0.0);
      const auto& r = rho[q];
      for (int i = 0; i < M; ++i)
        val += r[static_cast<std::size_t>(i)] *
               std::exp(cplx(0.0, -t * disc.modes[static_cast<std::size_t>(i)].x));
      acc += std::abs(val);
    }
    dec.h_times[s] = t;
    dec.h_values[s] = acc;
  }
  return dec;
}

cplx coupling_term_value(const SmallSystem& sys, const ReservoirModel& res,
                         const CouplingTerm& term, double y, int alpha) {
  if (term.omega_index < 0)
    throw std::invalid_argument(
        "coupling_term_value: far-field terms span several channels; "
        "only omega-window terms have a pointwise evaluator");
  const Channel& ch = res.channels[static_cast<std::size_t>(term.channel)];
  if (alpha < 0 || alpha >= ch.mult)
    throw std::invalid_argument("coupling_term_value: fiber index " + std::to_string(alpha) +
                                " out of range for multiplicity " + std::to_string(ch.mult));
  if (!(y > ch.a && y < ch.b)) return cplx(0.0, 0.0);
  const double win = bump_window(y, term.omega, term.window_r_in, term.window_r_out);
  if (win == 0.0) return cplx(0.0, 0.0);
  // Eigenbasis entry (m, p) of the fiber-alpha block of v(y).
  const int d = sys.dim;
  Mat fiber(d, d);
  for (int mm = 0; mm < d; ++mm) fiber.row(mm) = ch.coupling.row(mm * ch.mult + alpha);
  const cplx entry =
      (sys.eigvecs.col(term.state_m).adjoint() * fiber * sys.eigvecs.col(term.state_p))(0, 0);
  return win * ch.profile(y) * entry;
}

}  // namespace wcl::sys
