#include <wcl/experiments.hpp>

#include <wcl/combinatorics.hpp>
#include <wcl/davies.hpp>
#include <wcl/dilation.hpp>
#include <wcl/fock.hpp>
#include <wcl/model_file.hpp>

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace wcl::lab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::set<std::string> kExperiments = {
    "davies",        "lindblad-evolve",   "full-evolve", "wcl-sweep",
    "correlations",  "resummation-check", "dilation-check",
    "extended-wcl",  "theta-check",       "pairings"};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

std::string hash_bytes(const std::string& bytes) {
  return hex64(fnv1a64(bytes.data(), bytes.size()));
}

// CSV file with a fixed header; numeric cells use %.17g.
class CsvFile {
 public:
  CsvFile(const std::string& path, const std::vector<std::string>& header)
      : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot open output file: " + path);
    for (std::size_t i = 0; i < header.size(); ++i)
      out_ << (i ? "," : "") << header[i];
    out_ << "\n";
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i)
      out_ << (i ? "," : "") << cells[i];
    out_ << "\n";
  }

 private:
  std::ofstream out_;
};

std::string cell(double v) { return format_double(v); }
std::string cell(int v) { return std::to_string(v); }

// Runs fn(0..n-1) on up to `jobs` threads.  Results must be written to
// index-addressed slots so the merge order never depends on scheduling.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex mu;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(jobs);
  for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// Config parsing.
// ---------------------------------------------------------------------------

double need_number(const json& j, const std::string& key) {
  if (!j.at(key).is_number())
    throw std::runtime_error("config field '" + key + "' must be a number");
  return j.at(key).get<double>();
}

std::vector<double> need_number_list(const json& j, const std::string& key) {
  if (!j.at(key).is_array())
    throw std::runtime_error("config field '" + key + "' must be an array");
  std::vector<double> out;
  for (const auto& v : j.at(key)) {
    if (!v.is_number())
      throw std::runtime_error("config field '" + key + "' must hold numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

std::vector<int> need_int_list(const json& j, const std::string& key) {
  std::vector<int> out;
  for (double v : need_number_list(j, key)) {
    if (v != std::floor(v))
      throw std::runtime_error("config field '" + key + "' must hold integers");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

std::string need_string(const json& j, const std::string& key) {
  if (!j.at(key).is_string())
    throw std::runtime_error("config field '" + key + "' must be a string");
  return j.at(key).get<std::string>();
}

// Flat re,im list -> complex vector.
Vec parse_complex_list(const json& j, const std::string& key) {
  const auto raw = need_number_list(j, key);
  if (raw.size() % 2 != 0)
    throw std::runtime_error("config field '" + key +
                             "' must list re,im pairs (even length)");
  Vec out(raw.size() / 2);
  for (std::size_t i = 0; i + 1 < raw.size(); i += 2)
    out[static_cast<int>(i / 2)] = cplx(raw[i], raw[i + 1]);
  return out;
}

}  // namespace

RunConfig parse_config(const std::string& path) {
  const std::string text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error("config parse error in " + path + ": " + e.what());
  }
  if (!j.is_object()) throw std::runtime_error("config must be a JSON object");

  static const std::set<std::string> allowed = {
      "model", "experiment", "out",    "lambdas", "times",         "dts",
      "modes", "orders",     "tolerance", "seed", "deterministic", "jobs",
      "n_max", "order",      "max_m",  "ell",     "pad",           "radius",
      "dump",  "observable", "initial"};
  for (const auto& item : j.items())
    if (!allowed.count(item.key()))
      throw std::runtime_error("config: unknown key '" + item.key() + "'");

  RunConfig cfg;
  cfg.config_path = path;
  if (!j.contains("model")) throw std::runtime_error("config: missing 'model'");
  if (!j.contains("experiment"))
    throw std::runtime_error("config: missing 'experiment'");
  cfg.model_path = need_string(j, "model");
  cfg.experiment = need_string(j, "experiment");
  if (j.contains("out")) cfg.out_dir = need_string(j, "out");

  if (j.contains("lambdas")) {
    cfg.lambdas = need_number_list(j, "lambdas");
    cfg.lambdas_given = true;
  }
  if (j.contains("times")) {
    cfg.times = need_number_list(j, "times");
    cfg.times_given = true;
  }
  if (j.contains("dts")) {
    cfg.dts = need_number_list(j, "dts");
    cfg.dts_given = true;
  }
  if (j.contains("modes")) {
    cfg.modes = need_int_list(j, "modes");
    cfg.modes_given = true;
  }
  if (j.contains("orders")) {
    cfg.orders = need_int_list(j, "orders");
    cfg.orders_given = true;
  }
  if (j.contains("tolerance")) cfg.tolerance = need_number(j, "tolerance");
  if (j.contains("seed")) {
    const double s = need_number(j, "seed");
    if (s < 0 || s != std::floor(s))
      throw std::runtime_error("config field 'seed' must be a whole number");
    cfg.seed = static_cast<std::uint64_t>(s);
  }
  if (j.contains("deterministic")) {
    if (!j.at("deterministic").is_boolean())
      throw std::runtime_error("config field 'deterministic' must be a bool");
    cfg.deterministic = j.at("deterministic").get<bool>();
  }
  if (j.contains("jobs")) {
    const double v = need_number(j, "jobs");
    if (v != std::floor(v)) throw std::runtime_error("config field 'jobs' must be an integer");
    cfg.jobs = static_cast<int>(v);
  }
  if (j.contains("n_max")) cfg.n_max = static_cast<int>(need_number(j, "n_max"));
  if (j.contains("order")) cfg.order = static_cast<int>(need_number(j, "order"));
  if (j.contains("max_m")) cfg.max_m = static_cast<int>(need_number(j, "max_m"));
  if (j.contains("ell")) cfg.ell = static_cast<int>(need_number(j, "ell"));
  if (j.contains("pad")) cfg.pad = need_number(j, "pad");
  if (j.contains("radius")) cfg.radius = need_number(j, "radius");
  if (j.contains("dump")) {
    if (!j.at("dump").is_boolean())
      throw std::runtime_error("config field 'dump' must be a bool");
    cfg.dump_pairings = j.at("dump").get<bool>();
  }
  if (j.contains("observable")) {
    const Vec flat = parse_complex_list(j, "observable");
    const int d = static_cast<int>(std::lround(std::sqrt(static_cast<double>(flat.size()))));
    if (d * d != flat.size())
      throw std::runtime_error("config field 'observable' must be a square matrix");
    cfg.observable = Mat(d, d);
    for (int i = 0; i < d; ++i)
      for (int k = 0; k < d; ++k) cfg.observable(i, k) = flat[i * d + k];
    cfg.has_observable = true;
  }
  if (j.contains("initial")) {
    cfg.initial = parse_complex_list(j, "initial");
    cfg.has_initial = true;
  }
  return cfg;
}

void finalize_config(RunConfig& cfg, const std::string& out_override) {
  const std::string& e = cfg.experiment;
  if (!cfg.lambdas_given) {
    if (e == "correlations" || e == "extended-wcl")
      cfg.lambdas = {0.5, 0.3};
    else if (e == "theta-check")
      cfg.lambdas = {0.5, 0.25};
    else if (e == "wcl-sweep" || e == "full-evolve")
      cfg.lambdas = {0.5, 0.35, 0.25};
    else
      cfg.lambdas = {0.5};
  }
  if (!cfg.times_given) {
    if (e == "lindblad-evolve")
      cfg.times = {0.0, 0.25, 0.5, 1.0, 1.5, 2.0};
    else if (e == "extended-wcl")
      cfg.times = {0.25, 0.5};
    else if (e == "dilation-check" || e == "correlations")
      cfg.times = {1.0};
    else if (e == "resummation-check")
      cfg.times = {1.0, 2.0};
    else
      cfg.times = {0.25, 0.5, 1.0, 2.0};
  }
  if (!cfg.dts_given) {
    if (e == "dilation-check")
      cfg.dts = {1e-3, 5e-4};
    else if (e == "extended-wcl")
      cfg.dts = {0.0125};
    else
      cfg.dts = {1e-3};
  }
  if (!cfg.modes_given) {
    if (e == "resummation-check")
      cfg.modes = {3};
    else if (e == "extended-wcl")
      cfg.modes = {4};
    else if (e == "correlations")
      cfg.modes = {8};
    else
      cfg.modes = {48};
  }
  if (!cfg.orders_given) cfg.orders = {2, 4, 6, 8};

  if (!out_override.empty()) {
    cfg.out_dir = out_override;
  } else if (cfg.out_dir.empty()) {
    const char* env = std::getenv(kOutEnv);
    const std::string root = (env && *env) ? env : "wcl-out";
    cfg.out_dir = root + "/" + cfg.experiment;
  }
}

std::vector<std::string> validate(const RunConfig& cfg) {
  std::vector<std::string> diags;
  if (!kExperiments.count(cfg.experiment))
    diags.push_back("unknown experiment '" + cfg.experiment + "'");

  bool model_ok = false;
  sys::ModelFile model;
  try {
    model = sys::load_model(cfg.model_path);
    model_ok = true;
  } catch (const std::exception& e) {
    diags.push_back(std::string("model: ") + e.what());
  }

  auto check_grid = [&](const char* name, bool given, std::size_t size) {
    if (given && size == 0)
      diags.push_back(std::string("empty sweep list: ") + name);
  };
  check_grid("lambdas", cfg.lambdas_given, cfg.lambdas.size());
  check_grid("times", cfg.times_given, cfg.times.size());
  check_grid("dts", cfg.dts_given, cfg.dts.size());
  check_grid("modes", cfg.modes_given, cfg.modes.size());
  check_grid("orders", cfg.orders_given, cfg.orders.size());

  for (double l : cfg.lambdas)
    if (!(l > 0.0)) diags.push_back("coupling lambda must be positive, got " + format_double(l));
  for (double t : cfg.times)
    if (t < 0.0) diags.push_back("time must be nonnegative, got " + format_double(t));
  for (double dt : cfg.dts)
    if (!(dt > 0.0)) diags.push_back("dt must be positive, got " + format_double(dt));
  for (int n : cfg.modes)
    if (n < 1) diags.push_back("modes per channel must be >= 1, got " + std::to_string(n));
  if (cfg.experiment == "pairings" || cfg.orders_given) {
    for (int n : cfg.orders)
      if (n < 2 || n > 12 || n % 2 != 0)
        diags.push_back("pairing size must be even and in [2, 12], got " +
                        std::to_string(n));
  }
  if (!(cfg.tolerance > 0.0)) diags.push_back("tolerance must be positive");
  if (cfg.jobs < 1 || cfg.jobs > 64) diags.push_back("jobs must be in [1, 64]");
  if (cfg.n_max < 0 || cfg.n_max > 6) diags.push_back("n_max must be in [0, 6]");
  if (cfg.order < 0 || cfg.order > 5) diags.push_back("order must be in [0, 5]");
  if (cfg.max_m < 0 || cfg.max_m > 4) diags.push_back("max_m must be in [0, 4]");
  if (cfg.ell < 1 || cfg.ell > 3) diags.push_back("ell must be in [1, 3]");
  if (cfg.pad < 0.0) diags.push_back("pad must be nonnegative");
  if (!(cfg.radius > 0.0)) diags.push_back("radius must be positive");

  if (cfg.out_dir.empty()) {
    diags.push_back("output directory not resolved; call finalize_config first");
  } else {
    try {
      fs::create_directories(cfg.out_dir);
      const fs::path probe = fs::path(cfg.out_dir) / ".write-probe";
      std::ofstream p(probe);
      if (!p) throw std::runtime_error("probe open failed");
      p << "ok";
      p.close();
      fs::remove(probe);
    } catch (const std::exception& e) {
      diags.push_back("output directory not writable: " + cfg.out_dir + " (" +
                      e.what() + ")");
    }
  }

  if (model_ok) {
    const int d = model.system.dim;
    if (cfg.has_observable &&
        (cfg.observable.rows() != d || cfg.observable.cols() != d))
      diags.push_back("observable must be " + std::to_string(d) + "x" +
                      std::to_string(d));
    if (cfg.has_initial && cfg.initial.size() != d)
      diags.push_back("initial vector must have length " + std::to_string(d));

    // Recurrence guard prediction for the grid experiments: the horizon must
    // stay below half the discrete recurrence time 2 pi / spacing.
    const bool uses_grid_dynamics =
        cfg.experiment == "full-evolve" || cfg.experiment == "wcl-sweep" ||
        cfg.experiment == "correlations" ||
        cfg.experiment == "resummation-check" || cfg.experiment == "extended-wcl";
    if (uses_grid_dynamics && !cfg.times.empty() && !cfg.lambdas.empty() &&
        !cfg.modes.empty()) {
      double horizon = *std::max_element(cfg.times.begin(), cfg.times.end());
      if (cfg.experiment != "resummation-check") {
        const double lmin = *std::min_element(cfg.lambdas.begin(), cfg.lambdas.end());
        if (lmin > 0.0) horizon /= lmin * lmin;
      }
      const int nmin = *std::min_element(cfg.modes.begin(), cfg.modes.end());
      try {
        const auto disc = model.discretize(nmin);
        const double half = 0.5 * disc.recurrence_time();
        if (horizon > half) {
          const int suggest =
              static_cast<int>(std::ceil(nmin * horizon / half)) + 1;
          diags.push_back(
              "recurrence guard: horizon " + format_double(horizon) +
              " exceeds half the recurrence time " + format_double(half) +
              " at " + std::to_string(nmin) +
              " modes/channel; increase modes to at least " +
              std::to_string(suggest));
        }
      } catch (const std::exception& e) {
        diags.push_back(std::string("discretization: ") + e.what());
      }
    }
  }
  return diags;
}

// ---------------------------------------------------------------------------
// Manifest.
// ---------------------------------------------------------------------------

std::string RunManifest::to_json() const {
  json j;
  j["experiment"] = experiment;
  j["config_hash"] = config_hash;
  j["model_hash"] = model_hash;
  j["version"] = version;
  j["files"] = files;
  j["wall_ms"] = wall_ms;
  json arr = json::array();
  for (const auto& c : checks) {
    json e;
    e["name"] = c.name;
    e["pass"] = c.pass;
    e["value"] = c.value;
    e["threshold"] = c.threshold;
    if (!c.detail.empty()) e["detail"] = c.detail;
    arr.push_back(e);
  }
  j["checks"] = arr;
  j["pass"] = pass;
  return j.dump(2) + "\n";
}

namespace {

void add_check(RunManifest& man, const std::string& name, bool pass, double value,
               double threshold, const std::string& detail = "") {
  man.checks.push_back({name, pass, value, threshold, detail});
}

std::string out_path(const RunConfig& cfg, const std::string& name) {
  return (fs::path(cfg.out_dir) / name).string();
}

void dump_matrix(std::ostream& os, const std::string& name, const Mat& m) {
  os << name << " " << m.rows() << " " << m.cols() << "\n";
  for (int i = 0; i < m.rows(); ++i) {
    for (int k = 0; k < m.cols(); ++k)
      os << (k ? " " : "") << format_double(m(i, k).real()) << " "
         << format_double(m(i, k).imag());
    os << "\n";
  }
}

Mat snapped_hamiltonian(const sys::SmallSystem& system) {
  Mat k = Mat::Zero(system.dim, system.dim);
  for (std::size_t l = 0; l < system.levels.size(); ++l)
    k += system.levels[l] * system.projectors[l];
  return k;
}

// Tail of the pairing-count bound sum_{n > order} (2n-1)!! x^n / n!; infinity
// when the ratio fails to contract.
double sharp_tail(double x, int order) {
  if (x <= 0.0) return 0.0;
  double term = 1.0;
  for (int n = 1; n <= order; ++n) term *= (2.0 * n - 1.0) * x / n;
  double tail = 0.0;
  for (int n = order + 1; n <= order + 600; ++n) {
    term *= (2.0 * n - 1.0) * x / n;
    if (!std::isfinite(term) || (2.0 * n + 1.0) * x / (n + 1.0) >= 0.98)
      return std::numeric_limits<double>::infinity();
    tail += term;
    if (term < 1e-18 * std::max(tail, 1e-300)) break;
  }
  return tail;
}

double exp_tail(double y, int order) {
  if (y <= 0.0) return 0.0;
  double term = 1.0;
  for (int n = 1; n <= order; ++n) term *= y / n;
  double tail = 0.0;
  for (int n = order + 1; n <= order + 600; ++n) {
    term *= y / n;
    tail += term;
    if (term < 1e-18 * std::max(tail, 1e-300)) break;
  }
  return tail;
}

struct GridContext {
  sys::ModelFile model;
  sys::DiscretizedReservoir disc;
  sys::CouplingDecomposition decomp;
  davies::DaviesData data;
  double max_x = 0.0;
};

GridContext make_grid_context(const sys::ModelFile& model, int n_per_channel) {
  GridContext ctx;
  ctx.model = model;
  ctx.disc = model.discretize(n_per_channel);
  ctx.decomp = sys::decompose_coupling(model.system, model.reservoir, ctx.disc);
  ctx.data = davies::make_davies_data(model.system, model.reservoir);
  for (const auto& mode : ctx.disc.modes)
    ctx.max_x = std::max(ctx.max_x, std::abs(mode.x));
  return ctx;
}

int dyson_points(const GridContext& ctx, double lambda, double t, double t0,
                 bool rescaled) {
  const double span = rescaled ? std::abs(t - t0) / (lambda * lambda)
                               : std::abs(t - t0);
  const double osc = span * (ctx.model.system.spectral_diameter + ctx.max_x);
  return static_cast<int>(std::ceil(osc / 3.0)) + 5;
}

// Measured reduced gap to the semigroup, plus a rigorous comparison bound
// assembled from the vertex expansion: per-order distances to the semigroup
// Taylor terms plus both remainder tails.
struct GapBound {
  double gap = 0.0;
  double bound = 0.0;
};

GapBound reduced_gap_bound(const GridContext& ctx, const fock::FockSpace& space,
                           const fock::FockPropagator& prop, double lambda,
                           double t, int order) {
  GapBound r;
  const Mat upsilon = ctx.data.upsilon;
  const Mat lim = expm(cplx(0.0, -1.0) * t * upsilon);
  const Mat g = fock::reduced_dynamics(space, prop, lambda, t, 0.0);
  r.gap = op_norm(g - lim);

  fock::DysonOptions opts;
  opts.max_order = order;
  opts.points_per_axis = dyson_points(ctx, lambda, t, 0.0, true);
  const auto dy = fock::dyson_wick_sum(ctx.model.system, ctx.disc, ctx.decomp,
                                       lambda, t, 0.0, opts);
  double bound = 0.0;
  Mat taylor = Mat::Identity(upsilon.rows(), upsilon.cols());
  for (int n = 1; n <= order; ++n) {
    taylor = (taylor * (cplx(0.0, -1.0) * t * upsilon) / double(n)).eval();
    bound += op_norm(dy.orders[n] - taylor);
  }
  // Correlation arguments inside the order-n simplex never exceed the
  // microscopic span, so the envelope integral may be clamped there.
  const double h1 = ctx.decomp.h_l1(std::abs(t) / (lambda * lambda));
  const double x =
      ctx.decomp.d_norm_max * ctx.decomp.d_norm_max * std::abs(t) * h1 / 2.0;
  bound += sharp_tail(x, order);
  bound += exp_tail(std::abs(t) * op_norm(upsilon), order);
  r.bound = bound;
  return r;
}

// ---------------------------------------------------------------------------
// Individual experiments.
// ---------------------------------------------------------------------------

void run_davies(const RunConfig& cfg, const sys::ModelFile& model,
                RunManifest& man) {
  const auto data = davies::make_davies_data(model.system, model.reservoir);
  {
    std::ofstream txt(out_path(cfg, "davies_data.txt"), std::ios::binary);
    if (!txt) throw std::runtime_error("cannot open davies_data.txt");
    txt << "dim " << data.dim() << "\n";
    txt << "levels";
    for (double e : data.system.levels) txt << " " << format_double(e);
    txt << "\n";
    dump_matrix(txt, "upsilon", data.upsilon);
    dump_matrix(txt, "upsilon_herm", data.upsilon_herm);
    dump_matrix(txt, "nu_star_nu", data.nu_star_nu);
    txt << "blocks " << data.blocks.size() << "\n";
    for (const auto& b : data.blocks) {
      txt << "block omega " << format_double(b.omega) << " channel " << b.channel
          << " mult " << b.mult << "\n";
      for (int a = 0; a < b.mult; ++a)
        dump_matrix(txt, "fiber_" + std::to_string(a), b.fibers[a]);
    }
    man.files.push_back("davies_data.txt");
  }

  const auto gen = davies::build_lindblad(data);
  const int d = data.dim();
  const Mat eye = Mat::Identity(d, d);
  const Vec vec_eye = Eigen::Map<const Vec>(eye.data(), d * d);

  const double unitality = (gen.heisenberg * vec_eye).norm();
  const double choi_min =
      davies::choi_min_eigenvalue(davies::evolve_semigroup(gen.schrodinger, 1.0));
  const Mat rho_st = davies::stationary_state(gen);
  const Vec vec_st = Eigen::Map<const Vec>(rho_st.data(), d * d);
  const double stationarity = (gen.schrodinger * vec_st).norm();
  const Mat comm = davies::commutator_superop(snapped_hamiltonian(data.system));
  const double k_comm = op_norm(gen.heisenberg * comm - comm * gen.heisenberg);
  const double herm_part = herm_defect(data.upsilon_herm);

  const auto disc = model.discretize(cfg.modes[0]);
  const Mat u_grid = davies::upsilon_resolvent(model.system, disc);
  const double u_norm = op_norm(data.upsilon);
  const double grid_gap = op_norm(u_grid - data.upsilon);
  const double grid_rel = u_norm > 1e-14 ? grid_gap / u_norm : grid_gap;

  {
    CsvFile csv(out_path(cfg, "residuals.csv"), {"quantity", "value"});
    csv.row({"dissipativity_residual", cell(data.dissipativity_residual)});
    csv.row({"hermitian_part_defect", cell(herm_part)});
    csv.row({"lindblad_unitality", cell(unitality)});
    csv.row({"choi_min_t1", cell(choi_min)});
    csv.row({"stationarity", cell(stationarity)});
    csv.row({"k_commutation", cell(k_comm)});
    csv.row({"resolvent_gap_rel", cell(grid_rel)});
    man.files.push_back("residuals.csv");
  }

  add_check(man, "dissipativity_residual", data.dissipativity_residual <= 1e-8,
            data.dissipativity_residual, 1e-8);
  add_check(man, "hermitian_part_defect", herm_part <= 1e-12, herm_part, 1e-12);
  add_check(man, "lindblad_unitality", unitality <= 1e-10, unitality, 1e-10);
  add_check(man, "choi_min_t1", choi_min >= -1e-10, choi_min, -1e-10,
            "minimum Choi eigenvalue of the time-1 map");
  add_check(man, "stationarity", stationarity <= 1e-9, stationarity, 1e-9);
  add_check(man, "k_commutation", k_comm <= 1e-8, k_comm, 1e-8);
  const double grid_tol = cfg.modes_given ? cfg.tolerance : 0.05;
  add_check(man, "resolvent_agreement", grid_rel <= grid_tol, grid_rel, grid_tol,
            "relative gap between quadrature and resolvent assembly at " +
                std::to_string(cfg.modes[0]) + " modes/channel");
}

void run_lindblad_evolve(const RunConfig& cfg, const sys::ModelFile& model,
                         RunManifest& man) {
  const auto data = davies::make_davies_data(model.system, model.reservoir);
  const auto gen = davies::build_lindblad(data);
  const int d = data.dim();

  Vec v0;
  if (cfg.has_initial) {
    v0 = cfg.initial;
    const double n = v0.norm();
    if (n < 1e-14) throw std::invalid_argument("initial vector is zero");
    v0 /= n;
  } else {
    v0 = Vec::Constant(d, cplx(1.0, 0.0) / std::sqrt(double(d)));
  }
  const Mat rho0 = v0 * v0.adjoint();
  const Vec vec0 = Eigen::Map<const Vec>(rho0.data(), d * d);

  std::vector<std::string> header = {"t"};
  for (int i = 0; i < d; ++i)
    for (int k = 0; k < d; ++k) {
      header.push_back("rho_" + std::to_string(i) + "_" + std::to_string(k) + "_re");
      header.push_back("rho_" + std::to_string(i) + "_" + std::to_string(k) + "_im");
    }
  header.push_back("choi_min");

  CsvFile csv(out_path(cfg, "evolution.csv"), header);
  double max_trace_drift = 0.0;
  double min_rho_eig = 0.0;
  double min_choi = 0.0;
  for (double t : cfg.times) {
    const Mat map = davies::evolve_semigroup(gen.schrodinger, t);
    const Vec vt = map * vec0;
    const Mat rho = Eigen::Map<const Mat>(vt.data(), d, d);
    const double choi = davies::choi_min_eigenvalue(map);
    std::vector<std::string> row = {cell(t)};
    for (int i = 0; i < d; ++i)
      for (int k = 0; k < d; ++k) {
        row.push_back(cell(rho(i, k).real()));
        row.push_back(cell(rho(i, k).imag()));
      }
    row.push_back(cell(choi));
    csv.row(row);

    max_trace_drift = std::max(max_trace_drift, std::abs(rho.trace() - cplx(1.0, 0.0)));
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (rho + rho.adjoint()));
    min_rho_eig = std::min(min_rho_eig, es.eigenvalues().minCoeff());
    min_choi = std::min(min_choi, choi);
  }
  man.files.push_back("evolution.csv");

  add_check(man, "trace_preservation", max_trace_drift <= 1e-10, max_trace_drift,
            1e-10);
  add_check(man, "state_positivity", min_rho_eig >= -1e-10, min_rho_eig, -1e-10);
  add_check(man, "map_complete_positivity", min_choi >= -1e-8, min_choi, -1e-8);
}

void run_reduced_sweep(const RunConfig& cfg, const sys::ModelFile& model,
                       RunManifest& man, bool strict_decrease) {
  const GridContext ctx = make_grid_context(model, cfg.modes[0]);
  const int nl = static_cast<int>(cfg.lambdas.size());
  const int nt = static_cast<int>(cfg.times.size());
  std::vector<std::vector<GapBound>> rows(nl);

  parallel_for(nl, cfg.jobs, [&](int i) {
    const double lambda = cfg.lambdas[i];
    const auto space = fock::make_fock_space(ctx.model.system, ctx.disc, cfg.n_max);
    const fock::FockPropagator prop(space, lambda);
    std::vector<GapBound> out;
    out.reserve(nt);
    for (double t : cfg.times)
      out.push_back(reduced_gap_bound(ctx, space, prop, lambda, t, cfg.order));
    rows[i] = std::move(out);
  });

  const std::string fname = strict_decrease ? "wcl_sweep.csv" : "full_evolve.csv";
  CsvFile csv(out_path(cfg, fname), {"lambda", "t", "error_norm", "bound"});
  for (int i = 0; i < nl; ++i)
    for (int k = 0; k < nt; ++k)
      csv.row({cell(cfg.lambdas[i]), cell(cfg.times[k]), cell(rows[i][k].gap),
               cell(rows[i][k].bound)});
  man.files.push_back(fname);

  double worst_excess = 0.0;
  for (int i = 0; i < nl; ++i)
    for (int k = 0; k < nt; ++k) {
      const double slack = rows[i][k].bound * 1.05 + 1e-10;
      worst_excess = std::max(worst_excess, rows[i][k].gap - slack);
    }
  add_check(man, "bound_dominates", worst_excess <= 0.0, worst_excess, 0.0,
            "max over the grid of error_norm minus the allowed bound");

  if (strict_decrease) {
    std::vector<int> idx(nl);
    for (int i = 0; i < nl; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
      return cfg.lambdas[a] > cfg.lambdas[b];
    });
    bool decreasing = true;
    std::string detail;
    double prev = 0.0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      double sup = 0.0;
      for (const auto& r : rows[idx[k]]) sup = std::max(sup, r.gap);
      if (k > 0 && !(sup < prev)) decreasing = false;
      if (!detail.empty()) detail += " ";
      detail += format_double(cfg.lambdas[idx[k]]) + ":" + format_double(sup);
      prev = sup;
    }
    add_check(man, "sup_gap_strictly_decreasing", decreasing, 0.0, 0.0, detail);
  }
}

void run_correlations(const RunConfig& cfg, const sys::ModelFile& model,
                      RunManifest& man) {
  const GridContext ctx = make_grid_context(model, cfg.modes[0]);
  const int d = model.system.dim;
  Mat s;
  if (cfg.has_observable) {
    s = cfg.observable;
  } else {
    s = Mat::Zero(d, d);
    for (int i = 0; i < d; ++i) s(i, i) = (i % 2 == 0) ? 1.0 : -1.0;
  }
  const double s_norm = op_norm(s);
  const std::vector<Mat> inserts(cfg.ell, s);

  const int nl = static_cast<int>(cfg.lambdas.size());
  const int nt = static_cast<int>(cfg.times.size());
  std::vector<std::vector<GapBound>> rows(nl);

  parallel_for(nl, cfg.jobs, [&](int i) {
    const double lambda = cfg.lambdas[i];
    const auto space = fock::make_fock_space(ctx.model.system, ctx.disc, cfg.n_max);
    const fock::FockPropagator prop(space, lambda);
    std::vector<GapBound> out;
    for (double t : cfg.times) {
      std::vector<double> marks;
      for (int k = 1; k <= cfg.ell; ++k) marks.push_back(t * k / (cfg.ell + 1.0));
      const Mat chain =
          fock::correlation_chain(space, prop, lambda, inserts, marks, t, 0.0);
      const Mat limit =
          fock::correlation_chain_limit(ctx.data.upsilon, inserts, marks, t, 0.0);
      GapBound r;
      r.gap = op_norm(chain - limit);
      double legs = 0.0;
      double prev = 0.0;
      std::vector<double> stops = marks;
      stops.push_back(t);
      for (double stop : stops) {
        const Mat g = fock::reduced_dynamics(space, prop, lambda, stop, prev);
        const Mat lim =
            expm(cplx(0.0, -1.0) * (stop - prev) * ctx.data.upsilon);
        legs += op_norm(g - lim);
        prev = stop;
      }
      r.bound = std::pow(s_norm, cfg.ell) * legs;
      out.push_back(r);
    }
    rows[i] = std::move(out);
  });

  CsvFile csv(out_path(cfg, "correlations.csv"),
              {"lambda", "t", "error_norm", "bound"});
  for (int i = 0; i < nl; ++i)
    for (int k = 0; k < nt; ++k)
      csv.row({cell(cfg.lambdas[i]), cell(cfg.times[k]), cell(rows[i][k].gap),
               cell(rows[i][k].bound)});
  man.files.push_back("correlations.csv");

  std::vector<int> idx(nl);
  for (int i = 0; i < nl; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(),
            [&](int a, int b) { return cfg.lambdas[a] > cfg.lambdas[b]; });
  bool decreasing = true;
  std::string detail;
  double prev_sup = 0.0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    double sup = 0.0;
    for (const auto& r : rows[idx[k]]) sup = std::max(sup, r.gap);
    if (k > 0 && !(sup < prev_sup)) decreasing = false;
    if (!detail.empty()) detail += " ";
    detail += format_double(cfg.lambdas[idx[k]]) + ":" + format_double(sup);
    prev_sup = sup;
  }
  add_check(man, "chain_gap_decreasing", decreasing, 0.0, 0.0, detail);
}

void run_resummation(const RunConfig& cfg, const sys::ModelFile& model,
                     RunManifest& man) {
  const GridContext ctx = make_grid_context(model, cfg.modes[0]);
  const int n_max = std::max(cfg.n_max, cfg.max_m);
  const int nl = static_cast<int>(cfg.lambdas.size());
  const int nt = static_cast<int>(cfg.times.size());
  std::vector<std::vector<fock::ResummationResult>> rows(nl);

  parallel_for(nl, cfg.jobs, [&](int i) {
    const double lambda = cfg.lambdas[i];
    const auto space = fock::make_fock_space(ctx.model.system, ctx.disc, n_max);
    const fock::FockPropagator prop(space, lambda);
    std::vector<fock::ResummationResult> out;
    for (double t : cfg.times) {
      fock::ResummationOptions opts;
      opts.max_m = cfg.max_m;
      opts.points_per_axis = std::max(10, dyson_points(ctx, lambda, t, 0.0, false));
      out.push_back(fock::resummation_check(space, prop, ctx.decomp, lambda, t,
                                            0.0, opts));
    }
    rows[i] = std::move(out);
  });

  CsvFile csv(out_path(cfg, "resummation.csv"),
              {"lambda", "t", "error_norm", "bound"});
  CsvFile det(out_path(cfg, "resummation_elements.csv"),
              {"lambda", "t", "element", "direct_re", "direct_im", "resummed_re",
               "resummed_im", "abs_error"});
  double worst_excess = 0.0;
  for (int i = 0; i < nl; ++i)
    for (int k = 0; k < nt; ++k) {
      const auto& r = rows[i][k];
      csv.row({cell(cfg.lambdas[i]), cell(cfg.times[k]), cell(r.max_error),
               cell(r.tail_bound)});
      for (const auto& e : r.elements)
        det.row({cell(cfg.lambdas[i]), cell(cfg.times[k]), e.label,
                 cell(e.direct.real()), cell(e.direct.imag()),
                 cell(e.resummed.real()), cell(e.resummed.imag()),
                 cell(e.abs_error)});
      worst_excess =
          std::max(worst_excess, r.max_error - (r.tail_bound + cfg.tolerance));
    }
  man.files.push_back("resummation.csv");
  man.files.push_back("resummation_elements.csv");
  add_check(man, "residual_within_tail", worst_excess <= 0.0, worst_excess, 0.0,
            "max over the grid of residual minus (tail bound + tolerance)");
}

void run_dilation_check(const RunConfig& cfg, const sys::ModelFile& model,
                        RunManifest& man) {
  const auto data = davies::make_davies_data(model.system, model.reservoir);
  const auto gen = davies::build_lindblad(data);
  const Mat upsilon = data.upsilon;

  struct Row {
    double t, dt, contraction, markov;
    double unitarity, unitality;
  };
  const int nd = static_cast<int>(cfg.dts.size());
  const int nt = static_cast<int>(cfg.times.size());
  std::vector<std::vector<Row>> rows(nd);

  parallel_for(nd, cfg.jobs, [&](int i) {
    const double dt = cfg.dts[i];
    const auto bin = dil::make_bin_system(data, dt, 1);
    const double unitality = dil::channel_unitality_defect(bin);
    std::vector<Row> out;
    for (double t : cfg.times) {
      const int n = static_cast<int>(std::lround(t / dt));
      const Mat contraction = dil::collision_contraction(bin, n);
      const Mat limit = expm(cplx(0.0, -1.0) * t * upsilon);
      const Mat channel = dil::collision_channel_power(bin, n);
      const Mat semigroup = davies::evolve_semigroup(gen.heisenberg, t);
      out.push_back({t, dt, op_norm(contraction - limit),
                     op_norm(channel - semigroup), bin.unitarity_defect,
                     unitality});
    }
    rows[i] = std::move(out);
  });

  CsvFile csv(out_path(cfg, "dilation.csv"),
              {"t", "dt", "contraction_gap", "markov_gap"});
  for (int k = 0; k < nt; ++k)
    for (int i = 0; i < nd; ++i)
      csv.row({cell(rows[i][k].t), cell(rows[i][k].dt),
               cell(rows[i][k].contraction), cell(rows[i][k].markov)});
  man.files.push_back("dilation.csv");

  double max_unitarity = 0.0, max_unitality = 0.0;
  for (const auto& per_dt : rows)
    for (const auto& r : per_dt) {
      max_unitarity = std::max(max_unitarity, r.unitarity);
      max_unitality = std::max(max_unitality, r.unitality);
    }
  add_check(man, "bin_unitarity", max_unitarity <= 1e-10, max_unitarity, 1e-10);
  add_check(man, "exact_unitality", max_unitality <= 1e-12, max_unitality, 1e-12);

  // Gap at the finest step.
  int finest = 0;
  for (int i = 1; i < nd; ++i)
    if (cfg.dts[i] < cfg.dts[finest]) finest = i;
  double worst = 0.0;
  for (const auto& r : rows[finest])
    worst = std::max(worst, std::max(r.contraction, r.markov));
  add_check(man, "finest_dt_gap", worst <= cfg.tolerance, worst, cfg.tolerance,
            "largest contraction/channel gap at dt = " +
                format_double(cfg.dts[finest]));

  // First-order scaling: halving dt should halve both gaps.
  std::vector<int> order(nd);
  for (int i = 0; i < nd; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return cfg.dts[a] > cfg.dts[b]; });
  bool ratio_ok = true;
  std::string detail;
  int pairs = 0;
  for (int k = 0; k + 1 < nd; ++k) {
    const int a = order[k], b = order[k + 1];
    if (std::abs(cfg.dts[a] / cfg.dts[b] - 2.0) > 0.02) continue;
    for (int ti = 0; ti < nt; ++ti) {
      ++pairs;
      for (double num : {rows[a][ti].contraction, rows[a][ti].markov}) {
        const double den = (num == rows[a][ti].contraction)
                               ? rows[b][ti].contraction
                               : rows[b][ti].markov;
        if (den < 1e-14) continue;
        const double ratio = num / den;
        if (ratio < 1.7 || ratio > 2.3) ratio_ok = false;
        if (!detail.empty()) detail += " ";
        detail += format_double(ratio);
      }
    }
  }
  if (pairs > 0)
    add_check(man, "halving_ratio", ratio_ok, 0.0, 0.0, detail);
}

// Fixed probe profiles for the extended comparison: wide, smooth, compactly
// supported frequency packets.
cplx extended_profile_in(double x) {
  return std::exp(-x * x / 32.0) * bump_window(x, 0.0, 8.0, 11.0);
}
cplx extended_profile_out(double x) {
  return std::exp(-(x - 1.0) * (x - 1.0) / 32.0) * bump_window(x, 0.0, 8.0, 11.0);
}

void run_extended_wcl(const RunConfig& cfg, const sys::ModelFile& model,
                      RunManifest& man) {
  const GridContext ctx = make_grid_context(model, cfg.modes[0]);
  if (ctx.data.blocks.empty())
    throw std::invalid_argument("extended-wcl: the model has no jump blocks");
  // Probe the strongest jump block.
  int best = 0;
  for (std::size_t i = 1; i < ctx.data.blocks.size(); ++i)
    if (ctx.data.blocks[i].stacked.norm() > ctx.data.blocks[best].stacked.norm())
      best = static_cast<int>(i);
  const auto& block = ctx.data.blocks[best];
  int fiber_index = 0;  // position of (block, fiber 0) in the flat jump list
  for (int i = 0; i < best; ++i) fiber_index += ctx.data.blocks[i].mult;

  const double dt = cfg.dts[0];
  const double profile_radius = 11.0;
  const int d = model.system.dim;
  const Vec c_sys = Vec::Unit(d, 0);

  struct Row {
    double t;
    cplx delta_one, delta_vac;
  };
  const int nl = static_cast<int>(cfg.lambdas.size());
  std::vector<std::vector<Row>> rows(nl);  // index 0 holds the baseline t = 0

  const auto space = fock::make_fock_space(model.system, ctx.disc, cfg.n_max);

  parallel_for(nl, cfg.jobs, [&](int li) {
    const double lambda = cfg.lambdas[li];
    const fock::FockPropagator prop(space, lambda);
    const Vec f_in = dil::grid_embedding(ctx.disc, block.channel, 0, block.omega,
                                         lambda, extended_profile_in);
    const Vec f_out = dil::grid_embedding(ctx.disc, block.channel, 0, block.omega,
                                          lambda, extended_profile_out);
    const Vec psi_in1 = fock::embed_one_particle(space, c_sys, f_in);
    const Vec psi_out1 = fock::embed_one_particle(space, c_sys, f_out);
    const Vec psi_vac = fock::embed_vacuum(space, c_sys);

    std::vector<double> all_times = {0.0};
    for (double t : cfg.times) all_times.push_back(t);

    std::vector<Row> out;
    for (double t : all_times) {
      Row row;
      row.t = t;
      cplx lhs1, lhsv;
      if (t == 0.0) {
        lhs1 = psi_out1.dot(psi_in1);
        lhsv = psi_vac.dot(psi_vac);
      } else {
        const double micro = t / (lambda * lambda);
        ctx.disc.check_horizon(micro, "extended-wcl");
        lhs1 = psi_out1.dot(prop.interaction_picture(micro, 0.0, psi_in1));
        lhsv = psi_vac.dot(prop.interaction_picture(micro, 0.0, psi_vac));
      }

      const auto lat = dil::make_lattice(0.0, t, dt, cfg.pad);
      const auto eng = dil::make_sector_engine(ctx.data, lat);
      const Vec kin = dil::hat_kernel(eng, extended_profile_in, profile_radius);
      const Vec kout = dil::hat_kernel(eng, extended_profile_out, profile_radius);
      cplx rhs1;
      if (lat.collision_bins == 0) {
        rhs1 = kout.dot(kin) * c_sys.dot(c_sys);
      } else {
        auto st = dil::make_one_particle_state(eng, c_sys, fiber_index, kin);
        dil::sweep(eng, st);
        rhs1 = dil::one_particle_overlap(eng, c_sys, fiber_index, kout, st);
      }
      const Mat evac = dil::collision_contraction(eng.bin, lat.collision_bins);
      const cplx rhsv = c_sys.dot(evac * c_sys);

      row.delta_one = lhs1 - rhs1;
      row.delta_vac = lhsv - rhsv;
      out.push_back(row);
    }
    rows[li] = std::move(out);
  });

  CsvFile csv(out_path(cfg, "extended_wcl.csv"),
              {"lambda", "t", "element", "gap", "baseline", "adjusted"});
  std::vector<double> sup_one(nl, 0.0), sup_vac(nl, 0.0);
  for (int li = 0; li < nl; ++li) {
    const cplx base1 = rows[li][0].delta_one;
    const cplx basev = rows[li][0].delta_vac;
    for (std::size_t k = 1; k < rows[li].size(); ++k) {
      const auto& r = rows[li][k];
      const double adj1 = std::abs(r.delta_one - base1);
      const double adjv = std::abs(r.delta_vac - basev);
      csv.row({cell(cfg.lambdas[li]), cell(r.t), "one_particle",
               cell(std::abs(r.delta_one)), cell(std::abs(base1)), cell(adj1)});
      csv.row({cell(cfg.lambdas[li]), cell(r.t), "vacuum",
               cell(std::abs(r.delta_vac)), cell(std::abs(basev)), cell(adjv)});
      sup_one[li] = std::max(sup_one[li], adj1);
      sup_vac[li] = std::max(sup_vac[li], adjv);
    }
  }
  man.files.push_back("extended_wcl.csv");

  std::vector<int> idx(nl);
  for (int i = 0; i < nl; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(),
            [&](int a, int b) { return cfg.lambdas[a] > cfg.lambdas[b]; });
  auto decrease_check = [&](const char* name, const std::vector<double>& sup) {
    bool dec = true;
    std::string detail;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (k > 0 && !(sup[idx[k]] < sup[idx[k - 1]])) dec = false;
      if (!detail.empty()) detail += " ";
      detail += format_double(cfg.lambdas[idx[k]]) + ":" + format_double(sup[idx[k]]);
    }
    add_check(man, name, dec, 0.0, 0.0, detail);
  };
  decrease_check("one_particle_gap_decreasing", sup_one);
  decrease_check("vacuum_gap_decreasing", sup_vac);
}

void run_theta_check(const RunConfig& cfg, const sys::ModelFile& model,
                     RunManifest& man) {
  int ch_index = -1;
  for (std::size_t i = 0; i < model.reservoir.channels.size(); ++i)
    if (!model.reservoir.channels[i].is_tail) {
      ch_index = static_cast<int>(i);
      break;
    }
  if (ch_index < 0)
    throw std::invalid_argument("theta-check: model has no labeled channel");
  const auto& ch = model.reservoir.channels[ch_index];

  auto symbol = [&](double y) {
    return cplx(0.9 * std::exp(-(y - ch.omega) * (y - ch.omega) / (2.0 * 0.09)), 0.0);
  };
  auto g1 = [](double x) {
    return std::exp(-x * x / 0.98) * bump_window(x, 0.0, 1.2, 1.9);
  };
  auto g2 = [](double x) {
    return std::exp(-(x - 0.4) * (x - 0.4) / 0.98) * bump_window(x, 0.0, 1.2, 1.9);
  };

  CsvFile csv(out_path(cfg, "theta.csv"), {"lambda", "check", "value"});
  std::vector<double> gaps;
  for (double lambda : cfg.lambdas) {
    const auto pair = dil::theta_compression_pair(ch.a, ch.b, ch.omega, lambda,
                                                  symbol, g2, g1, cfg.radius);
    const double gap = std::abs(pair.first - pair.second);
    gaps.push_back(gap);
    csv.row({cell(lambda), "compression", cell(gap)});
  }

  // Engine-side multiplication: composing per-fiber factors is exact, and
  // unit-modulus factors are rejected.
  const auto data = davies::make_davies_data(model.system, model.reservoir);
  const auto lat = dil::make_lattice(0.0, 0.2, 0.05, 0.3);
  const auto eng = dil::make_sector_engine(data, lat);
  const int d = model.system.dim;
  Vec kernel(lat.total_bins);
  for (int b = 0; b < lat.total_bins; ++b)
    kernel[b] = std::exp(cplx(0.0, 0.3 * b)) / std::sqrt(double(lat.total_bins));
  auto st = dil::make_one_particle_state(eng, Vec::Unit(d, 0), 0, kernel);
  dil::sweep(eng, st);  // populate every particle sector

  std::vector<cplx> ga(eng.bin.hd), gb(eng.bin.hd), gab(eng.bin.hd);
  for (int a = 0; a < eng.bin.hd; ++a) {
    ga[a] = 0.7 * std::exp(cplx(0.0, 0.2 * (a + 1)));
    gb[a] = 0.5 * std::exp(cplx(0.0, -0.1 * (a + 1)));
    gab[a] = ga[a] * gb[a];
  }
  auto st_two = st;
  dil::theta_apply(eng, gb, st_two);
  dil::theta_apply(eng, ga, st_two);
  auto st_once = st;
  dil::theta_apply(eng, gab, st_once);
  double engine_defect = 0.0;
  engine_defect += (st_two.c0 - st_once.c0).squaredNorm();
  engine_defect += (st_two.c1 - st_once.c1).squaredNorm();
  engine_defect += (st_two.c2 - st_once.c2).squaredNorm();
  engine_defect = std::sqrt(engine_defect);
  csv.row({cell(0.0), "engine_product", cell(engine_defect)});

  bool rejected = false;
  try {
    std::vector<cplx> bad(eng.bin.hd, cplx(1.0, 0.0));
    auto st_bad = st;
    dil::theta_apply(eng, bad, st_bad);
  } catch (const std::invalid_argument&) {
    rejected = true;
  }
  csv.row({cell(0.0), "rejects_unit_modulus", cell(rejected ? 1.0 : 0.0)});
  man.files.push_back("theta.csv");

  bool dec = true;
  std::string detail;
  std::vector<int> idx(cfg.lambdas.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  std::sort(idx.begin(), idx.end(),
            [&](int a, int b) { return cfg.lambdas[a] > cfg.lambdas[b]; });
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (k > 0 && !(gaps[idx[k]] < gaps[idx[k - 1]])) dec = false;
    if (!detail.empty()) detail += " ";
    detail += format_double(cfg.lambdas[idx[k]]) + ":" + format_double(gaps[idx[k]]);
  }
  add_check(man, "compression_gap_decreasing", dec, 0.0, 0.0, detail);
  add_check(man, "engine_product_exact", engine_defect <= 1e-12, engine_defect,
            1e-12);
  add_check(man, "rejects_unit_modulus", rejected, rejected ? 1.0 : 0.0, 1.0);
}

void run_pairings(const RunConfig& cfg, const sys::ModelFile&, RunManifest& man) {
  CsvFile csv(out_path(cfg, "pairings.csv"),
              {"n", "perfect", "involutions", "time_consecutive"});
  std::ofstream dump;
  if (cfg.dump_pairings) {
    dump.open(out_path(cfg, "pairings.txt"), std::ios::binary);
    if (!dump) throw std::runtime_error("cannot open pairings.txt");
  }

  bool counts_ok = true;
  std::string detail;
  for (int n : cfg.orders) {
    const auto perfect = comb::enumerate_pairings(n / 2);
    const auto partial = comb::enumerate_partial_pairings(n);
    int consecutive = 0;
    for (const auto& p : perfect)
      if (comb::is_time_consecutive(p)) ++consecutive;
    csv.row({cell(n), cell(static_cast<int>(perfect.size())),
             cell(static_cast<int>(partial.size())), cell(consecutive)});

    const auto expect_perfect = comb::double_factorial_odd(n / 2);
    const auto expect_partial = comb::involution_number(n);
    if (perfect.size() != expect_perfect || partial.size() != expect_partial ||
        consecutive != 1) {
      counts_ok = false;
      detail += "n=" + std::to_string(n) + " mismatch ";
    }

    if (cfg.dump_pairings) {
      for (const auto& p : perfect) {
        dump << "n=" << n << ":";
        for (int q = 0; q < p.n; ++q)
          dump << " (" << p.sigma[2 * q] + 1 << "," << p.sigma[2 * q + 1] + 1 << ")";
        dump << "\n";
      }
    }
  }
  man.files.push_back("pairings.csv");
  if (cfg.dump_pairings) man.files.push_back("pairings.txt");
  add_check(man, "pairing_counts", counts_ok, 0.0, 0.0,
            counts_ok ? "all enumerations match the closed-form counts" : detail);
}

}  // namespace

RunManifest run(const RunConfig& cfg) {
  const auto diags = validate(cfg);
  if (!diags.empty()) {
    std::string msg = "invalid run configuration:";
    for (const auto& d : diags) msg += "\n  - " + d;
    throw std::invalid_argument(msg);
  }

  const auto start = std::chrono::steady_clock::now();
  const auto model = sys::load_model(cfg.model_path);

  RunManifest man;
  man.experiment = cfg.experiment;
  man.version = kVersion;
  man.model_hash = hash_bytes(read_file(cfg.model_path));
  std::string config_bytes;
  try {
    config_bytes = cfg.config_path.empty() ? "" : read_file(cfg.config_path);
  } catch (const std::exception&) {
    config_bytes.clear();
  }
  if (config_bytes.empty()) {
    // Programmatic configs: hash a canonical rendering of the fields.
    std::ostringstream canon;
    canon << cfg.model_path << "|" << cfg.experiment << "|" << cfg.out_dir;
    for (double v : cfg.lambdas) canon << "|l" << format_double(v);
    for (double v : cfg.times) canon << "|t" << format_double(v);
    for (double v : cfg.dts) canon << "|d" << format_double(v);
    for (int v : cfg.modes) canon << "|m" << v;
    for (int v : cfg.orders) canon << "|o" << v;
    canon << "|" << format_double(cfg.tolerance) << "|" << cfg.seed << "|"
          << cfg.n_max << "|" << cfg.order << "|" << cfg.max_m << "|" << cfg.ell
          << "|" << format_double(cfg.pad) << "|" << format_double(cfg.radius);
    config_bytes = canon.str();
  }
  man.config_hash = hash_bytes(config_bytes);

  fs::create_directories(cfg.out_dir);
  if (cfg.experiment == "davies")
    run_davies(cfg, model, man);
  else if (cfg.experiment == "lindblad-evolve")
    run_lindblad_evolve(cfg, model, man);
  else if (cfg.experiment == "full-evolve")
    run_reduced_sweep(cfg, model, man, false);
  else if (cfg.experiment == "wcl-sweep")
    run_reduced_sweep(cfg, model, man, true);
  else if (cfg.experiment == "correlations")
    run_correlations(cfg, model, man);
  else if (cfg.experiment == "resummation-check")
    run_resummation(cfg, model, man);
  else if (cfg.experiment == "dilation-check")
    run_dilation_check(cfg, model, man);
  else if (cfg.experiment == "extended-wcl")
    run_extended_wcl(cfg, model, man);
  else if (cfg.experiment == "theta-check")
    run_theta_check(cfg, model, man);
  else if (cfg.experiment == "pairings")
    run_pairings(cfg, model, man);
  else
    throw std::invalid_argument("unknown experiment: " + cfg.experiment);

  man.pass = true;
  for (const auto& c : man.checks) man.pass = man.pass && c.pass;
  man.wall_ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - start)
                    .count();

  std::ofstream mf(out_path(cfg, "manifest.json"), std::ios::binary);
  if (!mf) throw std::runtime_error("cannot write manifest.json");
  mf << man.to_json();
  return man;
}

}  // namespace wcl::lab
