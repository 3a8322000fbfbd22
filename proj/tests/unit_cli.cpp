#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <wcl/experiments.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

using namespace wcl;
using namespace wcl::lab;
namespace fs = std::filesystem;

#ifndef MODELS_DIR
#define MODELS_DIR "models"
#endif

namespace {

const std::string kFlatModel = std::string(MODELS_DIR) + "/two_level_flat.model";

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() /
           ("wcl_cli_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string write_config(const fs::path& dir, const std::string& name,
                         const std::string& body) {
  const fs::path p = dir / name;
  std::ofstream out(p);
  out << body;
  return p.string();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("config parsing: full round trip") {
  TempDir tmp("roundtrip");
  const std::string path = write_config(tmp.path, "full.json", R"({
    "model": ")" + kFlatModel + R"(",
    "experiment": "correlations",
    "out": "/tmp/somewhere",
    "lambdas": [0.5, 0.3],
    "times": [1.0],
    "dts": [0.001],
    "modes": [8],
    "orders": [2, 4],
    "tolerance": 1e-5,
    "seed": 7,
    "deterministic": false,
    "jobs": 3,
    "n_max": 1,
    "order": 3,
    "max_m": 1,
    "ell": 2,
    "pad": 2.5,
    "radius": 4.0,
    "dump": true,
    "observable": [1, 0, 0, 0, 0, 0, -1, 0],
    "initial": [0.6, 0, 0, 0.8]
  })");
  const RunConfig cfg = parse_config(path);
  CHECK(cfg.model_path == kFlatModel);
  CHECK(cfg.experiment == "correlations");
  CHECK(cfg.out_dir == "/tmp/somewhere");
  CHECK(cfg.lambdas == std::vector<double>{0.5, 0.3});
  CHECK(cfg.times == std::vector<double>{1.0});
  CHECK(cfg.dts == std::vector<double>{0.001});
  CHECK(cfg.modes == std::vector<int>{8});
  CHECK(cfg.orders == std::vector<int>{2, 4});
  CHECK(cfg.tolerance == 1e-5);
  CHECK(cfg.seed == 7);
  CHECK(!cfg.deterministic);
  CHECK(cfg.jobs == 3);
  CHECK(cfg.n_max == 1);
  CHECK(cfg.order == 3);
  CHECK(cfg.max_m == 1);
  CHECK(cfg.ell == 2);
  CHECK(cfg.pad == 2.5);
  CHECK(cfg.radius == 4.0);
  CHECK(cfg.dump_pairings);
  CHECK(cfg.lambdas_given);
  CHECK(cfg.times_given);
  CHECK(cfg.dts_given);
  CHECK(cfg.modes_given);
  CHECK(cfg.orders_given);
  REQUIRE(cfg.has_observable);
  CHECK(cfg.observable.rows() == 2);
  CHECK(cfg.observable(0, 0) == cplx(1.0, 0.0));
  CHECK(cfg.observable(0, 1) == cplx(0.0, 0.0));
  CHECK(cfg.observable(1, 1) == cplx(-1.0, 0.0));
  REQUIRE(cfg.has_initial);
  REQUIRE(cfg.initial.size() == 2);
  CHECK(cfg.initial[0] == cplx(0.6, 0.0));
  CHECK(cfg.initial[1] == cplx(0.0, 0.8));
}

TEST_CASE("config parsing: rejections name the offending field") {
  TempDir tmp("reject");
  auto expect_throw = [&](const std::string& name, const std::string& body) {
    const std::string p = write_config(tmp.path, name, body);
    CHECK_THROWS_AS(parse_config(p), std::runtime_error);
  };
  const std::string head =
      R"({"model": ")" + kFlatModel + R"(", "experiment": "davies")";
  expect_throw("malformed.json", "{");
  expect_throw("not_object.json", "[1, 2]");
  expect_throw("missing_model.json", R"({"experiment": "davies"})");
  expect_throw("missing_exp.json", R"({"model": "x.model"})");
  expect_throw("unknown.json", head + R"(, "frobs": 1})");
  expect_throw("bad_list.json", head + R"(, "lambdas": "x"})");
  expect_throw("bad_item.json", head + R"(, "lambdas": ["a"]})");
  expect_throw("frac_modes.json", head + R"(, "modes": [2.5]})");
  expect_throw("neg_seed.json", head + R"(, "seed": -1})");
  expect_throw("frac_seed.json", head + R"(, "seed": 1.5})");
  expect_throw("bad_bool.json", head + R"(, "deterministic": "yes"})");
  expect_throw("odd_obs.json", head + R"(, "observable": [1, 0, 0]})");
  expect_throw("shape_obs.json", head + R"(, "observable": [1, 0, 2, 0, 3, 0]})");
}

TEST_CASE("grid defaults depend on the experiment") {
  auto fresh = [&](const std::string& exp) {
    RunConfig cfg;
    cfg.model_path = kFlatModel;
    cfg.experiment = exp;
    finalize_config(cfg, "/tmp/out-defaults");
    return cfg;
  };

  const auto davies = fresh("davies");
  CHECK(davies.lambdas == std::vector<double>{0.5});
  CHECK(davies.times == std::vector<double>{0.25, 0.5, 1.0, 2.0});
  CHECK(davies.dts == std::vector<double>{1e-3});
  CHECK(davies.modes == std::vector<int>{48});
  CHECK(davies.orders == std::vector<int>{2, 4, 6, 8});

  const auto ext = fresh("extended-wcl");
  CHECK(ext.lambdas == std::vector<double>{0.5, 0.3});
  CHECK(ext.times == std::vector<double>{0.25, 0.5});
  CHECK(ext.dts == std::vector<double>{0.0125});
  CHECK(ext.modes == std::vector<int>{4});

  const auto wcl = fresh("wcl-sweep");
  CHECK(wcl.lambdas == std::vector<double>{0.5, 0.35, 0.25});

  const auto res = fresh("resummation-check");
  CHECK(res.times == std::vector<double>{1.0, 2.0});
  CHECK(res.modes == std::vector<int>{3});

  const auto dil = fresh("dilation-check");
  CHECK(dil.dts == std::vector<double>{1e-3, 5e-4});
  CHECK(dil.times == std::vector<double>{1.0});

  const auto lind = fresh("lindblad-evolve");
  CHECK(lind.times.size() == 6);

  // grids that were given survive untouched
  RunConfig given;
  given.model_path = kFlatModel;
  given.experiment = "davies";
  given.lambdas = {0.7};
  given.lambdas_given = true;
  finalize_config(given, "/tmp/out-defaults");
  CHECK(given.lambdas == std::vector<double>{0.7});
}

TEST_CASE("output directory resolution order") {
  RunConfig cfg;
  cfg.model_path = kFlatModel;
  cfg.experiment = "davies";

  // override wins over everything
  cfg.out_dir = "from-config";
  finalize_config(cfg, "explicit-override");
  CHECK(cfg.out_dir == "explicit-override");

  // config value wins over the environment
  ::setenv(kOutEnv, "/tmp/wclenv-root", 1);
  RunConfig cfg2;
  cfg2.model_path = kFlatModel;
  cfg2.experiment = "davies";
  cfg2.out_dir = "from-config";
  finalize_config(cfg2);
  CHECK(cfg2.out_dir == "from-config");

  // environment root applies when nothing else is set
  RunConfig cfg3;
  cfg3.model_path = kFlatModel;
  cfg3.experiment = "davies";
  finalize_config(cfg3);
  CHECK(cfg3.out_dir == "/tmp/wclenv-root/davies");

  // final fallback is ./wcl-out/<experiment>
  ::unsetenv(kOutEnv);
  RunConfig cfg4;
  cfg4.model_path = kFlatModel;
  cfg4.experiment = "theta-check";
  finalize_config(cfg4);
  CHECK(cfg4.out_dir == "wcl-out/theta-check");
}

TEST_CASE("validation reports each kind of misconfiguration") {
  TempDir tmp("validate");
  auto base = [&]() {
    RunConfig cfg;
    cfg.model_path = kFlatModel;
    cfg.experiment = "davies";
    finalize_config(cfg, (tmp.path / "out").string());
    return cfg;
  };
  CHECK(validate(base()).empty());

  auto has_diag = [](const std::vector<std::string>& diags, const std::string& frag) {
    return std::any_of(diags.begin(), diags.end(), [&](const std::string& d) {
      return d.find(frag) != std::string::npos;
    });
  };

  auto bad_exp = base();
  bad_exp.experiment = "frobnicate";
  CHECK(has_diag(validate(bad_exp), "experiment"));

  auto bad_model = base();
  bad_model.model_path = "/nonexistent/file.model";
  CHECK(!validate(bad_model).empty());

  auto empty_grid = base();
  empty_grid.lambdas.clear();
  empty_grid.lambdas_given = true;
  CHECK(!validate(empty_grid).empty());

  auto neg_lambda = base();
  neg_lambda.lambdas = {0.5, -0.1};
  CHECK(!validate(neg_lambda).empty());

  auto bad_tol = base();
  bad_tol.tolerance = 0.0;
  CHECK(!validate(bad_tol).empty());

  auto bad_jobs = base();
  bad_jobs.jobs = 0;
  CHECK(!validate(bad_jobs).empty());
  bad_jobs.jobs = 65;
  CHECK(!validate(bad_jobs).empty());

  auto bad_out = base();
  bad_out.out_dir = "/proc/definitely/not/writable";
  CHECK(!validate(bad_out).empty());

  // long horizon on a coarse grid: the recurrence guard proposes more modes
  auto recur = base();
  recur.experiment = "full-evolve";
  recur.modes = {4};
  recur.times = {2.0};
  recur.lambdas = {0.1};
  const auto diags = validate(recur);
  CHECK(has_diag(diags, "modes"));
}

TEST_CASE("runner writes byte-identical numeric outputs across runs") {
  TempDir tmp("determinism");
  const std::string pair_cfg = write_config(tmp.path, "pairings.json", R"({
    "model": ")" + kFlatModel + R"(",
    "experiment": "pairings",
    "orders": [2, 4, 6],
    "dump": true
  })");

  auto run_into = [&](const std::string& cfg_path, const std::string& sub) {
    RunConfig cfg = parse_config(cfg_path);
    finalize_config(cfg, (tmp.path / sub).string());
    const RunManifest m = lab::run(cfg);
    CHECK(m.pass);
    CHECK(!m.files.empty());
    CHECK(m.version == kVersion);
    for (const auto& f : m.files) CHECK(fs::exists(tmp.path / sub / f));
    CHECK(fs::exists(tmp.path / sub / "manifest.json"));
    return m;
  };

  const auto m1 = run_into(pair_cfg, "p1");
  const auto m2 = run_into(pair_cfg, "p2");
  CHECK(m1.experiment == "pairings");
  CHECK(slurp(tmp.path / "p1" / "pairings.csv") ==
        slurp(tmp.path / "p2" / "pairings.csv"));
  CHECK(slurp(tmp.path / "p1" / "pairings.txt") ==
        slurp(tmp.path / "p2" / "pairings.txt"));

  const std::string davies_cfg = write_config(tmp.path, "davies.json", R"({
    "model": ")" + kFlatModel + R"(",
    "experiment": "davies",
    "modes": [256],
    "tolerance": 0.01
  })");
  run_into(davies_cfg, "d1");
  run_into(davies_cfg, "d2");
  CHECK(slurp(tmp.path / "d1" / "residuals.csv") ==
        slurp(tmp.path / "d2" / "residuals.csv"));
  CHECK(slurp(tmp.path / "d1" / "davies_data.txt") ==
        slurp(tmp.path / "d2" / "davies_data.txt"));

  // the manifest records content hashes and the pass verdict as JSON
  const std::string mjson = slurp(tmp.path / "d1" / "manifest.json");
  CHECK(mjson.find("\"experiment\"") != std::string::npos);
  CHECK(mjson.find("\"model_hash\"") != std::string::npos);
  CHECK(mjson.find("\"checks\"") != std::string::npos);
}

TEST_CASE("runner refuses invalid configurations with diagnostics") {
  RunConfig cfg;
  cfg.model_path = kFlatModel;
  cfg.experiment = "no-such-experiment";
  finalize_config(cfg, "/tmp/wcl-invalid-out");
  CHECK_THROWS_AS(lab::run(cfg), std::invalid_argument);
}
