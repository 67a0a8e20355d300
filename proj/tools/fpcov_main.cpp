/// \file fpcov_main.cpp
/// \brief `fpcov` command-line front end.
///
/// Subcommands: simulate, fit, select, bias-demo, rate-study.  Every
/// command writes its artifacts plus a manifest (config, config hash,
/// seed, outputs, warnings) into --output-dir.  Exit codes: 0 success,
/// 1 numeric failure, 2 usage/IO failure.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fpcov/covariance.hpp"
#include "fpcov/crossval.hpp"
#include "fpcov/errors.hpp"
#include "fpcov/fit.hpp"
#include "fpcov/io.hpp"
#include "fpcov/kernels.hpp"
#include "fpcov/parallel.hpp"
#include "fpcov/presmooth.hpp"
#include "fpcov/simulate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fpcov;

namespace {

// ---------------------------------------------------------------------------
// Small helpers
// ---------------------------------------------------------------------------

json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("config file '" + path + "': " + e.what());
  }
}

/// Apply a config-file value unless the flag was given on the command line.
template <typename T>
void cfg(const json& j, const char* key, const CLI::App* cmd,
         const std::string& flag, T* out) {
  if (!j.contains(key)) return;
  if (cmd->count(flag) > 0) return;
  try {
    *out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("config key '") + key + "': " + e.what());
  }
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "'");
}

struct SigmaFlag {
  SigmaMode mode = SigmaMode::kEstimate;
  double value = 0.0;
};

SigmaFlag parse_sigma_flag(const std::string& s) {
  SigmaFlag out;
  if (s == "estimate") return out;
  if (s.rfind("known:", 0) == 0) {
    out.mode = SigmaMode::kKnown;
    try {
      std::size_t pos = 0;
      out.value = std::stod(s.substr(6), &pos);
      if (pos != s.size() - 6) throw std::invalid_argument("");
    } catch (...) {
      throw InvalidConfig("--sigma: cannot parse '" + s +
                          "' (expected known:VALUE or estimate)");
    }
    if (!(out.value >= 0.0)) {
      throw InvalidConfig("--sigma known:VALUE requires VALUE >= 0");
    }
    return out;
  }
  throw InvalidConfig("--sigma: expected known:VALUE or estimate, got '" + s +
                      "'");
}

DensityMode parse_g_flag(const std::string& s) {
  if (s == "uniform") return DensityMode::kUniform;
  if (s == "linear") return DensityMode::kTruncatedLinear;
  if (s == "estimate") return DensityMode::kEstimate;
  throw InvalidConfig("--g: expected uniform, linear, or estimate, got '" + s +
                      "'");
}

MeanMode parse_mean_flag(const std::string& s) {
  if (s == "zero") return MeanMode::kZero;
  if (s == "estimate") return MeanMode::kEstimate;
  throw InvalidConfig("--mean: expected zero or estimate, got '" + s + "'");
}

struct CorrFlag {
  CorrelationKind kind = CorrelationKind::kIndependent;
  double rho = 0.0;
  std::string text = "independent";
};

CorrFlag parse_corr_flag(const std::string& s) {
  CorrFlag out;
  out.text = s;
  if (s == "independent") return out;
  auto with_rho = [&](const char* prefix, CorrelationKind kind) {
    const std::string p = std::string(prefix) + ":";
    if (s.rfind(p, 0) != 0) return false;
    out.kind = kind;
    try {
      std::size_t pos = 0;
      out.rho = std::stod(s.substr(p.size()), &pos);
      if (pos != s.size() - p.size()) throw std::invalid_argument("");
    } catch (...) {
      throw InvalidConfig("--corr: cannot parse '" + s + "'");
    }
    return true;
  };
  if (with_rho("ar1", CorrelationKind::kAr1)) return out;
  if (with_rho("equi", CorrelationKind::kEquicorrelated)) return out;
  throw InvalidConfig("--corr: expected independent, ar1:RHO, or equi:RHO");
}

DesignKind parse_design(const std::string& s) {
  if (s == "uniform") return DesignKind::kUniform;
  if (s == "linear") return DesignKind::kTruncatedLinear;
  throw InvalidConfig("design: expected uniform or linear, got '" + s + "'");
}

const char* design_name(DesignKind d) {
  return d == DesignKind::kUniform ? "uniform" : "linear";
}

const char* correlation_name(CorrelationKind c) {
  switch (c) {
    case CorrelationKind::kIndependent: return "independent";
    case CorrelationKind::kAr1: return "ar1";
    case CorrelationKind::kEquicorrelated: return "equicorrelated";
    default: return "explicit";
  }
}

/// Write a surface on an arbitrary lattice (header of points, then rows).
void write_lattice_surface(const std::string& path,
                           const std::vector<double>& points,
                           const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  for (std::size_t i = 0; i < points.size(); ++i) {
    out << (i ? "," : "") << io::fmt17(points[i]);
  }
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      out << (i ? "," : "") << io::fmt17(row[i]);
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing '" + path + "'");
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string config_path;
  std::string output_dir = ".";
  int n = 100;
  int m_min = 2;
  int m_max = 5;
  std::vector<double> lambdas = {1.0, 0.4};
  double sigma2 = 0.25;
  std::string design = "uniform";
  std::string corr = "independent";
  bool heavy_tail = false;
  std::uint64_t seed = 1;
};

int run_simulate(const SimulateArgs& a, const CLI::App* cmd) {
  SimulateArgs eff = a;
  const json j = load_config_file(a.config_path);
  cfg(j, "n", cmd, "--n", &eff.n);
  cfg(j, "m_min", cmd, "--m-min", &eff.m_min);
  cfg(j, "m_max", cmd, "--m-max", &eff.m_max);
  cfg(j, "lambdas", cmd, "--lambdas", &eff.lambdas);
  cfg(j, "sigma2", cmd, "--sigma2", &eff.sigma2);
  cfg(j, "design", cmd, "--design", &eff.design);
  cfg(j, "heavy_tail_noise", cmd, "--heavy-tail", &eff.heavy_tail);
  cfg(j, "seed", cmd, "--seed", &eff.seed);
  std::vector<double> fixed_times;
  if (j.contains("fixed_times")) {
    fixed_times = j.at("fixed_times").get<std::vector<double>>();
  }
  CorrFlag corr = parse_corr_flag(eff.corr);
  if (j.contains("correlation") && cmd->count("--corr") == 0) {
    corr.kind =
        parse_corr_flag(j.at("correlation").get<std::string>()).kind;
    corr.text = j.at("correlation").get<std::string>();
    if (j.contains("rho")) corr.rho = j.at("rho").get<double>();
    if (corr.kind != CorrelationKind::kIndependent) {
      corr.text = std::string(correlation_name(corr.kind)) + ":" +
                  io::fmt17(corr.rho);
    }
  }

  SimulationConfig sc;
  sc.n = eff.n;
  sc.m_min = eff.m_min;
  sc.m_max = eff.m_max;
  sc.lambdas = eff.lambdas;
  sc.sigma2 = eff.sigma2;
  sc.design = parse_design(eff.design);
  sc.correlation = corr.kind;
  sc.rho = corr.rho;
  sc.heavy_tail_noise = eff.heavy_tail;
  sc.fixed_times = fixed_times;
  sc.seed = eff.seed;
  sc.validate();

  ensure_dir(eff.output_dir);
  const SimulatedData data = simulate_dataset(sc);

  const std::string data_path = eff.output_dir + "/data.csv";
  io::write_long_csv(data_path, data.curves);

  // Truth bundle on a fixed 201-point lattice.
  const int lattice = 201;
  std::vector<double> pts(lattice);
  for (int i = 0; i < lattice; ++i) pts[i] = i / static_cast<double>(lattice - 1);
  std::vector<std::vector<double>> cov_rows(lattice,
                                            std::vector<double>(lattice));
  for (int a2 = 0; a2 < lattice; ++a2) {
    for (int b = 0; b < lattice; ++b) {
      cov_rows[a2][b] = data.truth.covariance(pts[a2], pts[b]);
    }
  }
  const std::string cov_path = eff.output_dir + "/truth_covariance.csv";
  write_lattice_surface(cov_path, pts, cov_rows);

  const std::string eig_path = eff.output_dir + "/truth_eigen.csv";
  {
    std::ofstream out(eig_path);
    if (!out) throw IoError("cannot open '" + eig_path + "' for writing");
    out << "s";
    for (std::size_t k = 0; k < sc.lambdas.size(); ++k) {
      out << ",psi" << (k + 1);
    }
    out << '\n';
    for (int i = 0; i < lattice; ++i) {
      out << io::fmt17(pts[i]);
      for (std::size_t k = 0; k < sc.lambdas.size(); ++k) {
        out << ',' << io::fmt17(data.truth.psi(static_cast<int>(k), pts[i]));
      }
      out << '\n';
    }
  }

  json truth;
  truth["lambdas"] = sc.lambdas;
  truth["sigma2"] = sc.sigma2;
  truth["correlation"] = correlation_name(sc.correlation);
  truth["rho"] = sc.rho;
  const std::string truth_path = eff.output_dir + "/truth.json";
  write_json_file(truth_path, truth);

  json config;
  config["n"] = sc.n;
  config["m_min"] = sc.m_min;
  config["m_max"] = sc.m_max;
  config["lambdas"] = sc.lambdas;
  config["sigma2"] = sc.sigma2;
  config["design"] = design_name(sc.design);
  config["correlation"] = correlation_name(sc.correlation);
  config["rho"] = sc.rho;
  config["heavy_tail_noise"] = sc.heavy_tail_noise;
  config["fixed_times"] = sc.fixed_times;
  config["seed"] = sc.seed;
  io::write_manifest(eff.output_dir + "/manifest.json", "simulate",
                     config.dump(), sc.seed,
                     {"data.csv", "truth.json", "truth_covariance.csv",
                      "truth_eigen.csv"});
  std::cout << "simulate: wrote " << data.curves.size() << " curves to "
            << data_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

struct FitArgs {
  std::string config_path;
  std::string input;
  std::string output_dir = ".";
  double h = 0.0;
  int k = 0;
  double h_mu = 0.0;
  std::string sigma = "estimate";
  std::string g = "uniform";
  std::string mean = "zero";
  double band_a = kern::kDefaultBandConstant;
  std::uint64_t seed = 0;
  int threads = 1;
  bool deterministic = false;
};

FitOptions make_fit_options(const FitArgs& a) {
  FitOptions opts;
  if (!(a.h > 0.0)) throw InvalidConfig("--h must be given and positive");
  if (a.k < 1) throw InvalidConfig("--k must be given and >= 1");
  opts.h = a.h;
  opts.K = a.k;
  opts.h_mu = a.h_mu;
  const SigmaFlag sf = parse_sigma_flag(a.sigma);
  opts.sigma = sf.mode;
  opts.sigma_known = sf.value;
  opts.density = parse_g_flag(a.g);
  opts.mean = parse_mean_flag(a.mean);
  opts.band_constant = a.band_a;
  return opts;
}

json fit_config_json(const FitArgs& a) {
  json config;
  config["input"] = a.input;
  config["h"] = a.h;
  config["k"] = a.k;
  config["h_mu"] = a.h_mu;
  config["sigma"] = a.sigma;
  config["g"] = a.g;
  config["mean"] = a.mean;
  config["band_a"] = a.band_a;
  config["deterministic"] = a.deterministic;
  return config;
}

void apply_fit_config(const json& j, const CLI::App* cmd, FitArgs* a) {
  cfg(j, "input", cmd, "--input", &a->input);
  cfg(j, "h", cmd, "--h", &a->h);
  cfg(j, "k", cmd, "--k", &a->k);
  cfg(j, "h_mu", cmd, "--h-mu", &a->h_mu);
  cfg(j, "sigma", cmd, "--sigma", &a->sigma);
  cfg(j, "g", cmd, "--g", &a->g);
  cfg(j, "mean", cmd, "--mean", &a->mean);
  cfg(j, "band_a", cmd, "--band-A", &a->band_a);
  cfg(j, "seed", cmd, "--seed", &a->seed);
  cfg(j, "threads", cmd, "--threads", &a->threads);
}

int run_fit(const FitArgs& args, const CLI::App* cmd) {
  FitArgs a = args;
  apply_fit_config(load_config_file(a.config_path), cmd, &a);
  if (a.input.empty()) throw InvalidConfig("--input is required");
  const FitOptions opts = make_fit_options(a);

  const std::vector<ObservedCurve> data = io::read_long_csv(a.input);
  ensure_dir(a.output_dir);
  const FitResult fit = fit_pipeline(data, opts);

  io::write_surface_csv(a.output_dir + "/covariance.csv", fit.merged);
  io::write_eigen_csv(a.output_dir + "/eigen.csv", fit.eig);
  io::write_eigenvalues_csv(a.output_dir + "/eigenvalues.csv", fit.eig);
  io::write_sigma2_json(a.output_dir + "/sigma2.json", fit.sigma2);

  std::vector<std::string> warnings;
  if (fit.eig.rank_deficient) {
    warnings.push_back("rank_deficient: requested " +
                       std::to_string(fit.eig.requested) +
                       " components, only " + std::to_string(fit.eig.rank) +
                       " positive eigenvalues");
  }
  if (std::any_of(fit.eig.near_degenerate.begin(),
                  fit.eig.near_degenerate.end(),
                  [](int flag) { return flag != 0; })) {
    warnings.push_back("near_degenerate: adjacent eigenvalues nearly equal");
  }
  if (fit.sigma_estimated && fit.sigma2.band.adapted) {
    warnings.push_back("sigma_band_adapted: " + fit.sigma2.band.note);
  }
  if (fit.n_eligible < fit.n_curves) {
    warnings.push_back(
        "single_observation_curves: " +
        std::to_string(fit.n_curves - fit.n_eligible) +
        " curves have m=1 and were excluded from the off-diagonal estimator");
  }
  io::write_manifest(a.output_dir + "/manifest.json", "fit",
                     fit_config_json(a).dump(), a.seed,
                     {"covariance.csv", "eigen.csv", "eigenvalues.csv",
                      "sigma2.json"},
                     warnings);
  std::cout << "fit: " << fit.n_curves << " curves, rank " << fit.eig.rank
            << ", sigma2 " << io::fmt17(fit.sigma2.value) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// select
// ---------------------------------------------------------------------------

struct SelectArgs {
  std::string config_path;
  std::string input;
  std::string output_dir = ".";
  std::vector<double> h_grid;
  std::vector<int> k_grid;
  double h_mu = 0.0;
  std::string sigma = "estimate";
  std::string g = "uniform";
  std::string mean = "zero";
  double band_a = kern::kDefaultBandConstant;
  bool exact = false;
  std::uint64_t seed = 0;
  int threads = 1;
  bool deterministic = false;
};

int run_select(const SelectArgs& args, const CLI::App* cmd) {
  SelectArgs a = args;
  const json j = load_config_file(a.config_path);
  cfg(j, "input", cmd, "--input", &a.input);
  cfg(j, "h_grid", cmd, "--h-grid", &a.h_grid);
  cfg(j, "k_grid", cmd, "--k-grid", &a.k_grid);
  cfg(j, "h_mu", cmd, "--h-mu", &a.h_mu);
  cfg(j, "sigma", cmd, "--sigma", &a.sigma);
  cfg(j, "g", cmd, "--g", &a.g);
  cfg(j, "mean", cmd, "--mean", &a.mean);
  cfg(j, "band_a", cmd, "--band-A", &a.band_a);
  cfg(j, "exact", cmd, "--exact", &a.exact);
  cfg(j, "seed", cmd, "--seed", &a.seed);
  cfg(j, "threads", cmd, "--threads", &a.threads);

  if (a.input.empty()) throw InvalidConfig("--input is required");
  if (a.h_grid.empty()) throw InvalidConfig("--h-grid must be non-empty");
  if (a.k_grid.empty()) throw InvalidConfig("--k-grid must be non-empty");

  FitOptions base;
  base.h_mu = a.h_mu;
  const SigmaFlag sf = parse_sigma_flag(a.sigma);
  base.sigma = sf.mode;
  base.sigma_known = sf.value;
  base.density = parse_g_flag(a.g);
  base.mean = parse_mean_flag(a.mean);
  base.band_constant = a.band_a;

  const std::vector<ObservedCurve> data = io::read_long_csv(a.input);
  ensure_dir(a.output_dir);
  const std::string cache_dir = a.output_dir + "/cache";
  ensure_dir(cache_dir);

  const SelectionResult sel = select_model(data, a.k_grid, a.h_grid, base,
                                           a.exact, a.threads, cache_dir);

  io::write_cv_table(a.output_dir + "/cv_table.csv", sel);
  json selected;
  selected["K"] = sel.best_k;
  selected["h"] = sel.best_h;
  selected["criterion"] = a.exact ? "exact" : "approx";
  for (const SelectionRow& row : sel.rows) {
    if (row.selected) {
      selected["score"] =
          a.exact && row.exact_score ? *row.exact_score : row.approx_score;
    }
  }
  write_json_file(a.output_dir + "/selected.json", selected);

  json config;
  config["input"] = a.input;
  config["h_grid"] = a.h_grid;
  config["k_grid"] = a.k_grid;
  config["h_mu"] = a.h_mu;
  config["sigma"] = a.sigma;
  config["g"] = a.g;
  config["mean"] = a.mean;
  config["band_a"] = a.band_a;
  config["exact"] = a.exact;
  config["deterministic"] = a.deterministic;
  std::vector<std::string> warnings;
  for (const SelectionRow& row : sel.rows) {
    if (row.failed) {
      warnings.push_back("candidate K=" + std::to_string(row.K) + " h=" +
                         io::fmt17(row.h) + " failed: " + row.error);
    }
  }
  io::write_manifest(a.output_dir + "/manifest.json", "select",
                     config.dump(), a.seed, {"cv_table.csv", "selected.json"},
                     warnings);
  std::cout << "select: best K=" << sel.best_k << " h=" << io::fmt17(sel.best_h)
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// bias-demo
// ---------------------------------------------------------------------------

struct BiasDemoArgs {
  std::string config_path;
  std::string output_dir = ".";
  int n = 2000;
  int m = 5;
  double h = 0.1;
  int seeds = 50;
  double sigma2 = 0.25;
  std::string sigma = "";  ///< default: known at the simulation truth
  std::uint64_t seed = 1;
  int threads = 1;
  bool deterministic = false;
};

int run_bias_demo(const BiasDemoArgs& args, const CLI::App* cmd) {
  BiasDemoArgs a = args;
  const json j = load_config_file(a.config_path);
  cfg(j, "n", cmd, "--n", &a.n);
  cfg(j, "m", cmd, "--m", &a.m);
  cfg(j, "h", cmd, "--h", &a.h);
  cfg(j, "seeds", cmd, "--seeds", &a.seeds);
  cfg(j, "sigma2", cmd, "--sigma2", &a.sigma2);
  cfg(j, "sigma", cmd, "--sigma", &a.sigma);
  cfg(j, "seed", cmd, "--seed", &a.seed);
  cfg(j, "threads", cmd, "--threads", &a.threads);
  if (a.n < 2 || a.m < 2 || a.seeds < 1) {
    throw InvalidConfig("bias-demo: need n >= 2, m >= 2, seeds >= 1");
  }
  if (a.sigma.empty()) a.sigma = "known:" + io::fmt17(a.sigma2);

  FitOptions opts;
  opts.h = a.h;
  opts.K = 1;
  const SigmaFlag sf = parse_sigma_flag(a.sigma);
  opts.sigma = sf.mode;
  opts.sigma_known = sf.value;
  opts.mean = MeanMode::kZero;
  opts.density = DensityMode::kUniform;

  // The simulated process is flat: one component with psi_1 = 1, so the
  // true covariance surface is identically lambda_1 = 1.
  SimulationConfig sc;
  sc.m_min = a.m;
  sc.m_max = a.m;
  sc.n = a.n;
  sc.lambdas = {1.0};
  sc.sigma2 = a.sigma2;
  sc.design = DesignKind::kUniform;

  const SmoothGrid grid = SmoothGrid::build(a.h, DensityModel::uniform());
  const int first = grid.unit_first;
  const int last = grid.unit_last;
  const int width = last - first + 1;

  std::vector<std::vector<double>> naive_slot(a.seeds);
  std::vector<std::vector<double>> modified_slot(a.seeds);
  parallel_for(a.seeds, a.threads, [&](int s) {
    SimulationConfig cfg_s = sc;
    cfg_s.seed = a.seed + static_cast<std::uint64_t>(s);
    const SimulatedData sim = simulate_dataset(cfg_s);

    std::vector<PresmoothedCurve> pre(sim.curves.size());
    for (std::size_t i = 0; i < sim.curves.size(); ++i) {
      pre[i] = presmooth_curve(sim.curves[i], grid);
    }
    const CovarianceSurface naive = naive_covariance(pre, grid);
    const FitResult fit = fit_pipeline(sim.curves, opts);

    naive_slot[s].resize(width);
    modified_slot[s].resize(width);
    for (int l = 0; l < width; ++l) {
      naive_slot[s][l] = naive.at(first + l, first + l);
      modified_slot[s][l] = fit.merged.at(first + l, first + l);
    }
  });

  std::vector<double> naive_mean(width, 0.0);
  std::vector<double> modified_mean(width, 0.0);
  for (int s = 0; s < a.seeds; ++s) {
    for (int l = 0; l < width; ++l) {
      naive_mean[l] += naive_slot[s][l];
      modified_mean[l] += modified_slot[s][l];
    }
  }
  for (int l = 0; l < width; ++l) {
    naive_mean[l] /= a.seeds;
    modified_mean[l] /= a.seeds;
  }

  ensure_dir(a.output_dir);
  const std::string csv_path = a.output_dir + "/bias_demo.csv";
  {
    std::ofstream out(csv_path);
    if (!out) throw IoError("cannot open '" + csv_path + "' for writing");
    out << "t,naive_diag_mean,predicted_inflation,modified_diag_mean,truth\n";
    const double truth = 1.0;
    const double inflation =
        kern::kQuarticSquareIntegral * (truth + a.sigma2) / (a.m * a.h);
    for (int l = 0; l < width; ++l) {
      out << io::fmt17(grid.points[first + l]) << ',' << io::fmt17(naive_mean[l])
          << ',' << io::fmt17(inflation) << ',' << io::fmt17(modified_mean[l])
          << ',' << io::fmt17(truth) << '\n';
    }
    if (!out) throw IoError("failed writing '" + csv_path + "'");
  }

  json config;
  config["n"] = a.n;
  config["m"] = a.m;
  config["h"] = a.h;
  config["seeds"] = a.seeds;
  config["sigma2"] = a.sigma2;
  config["sigma"] = a.sigma;
  config["deterministic"] = a.deterministic;
  io::write_manifest(a.output_dir + "/manifest.json", "bias-demo",
                     config.dump(), a.seed, {"bias_demo.csv"});
  std::cout << "bias-demo: wrote " << csv_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// rate-study
// ---------------------------------------------------------------------------

struct RateStudyArgs {
  std::string config_path;
  std::string output_dir = ".";
  std::vector<int> n_list = {100, 200, 400, 800};
  int reps = 30;
  int m_min = 4;
  int m_max = 8;
  std::string corr = "independent";
  std::vector<double> lambdas = {1.0, 0.4};
  double sigma2 = 0.25;
  int k = 2;
  double c0 = 0.3;
  std::string sigma = "estimate";
  std::string g = "uniform";
  std::uint64_t seed = 1;
  int threads = 1;
  bool deterministic = false;
};

int run_rate_study(const RateStudyArgs& args, const CLI::App* cmd) {
  RateStudyArgs a = args;
  const json j = load_config_file(a.config_path);
  cfg(j, "n_list", cmd, "--n-list", &a.n_list);
  cfg(j, "reps", cmd, "--reps", &a.reps);
  cfg(j, "m_min", cmd, "--m-min", &a.m_min);
  cfg(j, "m_max", cmd, "--m-max", &a.m_max);
  cfg(j, "corr", cmd, "--corr", &a.corr);
  cfg(j, "lambdas", cmd, "--lambdas", &a.lambdas);
  cfg(j, "sigma2", cmd, "--sigma2", &a.sigma2);
  cfg(j, "k", cmd, "--k", &a.k);
  cfg(j, "c0", cmd, "--c0", &a.c0);
  cfg(j, "sigma", cmd, "--sigma", &a.sigma);
  cfg(j, "g", cmd, "--g", &a.g);
  cfg(j, "seed", cmd, "--seed", &a.seed);
  cfg(j, "threads", cmd, "--threads", &a.threads);
  if (a.n_list.empty()) throw InvalidConfig("--n-list must be non-empty");
  if (a.reps < 2) throw InvalidConfig("--reps must be >= 2");

  const CorrFlag corr = parse_corr_flag(a.corr);
  const SigmaFlag sf = parse_sigma_flag(a.sigma);

  json points = json::array();
  std::vector<std::string> warnings;
  std::ofstream csv;
  ensure_dir(a.output_dir);
  const std::string csv_path = a.output_dir + "/rate_study.csv";
  csv.open(csv_path);
  if (!csv) throw IoError("cannot open '" + csv_path + "' for writing");
  csv << "n,mean_loss,sd_loss\n";

  std::vector<double> log_nm, log_loss;
  for (std::size_t idx = 0; idx < a.n_list.size(); ++idx) {
    const int n = a.n_list[idx];
    const double h = std::clamp(
        a.c0 * std::pow(static_cast<double>(n) * a.m_min, -0.2), 0.02, 0.25);

    FitOptions opts;
    opts.h = h;
    opts.K = a.k;
    opts.sigma = sf.mode;
    opts.sigma_known = sf.value;
    opts.mean = MeanMode::kZero;
    opts.density = parse_g_flag(a.g);

    SimulationConfig sc;
    sc.n = n;
    sc.m_min = a.m_min;
    sc.m_max = a.m_max;
    sc.lambdas = a.lambdas;
    sc.sigma2 = a.sigma2;
    sc.design = opts.density == DensityMode::kTruncatedLinear
                    ? DesignKind::kTruncatedLinear
                    : DesignKind::kUniform;
    sc.correlation = corr.kind;
    sc.rho = corr.rho;

    std::vector<double> loss(a.reps, -1.0);
    std::vector<std::string> rep_error(a.reps);
    parallel_for(a.reps, a.threads, [&](int r) {
      SimulationConfig cfg_r = sc;
      cfg_r.seed = a.seed + 7919ULL * idx + static_cast<std::uint64_t>(r);
      const SimulatedData sim = simulate_dataset(cfg_r);
      try {
        const FitResult fit = fit_pipeline(sim.curves, opts);
        std::vector<double> psi_ref(fit.grid.size, 0.0);
        for (int l = 0; l < fit.grid.size; ++l) {
          psi_ref[l] = sim.truth.psi(0, fit.grid.points[l]);
        }
        loss[r] = modified_l2_loss(fit.eig.functions[0], psi_ref, fit.grid);
      } catch (const NumericError& e) {
        rep_error[r] = e.what();
      }
    });

    double mean = 0.0;
    int ok = 0;
    for (int r = 0; r < a.reps; ++r) {
      if (loss[r] >= 0.0) {
        mean += loss[r];
        ++ok;
      } else {
        warnings.push_back("n=" + std::to_string(n) + " rep " +
                           std::to_string(r) + " failed: " + rep_error[r]);
      }
    }
    if (ok < 2) {
      throw NumericError("rate-study: fewer than 2 successful replicates at n=" +
                         std::to_string(n));
    }
    mean /= ok;
    double var = 0.0;
    for (int r = 0; r < a.reps; ++r) {
      if (loss[r] >= 0.0) var += (loss[r] - mean) * (loss[r] - mean);
    }
    const double sd = std::sqrt(var / (ok - 1));

    csv << n << ',' << io::fmt17(mean) << ',' << io::fmt17(sd) << '\n';
    log_nm.push_back(std::log(static_cast<double>(n) * a.m_min));
    log_loss.push_back(std::log(std::max(mean, 1e-300)));
    json pt;
    pt["n"] = n;
    pt["m_low"] = a.m_min;
    pt["h"] = h;
    pt["mean_loss"] = mean;
    pt["sd_loss"] = sd;
    pt["failed_reps"] = a.reps - ok;
    points.push_back(pt);
  }
  if (!csv) throw IoError("failed writing '" + csv_path + "'");
  csv.close();

  // Least-squares slope of log-loss against log(n * m_low).
  const std::size_t p = log_nm.size();
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < p; ++i) {
    sx += log_nm[i];
    sy += log_loss[i];
    sxx += log_nm[i] * log_nm[i];
    sxy += log_nm[i] * log_loss[i];
  }
  double slope = 0.0;
  double intercept = sy / p;
  const double denom = p * sxx - sx * sx;
  if (p >= 2 && std::fabs(denom) > 1e-12) {
    slope = (p * sxy - sx * sy) / denom;
    intercept = (sy - slope * sx) / p;
  }

  json slopes;
  slopes["slope"] = slope;
  slopes["intercept"] = intercept;
  slopes["correlation"] = corr.text;
  slopes["points"] = points;
  write_json_file(a.output_dir + "/slopes.json", slopes);

  json config;
  config["n_list"] = a.n_list;
  config["reps"] = a.reps;
  config["m_min"] = a.m_min;
  config["m_max"] = a.m_max;
  config["corr"] = a.corr;
  config["lambdas"] = a.lambdas;
  config["sigma2"] = a.sigma2;
  config["k"] = a.k;
  config["c0"] = a.c0;
  config["sigma"] = a.sigma;
  config["g"] = a.g;
  config["deterministic"] = a.deterministic;
  io::write_manifest(a.output_dir + "/manifest.json", "rate-study",
                     config.dump(), a.seed, {"rate_study.csv", "slopes.json"},
                     warnings);
  std::cout << "rate-study: slope " << io::fmt17(slope) << " (" << corr.text
            << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Covariance-kernel and functional-principal-component estimation "
      "for sparse, irregular, noisy functional data"};
  app.require_subcommand(1);
  // --h is a real option (the bandwidth), so help stays long-form only.
  app.set_help_flag("--help", "Print help and exit");

  SimulateArgs sim;
  CLI::App* sim_cmd =
      app.add_subcommand("simulate", "Generate a synthetic dataset");
  sim_cmd->set_help_flag("--help", "Print help and exit");
  sim_cmd->add_option("--config", sim.config_path,
                      "JSON config mirroring the flags");
  sim_cmd->add_option("--output-dir", sim.output_dir, "Output directory");
  sim_cmd->add_option("--n", sim.n, "Number of curves");
  sim_cmd->add_option("--m-min", sim.m_min, "Minimum observations per curve");
  sim_cmd->add_option("--m-max", sim.m_max, "Maximum observations per curve");
  sim_cmd->add_option("--lambdas", sim.lambdas,
                      "Component variances (comma separated)")
      ->delimiter(',');
  sim_cmd->add_option("--sigma2", sim.sigma2, "Noise variance");
  sim_cmd->add_option("--design", sim.design, "Design density: uniform|linear");
  sim_cmd->add_option("--corr", sim.corr,
                      "Score correlation: independent|ar1:RHO|equi:RHO");
  sim_cmd->add_flag("--heavy-tail", sim.heavy_tail,
                    "Scaled t(5) noise instead of Gaussian");
  sim_cmd->add_option("--seed", sim.seed, "RNG seed");

  FitArgs fit;
  CLI::App* fit_cmd = app.add_subcommand(
      "fit", "Estimate the covariance surface and principal components");
  fit_cmd->set_help_flag("--help", "Print help and exit");
  fit_cmd->add_option("--config", fit.config_path,
                      "JSON config mirroring the flags");
  fit_cmd->add_option("--input", fit.input, "Long-format CSV (curve_id,t,y)");
  fit_cmd->add_option("--output-dir", fit.output_dir, "Output directory");
  fit_cmd->add_option("--h", fit.h, "Smoothing bandwidth");
  fit_cmd->add_option("--k", fit.k, "Number of components");
  fit_cmd->add_option("--h-mu", fit.h_mu,
                      "Mean-smoothing bandwidth (default: --h)");
  fit_cmd->add_option("--sigma", fit.sigma,
                      "Noise variance: known:VALUE|estimate");
  fit_cmd->add_option("--g", fit.g,
                      "Design density: uniform|linear|estimate");
  fit_cmd->add_option("--mean", fit.mean, "Mean handling: zero|estimate");
  fit_cmd->add_option("--band-A", fit.band_a, "Diagonal band constant (>= 12)");
  fit_cmd->add_option("--seed", fit.seed, "Seed recorded in the manifest");
  fit_cmd->add_option("--threads", fit.threads, "Worker threads");
  fit_cmd->add_flag("--deterministic", fit.deterministic,
                    "Byte-reproducible outputs (always on; recorded)");

  SelectArgs sel;
  CLI::App* sel_cmd = app.add_subcommand(
      "select", "Cross-validated choice of bandwidth and component count");
  sel_cmd->set_help_flag("--help", "Print help and exit");
  sel_cmd->add_option("--config", sel.config_path,
                      "JSON config mirroring the flags");
  sel_cmd->add_option("--input", sel.input, "Long-format CSV (curve_id,t,y)");
  sel_cmd->add_option("--output-dir", sel.output_dir, "Output directory");
  sel_cmd->add_option("--h-grid", sel.h_grid,
                      "Candidate bandwidths (comma separated)")
      ->delimiter(',');
  sel_cmd->add_option("--k-grid", sel.k_grid,
                      "Candidate component counts (comma separated)")
      ->delimiter(',');
  sel_cmd->add_option("--h-mu", sel.h_mu,
                      "Mean-smoothing bandwidth (default: per-candidate h)");
  sel_cmd->add_option("--sigma", sel.sigma,
                      "Noise variance: known:VALUE|estimate");
  sel_cmd->add_option("--g", sel.g, "Design density: uniform|linear|estimate");
  sel_cmd->add_option("--mean", sel.mean, "Mean handling: zero|estimate");
  sel_cmd->add_option("--band-A", sel.band_a, "Diagonal band constant (>= 12)");
  sel_cmd->add_flag("--exact", sel.exact,
                    "Also compute the exact leave-one-curve-out score");
  sel_cmd->add_option("--seed", sel.seed, "Seed recorded in the manifest");
  sel_cmd->add_option("--threads", sel.threads, "Worker threads");
  sel_cmd->add_flag("--deterministic", sel.deterministic,
                    "Byte-reproducible outputs (always on; recorded)");

  BiasDemoArgs bias;
  CLI::App* bias_cmd = app.add_subcommand(
      "bias-demo",
      "Monte-Carlo demonstration of the diagonal inflation of the naive "
      "estimator and its removal");
  bias_cmd->set_help_flag("--help", "Print help and exit");
  bias_cmd->add_option("--config", bias.config_path,
                       "JSON config mirroring the flags");
  bias_cmd->add_option("--output-dir", bias.output_dir, "Output directory");
  bias_cmd->add_option("--n", bias.n, "Curves per replicate");
  bias_cmd->add_option("--m", bias.m, "Observations per curve (fixed)");
  bias_cmd->add_option("--h", bias.h, "Smoothing bandwidth");
  bias_cmd->add_option("--seeds", bias.seeds, "Number of replicates");
  bias_cmd->add_option("--sigma2", bias.sigma2, "True noise variance");
  bias_cmd->add_option("--sigma", bias.sigma,
                       "Noise handling: known:VALUE|estimate "
                       "(default known at the true value)");
  bias_cmd->add_option("--seed", bias.seed, "Base RNG seed");
  bias_cmd->add_option("--threads", bias.threads, "Worker threads");
  bias_cmd->add_flag("--deterministic", bias.deterministic,
                     "Byte-reproducible outputs (always on; recorded)");

  RateStudyArgs rate;
  CLI::App* rate_cmd = app.add_subcommand(
      "rate-study",
      "Monte-Carlo convergence study of the eigenfunction loss in n");
  rate_cmd->set_help_flag("--help", "Print help and exit");
  rate_cmd->add_option("--config", rate.config_path,
                       "JSON config mirroring the flags");
  rate_cmd->add_option("--output-dir", rate.output_dir, "Output directory");
  rate_cmd->add_option("--n-list", rate.n_list,
                       "Sample sizes (comma separated)")
      ->delimiter(',');
  rate_cmd->add_option("--reps", rate.reps, "Replicates per sample size");
  rate_cmd->add_option("--m-min", rate.m_min, "Minimum observations per curve");
  rate_cmd->add_option("--m-max", rate.m_max, "Maximum observations per curve");
  rate_cmd->add_option("--corr", rate.corr,
                       "Score correlation: independent|ar1:RHO|equi:RHO");
  rate_cmd->add_option("--lambdas", rate.lambdas,
                       "Component variances (comma separated)")
      ->delimiter(',');
  rate_cmd->add_option("--sigma2", rate.sigma2, "Noise variance");
  rate_cmd->add_option("--k", rate.k, "Components to fit");
  rate_cmd->add_option("--c0", rate.c0,
                       "Bandwidth constant: h = c0 (n m_low)^(-1/5)");
  rate_cmd->add_option("--sigma", rate.sigma,
                       "Noise handling: known:VALUE|estimate");
  rate_cmd->add_option("--g", rate.g,
                       "Design density: uniform|linear|estimate");
  rate_cmd->add_option("--seed", rate.seed, "Base RNG seed");
  rate_cmd->add_option("--threads", rate.threads, "Worker threads");
  rate_cmd->add_flag("--deterministic", rate.deterministic,
                     "Byte-reproducible outputs (always on; recorded)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (dynamic_cast<const CLI::CallForHelp*>(&e) != nullptr ||
        dynamic_cast<const CLI::CallForAllHelp*>(&e) != nullptr ||
        dynamic_cast<const CLI::CallForVersion*>(&e) != nullptr) {
      return code;
    }
    return static_cast<int>(ExitCode::kUsage);
  }

  try {
    if (sim_cmd->parsed()) return run_simulate(sim, sim_cmd);
    if (fit_cmd->parsed()) return run_fit(fit, fit_cmd);
    if (sel_cmd->parsed()) return run_select(sel, sel_cmd);
    if (bias_cmd->parsed()) return run_bias_demo(bias, bias_cmd);
    if (rate_cmd->parsed()) return run_rate_study(rate, rate_cmd);
    std::cerr << "error: no command given\n";
    return static_cast<int>(ExitCode::kUsage);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.exit_code());
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kUsage);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kNumeric);
  }
}
