#include "fpcov/simulate.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <string>

#include "fpcov/errors.hpp"
#include "fpcov/rng.hpp"

namespace fpcov {

namespace {

constexpr double kPi = 3.14159265358979323846264338328;

// Substream tags; arbitrary distinct constants.
constexpr std::uint64_t kTagComponent = 0x11000000ull;
constexpr std::uint64_t kTagCurve = 0x22000000ull;

/// Cache of dense symmetric square roots keyed by (kind, rho, n); the
/// explicit-matrix path is not cached (configs own their matrix).
std::mutex g_sqrt_mutex;
std::map<std::string, Eigen::MatrixXd>& sqrt_cache() {
  static std::map<std::string, Eigen::MatrixXd> cache;
  return cache;
}

Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& r) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(r);
  if (solver.info() != Eigen::Success) {
    throw NumericError("correlation matrix eigendecomposition failed");
  }
  const Eigen::VectorXd& ev = solver.eigenvalues();
  const double lmax = std::max(ev.maxCoeff(), 1.0);
  if (ev.minCoeff() < -1e-6 * lmax) {
    throw InvalidConfig("correlation matrix is not positive semidefinite");
  }
  Eigen::VectorXd clipped = ev.cwiseMax(0.0).cwiseSqrt();
  return solver.eigenvectors() * clipped.asDiagonal() *
         solver.eigenvectors().transpose();
}

Eigen::MatrixXd build_r(const SimulationConfig& cfg) {
  const int n = cfg.n;
  Eigen::MatrixXd r(n, n);
  switch (cfg.correlation) {
    case CorrelationKind::kIndependent:
      r.setIdentity();
      break;
    case CorrelationKind::kAr1:
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          r(i, j) = std::pow(cfg.rho, std::abs(i - j));
        }
      }
      break;
    case CorrelationKind::kEquicorrelated:
      r.setConstant(cfg.rho);
      r.diagonal().setOnes();
      break;
    case CorrelationKind::kExplicit:
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          r(i, j) = cfg.corr_matrix[static_cast<std::size_t>(i) * n + j];
        }
      }
      break;
  }
  return r;
}

/// Apply R^{1/2} to a vector, using closed forms where available.
std::vector<double> apply_sqrt_r(const SimulationConfig& cfg,
                                 const std::vector<double>& z) {
  const int n = cfg.n;
  switch (cfg.correlation) {
    case CorrelationKind::kIndependent:
      return z;
    case CorrelationKind::kEquicorrelated: {
      // R = (1-rho) I + rho 1 1^T has square root a I + b 1 1^T with
      // a = sqrt(1-rho), b = (sqrt(1-rho+n rho) - sqrt(1-rho))/n.
      const double a = std::sqrt(1.0 - cfg.rho);
      const double b =
          (std::sqrt(1.0 - cfg.rho + n * cfg.rho) - std::sqrt(1.0 - cfg.rho)) /
          n;
      double total = 0.0;
      for (double v : z) total += v;
      std::vector<double> out(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) out[i] = a * z[i] + b * total;
      return out;
    }
    case CorrelationKind::kAr1:
    case CorrelationKind::kExplicit: {
      Eigen::MatrixXd s;
      if (cfg.correlation == CorrelationKind::kAr1) {
        const std::string key =
            "ar1:" + std::to_string(cfg.rho) + ":" + std::to_string(n);
        std::lock_guard<std::mutex> lock(g_sqrt_mutex);
        auto& cache = sqrt_cache();
        auto it = cache.find(key);
        if (it == cache.end()) {
          it = cache.emplace(key, symmetric_sqrt(build_r(cfg))).first;
        }
        s = it->second;
      } else {
        s = symmetric_sqrt(build_r(cfg));
      }
      std::vector<double> out(z.size(), 0.0);
      for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += s(i, j) * z[j];
        out[i] = acc;
      }
      return out;
    }
  }
  return z;
}

double design_inverse_cdf(DesignKind kind, double u) {
  switch (kind) {
    case DesignKind::kUniform:
      return u;
    case DesignKind::kTruncatedLinear:
      // g(t) = 0.5 + t, F(t) = (t + t^2)/2 * ... = 0.5 t + 0.5 t^2;
      // F^{-1}(u) solves t^2 + t - 2u = 0.
      return 0.5 * (-1.0 + std::sqrt(1.0 + 8.0 * u));
  }
  return u;
}

/// Unit-variance noise draw: standard normal, or t_5 scaled by sqrt(3/5).
double noise_draw(rng::GaussianStream& gs, bool heavy_tail) {
  const double z = gs.next();
  if (!heavy_tail) return z;
  double chi2 = 0.0;
  for (int k = 0; k < 5; ++k) {
    const double w = gs.next();
    chi2 += w * w;
  }
  const double t5 = z / std::sqrt(chi2 / 5.0);
  return t5 * std::sqrt(3.0 / 5.0);
}

}  // namespace

void SimulationConfig::validate() const {
  if (n < 1) throw InvalidConfig("simulate: n must be >= 1");
  if (m_min < 1 || m_max < m_min) {
    throw InvalidConfig("simulate: need 1 <= m_min <= m_max");
  }
  if (lambdas.empty()) throw InvalidConfig("simulate: no component variances");
  for (std::size_t k = 0; k < lambdas.size(); ++k) {
    if (!(lambdas[k] > 0.0)) {
      throw InvalidConfig("simulate: component variances must be positive");
    }
    if (k > 0 && lambdas[k] > lambdas[k - 1] + 1e-15) {
      throw InvalidConfig("simulate: component variances must be non-increasing");
    }
  }
  if (sigma2 < 0.0) throw InvalidConfig("simulate: sigma2 must be >= 0");
  switch (correlation) {
    case CorrelationKind::kIndependent:
      break;
    case CorrelationKind::kAr1:
      if (std::fabs(rho) >= 1.0) {
        throw InvalidConfig("simulate: AR(1) parameter must satisfy |rho| < 1");
      }
      break;
    case CorrelationKind::kEquicorrelated:
      if (rho >= 1.0 || (n > 1 && rho <= -1.0 / (n - 1.0))) {
        throw InvalidConfig("simulate: equicorrelation parameter out of range");
      }
      break;
    case CorrelationKind::kExplicit: {
      if (corr_matrix.size() != static_cast<std::size_t>(n) * n) {
        throw InvalidConfig("simulate: correlation matrix size must be n*n");
      }
      for (int i = 0; i < n; ++i) {
        if (std::fabs(corr_matrix[static_cast<std::size_t>(i) * n + i] - 1.0) >
            1e-8) {
          throw InvalidConfig("simulate: correlation matrix diagonal must be 1");
        }
        for (int j = 0; j < i; ++j) {
          const double a = corr_matrix[static_cast<std::size_t>(i) * n + j];
          const double b = corr_matrix[static_cast<std::size_t>(j) * n + i];
          if (std::fabs(a - b) > 1e-10) {
            throw InvalidConfig("simulate: correlation matrix must be symmetric");
          }
        }
      }
      break;
    }
  }
  for (double t : fixed_times) {
    if (!(t >= 0.0 && t <= 1.0)) {
      throw InvalidConfig("simulate: fixed design times must lie in [0,1]");
    }
  }
}

double SyntheticTruth::psi(int k, double t) const {
  if (k == 0) return 1.0;
  return std::sqrt(2.0) * std::cos(k * kPi * t);
}

double SyntheticTruth::covariance(double s, double t) const {
  double acc = 0.0;
  for (std::size_t k = 0; k < lambdas.size(); ++k) {
    acc += lambdas[k] * psi(static_cast<int>(k), s) * psi(static_cast<int>(k), t);
  }
  return acc;
}

double SyntheticTruth::design_cdf(double t, DesignKind kind) const {
  const double u = std::clamp(t, 0.0, 1.0);
  switch (kind) {
    case DesignKind::kUniform:
      return u;
    case DesignKind::kTruncatedLinear:
      return 0.5 * (u + u * u);
  }
  return u;
}

SimulatedData simulate_dataset(const SimulationConfig& cfg) {
  cfg.validate();
  const int n = cfg.n;
  const int rank = static_cast<int>(cfg.lambdas.size());

  // Component scores first: one substream per component, correlated across
  // subjects by R^{1/2}.  scores[k][i] = xi_{i,k}.
  std::vector<std::vector<double>> scores(rank);
  for (int k = 0; k < rank; ++k) {
    rng::GaussianStream gs(rng::substream(cfg.seed, kTagComponent + k));
    std::vector<double> z(n);
    for (int i = 0; i < n; ++i) z[i] = gs.next();
    scores[k] = apply_sqrt_r(cfg, z);
  }

  SimulatedData out;
  out.truth.lambdas = cfg.lambdas;
  out.truth.sigma2 = cfg.sigma2;
  out.truth.correlation = cfg.correlation;
  out.truth.rho = cfg.rho;

  const double sigma = std::sqrt(cfg.sigma2);
  out.curves.resize(n);
  for (int i = 0; i < n; ++i) {
    ObservedCurve& c = out.curves[i];
    c.id = std::to_string(i);
    rng::GaussianStream gs(rng::substream(cfg.seed, kTagCurve + i));
    int m;
    if (!cfg.fixed_times.empty()) {
      m = static_cast<int>(cfg.fixed_times.size());
      c.times = cfg.fixed_times;
    } else {
      // Draw order per curve: m, then T_1..T_m, then eps_1..eps_m.
      const double um = gs.sm.uniform();
      const int span = cfg.m_max - cfg.m_min + 1;
      m = cfg.m_min + std::min(span - 1, static_cast<int>(um * span));
      c.times.resize(m);
      for (int j = 0; j < m; ++j) {
        c.times[j] = design_inverse_cdf(cfg.design, gs.sm.uniform());
      }
    }
    c.values.resize(m);
    for (int j = 0; j < m; ++j) {
      double x = 0.0;
      for (int k = 0; k < rank; ++k) {
        x += std::sqrt(cfg.lambdas[k]) * scores[k][i] *
             out.truth.psi(k, c.times[j]);
      }
      c.values[j] = x;
    }
    if (sigma > 0.0 || cfg.heavy_tail_noise) {
      for (int j = 0; j < m; ++j) {
        c.values[j] += sigma * noise_draw(gs, cfg.heavy_tail_noise);
      }
    }
  }
  return out;
}

double wick_fourth_moment(const std::array<std::array<double, 4>, 4>& cov) {
  return cov[0][1] * cov[2][3] + cov[0][2] * cov[1][3] +
         cov[0][3] * cov[1][2];
}

double correlation_entry(const SimulationConfig& cfg, int i, int j) {
  if (i == j) return 1.0;
  switch (cfg.correlation) {
    case CorrelationKind::kIndependent:
      return 0.0;
    case CorrelationKind::kAr1:
      return std::pow(cfg.rho, std::abs(i - j));
    case CorrelationKind::kEquicorrelated:
      return cfg.rho;
    case CorrelationKind::kExplicit:
      return cfg.corr_matrix[static_cast<std::size_t>(i) * cfg.n + j];
  }
  return 0.0;
}

CorrelationDiagnostic correlation_diagnostic(const SimulationConfig& cfg) {
  cfg.validate();
  CorrelationDiagnostic d;
  const int n = cfg.n;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double r = correlation_entry(cfg, i, j);
      acc += r * r;
    }
  }
  d.mean_sq_offdiag = acc / (static_cast<double>(n) * n);

  switch (cfg.correlation) {
    case CorrelationKind::kIndependent:
      d.spectral_norm = 1.0;
      break;
    case CorrelationKind::kEquicorrelated:
      d.spectral_norm =
          std::max(1.0 + (n - 1.0) * cfg.rho, std::fabs(1.0 - cfg.rho));
      break;
    default: {
      Eigen::MatrixXd r = build_r(cfg);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(r);
      d.spectral_norm = std::max(std::fabs(solver.eigenvalues().maxCoeff()),
                                 std::fabs(solver.eigenvalues().minCoeff()));
      break;
    }
  }
  return d;
}

}  // namespace fpcov
