#include "mcld/rate.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

namespace mcld {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using MatrixLD = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
using VectorLD = Eigen::Matrix<long double, Eigen::Dynamic, 1>;

// Principal eigen-data of diag(e^{G}) P computed on a max-shifted matrix so
// that arbitrarily strong tilts stay in range.  Gauge: mu has mass one and
// mu(f) = 1, so pi = mu .* f is the twisted invariant probability measure.
struct SpectralData {
  double log_lambda = 0.0;
  Vector f;
  Vector mu;
  Vector pi;
};

SpectralData tilted_spectral_data(const TransitionKernel& P, const Vector& G,
                                  const Measure& pi_base) {
  const Eigen::Index n = P.size();
  const double shift = G.maxCoeff();
  Matrix B = P.rows;
  for (Eigen::Index x = 0; x < n; ++x) B.row(x) *= std::exp(G(x) - shift);

  double lambda;
  if (n == 1) {
    lambda = B(0, 0);
  } else {
    Eigen::EigenSolver<Matrix> solver(B, false);
    if (solver.info() != Eigen::Success) {
      throw std::runtime_error("eigendecomposition failed");
    }
    const VectorC eigs = solver.eigenvalues();
    const double rho = eigs.cwiseAbs().maxCoeff();
    lambda = -1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::abs(eigs(i)) >= rho * (1.0 - 1e-10) &&
          std::abs(eigs(i).imag()) <= 1e-8 * rho && eigs(i).real() > 0.0) {
        lambda = eigs(i).real();
      }
    }
    if (lambda <= 0.0) {
      throw std::runtime_error("no positive principal eigenvalue; "
                               "is the chain irreducible?");
    }
  }

  SpectralData sd;
  sd.f = Vector::Ones(n);
  sd.mu = pi_base.weights;
  for (int round = 0; round < 3; ++round) {
    const Matrix H = lambda * Matrix::Identity(n, n) - B +
                     Vector::Ones(n) * pi_base.weights.transpose();
    sd.f = H.partialPivLu().solve(Vector::Ones(n));
    sd.mu = H.transpose().partialPivLu().solve(pi_base.weights);
    if (sd.f.sum() < 0.0) sd.f = -sd.f;
    if (sd.mu.sum() < 0.0) sd.mu = -sd.mu;
    const double denom = sd.mu.dot(sd.f);
    if (std::abs(denom) < 1e-300) {
      throw std::runtime_error("tilted eigen solve degenerated");
    }
    const double refined = sd.mu.dot(B * sd.f) / denom;
    const bool done = std::abs(refined - lambda) <= 1e-15 * lambda;
    lambda = refined;
    if (done) break;
  }
  if ((sd.f.array() <= 0.0).any() || (sd.mu.array() <= 0.0).any()) {
    throw std::runtime_error("tilted eigenvector lost positivity");
  }
  sd.mu /= sd.mu.sum();
  sd.f /= sd.mu.dot(sd.f);
  sd.pi = sd.mu.cwiseProduct(sd.f);
  sd.pi /= sd.pi.sum();
  sd.log_lambda = shift + std::log(lambda);
  return sd;
}

// Twisted kernel rows built from the shifted eigen-data:
// q(x,y) = e^{G(x)} P(x,y) f(y) / (lambda f(x)).
TransitionKernel twisted_rows(const TransitionKernel& P, const Vector& G,
                              const SpectralData& sd) {
  const Eigen::Index n = P.size();
  Matrix rows(n, n);
  for (Eigen::Index x = 0; x < n; ++x) {
    const double scale = std::exp(G(x) - sd.log_lambda) / sd.f(x);
    rows.row(x) = scale * P.rows.row(x).cwiseProduct(sd.f.transpose());
  }
  return TransitionKernel(std::move(rows), P.states, /*renormalize=*/true);
}

// Perron root of the tilt in long double by two-sided inverse iteration;
// used for the finite-difference cross-checks, where double rounding in
// Lambda would swamp a second difference at step 1e-5.
long double lambda_of_precise(const TransitionKernel& P, const Functional& F,
                              double a) {
  const Eigen::Index n = P.size();
  const Vector G = a * F.values;
  const double shift = G.maxCoeff();
  MatrixLD B(n, n);
  for (Eigen::Index x = 0; x < n; ++x) {
    const long double s =
        std::exp(static_cast<long double>(G(x)) - shift);
    for (Eigen::Index y = 0; y < n; ++y) {
      B(x, y) = s * static_cast<long double>(P.rows(x, y));
    }
  }
  Matrix Bd = B.cast<double>();
  const double rho0 = perron_root(Bd);
  if (n == 1) return static_cast<long double>(shift) + std::log(B(0, 0));

  MatrixLD C = B - rho0 * MatrixLD::Identity(n, n);
  Eigen::PartialPivLU<MatrixLD> lu(C);
  Eigen::PartialPivLU<MatrixLD> luT(C.transpose());
  VectorLD u = VectorLD::Ones(n);
  VectorLD w = VectorLD::Ones(n);
  long double rho = rho0;
  for (int k = 0; k < 4; ++k) {
    u = lu.solve(u);
    w = luT.solve(w);
    u /= u.cwiseAbs().maxCoeff();
    w /= w.cwiseAbs().maxCoeff();
    if (u.sum() < 0.0L) u = -u;
    if (w.sum() < 0.0L) w = -w;
    const long double denom = w.dot(u);
    if (std::abs(denom) < 1e-300L) break;
    rho = w.dot(B * u) / denom;
  }
  return static_cast<long double>(shift) + std::log(rho);
}

void require_irreducible_aperiodic(const TransitionKernel& P) {
  const StructureReport report = structure_check(P);
  if (!report.irreducible) {
    throw ReducibleChainError("operation requires an irreducible chain");
  }
  if (!report.aperiodic) {
    throw PeriodicChainError("operation requires an aperiodic chain");
  }
}

std::pair<double, double> derivatives_unchecked(const TransitionKernel& P,
                                                const Functional& F, double a,
                                                const Measure& pi_base,
                                                SpectralData* sd_out) {
  const SpectralData sd = tilted_spectral_data(P, a * F.values, pi_base);
  const double d1 = sd.pi.dot(F.values);
  const TransitionKernel twisted = twisted_rows(P, a * F.values, sd);
  const double d2 = asymptotic_variance(twisted, F);
  if (sd_out) *sd_out = sd;
  return {d1, d2};
}

bool close_rel(double x, double y, double tol, double floor) {
  return std::abs(x - y) <= tol * std::max({std::abs(x), std::abs(y), floor});
}

}  // namespace

double lambda_of(const TransitionKernel& P, const Functional& F, double a) {
  if (F.size() != P.size()) {
    throw std::invalid_argument("functional size does not match kernel");
  }
  if (a == 0.0) return 0.0;
  const Eigen::Index n = P.size();
  const Vector G = a * F.values;
  const double shift = G.maxCoeff();
  Matrix B = P.rows;
  for (Eigen::Index x = 0; x < n; ++x) B.row(x) *= std::exp(G(x) - shift);
  const double rho = perron_root(B);
  if (!(rho > 0.0) || !std::isfinite(rho)) {
    throw std::runtime_error("Perron root degenerate under this tilt");
  }
  return shift + std::log(rho);
}

LambdaDerivatives lambda_derivatives(const TransitionKernel& P,
                                     const Functional& F, double a) {
  require_irreducible_aperiodic(P);
  const Measure pi_base = stationary(P);
  const auto [d1, d2] = derivatives_unchecked(P, F, a, pi_base, nullptr);

  const double h = 1e-5;
  const long double lp = lambda_of_precise(P, F, a + h);
  const long double lm = lambda_of_precise(P, F, a - h);
  const long double l0 = lambda_of_precise(P, F, a);
  const double d1_fd = static_cast<double>((lp - lm) / (2.0L * h));
  const double d2_fd = static_cast<double>((lp - 2.0L * l0 + lm) / (h * h));
  if (!close_rel(d1, d1_fd, 1e-6, 1e-2) || !close_rel(d2, d2_fd, 1e-6, 1e-2)) {
    std::ostringstream msg;
    msg << "derivative cross-check failed: analytic (" << d1 << ", " << d2
        << ") vs finite-difference (" << d1_fd << ", " << d2_fd << ")";
    throw std::runtime_error(msg.str());
  }
  return {d1, d2};
}

LambdaCurve lambda_curve(const TransitionKernel& P, const Functional& F,
                         const std::vector<double>& grid) {
  require_irreducible_aperiodic(P);
  if (!std::is_sorted(grid.begin(), grid.end())) {
    throw std::invalid_argument("grid must be increasing");
  }
  const Measure pi_base = stationary(P);
  LambdaCurve curve;
  curve.F = F;
  curve.grid = grid;
  for (double a : grid) {
    SpectralData sd;
    const auto [d1, d2] = derivatives_unchecked(P, F, a, pi_base, &sd);
    curve.values.push_back(a == 0.0 ? 0.0 : sd.log_lambda);
    curve.d1.push_back(d1);
    curve.d2.push_back(d2);
    curve.twisted_measures.push_back(Measure(sd.pi));
  }
  return curve;
}

double f_max(const TransitionKernel& P, const Functional& F) {
  const StructureReport report = structure_check(P);
  if (!report.irreducible) {
    throw ReducibleChainError("f_max requires an irreducible chain");
  }
  // Karp: max mean cycle of the graph with edge (u -> v) weighted by F(u).
  const int n = static_cast<int>(P.size());
  Matrix d = Matrix::Constant(n + 1, n, -kInf);
  d(0, 0) = 0.0;
  for (int k = 1; k <= n; ++k) {
    for (int v = 0; v < n; ++v) {
      double best = -kInf;
      for (int u = 0; u < n; ++u) {
        if (P.rows(u, v) > 0.0 && d(k - 1, u) > -kInf) {
          best = std::max(best, d(k - 1, u) + F.values(u));
        }
      }
      d(k, v) = best;
    }
  }
  double mu = -kInf;
  for (int v = 0; v < n; ++v) {
    if (d(n, v) == -kInf) continue;
    double worst = kInf;
    for (int k = 0; k < n; ++k) {
      if (d(k, v) == -kInf) continue;
      worst = std::min(worst, (d(n, v) - d(k, v)) / (n - k));
    }
    mu = std::max(mu, worst);
  }
  return mu;
}

RatePoint solve_rate_point(const TransitionKernel& P, const Functional& F,
                           double c) {
  require_irreducible_aperiodic(P);
  const Measure pi_base = stationary(P);
  const double mean = pi_base(F);

  RatePoint rp;
  rp.c = c;
  if (std::abs(c - mean) <= 1e-12) {
    rp.a = 0.0;
    rp.J = 0.0;
    rp.sigma2 = asymptotic_variance(P, F);
    rp.check_f_at = Functional(Vector::Ones(P.size()), "check_f");
    return rp;
  }
  if (c < mean) {
    throw std::invalid_argument(
        "upper-tail orientation requires c > pi(F); negate F for the lower "
        "tail");
  }
  const double fm = f_max(P, F);
  if (c >= fm - 1e-12) {
    throw std::invalid_argument(
        "superexponential regime: c >= F_max = " + std::to_string(fm));
  }

  double lo = 0.0, hi = 1.0;
  while (derivatives_unchecked(P, F, hi, pi_base, nullptr).first < c) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e6) {
      throw std::runtime_error("cannot bracket the tilt; c is numerically "
                               "indistinguishable from F_max");
    }
  }
  double a = 0.5 * (lo + hi);
  SpectralData sd;
  double d1 = 0.0, d2 = 0.0;
  for (int iter = 0; iter < 200; ++iter) {
    std::tie(d1, d2) = derivatives_unchecked(P, F, a, pi_base, &sd);
    if (std::abs(d1 - c) <= 1e-10) break;
    (d1 < c ? lo : hi) = a;
    const double newton = a + (c - d1) / d2;
    a = (newton > lo && newton < hi) ? newton : 0.5 * (lo + hi);
  }
  if (std::abs(d1 - c) > 1e-10) {
    throw std::runtime_error("rate-point solve did not converge");
  }
  rp.a = a;
  rp.J = a * c - sd.log_lambda;
  rp.sigma2 = d2;
  if (!(rp.sigma2 > 0.0)) {
    throw std::runtime_error("vanishing curvature at the rate point");
  }
  rp.check_f_at = Functional(sd.f, "check_f");
  return rp;
}

namespace {

// Dinic max-flow used for the exact invariant-kernel feasibility test.
class MaxFlow {
 public:
  explicit MaxFlow(int n) : graph_(n) {}

  void add_edge(int u, int v, double cap) {
    graph_[u].push_back({v, cap, static_cast<int>(graph_[v].size())});
    graph_[v].push_back({u, 0.0, static_cast<int>(graph_[u].size()) - 1});
  }

  double solve(int s, int t) {
    double flow = 0.0;
    while (bfs(s, t)) {
      iter_.assign(graph_.size(), 0);
      double f;
      while ((f = dfs(s, t, kInf)) > 1e-15) flow += f;
    }
    return flow;
  }

 private:
  struct Edge {
    int to;
    double cap;
    int rev;
  };

  bool bfs(int s, int t) {
    level_.assign(graph_.size(), -1);
    std::vector<int> queue{s};
    level_[s] = 0;
    for (size_t q = 0; q < queue.size(); ++q) {
      const int u = queue[q];
      for (const Edge& e : graph_[u]) {
        if (e.cap > 1e-15 && level_[e.to] < 0) {
          level_[e.to] = level_[u] + 1;
          queue.push_back(e.to);
        }
      }
    }
    return level_[t] >= 0;
  }

  double dfs(int u, int t, double pushed) {
    if (u == t) return pushed;
    for (size_t& i = iter_[u]; i < graph_[u].size(); ++i) {
      Edge& e = graph_[u][i];
      if (e.cap > 1e-15 && level_[e.to] == level_[u] + 1) {
        const double f = dfs(e.to, t, std::min(pushed, e.cap));
        if (f > 1e-15) {
          e.cap -= f;
          graph_[e.to][e.rev].cap += f;
          return f;
        }
      }
    }
    return 0.0;
  }

  std::vector<std::vector<Edge>> graph_;
  std::vector<int> level_;
  std::vector<size_t> iter_;
};

void require_probability(const Measure& nu, const TransitionKernel& P) {
  if (nu.size() != P.size()) {
    throw std::invalid_argument("measure size does not match kernel");
  }
  if (!nu.normalized || std::abs(nu.weights.sum() - 1.0) > 1e-10) {
    throw std::invalid_argument("expected a probability measure");
  }
}

// Monotone Barzilai-Borwein gradient ascent with Armijo backtracking.
// eval fills the gradient and returns the objective.
struct AscentResult {
  double value = 0.0;
  Vector x;
  bool converged = false;
};

AscentResult bb_ascent(
    const std::function<double(const Vector&, Vector*)>& eval, Vector x0,
    double grad_tol, int max_iter,
    const std::function<void(Vector*)>& project) {
  Vector x = std::move(x0);
  project(&x);
  Vector g(x.size());
  double fx = eval(x, &g);
  Vector x_prev, g_prev;
  double step = 1.0;
  bool have_prev = false;

  for (int it = 0; it < max_iter; ++it) {
    if (g.cwiseAbs().maxCoeff() <= grad_tol) {
      return {fx, x, true};
    }
    if (have_prev) {
      const Vector s = x - x_prev;
      const Vector y = g - g_prev;
      const double sy = std::abs(s.dot(y));
      if (sy > 1e-300) step = s.dot(s) / sy;
      step = std::clamp(step, 1e-12, 1e12);
    }
    double t = step;
    const double gg = g.squaredNorm();
    Vector x_new, g_new(x.size());
    double f_new = -kInf;
    for (int ls = 0; ls < 80; ++ls) {
      x_new = x + t * g;
      project(&x_new);
      f_new = eval(x_new, &g_new);
      if (f_new >= fx + 1e-4 * t * gg) break;
      t *= 0.5;
    }
    if (f_new < fx) {
      // Flat to machine precision; treat as converged if the gradient is
      // already small, else give up.
      return {fx, x, g.cwiseAbs().maxCoeff() <= 10 * grad_tol};
    }
    x_prev = x;
    g_prev = g;
    x = x_new;
    g = g_new;
    fx = f_new;
    have_prev = true;
  }
  return {fx, x, false};
}

}  // namespace

bool measure_invariantizable(const TransitionKernel& P, const Measure& nu) {
  require_probability(nu, P);
  const int n = static_cast<int>(P.size());
  MaxFlow flow(2 * n + 2);
  const int src = 2 * n, snk = 2 * n + 1;
  for (int i = 0; i < n; ++i) {
    if (nu.weights(i) <= 0.0) continue;
    flow.add_edge(src, i, nu.weights(i));
    flow.add_edge(n + i, snk, nu.weights(i));
    for (int j = 0; j < n; ++j) {
      if (P.rows(i, j) > 0.0 && nu.weights(j) > 0.0) {
        flow.add_edge(i, n + j, 2.0);
      }
    }
  }
  return flow.solve(src, snk) >= 1.0 - 1e-9;
}

double legendre_dual_measure(const TransitionKernel& P, const Measure& nu) {
  require_probability(nu, P);
  require_irreducible_aperiodic(P);
  if (!measure_invariantizable(P, nu)) return kInf;
  const Measure pi_base = stationary(P);

  const auto eval = [&](const Vector& Fv, Vector* grad) {
    const SpectralData sd = tilted_spectral_data(P, Fv, pi_base);
    *grad = nu.weights - sd.pi;
    return nu.weights.dot(Fv) - sd.log_lambda;
  };
  // Lambda(F + c) = Lambda(F) + c: pin the flat direction at coordinate 0.
  const auto project = [](Vector* x) { x->array() -= (*x)(0); };

  const AscentResult result =
      bb_ascent(eval, Vector::Zero(P.size()), 1e-8, 200000, project);
  if (!result.converged) {
    throw std::runtime_error("Legendre ascent did not converge");
  }
  return result.value;
}

KernelEntropySolution solve_entropy_rate_measure(const TransitionKernel& P,
                                                 const Measure& nu) {
  require_probability(nu, P);
  KernelEntropySolution solution;
  if (!measure_invariantizable(P, nu)) {
    solution.value = kInf;
    solution.feasible = false;
    return solution;
  }
  // Restrict to the support: any invariant kernel keeps the support closed.
  std::vector<int> support;
  for (Eigen::Index i = 0; i < nu.size(); ++i) {
    if (nu.weights(i) > 0.0) support.push_back(static_cast<int>(i));
  }
  const int m = static_cast<int>(support.size());
  Matrix logP(m, m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      const double p = P.rows(support[i], support[j]);
      logP(i, j) = p > 0.0 ? std::log(p) : -kInf;
    }
  }
  Vector nuS(m);
  for (int i = 0; i < m; ++i) nuS(i) = nu.weights(support[i]);

  // Lagrangian dual of min KL over invariant kernels: rows are Gibbs tilts
  // Q_u(x,y) oc P(x,y) e^{u_y} and the dual objective is
  // g(u) = <nu,u> - sum_x nu_x log sum_y P(x,y) e^{u_y}.
  Matrix Q(m, m);
  const auto eval = [&](const Vector& u, Vector* grad) {
    double value = nuS.dot(u);
    grad->noalias() = nuS;
    for (int i = 0; i < m; ++i) {
      double best = -kInf;
      for (int j = 0; j < m; ++j) {
        if (logP(i, j) > -kInf) best = std::max(best, logP(i, j) + u(j));
      }
      double z = 0.0;
      for (int j = 0; j < m; ++j) {
        Q(i, j) = logP(i, j) > -kInf ? std::exp(logP(i, j) + u(j) - best) : 0.0;
        z += Q(i, j);
      }
      Q.row(i) /= z;
      value -= nuS(i) * (best + std::log(z));
      grad->noalias() -= nuS(i) * Q.row(i).transpose();
    }
    return value;
  };
  const auto project = [](Vector* x) { x->array() -= (*x)(0); };

  const AscentResult result =
      bb_ascent(eval, Vector::Zero(m), 1e-8, 200000, project);
  if (!result.converged) {
    throw std::runtime_error("entropy-rate dual ascent did not converge");
  }
  Vector dummy(m);
  solution.value = std::max(0.0, eval(result.x, &dummy));
  solution.feasible = true;

  Matrix rows = P.rows;
  for (int i = 0; i < m; ++i) {
    rows.row(support[i]).setZero();
    for (int j = 0; j < m; ++j) rows(support[i], support[j]) = Q(i, j);
  }
  solution.minimizer = TransitionKernel(std::move(rows), P.states, true);
  return solution;
}

double entropy_rate_measure(const TransitionKernel& P, const Measure& nu) {
  return solve_entropy_rate_measure(P, nu).value;
}

double entropy_rate_pair(const TransitionKernel& P, const PairMeasure& Gamma) {
  if (Gamma.weights.rows() != P.size()) {
    throw std::invalid_argument("pair measure size does not match kernel");
  }
  if (std::abs(Gamma.weights.sum() - 1.0) > 1e-10) {
    throw std::invalid_argument("pair measure must have total mass 1");
  }
  const Vector r = Gamma.first_marginal();
  const Vector c = Gamma.second_marginal();
  if ((r - c).cwiseAbs().maxCoeff() > 1e-10) return kInf;

  double sum = 0.0;
  for (Eigen::Index x = 0; x < P.size(); ++x) {
    for (Eigen::Index y = 0; y < P.size(); ++y) {
      const double g = Gamma.weights(x, y);
      if (g <= 0.0) continue;  // 0 log 0 = 0
      const double denom = r(x) * P.rows(x, y);
      if (denom <= 0.0) return kInf;
      sum += g * std::log(g / denom);
    }
  }
  return sum;
}

DualPairRecord dual_pair_check(const TransitionKernel& P, const Functional& F,
                               double a) {
  require_irreducible_aperiodic(P);
  const Measure pi_base = stationary(P);
  const SpectralData sd = tilted_spectral_data(P, a * F.values, pi_base);
  const TransitionKernel twisted = twisted_rows(P, a * F.values, sd);
  const Eigen::Index n = P.size();

  DualPairRecord record;
  record.Gamma = PairMeasure(sd.pi.asDiagonal() * twisted.rows);
  record.M = F.values * a * Vector::Ones(n).transpose();
  record.lambda_val = a == 0.0 ? 0.0 : sd.log_lambda;
  record.entropy = entropy_rate_pair(P, record.Gamma);

  const double target = a * sd.pi.dot(F.values) - record.lambda_val;
  record.duality_residual = std::abs(record.entropy - target);
  if (record.duality_residual > 1e-9) {
    throw std::runtime_error("dual pair identity violated: residual " +
                             std::to_string(record.duality_residual));
  }

  const Vector check_F = sd.f.array().log();
  double sim = 0.0;
  for (Eigen::Index x = 0; x < n; ++x) {
    for (Eigen::Index y = 0; y < n; ++y) {
      if (record.Gamma.weights(x, y) <= 0.0) continue;
      const double m0 =
          std::log(record.Gamma.weights(x, y) / (sd.pi(x) * P.rows(x, y)));
      const double similar =
          a * F.values(x) - record.lambda_val - check_F(x) + check_F(y);
      sim = std::max(sim, std::abs(m0 - similar));
    }
  }
  record.similarity_residual = sim;
  if (sim > 1e-9) {
    throw std::runtime_error("dual pair similarity violated: residual " +
                             std::to_string(sim));
  }
  return record;
}

namespace {

double real_gcd(double a, double b, double tol,
                std::vector<double>* trail = nullptr) {
  a = std::abs(a);
  b = std::abs(b);
  if (a < b) std::swap(a, b);
  for (int k = 0; k < 256 && b > tol; ++k) {
    if (trail) trail->push_back(b);
    const double r = std::abs(a - b * std::round(a / b));
    a = b;
    b = r < tol ? 0.0 : r;
  }
  return a;
}

}  // namespace

LatticeInfo lattice_span(const Functional& F, double tol) {
  std::vector<double> values(F.values.data(), F.values.data() + F.size());
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end(),
                           [&](double x, double y) {
                             return std::abs(x - y) <= tol;
                           }),
               values.end());
  LatticeInfo info;
  if (values.size() <= 1) {
    info.kind = LatticeKind::lattice;
    info.span = 0.0;  // constant functional sentinel
    info.offset = 0.0;
    return info;
  }
  double g = 0.0;
  for (size_t i = 1; i < values.size(); ++i) {
    const double diff = values[i] - values[0];
    g = g == 0.0 ? diff : real_gcd(g, diff, tol);
    if (g <= tol) {
      info.kind = LatticeKind::nonlattice;
      return info;
    }
  }
  double offset = values[0] - g * std::floor(values[0] / g);
  if (offset >= g - tol || offset < 0.0) offset = 0.0;
  for (double v : values) {
    if (std::abs(v - (offset + g * std::round((v - offset) / g))) > 1e-9) {
      info.kind = LatticeKind::nonlattice;
      return info;
    }
  }
  info.kind = LatticeKind::lattice;
  info.span = g;
  info.offset = offset;
  return info;
}

std::optional<double> almost_lattice_residual_variance(
    const TransitionKernel& P, const Functional& F, double tol) {
  if (lattice_span(F, tol).kind == LatticeKind::lattice) return std::nullopt;
  std::vector<double> values(F.values.data(), F.values.data() + F.size());
  std::sort(values.begin(), values.end());
  // Collect coarse candidate spans from the gcd trail.
  std::vector<double> trail;
  double g = 0.0;
  for (size_t i = 1; i < values.size(); ++i) {
    const double diff = values[i] - values[0];
    if (diff <= tol) continue;
    trail.push_back(diff);
    g = g == 0.0 ? diff : real_gcd(g, diff, tol, &trail);
  }
  std::set<double> candidates;
  for (double h : trail) {
    if (h > 100 * tol) candidates.insert(h);
  }
  if (candidates.empty()) return std::nullopt;

  double best = kInf;
  for (double h : candidates) {
    Vector lattice_part(F.size());
    for (Eigen::Index i = 0; i < F.size(); ++i) {
      lattice_part(i) =
          values[0] + h * std::round((F.values(i) - values[0]) / h);
    }
    const Functional residual(F.values - lattice_part);
    best = std::min(best, asymptotic_variance(P, residual));
  }
  return best;
}

std::string to_string(TailMethod method) {
  switch (method) {
    case TailMethod::nonlattice_BR: return "nonlattice_BR";
    case TailMethod::lattice_BR: return "lattice_BR";
    case TailMethod::exact_dp: return "exact_dp";
  }
  throw std::logic_error("unknown tail method");
}

std::complex<double> log_mgf(const TransitionKernel& P, const Functional& F,
                             std::complex<double> alpha, int x, int n) {
  if (x < 0 || x >= P.size()) {
    throw std::invalid_argument("start state out of range");
  }
  if (n < 0 || n > 10000) {
    throw std::invalid_argument("n must lie in [0, 1e4]");
  }
  if (n == 0) return {0.0, 0.0};
  const ScaledKernel K = scale_kernel(P, F, alpha);
  VectorC u = VectorC::Ones(P.size());
  double log_scale = 0.0;
  for (int k = 0; k < n; ++k) {
    u = K.entries * u;
    const double s = u.cwiseAbs().maxCoeff();
    if (s <= 0.0) return {-kInf, 0.0};
    u /= s;
    log_scale += std::log(s);
  }
  if (std::abs(u(x)) == 0.0) return {-kInf, 0.0};
  return std::log(u(x)) + Complex(log_scale, 0.0);
}

std::complex<double> mgf(const TransitionKernel& P, const Functional& F,
                         std::complex<double> alpha, int x, int n) {
  return std::exp(log_mgf(P, F, alpha, x, n));
}

std::vector<std::vector<double>> mgf_decay_scan(
    const TransitionKernel& P, const Functional& F, double a,
    const std::vector<double>& omega_grid, int x, int n) {
  if (x < 0 || x >= P.size()) {
    throw std::invalid_argument("start state out of range");
  }
  const double lambda_a = lambda_of(P, F, a);
  std::vector<std::vector<double>> scan;
  scan.reserve(omega_grid.size());
  for (double omega : omega_grid) {
    const ScaledKernel K = scale_kernel(P, F, Complex(a, omega));
    VectorC u = VectorC::Ones(P.size());
    double log_scale = 0.0;
    std::vector<double> seq;
    seq.reserve(n);
    for (int k = 1; k <= n; ++k) {
      u = K.entries * u;
      const double s = u.cwiseAbs().maxCoeff();
      if (s <= 0.0) {
        seq.insert(seq.end(), n - k + 1, 0.0);
        break;
      }
      u /= s;
      log_scale += std::log(s);
      seq.push_back(std::abs(u(x)) *
                    std::exp(log_scale - k * lambda_a));
    }
    scan.push_back(std::move(seq));
  }
  return scan;
}

TailAsymptotic bahadur_rao_nonlattice(const TransitionKernel& P,
                                      const Functional& F, int x, double c,
                                      int n) {
  const LatticeInfo info = lattice_span(F);
  if (info.kind == LatticeKind::lattice) {
    throw std::invalid_argument(
        "functional is lattice (span " + std::to_string(info.span) +
        "); use bahadur_rao_lattice");
  }
  const RatePoint rp = solve_rate_point(P, F, c);
  if (rp.a <= 0.0) {
    throw std::invalid_argument("c must exceed pi(F) for the upper tail");
  }
  TailAsymptotic tail;
  tail.n = n;
  tail.c = c;
  tail.method = TailMethod::nonlattice_BR;
  tail.exponent = rp.J;
  tail.prefactor = rp.check_f_at.values(x) /
                   (rp.a * std::sqrt(2.0 * M_PI * n * rp.sigma2));
  tail.predicted = tail.prefactor * std::exp(-double(n) * tail.exponent);
  return tail;
}

namespace {

struct LatticeGrid {
  double d = 0.0;
  double h = 0.0;
  std::vector<long> k;  // F(i) = d + h k_i
  long kmin = 0, kmax = 0;
};

LatticeGrid lattice_grid(const Functional& F, const LatticeInfo& info) {
  LatticeGrid grid;
  grid.d = info.offset;
  grid.h = info.span;
  grid.k.resize(F.size());
  for (Eigen::Index i = 0; i < F.size(); ++i) {
    grid.k[i] = std::lround((F.values(i) - info.offset) / info.span);
    if (std::abs(F.values(i) - (info.offset + info.span * grid.k[i])) > 1e-9) {
      throw std::logic_error("lattice rounding drifted");
    }
  }
  grid.kmin = *std::min_element(grid.k.begin(), grid.k.end());
  grid.kmax = *std::max_element(grid.k.begin(), grid.k.end());
  return grid;
}

// Distribution of (state, shifted lattice sum) after n steps from x.
std::vector<std::vector<long double>> lattice_dp(const TransitionKernel& P,
                                                 const LatticeGrid& grid,
                                                 int x, int n) {
  const int ns = static_cast<int>(P.size());
  const long width = static_cast<long>(n) * (grid.kmax - grid.kmin) + 1;
  if (width > 1000000) {
    throw std::invalid_argument("lattice DP table too large (" +
                                std::to_string(width) + " cells)");
  }
  std::vector<std::vector<long double>> dp(
      ns, std::vector<long double>(width, 0.0L));
  dp[x][0] = 1.0L;
  std::vector<std::vector<long double>> next(
      ns, std::vector<long double>(width, 0.0L));
  for (int t = 0; t < n; ++t) {
    for (auto& row : next) std::fill(row.begin(), row.end(), 0.0L);
    const long reach = static_cast<long>(t) * (grid.kmax - grid.kmin);
    for (int u = 0; u < ns; ++u) {
      const long du = grid.k[u] - grid.kmin;
      for (long s = 0; s <= reach; ++s) {
        const long double mass = dp[u][s];
        if (mass <= 0.0L) continue;
        for (int v = 0; v < ns; ++v) {
          if (P.rows(u, v) > 0.0) {
            next[v][s + du] += mass * static_cast<long double>(P.rows(u, v));
          }
        }
      }
    }
    dp.swap(next);
  }
  return dp;
}

}  // namespace

double exact_tail_dp(const TransitionKernel& P, const Functional& F, int x,
                     double c, int n) {
  if (x < 0 || x >= P.size()) {
    throw std::invalid_argument("start state out of range");
  }
  if (n < 1) throw std::invalid_argument("n must be positive");
  const LatticeInfo info = lattice_span(F);
  if (info.kind != LatticeKind::lattice) {
    throw std::invalid_argument("exact_tail_dp requires a lattice functional");
  }
  if (info.span == 0.0) {
    return n * F.values(0) >= n * c - 1e-9 ? 1.0 : 0.0;
  }
  const LatticeGrid grid = lattice_grid(F, info);
  const auto dp = lattice_dp(P, grid, x, n);
  const long width = static_cast<long>(n) * (grid.kmax - grid.kmin) + 1;
  // S_n = n d + h (s + n kmin) >= nc.
  const double smin_real =
      (n * c - n * grid.d) / grid.h - static_cast<double>(n) * grid.kmin;
  const long smin = static_cast<long>(std::ceil(smin_real - 1e-9));
  long double tail = 0.0L;
  for (const auto& row : dp) {
    for (long s = std::max(smin, 0L); s < width; ++s) tail += row[s];
  }
  return std::min(1.0, static_cast<double>(tail));
}

TailAsymptotic bahadur_rao_lattice(const TransitionKernel& P,
                                   const Functional& F, int x, double c,
                                   int n) {
  if (x < 0 || x >= P.size()) {
    throw std::invalid_argument("start state out of range");
  }
  if (n < 1) throw std::invalid_argument("n must be positive");
  const LatticeInfo info = lattice_span(F);
  if (info.kind != LatticeKind::lattice) {
    throw std::invalid_argument(
        "functional is not lattice; use bahadur_rao_nonlattice");
  }
  TailAsymptotic tail;
  tail.n = n;
  tail.method = TailMethod::lattice_BR;
  if (info.span == 0.0) {
    // Degenerate sums: the point probability is exact.
    tail.c = F.values(0);
    tail.predicted = n * F.values(0) >= n * c - 1e-9 ? 1.0 : 0.0;
    tail.prefactor = tail.predicted;
    tail.exponent = 0.0;
    return tail;
  }

  // Snap nc up to the nearest achievable support point of S_n from x.
  const LatticeGrid grid = lattice_grid(F, info);
  const auto dp = lattice_dp(P, grid, x, n);
  const long width = static_cast<long>(n) * (grid.kmax - grid.kmin) + 1;
  const double target_s =
      (n * c - n * grid.d) / grid.h - static_cast<double>(n) * grid.kmin;
  long snap = -1;
  for (long s = std::max(0L, static_cast<long>(std::ceil(target_s - 1e-9)));
       s < width; ++s) {
    long double mass = 0.0L;
    for (const auto& row : dp) mass += row[s];
    if (mass > 0.0L) {
      snap = s;
      break;
    }
  }
  if (snap < 0) {
    throw std::invalid_argument("c_n lies outside the achievable range of "
                                "S_n/n");
  }
  const double cn =
      (n * grid.d + grid.h * (snap + static_cast<double>(n) * grid.kmin)) / n;
  tail.c = cn;

  // Finite-n normalized log-mgf Lambda_n(a) = (1/n) log E_x[e^{a S_n}],
  // with first and second derivatives by the tilted-expectation recursion.
  const double fshift = F.values.maxCoeff();
  const Vector fs = F.values.array() - fshift;
  const auto lambda_n = [&](double a) -> std::array<double, 3> {
    Vector u = Vector::Ones(P.size());
    Vector v = Vector::Zero(P.size());
    Vector w = Vector::Zero(P.size());
    double log_scale = 0.0;
    for (int t = 0; t < n; ++t) {
      const Vector pu = P.rows * u;
      const Vector pv = P.rows * v;
      const Vector pw = P.rows * w;
      const Vector e = (a * fs.array()).exp();
      const Vector nu = e.cwiseProduct(pu);
      const Vector nv =
          e.cwiseProduct(fs.cwiseProduct(pu) + pv);
      const Vector nw = e.cwiseProduct(
          fs.cwiseProduct(fs.cwiseProduct(pu)) + 2.0 * fs.cwiseProduct(pv) +
          pw);
      const double s = nu.cwiseAbs().maxCoeff();
      u = nu / s;
      v = nv / s;
      w = nw / s;
      log_scale += std::log(s);
    }
    const double m0 = (log_scale + std::log(u(x))) / n + a * fshift;
    const double r1 = v(x) / u(x);
    const double r2 = w(x) / u(x);
    const double m1 = r1 / n + fshift;
    const double m2 = (r2 - r1 * r1) / n;
    return {m0, m1, m2};
  };

  double lo = 0.0, hi = 1.0;
  if (lambda_n(0.0)[1] >= cn) {
    throw std::invalid_argument("c_n must exceed the mean of S_n/n for the "
                                "upper tail");
  }
  while (lambda_n(hi)[1] < cn) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e5) {
      throw std::runtime_error("cannot bracket the finite-n tilt");
    }
  }
  double a = 0.5 * (lo + hi);
  std::array<double, 3> L{};
  for (int iter = 0; iter < 200; ++iter) {
    L = lambda_n(a);
    if (std::abs(L[1] - cn) <= 1e-12 * std::max(1.0, std::abs(cn))) break;
    (L[1] < cn ? lo : hi) = a;
    const double newton = a + (cn - L[1]) / L[2];
    a = (newton > lo && newton < hi) ? newton : 0.5 * (lo + hi);
  }
  const double Jn = a * cn - L[0];
  tail.exponent = Jn;
  tail.prefactor = grid.h / ((1.0 - std::exp(-grid.h * a)) *
                             std::sqrt(2.0 * M_PI * n * L[2]));
  tail.predicted = tail.prefactor * std::exp(-double(n) * Jn);
  return tail;
}

}  // namespace mcld
