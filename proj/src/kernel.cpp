#include "mcld/kernel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace mcld {

TransitionKernel::TransitionKernel(Matrix p, std::vector<std::string> labels,
                                   bool renormalize)
    : states(std::move(labels)), rows(std::move(p)) {
  const Eigen::Index n = rows.rows();
  if (n < 1 || rows.cols() != n) {
    throw std::invalid_argument("kernel must be a nonempty square matrix");
  }
  if (states.empty()) {
    states.reserve(n);
    for (Eigen::Index i = 0; i < n; ++i) states.push_back(std::to_string(i));
  }
  if (static_cast<Eigen::Index>(states.size()) != n) {
    throw std::invalid_argument("state labels do not match matrix size");
  }
  if ((rows.array() < 0.0).any()) {
    throw std::invalid_argument("kernel entries must be nonnegative");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = rows.row(i).sum();
    if (renormalize) {
      if (s <= 0.0) {
        throw std::invalid_argument("cannot renormalize a zero row");
      }
      rows.row(i) /= s;
    } else if (std::abs(s - 1.0) > kMassTol) {
      std::ostringstream msg;
      msg << "row " << i << " sums to " << s << ", not 1 within " << kMassTol;
      throw std::invalid_argument(msg.str());
    }
  }
}

Matrix TransitionKernel::power(int t) const {
  if (t < 0) throw std::invalid_argument("negative matrix power");
  const Eigen::Index n = size();
  Matrix result = Matrix::Identity(n, n);
  Matrix base = rows;
  while (t > 0) {
    if (t & 1) result = result * base;
    t >>= 1;
    if (t > 0) base = base * base;
  }
  return result;
}

int TransitionKernel::index_of(const std::string& label) const {
  auto it = std::find(states.begin(), states.end(), label);
  if (it == states.end()) {
    throw std::invalid_argument("unknown state label: " + label);
  }
  return static_cast<int>(it - states.begin());
}

Functional::Functional(Vector v, std::string name)
    : values(std::move(v)), label(std::move(name)) {
  if (!values.allFinite()) {
    throw std::invalid_argument("functional entries must be finite");
  }
}

Measure::Measure(Vector w, bool is_normalized)
    : weights(std::move(w)), normalized(is_normalized) {
  if ((weights.array() < 0.0).any()) {
    throw std::invalid_argument("measure weights must be nonnegative");
  }
  if (normalized && std::abs(weights.sum() - 1.0) > kMassTol) {
    throw std::invalid_argument("normalized measure must have total mass 1");
  }
}

PairMeasure::PairMeasure(Matrix w, bool require_normalized)
    : weights(std::move(w)) {
  if ((weights.array() < 0.0).any()) {
    throw std::invalid_argument("pair measure weights must be nonnegative");
  }
  if (require_normalized && std::abs(weights.sum() - 1.0) > kMassTol) {
    throw std::invalid_argument("normalized pair measure must have mass 1");
  }
}

namespace {

// Iterative Tarjan strongly-connected components on the positive-entry graph.
std::vector<std::vector<int>> strongly_connected_components(const Matrix& P) {
  const int n = static_cast<int>(P.rows());
  std::vector<std::vector<int>> adj(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j)
      if (P(i, j) > 0.0) adj[i].push_back(j);
  }
  std::vector<int> index(n, -1), low(n, 0), stack;
  std::vector<bool> on_stack(n, false);
  std::vector<std::vector<int>> components;
  int counter = 0;

  struct Frame {
    int v;
    size_t edge;
  };
  for (int root = 0; root < n; ++root) {
    if (index[root] != -1) continue;
    std::vector<Frame> call;
    call.push_back({root, 0});
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = true;
    while (!call.empty()) {
      Frame& f = call.back();
      if (f.edge < adj[f.v].size()) {
        const int w = adj[f.v][f.edge++];
        if (index[w] == -1) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = true;
          call.push_back({w, 0});
        } else if (on_stack[w]) {
          low[f.v] = std::min(low[f.v], index[w]);
        }
      } else {
        if (low[f.v] == index[f.v]) {
          std::vector<int> comp;
          while (true) {
            const int w = stack.back();
            stack.pop_back();
            on_stack[w] = false;
            comp.push_back(w);
            if (w == f.v) break;
          }
          std::sort(comp.begin(), comp.end());
          components.push_back(std::move(comp));
        }
        const int v = f.v;
        call.pop_back();
        if (!call.empty()) {
          low[call.back().v] = std::min(low[call.back().v], low[v]);
        }
      }
    }
  }
  // Sort classes by smallest member for a stable report.
  std::sort(components.begin(), components.end(),
            [](const auto& a, const auto& b) { return a[0] < b[0]; });
  return components;
}

// Period of one class: gcd over internal edges (u,v) of level(u)+1-level(v),
// with levels from a BFS rooted in the class.  Zero when the class has no
// internal edge (a transient singleton).
int class_period(const Matrix& P, const std::vector<int>& comp) {
  const int n = static_cast<int>(P.rows());
  std::vector<int> level(n, -1);
  std::vector<bool> in_class(n, false);
  for (int v : comp) in_class[v] = true;
  std::vector<int> queue{comp[0]};
  level[comp[0]] = 0;
  for (size_t q = 0; q < queue.size(); ++q) {
    const int u = queue[q];
    for (int v = 0; v < n; ++v) {
      if (P(u, v) > 0.0 && in_class[v] && level[v] == -1) {
        level[v] = level[u] + 1;
        queue.push_back(v);
      }
    }
  }
  int g = 0;
  for (int u : comp) {
    for (int v : comp) {
      if (P(u, v) > 0.0) g = std::gcd(g, level[u] + 1 - level[v]);
    }
  }
  return std::abs(g);
}

std::string describe_classes(const TransitionKernel& P,
                             const std::vector<std::vector<int>>& classes) {
  std::ostringstream msg;
  msg << "chain is reducible with " << classes.size() << " classes:";
  for (const auto& c : classes) {
    msg << " {";
    for (size_t i = 0; i < c.size(); ++i) {
      if (i) msg << ",";
      msg << P.states[c[i]];
    }
    msg << "}";
  }
  return msg.str();
}

void require_irreducible(const TransitionKernel& P,
                         const StructureReport& report) {
  if (!report.irreducible) {
    throw ReducibleChainError(describe_classes(P, report.classes));
  }
}

}  // namespace

StructureReport structure_check(const TransitionKernel& P) {
  StructureReport report;
  report.classes = strongly_connected_components(P.rows);
  report.irreducible = report.classes.size() == 1;
  int g = 0;
  for (const auto& comp : report.classes) {
    g = std::gcd(g, class_period(P.rows, comp));
  }
  report.period = g == 0 ? 1 : g;
  report.aperiodic = report.period == 1;
  return report;
}

Measure stationary(const TransitionKernel& P) {
  require_irreducible(P, structure_check(P));
  const Eigen::Index n = P.size();
  // (P^T - I) pi = 0 with the last balance equation replaced by sum = 1.
  Matrix A = P.rows.transpose() - Matrix::Identity(n, n);
  A.row(n - 1).setOnes();
  Vector b = Vector::Zero(n);
  b(n - 1) = 1.0;
  Vector pi = A.partialPivLu().solve(b);
  pi = pi.cwiseMax(0.0);
  pi /= pi.sum();
  const double residual = ((pi.transpose() * P.rows).transpose() - pi)
                              .cwiseAbs()
                              .sum();
  if (residual > kMassTol || (pi.array() <= 0.0).any()) {
    throw std::runtime_error("stationary solve failed: residual " +
                             std::to_string(residual));
  }
  return Measure(pi);
}

Matrix fundamental_matrix(const TransitionKernel& P, const Measure& pi) {
  const Eigen::Index n = P.size();
  const Matrix M = Matrix::Identity(n, n) - P.rows +
                   Vector::Ones(n) * pi.weights.transpose();
  return M.partialPivLu().solve(Matrix::Identity(n, n));
}

Functional solve_poisson(const TransitionKernel& P, const Functional& F) {
  const StructureReport report = structure_check(P);
  require_irreducible(P, report);
  if (!report.aperiodic) {
    throw PeriodicChainError("Poisson solve requires an aperiodic chain; period " +
                             std::to_string(report.period));
  }
  const Measure pi = stationary(P);
  const double mean = pi(F);
  const Eigen::Index n = P.size();
  const Matrix M = Matrix::Identity(n, n) - P.rows +
                   Vector::Ones(n) * pi.weights.transpose();
  Vector fhat = M.partialPivLu().solve((F.values.array() - mean).matrix());
  fhat.array() -= pi.weights.dot(fhat);
  const double residual =
      (P.rows * fhat - fhat + F.values - Vector::Constant(n, mean))
          .cwiseAbs()
          .maxCoeff();
  if (residual > 1e-10) {
    throw std::runtime_error("Poisson residual " + std::to_string(residual));
  }
  return Functional(std::move(fhat), F.label.empty() ? "" : F.label + "_hat");
}

double asymptotic_variance(const TransitionKernel& P, const Functional& F) {
  const Functional fhat = solve_poisson(P, F);
  const Vector pf = P.rows * fhat.values;
  const Vector q =
      P.rows * fhat.values.cwiseProduct(fhat.values) - pf.cwiseProduct(pf);
  const Measure pi = stationary(P);
  return std::max(0.0, pi(q));
}

double weighted_norm(const Functional& g, const Functional& v) {
  if ((v.values.array() <= 0.0).any()) {
    throw std::invalid_argument("weight function must be strictly positive");
  }
  if (g.size() != v.size()) {
    throw std::invalid_argument("size mismatch in weighted norm");
  }
  return (g.values.cwiseAbs().cwiseQuotient(v.values)).maxCoeff();
}

double operator_norm(const Matrix& K, const Functional& v) {
  if ((v.values.array() <= 0.0).any()) {
    throw std::invalid_argument("weight function must be strictly positive");
  }
  if (K.rows() != v.size() || K.cols() != v.size()) {
    throw std::invalid_argument("size mismatch in operator norm");
  }
  return ((K.cwiseAbs() * v.values).cwiseQuotient(v.values)).maxCoeff();
}

double perron_root(const Matrix& K) {
  if ((K.array() < 0.0).any()) {
    throw std::invalid_argument("Perron root needs a nonnegative matrix");
  }
  if (K.rows() == 0) return 0.0;
  if (K.rows() == 1) return K(0, 0);
  const Eigen::EigenSolver<Matrix> solver(K, /*computeEigenvectors=*/false);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

// v-norm limit ||K^n||_v^{1/n} evaluated by repeated squaring with per-step
// normalization; n = 2^k reaches the limit to well under 1e-8 quickly.
double norm_power_radius(const Matrix& K, const Functional& v) {
  Matrix M = K;
  long double log_scale = 0.0L;
  double estimate = 0.0;
  for (int k = 1; k <= 48; ++k) {
    M = M * M;
    const double s = operator_norm(M, v);
    if (!(s > 0.0) || !std::isfinite(s)) return 0.0;
    M /= s;
    log_scale = 2.0L * log_scale + std::log(static_cast<long double>(s));
    const double next =
        static_cast<double>(std::exp(log_scale / std::pow(2.0L, k)));
    if (k > 4 && std::abs(next - estimate) <= 1e-12 * std::max(1.0, next)) {
      return next;
    }
    estimate = next;
  }
  return estimate;
}

double spectral_radius(const Matrix& K, const Functional& v) {
  const double rho = perron_root(K);
  const double rho_norm = norm_power_radius(K, v);
  if (std::abs(rho - rho_norm) > 1e-8 * std::max({rho, rho_norm, 1e-300})) {
    throw std::runtime_error("spectral radius routes disagree: eigen " +
                             std::to_string(rho) + " vs norm-power " +
                             std::to_string(rho_norm));
  }
  return rho;
}

double spectral_radius(const Matrix& K) {
  return spectral_radius(K, Functional(Vector::Ones(K.rows())));
}

std::optional<SmallSetCertificate> small_set_certificate(
    const TransitionKernel& P, const std::vector<int>& C, int t_max) {
  if (C.empty()) throw std::invalid_argument("small set candidate is empty");
  const Eigen::Index n = P.size();
  for (int i : C) {
    if (i < 0 || i >= n) throw std::invalid_argument("state index out of range");
  }
  Matrix Pt = P.rows;
  for (int t = 1; t <= t_max; ++t) {
    Vector nu = Vector::Constant(n, std::numeric_limits<double>::infinity());
    for (int x : C) nu = nu.cwiseMin(Pt.row(x).transpose());
    const double eps = nu.sum();
    if (eps > 0.0) {
      return SmallSetCertificate{t, eps, Measure(nu / eps)};
    }
    if (t < t_max) Pt = Pt * P.rows;
  }
  return std::nullopt;
}

}  // namespace mcld
