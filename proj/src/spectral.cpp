#include "mcld/spectral.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mcld {

Matrix ScaledKernel::real_entries() const {
  if (!is_real()) {
    throw std::logic_error("scaled kernel has a complex tilt");
  }
  return entries.real();
}

ScaledKernel scale_kernel(const TransitionKernel& P, const Functional& F,
                          Complex alpha) {
  if (F.size() != P.size()) {
    throw std::invalid_argument("functional size does not match kernel");
  }
  ScaledKernel K;
  K.base = P;
  K.F = F;
  K.alpha = alpha;
  const Eigen::Index n = P.size();
  K.entries.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Complex scale = std::exp(alpha * F.values(i));
    K.entries.row(i) = scale * P.rows.row(i).cast<Complex>();
  }
  return K;
}

Functional EigenTriple::eigenfunction() const {
  if (check_f.imag().cwiseAbs().maxCoeff() > 1e-12) {
    throw std::logic_error("eigenfunction is complex");
  }
  return Functional(check_f.real(), "check_f");
}

Measure EigenTriple::eigen_measure() const {
  if (check_mu.imag().cwiseAbs().maxCoeff() > 1e-12) {
    throw std::logic_error("eigenmeasure is complex");
  }
  return Measure(check_mu.real());
}

Measure EigenTriple::twisted_invariant() const {
  const Vector pia = check_mu.real().cwiseProduct(check_f.real());
  return Measure(pia / pia.sum());
}

namespace {

// Two-sided power iteration from the all-ones vector.  Returns true when the
// eigenvalue estimate stabilized; the estimate lands in *lambda.
bool power_iteration_estimate(const Matrix& A, double* lambda, int max_iter) {
  const Eigen::Index n = A.rows();
  Vector u = Vector::Ones(n);
  Vector w = Vector::Ones(n);
  double prev = 0.0;
  int stable = 0;
  for (int k = 0; k < max_iter; ++k) {
    u = A * u;
    w = A.transpose() * w;
    const double nu = u.cwiseAbs().maxCoeff();
    const double nw = w.cwiseAbs().maxCoeff();
    if (!(nu > 0.0) || !(nw > 0.0)) return false;
    u /= nu;
    w /= nw;
    const double denom = w.dot(u);
    if (std::abs(denom) < 1e-300) continue;
    const double est = w.dot(A * u) / denom;
    if (std::abs(est - prev) <= 1e-14 * std::max(1.0, std::abs(est))) {
      if (++stable >= 3) {
        *lambda = est;
        return true;
      }
    } else {
      stable = 0;
    }
    prev = est;
  }
  *lambda = prev;
  return false;
}

void check_positive(const Vector& v, const char* what) {
  if ((v.array() <= 0.0).any()) {
    throw std::runtime_error(std::string(what) +
                             " is not strictly positive; the chain may be "
                             "too close to reducible");
  }
}

EigenTriple principal_eigen_real(const ScaledKernel& K,
                                 const StructureReport& report) {
  const Matrix A = K.real_entries();
  const Eigen::Index n = A.rows();
  EigenTriple triple;
  if (n == 1) {
    triple.lambda = A(0, 0);
    triple.check_f = VectorC::Ones(1);
    triple.check_mu = VectorC::Ones(1);
    return triple;
  }

  Eigen::EigenSolver<Matrix> solver(A, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success) {
    throw std::runtime_error("eigendecomposition failed");
  }
  const VectorC eigs = solver.eigenvalues();
  const double rho = eigs.cwiseAbs().maxCoeff();
  // The Perron eigenvalue is the real positive one among the maximal moduli.
  double lambda = 0.0;
  bool found = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(eigs(i)) >= rho * (1.0 - 1e-10) &&
        std::abs(eigs(i).imag()) <= 1e-8 * rho && eigs(i).real() > 0.0) {
      lambda = eigs(i).real();
      found = true;
    }
  }
  if (!found) {
    throw std::runtime_error("no real positive principal eigenvalue found");
  }

  const Measure pi = stationary(K.base);
  Vector f = Vector::Ones(n);
  Vector mu = pi.weights;
  // Solve with H = lambda I - A + 1 (x) pi, refining lambda by the two-sided
  // Rayleigh quotient; H is nonsingular at the Perron eigenvalue.
  for (int round = 0; round < 3; ++round) {
    const Matrix H = lambda * Matrix::Identity(n, n) - A +
                     Vector::Ones(n) * pi.weights.transpose();
    const auto lu = H.partialPivLu();
    f = lu.solve(Vector::Ones(n));
    mu = H.transpose().partialPivLu().solve(pi.weights);
    if (f.sum() < 0.0) f = -f;
    if (mu.sum() < 0.0) mu = -mu;
    const double denom = mu.dot(f);
    if (std::abs(denom) < 1e-300) {
      throw std::runtime_error("principal eigen solve degenerated");
    }
    const double refined = mu.dot(A * f) / denom;
    if (std::abs(refined - lambda) <= 1e-15 * lambda) {
      lambda = refined;
      break;
    }
    lambda = refined;
  }
  check_positive(f, "principal eigenfunction");
  check_positive(mu, "principal eigenmeasure");

  // Independent cross-check of the eigenvalue by a power route.
  double lambda_power = 0.0;
  if (!power_iteration_estimate(A, &lambda_power, 2000)) {
    lambda_power = norm_power_radius(A, Functional(Vector::Ones(n)));
  }
  if (std::abs(lambda_power - lambda) > 1e-10 * std::max(1.0, lambda)) {
    std::ostringstream msg;
    msg << "eigen and power routes disagree: " << lambda << " vs "
        << lambda_power;
    throw std::runtime_error(msg.str());
  }

  mu /= mu.sum();
  f /= mu.dot(f);
  triple.lambda = lambda;
  triple.check_f = f.cast<Complex>();
  triple.check_mu = mu.cast<Complex>();
  triple.right_residual =
      (A * f - lambda * f).cwiseAbs().maxCoeff() / f.cwiseAbs().maxCoeff();
  triple.left_residual =
      ((mu.transpose() * A).transpose() - lambda * mu).cwiseAbs().sum();
  (void)report;
  return triple;
}

EigenTriple principal_eigen_complex(const ScaledKernel& K) {
  const MatrixC& A = K.entries;
  const Eigen::Index n = A.rows();
  Eigen::ComplexEigenSolver<MatrixC> right(A, /*computeEigenvectors=*/true);
  if (right.info() != Eigen::Success) {
    throw std::runtime_error("complex eigendecomposition failed");
  }
  const VectorC eigs = right.eigenvalues();
  Eigen::Index imax = 0;
  eigs.cwiseAbs().maxCoeff(&imax);
  const Complex lambda = eigs(imax);
  double second = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i != imax) second = std::max(second, std::abs(eigs(i)));
  }
  if (std::abs(lambda) - second <= 1e-8 * std::abs(lambda)) {
    throw SpectralGapError("gap unresolved: two largest moduli within 1e-8");
  }

  VectorC f = right.eigenvectors().col(imax);
  Eigen::ComplexEigenSolver<MatrixC> left(A.transpose(), true);
  if (left.info() != Eigen::Success) {
    throw std::runtime_error("complex eigendecomposition failed");
  }
  Eigen::Index ileft = 0;
  (left.eigenvalues().array() - lambda).abs().minCoeff(&ileft);
  VectorC mu = left.eigenvectors().col(ileft);

  const Complex mass = mu.sum();
  if (std::abs(mass) < 1e-12) {
    throw SpectralGapError("eigenmeasure has vanishing total mass");
  }
  mu /= mass;
  const Complex pairing = (mu.transpose() * f).value();
  if (std::abs(pairing) < 1e-12) {
    throw SpectralGapError("eigenfunction and eigenmeasure nearly orthogonal");
  }
  f /= pairing;

  EigenTriple triple;
  triple.lambda = lambda;
  triple.check_f = f;
  triple.check_mu = mu;
  triple.right_residual = (A * f - lambda * f).cwiseAbs().maxCoeff() /
                          f.cwiseAbs().maxCoeff();
  triple.left_residual =
      ((mu.transpose() * A).transpose() - lambda * mu).cwiseAbs().sum();
  return triple;
}

}  // namespace

EigenTriple principal_eigen(const ScaledKernel& K) {
  const StructureReport report = structure_check(K.base);
  if (!report.irreducible) {
    std::ostringstream msg;
    msg << "principal eigen requires an irreducible chain ("
        << report.classes.size() << " classes)";
    throw ReducibleChainError(msg.str());
  }
  EigenTriple triple = K.is_real() ? principal_eigen_real(K, report)
                                   : principal_eigen_complex(K);
  if (triple.right_residual > 1e-10 || triple.left_residual > 1e-10) {
    std::ostringstream msg;
    msg << "eigen residuals too large: right " << triple.right_residual
        << ", left " << triple.left_residual;
    throw std::runtime_error(msg.str());
  }
  return triple;
}

Functional nonlinear_generator(const TransitionKernel& P,
                               const Functional& G) {
  if (G.size() != P.size()) {
    throw std::invalid_argument("functional size does not match kernel");
  }
  const Eigen::Index n = P.size();
  Vector out(n);
  for (Eigen::Index x = 0; x < n; ++x) {
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index y = 0; y < n; ++y) {
      if (P.rows(x, y) > 0.0) m = std::max(m, G.values(y));
    }
    double acc = 0.0;
    for (Eigen::Index y = 0; y < n; ++y) {
      if (P.rows(x, y) > 0.0) {
        acc += P.rows(x, y) * std::exp(G.values(y) - m);
      }
    }
    out(x) = m + std::log(acc) - G.values(x);
  }
  return Functional(std::move(out), "H(" + G.label + ")");
}

MultPoisson mult_poisson_solve(const TransitionKernel& P,
                               const Functional& F) {
  const StructureReport report = structure_check(P);
  if (!report.irreducible) {
    throw ReducibleChainError("multiplicative Poisson equation needs an "
                              "irreducible chain");
  }
  if (!report.aperiodic) {
    throw PeriodicChainError("multiplicative Poisson equation needs an "
                             "aperiodic chain");
  }
  MultPoisson sol;
  sol.triple = principal_eigen(scale_kernel(P, F, Complex(1.0, 0.0)));
  sol.Lambda = std::log(sol.triple.lambda.real());
  sol.check_F = Functional(sol.triple.check_f.real().array().log().matrix(),
                           "check_" + F.label);
  const Functional hf = nonlinear_generator(P, sol.check_F);
  sol.residual = (hf.values + F.values - Vector::Constant(P.size(), sol.Lambda))
                     .cwiseAbs()
                     .maxCoeff();
  if (sol.residual > 1e-9) {
    throw std::runtime_error("multiplicative Poisson residual " +
                             std::to_string(sol.residual));
  }
  return sol;
}

TwistedChain twisted_kernel(const TransitionKernel& P, const Functional& h) {
  if (h.size() != P.size()) {
    throw std::invalid_argument("functional size does not match kernel");
  }
  if ((h.values.array() <= 0.0).any()) {
    throw std::invalid_argument("twisting function must be strictly positive");
  }
  const Vector ph = P.rows * h.values;
  Matrix rows = P.rows;
  for (Eigen::Index x = 0; x < P.size(); ++x) {
    rows.row(x) = rows.row(x).cwiseProduct(h.values.transpose()) / ph(x);
  }
  TwistedChain chain;
  chain.kernel = TransitionKernel(std::move(rows), P.states);
  chain.h = h;
  chain.pi_twisted = stationary(chain.kernel);
  return chain;
}

Functional resolvent_eigenfunction(const ScaledKernel& K, double lambda_shift,
                                   const Functional& s, const Measure& nu) {
  const Matrix A = K.real_entries();
  const Eigen::Index n = A.rows();
  if (s.size() != n || nu.size() != n) {
    throw std::invalid_argument("small pair size mismatch");
  }
  if (nu(s) <= 0.0) {
    throw std::invalid_argument("small pair must satisfy nu(s) > 0");
  }
  const double xi = perron_root(A);
  if (lambda_shift <= xi) {
    throw std::invalid_argument(
        "lambda_shift lies inside the spectrum (needs > " +
        std::to_string(xi) + ")");
  }
  const Matrix R = (lambda_shift * Matrix::Identity(n, n) - A)
                       .partialPivLu()
                       .solve(Matrix::Identity(n, n));
  const double gamma = 1.0 / (lambda_shift - xi);
  const Matrix B = gamma * Matrix::Identity(n, n) -
                   (R - s.values * nu.weights.transpose());
  Vector h = B.partialPivLu().solve(s.values);
  if (h.sum() < 0.0) h = -h;
  const double residual =
      (A * h - xi * h).cwiseAbs().maxCoeff() / h.cwiseAbs().maxCoeff();
  if (residual > 1e-8) {
    throw std::runtime_error("resolvent eigenfunction residual " +
                             std::to_string(residual));
  }
  check_positive(h, "resolvent eigenfunction");
  return Functional(std::move(h), "resolvent_eigenfunction");
}

std::vector<MmetPoint> mmet_exact_curve(const TransitionKernel& P,
                                        const Functional& F, Complex alpha,
                                        int x, int N) {
  if (x < 0 || x >= P.size()) {
    throw std::invalid_argument("start state out of range");
  }
  if (N < 1 || N > 10000) {
    throw std::invalid_argument("N must lie in [1, 1e4]");
  }
  const ScaledKernel K = scale_kernel(P, F, alpha);
  const EigenTriple triple = principal_eigen(K);
  const Complex log_lambda = std::log(triple.lambda);
  const Complex target = triple.check_f(x);

  std::vector<MmetPoint> curve;
  curve.reserve(N);
  VectorC u = VectorC::Ones(P.size());
  double log_scale = 0.0;
  for (int n = 1; n <= N; ++n) {
    u = K.entries * u;
    const double s = u.cwiseAbs().maxCoeff();
    u /= s;
    log_scale += std::log(s);
    const Complex value =
        u(x) * std::exp(Complex(log_scale, 0.0) - double(n) * log_lambda);
    curve.push_back({n, value, std::abs(value - target)});
  }
  return curve;
}

double subdominant_ratio(const MatrixC& K) {
  Eigen::ComplexEigenSolver<MatrixC> solver(K, false);
  Vector mods = solver.eigenvalues().cwiseAbs();
  std::sort(mods.data(), mods.data() + mods.size(), std::greater<double>());
  if (mods.size() < 2 || mods(0) <= 0.0) return 0.0;
  return mods(1) / mods(0);
}

double subdominant_ratio(const Matrix& K) {
  Eigen::EigenSolver<Matrix> solver(K, false);
  Vector mods = solver.eigenvalues().cwiseAbs();
  std::sort(mods.data(), mods.data() + mods.size(), std::greater<double>());
  if (mods.size() < 2 || mods(0) <= 0.0) return 0.0;
  return mods(1) / mods(0);
}

double fit_log_slope(const std::vector<MmetPoint>& curve, double floor) {
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  int m = 0;
  for (const auto& p : curve) {
    if (p.deviation <= floor) continue;
    const double x = p.n;
    const double y = std::log(p.deviation);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++m;
  }
  if (m < 2) {
    throw std::runtime_error("too few points above floor for a slope fit");
  }
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

namespace {

std::vector<int> complement(Eigen::Index n, const std::vector<int>& A) {
  std::vector<bool> in(n, false);
  for (int i : A) {
    if (i < 0 || i >= n) throw std::invalid_argument("state index out of range");
    in[i] = true;
  }
  std::vector<int> out;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!in[i]) out.push_back(static_cast<int>(i));
  }
  return out;
}

}  // namespace

TabooSolve taboo_exp_functional(const TransitionKernel& P, const Functional& W,
                                const std::vector<int>& A, double eta) {
  if (A.empty()) throw std::invalid_argument("taboo set must be nonempty");
  if (eta < 0.0) throw std::invalid_argument("eta must be nonnegative");
  if ((W.values.array() < 1.0 - 1e-12).any()) {
    throw std::invalid_argument("W must be bounded below by 1");
  }
  const Eigen::Index n = P.size();
  const std::vector<int> comp = complement(n, A);
  const Eigen::Index m = static_cast<Eigen::Index>(comp.size());

  TabooSolve result;
  result.eta = eta;
  result.A = A;

  const Vector d = (eta * W.values.array()).exp();
  Matrix Mcc(m, m);
  Vector rhs(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    double to_A = 0.0;
    for (int a : A) to_A += P.rows(comp[i], a);
    rhs(i) = d(comp[i]) * to_A;
    for (Eigen::Index j = 0; j < m; ++j) {
      Mcc(i, j) = d(comp[i]) * P.rows(comp[i], comp[j]);
    }
  }
  result.radius = m == 0 ? 0.0 : perron_root(Mcc);
  result.feasible = result.radius < 1.0 - 1e-12;
  if (!result.feasible) return result;

  Vector u = Vector::Ones(n);
  Vector uc;
  if (m > 0) {
    uc = (Matrix::Identity(m, m) - Mcc).partialPivLu().solve(rhs);
    for (Eigen::Index i = 0; i < m; ++i) u(comp[i]) = uc(i);
  }
  for (int a : A) {
    double to_A = 0.0, to_comp = 0.0;
    for (int b : A) to_A += P.rows(a, b);
    for (Eigen::Index j = 0; j < m; ++j) {
      to_comp += P.rows(a, comp[j]) * uc(j);
    }
    u(a) = d(a) * (to_A + to_comp);
  }
  if ((u.array() < 1.0 - 1e-9).any()) {
    throw std::runtime_error("taboo solve produced U < 1");
  }
  result.U = Functional(std::move(u), "taboo_U");
  return result;
}

double max_regularity_eta(const TransitionKernel& P, const Functional& W,
                          const std::vector<int>& A) {
  const Eigen::Index n = P.size();
  const std::vector<int> comp = complement(n, A);
  if (comp.empty()) return std::numeric_limits<double>::infinity();

  const auto radius_at = [&](double eta) {
    const Vector d = (eta * W.values.array()).exp();
    Matrix Mcc(comp.size(), comp.size());
    for (size_t i = 0; i < comp.size(); ++i) {
      for (size_t j = 0; j < comp.size(); ++j) {
        Mcc(i, j) = d(comp[i]) * P.rows(comp[i], comp[j]);
      }
    }
    return perron_root(Mcc);
  };

  if (radius_at(0.0) >= 1.0) {
    throw std::invalid_argument(
        "taboo radius at eta = 0 is not < 1; is the chain irreducible?");
  }
  double lo = 0.0, hi = 1.0;
  bool bounded = false;
  for (int k = 0; k < 200; ++k) {
    if (radius_at(hi) >= 1.0) {
      bounded = true;
      break;
    }
    lo = hi;
    hi *= 2.0;
  }
  // A^c without a cycle keeps the radius at zero for every eta.
  if (!bounded) return std::numeric_limits<double>::infinity();
  while (hi - lo > 1e-9) {
    const double mid = 0.5 * (lo + hi);
    (radius_at(mid) < 1.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace mcld
