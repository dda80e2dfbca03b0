#include "mcld/drift.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mcld {

namespace {

constexpr double kSlackTol = 1e-10;
constexpr double kInf = std::numeric_limits<double>::infinity();

Vector indicator(Eigen::Index n, const std::vector<int>& C) {
  Vector ind = Vector::Zero(n);
  for (int i : C) {
    if (i < 0 || i >= n) throw std::invalid_argument("state index out of range");
    ind(i) = 1.0;
  }
  return ind;
}

Vector drift_lhs(const TransitionKernel& P, DriftKind kind,
                 const Functional& V) {
  if (is_multiplicative(kind)) {
    return nonlinear_generator(P, V).values;
  }
  return P.rows * V.values - V.values;
}

Vector rhs_weight(DriftKind kind, const Functional& V,
                  const std::optional<Functional>& W, Eigen::Index n) {
  switch (kind) {
    case DriftKind::V2:
    case DriftKind::DV2:
      return Vector::Ones(n);
    case DriftKind::V3:
    case DriftKind::DV3:
      if (!W) throw std::invalid_argument("kind 3 drift requires a weight W");
      if ((W->values.array() < 1.0 - 1e-12).any()) {
        throw std::invalid_argument("W must be bounded below by 1");
      }
      return W->values;
    case DriftKind::V4:
    case DriftKind::DV4:
      if ((V.values.array() < 1.0 - 1e-12).any()) {
        throw std::invalid_argument("kind 4 drift requires V >= 1");
      }
      return V.values;
  }
  throw std::logic_error("unknown drift kind");
}

}  // namespace

std::string to_string(DriftKind kind) {
  switch (kind) {
    case DriftKind::V2: return "V2";
    case DriftKind::V3: return "V3";
    case DriftKind::V4: return "V4";
    case DriftKind::DV2: return "DV2";
    case DriftKind::DV3: return "DV3";
    case DriftKind::DV4: return "DV4";
  }
  throw std::logic_error("unknown drift kind");
}

DriftKind drift_kind_from_string(const std::string& name) {
  if (name == "V2") return DriftKind::V2;
  if (name == "V3") return DriftKind::V3;
  if (name == "V4") return DriftKind::V4;
  if (name == "DV2") return DriftKind::DV2;
  if (name == "DV3") return DriftKind::DV3;
  if (name == "DV4") return DriftKind::DV4;
  throw std::invalid_argument("unknown drift kind: " + name);
}

bool is_multiplicative(DriftKind kind) {
  return kind == DriftKind::DV2 || kind == DriftKind::DV3 ||
         kind == DriftKind::DV4;
}

DriftCertificate check_drift(const TransitionKernel& P, DriftKind kind,
                             const Functional& V,
                             const std::optional<Functional>& W,
                             const std::vector<int>& C, double delta,
                             double b) {
  const Eigen::Index n = P.size();
  const Vector lhs = drift_lhs(P, kind, V);
  const Vector weight = rhs_weight(kind, V, W, n);
  const Vector ind = indicator(n, C);

  DriftCertificate cert;
  cert.kind = kind;
  cert.V = V;
  cert.W = W;
  cert.C = C;
  cert.delta = delta;
  cert.b = b;
  cert.slack = Functional(-delta * weight + b * ind - lhs, "slack");
  cert.holds = cert.slack.values.minCoeff() >= -kSlackTol;
  if (!C.empty()) {
    cert.small_set = small_set_certificate(P, C, 2 * static_cast<int>(n));
  }
  return cert;
}

std::optional<std::pair<double, double>> fit_drift_params(
    const TransitionKernel& P, DriftKind kind, const Functional& V,
    const std::optional<Functional>& W, const std::vector<int>& C) {
  const Eigen::Index n = P.size();
  const Vector lhs = drift_lhs(P, kind, V);
  const Vector weight = rhs_weight(kind, V, W, n);
  const Vector ind = indicator(n, C);

  double delta = kInf;
  for (Eigen::Index x = 0; x < n; ++x) {
    if (ind(x) == 0.0) delta = std::min(delta, -lhs(x) / weight(x));
  }
  if (delta == kInf) delta = 1.0;  // C covers the whole space
  if (!(delta > 0.0)) return std::nullopt;

  double b = 0.0;
  for (Eigen::Index x = 0; x < n; ++x) {
    if (ind(x) != 0.0) b = std::max(b, lhs(x) + delta * weight(x));
  }
  return std::make_pair(delta, b);
}

DvImpliesVReport dv_implies_v_check(const TransitionKernel& P,
                                    const Functional& V,
                                    const std::optional<Functional>& W,
                                    const std::vector<int>& C, double delta,
                                    double b, int k) {
  DriftKind dv_kind, v_kind;
  switch (k) {
    case 2: dv_kind = DriftKind::DV2; v_kind = DriftKind::V2; break;
    case 3: dv_kind = DriftKind::DV3; v_kind = DriftKind::V3; break;
    case 4: dv_kind = DriftKind::DV4; v_kind = DriftKind::V4; break;
    default: throw std::invalid_argument("drift level k must be 2, 3 or 4");
  }
  DvImpliesVReport report;
  report.dv = check_drift(P, dv_kind, V, W, C, delta, b);
  report.v = check_drift(P, v_kind, V, W, C, delta, b);
  report.asserted = report.dv.holds;
  if (report.asserted && !report.v.holds) {
    throw std::runtime_error("Jensen implication (DV" + std::to_string(k) +
                             ") => (V" + std::to_string(k) + ") violated");
  }
  return report;
}

SupermartingaleReport supermartingale_check(const TransitionKernel& P,
                                            const Functional& V,
                                            const Functional& W,
                                            const std::vector<int>& C,
                                            double delta, double b) {
  // log(P e^V)(x) <= V(x) - delta W(x) + b 1_C(x), via log-sum-exp.
  const Eigen::Index n = P.size();
  const Vector ind = indicator(n, C);
  Vector slack(n);
  for (Eigen::Index x = 0; x < n; ++x) {
    double m = -kInf;
    for (Eigen::Index y = 0; y < n; ++y) {
      if (P.rows(x, y) > 0.0) m = std::max(m, V.values(y));
    }
    double acc = 0.0;
    for (Eigen::Index y = 0; y < n; ++y) {
      if (P.rows(x, y) > 0.0) acc += P.rows(x, y) * std::exp(V.values(y) - m);
    }
    const double log_pev = m + std::log(acc);
    slack(x) = (V.values(x) - delta * W.values(x) + b * ind(x)) - log_pev;
  }
  SupermartingaleReport report;
  report.slack = Functional(std::move(slack), "supermartingale_slack");
  report.holds = report.slack.values.minCoeff() >= -kSlackTol;
  return report;
}

std::vector<int> sublevel_set(const Functional& W, double r) {
  std::vector<int> set;
  for (Eigen::Index i = 0; i < W.size(); ++i) {
    if (W.values(i) <= r) set.push_back(static_cast<int>(i));
  }
  return set;
}

ConditionUReport check_condition_U(const TransitionKernel& P, int T1, int T2,
                                   int delta_cap) {
  if (T1 < 1 || T2 < T1) {
    throw std::invalid_argument("need 1 <= T1 <= T2");
  }
  const Eigen::Index n = P.size();
  const Matrix PT1 = P.power(T1);
  Matrix sum = Matrix::Zero(n, n);
  Matrix Pt = Matrix::Identity(n, n);
  for (int t = 1; t <= T2; ++t) {
    Pt = Pt * P.rows;
    sum += Pt;
  }
  sum /= static_cast<double>(T2);

  ConditionUReport report;
  report.T1 = T1;
  report.T2 = T2;
  double b0 = 0.0;
  for (Eigen::Index y = 0; y < n; ++y) {
    const double num = PT1.col(y).maxCoeff();
    const double den = sum.col(y).minCoeff();
    if (num <= 0.0) continue;
    b0 = den > 0.0 ? std::max(b0, num / den) : kInf;
  }
  report.b0 = b0;
  report.holds = std::isfinite(b0);

  const Measure pi = stationary(P);
  Matrix Pn = Matrix::Identity(n, n);
  report.doeblin_deltas.reserve(delta_cap);
  for (int t = 1; t <= delta_cap; ++t) {
    Pn = Pn * P.rows;
    double dn = 0.0;
    for (Eigen::Index y = 0; y < n; ++y) {
      const double py = pi.weights(y);
      if (py <= 0.0) continue;
      dn = std::max(dn,
                    (Pn.col(y).array() - py).abs().maxCoeff() / py);
    }
    report.doeblin_deltas.push_back(dn);
  }
  return report;
}

Functional condition_u_dv4_function(const TransitionKernel& P, int T1,
                                    const Functional& V0, double r) {
  if (T1 < 1) throw std::invalid_argument("T1 must be >= 1");
  if (r <= 1.0) throw std::invalid_argument("r must exceed 1");
  const double q = r / (r - 1.0);
  // eps below both Hoelder bounds from the (U) => (DV4) construction.
  const double eps =
      0.99 * std::min(1.0 / (T1 * std::pow(r, T1 - 1)),
                      1.0 / (q * std::pow(r, T1 - 1)));
  const Eigen::Index n = P.size();
  // Backward recursion for E_x[exp(sum_{i<T1} eps r^i V0(Phi(i)))].
  Vector h = (eps * std::pow(r, T1 - 1) * V0.values.array()).exp();
  for (int i = T1 - 2; i >= 0; --i) {
    h = (eps * std::pow(r, i) * V0.values.array()).exp() *
        (P.rows * h).array();
  }
  return Functional((1.0 + h.array().log()).matrix(), "V_u");
}

FittedDrift fit_lyapunov_dv3(const TransitionKernel& P) {
  const Eigen::Index n = P.size();
  const Measure pi = stationary(P);
  Eigen::Index c0 = 0;
  pi.weights.maxCoeff(&c0);
  const std::vector<int> seed_set{static_cast<int>(c0)};
  const Functional ones(Vector::Ones(n));

  double eta0 = max_regularity_eta(P, ones, seed_set);
  eta0 = std::isfinite(eta0) ? 0.5 * eta0 : 0.5;
  const TabooSolve taboo = taboo_exp_functional(P, ones, seed_set, eta0);
  if (!taboo.feasible) {
    throw std::runtime_error("taboo solve infeasible at half the critical eta");
  }
  const Functional V(
      (1.0 + taboo.U.values.array().log()).matrix(), "V_fit");
  const Vector H = nonlinear_generator(P, V).values;

  // C collects the states without strictly negative multiplicative drift.
  std::vector<int> C;
  for (Eigen::Index x = 0; x < n; ++x) {
    if (H(x) >= 0.0) C.push_back(static_cast<int>(x));
  }
  if (C.empty()) {
    Eigen::Index amax = 0;
    H.maxCoeff(&amax);
    C.push_back(static_cast<int>(amax));
  }
  if (static_cast<Eigen::Index>(C.size()) == n) {
    throw std::runtime_error("no state with negative drift; cannot fit DV3");
  }

  std::vector<bool> in_C(n, false);
  for (int i : C) in_C[i] = true;
  double delta = kInf;
  for (Eigen::Index x = 0; x < n; ++x) {
    if (!in_C[x]) delta = std::min(delta, -H(x));
  }
  Vector w = Vector::Ones(n);
  for (Eigen::Index x = 0; x < n; ++x) {
    if (!in_C[x]) w(x) = std::max(1.0, -H(x) / delta);
  }
  double b = 0.0;
  for (int x : C) b = std::max(b, H(x) + delta);

  FittedDrift fit;
  fit.V = V;
  fit.W = Functional(std::move(w), "W_fit");
  fit.C = std::move(C);
  fit.delta = delta;
  fit.b = b;
  return fit;
}

V4Construction build_v4_from_dv2(const TransitionKernel& P,
                                 const Functional& V,
                                 const std::vector<int>& A, double eta) {
  if (A.empty()) throw std::invalid_argument("A must be nonempty");
  if (eta <= 0.0) throw std::invalid_argument("eta must be positive");
  const Eigen::Index n = P.size();
  std::vector<bool> in_A(n, false);
  for (int i : A) {
    if (i < 0 || i >= n) throw std::invalid_argument("state index out of range");
    in_A[i] = true;
  }
  std::vector<int> comp;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!in_A[i]) comp.push_back(static_cast<int>(i));
  }
  const Eigen::Index m = static_cast<Eigen::Index>(comp.size());
  const double beta = std::exp(0.5 * eta);

  Matrix Pcc(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      Pcc(i, j) = P.rows(comp[i], comp[j]);
    }
  }
  if (m > 0 && beta * perron_root(Pcc) >= 1.0 - 1e-12) {
    throw std::invalid_argument(
        "series diverges at this eta (beta * taboo radius >= 1); "
        "retry with a smaller eta");
  }

  const Vector v_eta = (eta * V.values.array()).exp();
  Vector v_star = v_eta;
  if (m > 0) {
    // V*(x) = e^{eta V(x)} + beta (P V*)(x) off A, V* = e^{eta V} on A.
    Vector rhs(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      double from_A = 0.0;
      for (int a : A) from_A += P.rows(comp[i], a) * v_eta(a);
      rhs(i) = v_eta(comp[i]) + beta * from_A;
    }
    const Vector vc = (Matrix::Identity(m, m) - beta * Pcc)
                          .partialPivLu()
                          .solve(rhs);
    for (Eigen::Index i = 0; i < m; ++i) v_star(comp[i]) = vc(i);
  }
  if ((v_star.array() < v_eta.array() - 1e-9).any()) {
    throw std::runtime_error("V* lost the lower bound e^{eta V}");
  }

  V4Construction out;
  out.rho = std::exp(-0.5 * eta);
  const Vector pv = P.rows * v_star;
  double b_prime = 0.0;
  for (int a : A) b_prime = std::max(b_prime, pv(a) - out.rho * v_star(a));
  out.b_prime = b_prime;
  out.V_star = Functional(v_star, "V_star");
  out.certificate = check_drift(P, DriftKind::V4, out.V_star, std::nullopt, A,
                                1.0 - out.rho, b_prime);
  out.norm_ratio_up = (v_star.array() / v_eta.array()).maxCoeff();
  out.norm_ratio_down = (v_eta.array() / v_star.array()).maxCoeff();
  return out;
}

}  // namespace mcld
